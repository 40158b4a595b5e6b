//! Prints Y-channel PSNR/SSIM for two PNGs: `metric_probe a.png b.png [border]`.
use cdcn_core::image::Image;
use cdcn_core::metrics::{psnr_y, ssim_y};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let a = Image::load_png(std::path::Path::new(&args[1])).unwrap();
    let b = Image::load_png(std::path::Path::new(&args[2])).unwrap();
    let border: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let crop = |img: &Image| {
        img.crop(border, border, img.height() - 2 * border, img.width() - 2 * border)
    };
    println!(
        "psnr {:.6} ssim {:.8}",
        psnr_y(&a, &b, border).unwrap(),
        ssim_y(&crop(&a), &crop(&b)).unwrap()
    );
}
