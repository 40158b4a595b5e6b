//! Benchmark harness: degrades a directory of HR images with a kernel set,
//! runs a restorer over the synthesized LR inputs, and scores Y-channel
//! PSNR/SSIM into a [`MetricReport`].

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::degradation::{decompose_labels, degrade, gaussian8_widths, DegradationConfig};
use crate::error::{EvalError, IoError, ModelError};
use crate::image::Image;
use crate::kernel::{
    make_anisotropic_gaussian, make_isotropic_gaussian, AnisoKernelSpec, IsoKernelSpec, Kernel,
};
use crate::metrics::{psnr_y, ssim_y};
use crate::resize::bicubic_upscale;

/// One LR input presented to a restorer.
pub struct EvalCase<'a> {
    pub image_id: &'a str,
    pub kernel_id: &'a str,
    pub lr: &'a Image,
    pub scale: usize,
}

/// Anything that maps an LR image to an SR estimate. Implementations must
/// be pure so cases can run in parallel.
pub trait Restorer: Sync {
    fn restore(&self, case: &EvalCase) -> Result<Image, EvalError>;

    /// SR estimate plus the predicted detail component, for restorers that
    /// expose one. The default refuses, matching single-output models.
    fn restore_with_detail(&self, case: &EvalCase) -> Result<(Image, Image), EvalError> {
        let _ = case;
        Err(ModelError::NoDetailHead.into())
    }
}

/// Reference baseline: cubic interpolation back to HR size.
pub struct BicubicBaseline;

impl Restorer for BicubicBaseline {
    fn restore(&self, case: &EvalCase) -> Result<Image, EvalError> {
        Ok(bicubic_upscale(case.lr, case.scale, -0.5))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub image_id: String,
    pub kernel_id: String,
    pub psnr: f64,
    pub ssim: f64,
}

/// Per-image scores plus their arithmetic mean and protocol metadata.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub protocol: String,
    pub scale: usize,
    pub border: usize,
    /// Kernel provenance, one note per kernel id.
    pub kernel_notes: Vec<String>,
    pub rows: Vec<MetricRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl MetricReport {
    pub fn from_rows(
        protocol: impl Into<String>,
        scale: usize,
        border: usize,
        kernel_notes: Vec<String>,
        rows: Vec<MetricRow>,
    ) -> Self {
        let n = rows.len().max(1) as f64;
        let mean_psnr = rows.iter().map(|r| r.psnr).sum::<f64>() / n;
        let mean_ssim = rows.iter().map(|r| r.ssim).sum::<f64>() / n;
        Self {
            protocol: protocol.into(),
            scale,
            border,
            kernel_notes,
            rows,
            mean_psnr,
            mean_ssim,
        }
    }

    /// Text layout: one metadata header line, optional `#` kernel notes,
    /// one `image_id,kernel_id,psnr,ssim` row per case, and a final
    /// `aggregate,<rows>,<mean_psnr>,<mean_ssim>` line. Decimals use the
    /// shortest round-trip representation, so a reader can re-derive the
    /// aggregate from the rows exactly.
    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "protocol={} scale={} border={} rows={}",
            self.protocol,
            self.scale,
            self.border,
            self.rows.len()
        );
        for note in &self.kernel_notes {
            let _ = writeln!(out, "# {note}");
        }
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.image_id, r.kernel_id, r.psnr, r.ssim);
        }
        let _ = writeln!(
            out,
            "aggregate,{},{},{}",
            self.rows.len(),
            self.mean_psnr,
            self.mean_ssim
        );
        std::fs::write(path, out).map_err(|e| IoError::new(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let bad = |msg: String| EvalError::MalformedReport(msg);
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty report".into()))?;
        let mut protocol = String::new();
        let mut scale = 0;
        let mut border = 0;
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("bad header field {field}")))?;
            match key {
                "protocol" => protocol = value.to_string(),
                "scale" => scale = value.parse().map_err(|e| bad(format!("scale: {e}")))?,
                "border" => border = value.parse().map_err(|e| bad(format!("border: {e}")))?,
                _ => {}
            }
        }
        let mut kernel_notes = Vec::new();
        let mut rows = Vec::new();
        let mut aggregate = None;
        for line in lines {
            if let Some(note) = line.strip_prefix("# ") {
                kernel_notes.push(note.to_string());
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(bad(format!("bad row: {line}")));
            }
            let psnr: f64 = parts[2].parse().map_err(|e| bad(format!("psnr: {e}")))?;
            let ssim: f64 = parts[3].parse().map_err(|e| bad(format!("ssim: {e}")))?;
            if parts[0] == "aggregate" {
                aggregate = Some((psnr, ssim));
            } else {
                rows.push(MetricRow {
                    image_id: parts[0].to_string(),
                    kernel_id: parts[1].to_string(),
                    psnr,
                    ssim,
                });
            }
        }
        let (mean_psnr, mean_ssim) = aggregate.ok_or_else(|| bad("missing aggregate".into()))?;
        Ok(Self {
            protocol,
            scale,
            border,
            kernel_notes,
            rows,
            mean_psnr,
            mean_ssim,
        })
    }
}

/// Loads every `.png` in a directory, sorted by file stem.
pub fn load_dataset(dir: &Path) -> Result<Vec<(String, Image)>, EvalError> {
    let entries = std::fs::read_dir(dir).map_err(|e| IoError::new(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map(|ext| ext.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(EvalError::EmptyDataset(dir.to_path_buf()));
    }
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let id = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.push((id, Image::load_png(&p)?));
    }
    Ok(out)
}

fn clamp01(img: &Image) -> Image {
    let mut out = img.clone();
    out.data_mut().mapv_inplace(|v| v.clamp(0.0, 1.0));
    out
}

fn run_pool<T, F>(workers: usize, jobs: Vec<T>, f: F) -> Result<Vec<MetricRow>, EvalError>
where
    T: Send,
    F: Fn(T) -> Result<MetricRow, EvalError> + Sync,
{
    if workers <= 1 {
        jobs.into_iter().map(f).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(|| jobs.into_par_iter().map(&f).collect())
    }
}

/// Shared engine behind the named protocols: every image is degraded by
/// every kernel, restored, and scored against the (center-cropped) HR with
/// a border crop of `scale` pixels. Rows keep (image, kernel) order
/// regardless of worker count.
pub fn evaluate_with_kernels(
    restorer: &dyn Restorer,
    dataset: &[(String, Image)],
    scale: usize,
    kernels: &[(String, Kernel)],
    protocol: &str,
    kernel_notes: Vec<String>,
    workers: usize,
) -> Result<MetricReport, EvalError> {
    let cfg = DegradationConfig::new(scale);
    let border = scale;
    let mut jobs = Vec::with_capacity(dataset.len() * kernels.len());
    for (image_id, hr) in dataset {
        let hr = hr.center_crop_to_multiple(scale);
        for (kernel_id, kernel) in kernels {
            jobs.push((image_id.clone(), hr.clone(), kernel_id.clone(), kernel));
        }
    }
    let rows = run_pool(workers, jobs, |(image_id, hr, kernel_id, kernel)| {
        let lr = degrade(&hr, kernel, &cfg)?;
        let sr = restorer.restore(&EvalCase {
            image_id: &image_id,
            kernel_id: &kernel_id,
            lr: &lr,
            scale,
        })?;
        let sr = clamp01(&sr);
        let psnr = psnr_y(&sr, &hr, border)?;
        let cropped = |img: &Image| {
            img.crop(
                border,
                border,
                img.height() - 2 * border,
                img.width() - 2 * border,
            )
        };
        let ssim = ssim_y(&cropped(&sr), &cropped(&hr))?;
        Ok(MetricRow {
            image_id,
            kernel_id,
            psnr,
            ssim,
        })
    })?;
    Ok(MetricReport::from_rows(
        protocol,
        scale,
        border,
        kernel_notes,
        rows,
    ))
}

/// Gaussian8 protocol: eight evenly spaced isotropic widths per scale.
pub fn evaluate_gaussian8(
    restorer: &dyn Restorer,
    dataset_dir: &Path,
    scale: usize,
    workers: usize,
) -> Result<MetricReport, EvalError> {
    let dataset = load_dataset(dataset_dir)?;
    let widths = gaussian8_widths(scale)?;
    let mut kernels = Vec::with_capacity(8);
    let mut notes = Vec::with_capacity(8);
    for (i, &w) in widths.iter().enumerate() {
        let id = format!("g8-{i}");
        kernels.push((id.clone(), make_isotropic_gaussian(IsoKernelSpec::new(w))?));
        notes.push(format!("kernel {id} iso width={w} size=21"));
    }
    evaluate_with_kernels(
        restorer,
        &dataset,
        scale,
        &kernels,
        "gaussian8",
        notes,
        workers,
    )
}

/// Anisotropic protocol: one seeded random kernel per listed seed, applied
/// to every image. Kernel provenance lands in the report notes.
pub fn evaluate_anisotropic(
    restorer: &dyn Restorer,
    dataset_dir: &Path,
    scale: usize,
    kernel_seeds: &[u64],
    workers: usize,
) -> Result<MetricReport, EvalError> {
    let dataset = load_dataset(dataset_dir)?;
    let mut kernels = Vec::with_capacity(kernel_seeds.len());
    let mut notes = Vec::with_capacity(kernel_seeds.len());
    for &seed in kernel_seeds {
        let spec = AnisoKernelSpec::sample(seed, AnisoKernelSpec::MAX_NOISE, 11);
        let id = format!("aniso-{seed}");
        kernels.push((id.clone(), make_anisotropic_gaussian(spec)?));
        notes.push(format!(
            "kernel {id} aniso l1={} l2={} theta={} noise={} seed={} size={}",
            spec.lambda1, spec.lambda2, spec.theta, spec.noise_level, spec.seed, spec.size
        ));
    }
    evaluate_with_kernels(
        restorer,
        &dataset,
        scale,
        &kernels,
        "anisotropic",
        notes,
        workers,
    )
}

/// Detail-estimation fidelity per kernel width: PSNR between the predicted
/// and ground-truth detail components, both shifted by +0.5 into [0, 1].
pub fn component_psnr(
    restorer: &dyn Restorer,
    dataset_dir: &Path,
    scale: usize,
    widths: &[f64],
    workers: usize,
) -> Result<Vec<(f64, f64)>, EvalError> {
    let dataset = load_dataset(dataset_dir)?;
    let cfg = DegradationConfig::new(scale);
    let border = scale;
    let mut curve = Vec::with_capacity(widths.len());
    for &width in widths {
        let kernel = make_isotropic_gaussian(IsoKernelSpec::new(width))?;
        let kernel_id = format!("iso-{width}");
        let jobs: Vec<_> = dataset
            .iter()
            .map(|(id, hr)| (id.clone(), hr.center_crop_to_multiple(scale)))
            .collect();
        let rows = run_pool(workers, jobs, |(image_id, hr)| {
            let triple = decompose_labels(&hr, &kernel, &cfg)?;
            let (_, detail_hat) = restorer.restore_with_detail(&EvalCase {
                image_id: &image_id,
                kernel_id: &kernel_id,
                lr: &triple.lr,
                scale,
            })?;
            let label = clamp01(&triple.detail.shift(0.5));
            let predicted = clamp01(&detail_hat.shift(0.5));
            let psnr = psnr_y(&predicted, &label, border)?;
            Ok(MetricRow {
                image_id,
                kernel_id: kernel_id.clone(),
                psnr,
                ssim: 0.0,
            })
        })?;
        let mean = rows.iter().map(|r| r.psnr).sum::<f64>() / rows.len() as f64;
        curve.push((width, mean));
    }
    Ok(curve)
}
