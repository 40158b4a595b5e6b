//! Stride-1 same-padding convolution on (C, H, W) grids via im2col and a
//! matrix product, with the matching backward passes.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView1, ArrayView3, ArrayView4, Axis};

fn im2col(x: &ArrayView3<f64>, k: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let pad = (k / 2) as isize;
    let mut col = Array2::zeros((c * k * k, h * w));
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let mut col_row = col.row_mut(row);
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = ((w as isize - dx).min(w as isize)) as usize;
                    for xx in x_lo..x_hi {
                        col_row[y * w + xx] = x[[ci, sy as usize, (xx as isize + dx) as usize]];
                    }
                }
            }
        }
    }
    col
}

fn col2im(col: &Array2<f64>, c: usize, h: usize, w: usize, k: usize) -> Array3<f64> {
    let pad = (k / 2) as isize;
    let mut out = Array3::zeros((c, h, w));
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let col_row = col.row(row);
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = ((w as isize - dx).min(w as isize)) as usize;
                    for xx in x_lo..x_hi {
                        out[[ci, sy as usize, (xx as isize + dx) as usize]] += col_row[y * w + xx];
                    }
                }
            }
        }
    }
    out
}

// Matrix products on degenerate shapes can come back F-ordered; these
// reshape by logical element order regardless of layout.
fn reshape3(a: Array2<f64>, dim: (usize, usize, usize)) -> Array3<f64> {
    if a.is_standard_layout() {
        a.into_shape_with_order(dim).expect("element count")
    } else {
        Array3::from_shape_vec(dim, a.iter().copied().collect()).expect("element count")
    }
}

fn reshape4(a: Array2<f64>, dim: (usize, usize, usize, usize)) -> Array4<f64> {
    if a.is_standard_layout() {
        a.into_shape_with_order(dim).expect("element count")
    } else {
        Array4::from_shape_vec(dim, a.iter().copied().collect()).expect("element count")
    }
}

/// y = w * x + b with zero same-padding. Weight layout (out_c, in_c, k, k).
pub fn conv2d(x: &ArrayView3<f64>, w: &ArrayView4<f64>, b: &ArrayView1<f64>) -> Array3<f64> {
    let (in_c, h, wd) = x.dim();
    let (out_c, w_in_c, k, k2) = w.dim();
    assert_eq!(in_c, w_in_c, "conv input channels");
    assert_eq!(k, k2, "conv kernels are square");
    let w2 = w
        .to_shape((out_c, in_c * k * k))
        .expect("contiguous weight");
    let y2 = if k == 1 {
        let x2 = x.to_shape((in_c, h * wd)).expect("contiguous input");
        w2.dot(&x2)
    } else {
        w2.dot(&im2col(x, k))
    };
    let mut y = reshape3(y2, (out_c, h, wd));
    for (mut plane, &bias) in y.axis_iter_mut(Axis(0)).zip(b.iter()) {
        plane.mapv_inplace(|v| v + bias);
    }
    y
}

/// Gradients of [`conv2d`] w.r.t. input, weight and bias.
pub fn conv2d_backward(
    x: &ArrayView3<f64>,
    w: &ArrayView4<f64>,
    dy: &ArrayView3<f64>,
) -> (Array3<f64>, Array4<f64>, Array1<f64>) {
    let (in_c, h, wd) = x.dim();
    let (out_c, _, k, _) = w.dim();
    let dy2 = dy.to_shape((out_c, h * wd)).expect("contiguous grad");
    let w2 = w
        .to_shape((out_c, in_c * k * k))
        .expect("contiguous weight");

    let db = dy2.sum_axis(Axis(1));
    let (dw2, dx) = if k == 1 {
        let x2 = x.to_shape((in_c, h * wd)).expect("contiguous input");
        let dw2 = dy2.dot(&x2.t());
        let dx2 = w2.t().dot(&dy2);
        (dw2, reshape3(dx2, (in_c, h, wd)))
    } else {
        let col = im2col(x, k);
        let dw2 = dy2.dot(&col.t());
        let dcol = w2.t().dot(&dy2);
        (dw2, col2im(&dcol, in_c, h, wd, k))
    };
    (dx, reshape4(dw2, (out_c, in_c, k, k)), db)
}

/// (C*r*r, H, W) -> (C, r*H, r*W); out[c, r*y+dy, r*x+dx] = in[c*r*r + dy*r + dx, y, x].
pub fn pixel_shuffle(x: &ArrayView3<f64>, r: usize) -> Array3<f64> {
    let (c_in, h, w) = x.dim();
    assert_eq!(c_in % (r * r), 0, "channels must divide r^2");
    let c = c_in / (r * r);
    let mut out = Array3::zeros((c, h * r, w * r));
    for ci in 0..c {
        for dy in 0..r {
            for dx in 0..r {
                let src = ci * r * r + dy * r + dx;
                for y in 0..h {
                    for x_ in 0..w {
                        out[[ci, y * r + dy, x_ * r + dx]] = x[[src, y, x_]];
                    }
                }
            }
        }
    }
    out
}

pub fn pixel_shuffle_backward(dy: &ArrayView3<f64>, r: usize) -> Array3<f64> {
    let (c, oh, ow) = dy.dim();
    let (h, w) = (oh / r, ow / r);
    let mut dx = Array3::zeros((c * r * r, h, w));
    for ci in 0..c {
        for dyy in 0..r {
            for dxx in 0..r {
                let src = ci * r * r + dyy * r + dxx;
                for y in 0..h {
                    for x_ in 0..w {
                        dx[[src, y, x_]] = dy[[ci, y * r + dyy, x_ * r + dxx]];
                    }
                }
            }
        }
    }
    dx
}
