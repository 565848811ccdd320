//! Separable bilinear resize with antialiasing on downscale.
//!
//! Pixel centers sit at i + 0.5. On downscale the triangle filter widens by
//! the inverse scale so the result averages rather than aliases. The map is
//! linear in the input, so the gradient is the transposed weight pattern.

use ndarray::Array3;

use crate::error::Result;
use crate::image::ImageBuffer;

/// Per-output-index taps along one axis.
struct AxisPlan {
    taps: Vec<(usize, Vec<f64>)>,
}

fn axis_plan(n_in: usize, n_out: usize) -> AxisPlan {
    let scale = n_out as f64 / n_in as f64;
    let filterscale = (1.0 / scale).max(1.0);
    let support = filterscale;
    let taps = (0..n_out)
        .map(|o| {
            let center = (o as f64 + 0.5) / scale;
            let lo = ((center - support + 0.5).floor() as isize).max(0) as usize;
            let hi = (((center + support + 0.5).floor() as isize).max(0) as usize).min(n_in);
            let mut weights: Vec<f64> = (lo..hi)
                .map(|i| {
                    let u = (i as f64 + 0.5 - center) / filterscale;
                    (1.0 - u.abs()).max(0.0)
                })
                .collect();
            let sum: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= sum;
            }
            (lo, weights)
        })
        .collect();
    AxisPlan { taps }
}

fn apply_rows(input: &Array3<f64>, plan: &AxisPlan) -> Array3<f64> {
    let (_, w, c) = input.dim();
    let n_out = plan.taps.len();
    let mut out = Array3::zeros((n_out, w, c));
    for (o, (lo, weights)) in plan.taps.iter().enumerate() {
        for (k, &wt) in weights.iter().enumerate() {
            let i = lo + k;
            for x in 0..w {
                for ch in 0..c {
                    out[[o, x, ch]] += wt * input[[i, x, ch]];
                }
            }
        }
    }
    out
}

fn apply_cols(input: &Array3<f64>, plan: &AxisPlan) -> Array3<f64> {
    let (h, _, c) = input.dim();
    let n_out = plan.taps.len();
    let mut out = Array3::zeros((h, n_out, c));
    for (o, (lo, weights)) in plan.taps.iter().enumerate() {
        for (k, &wt) in weights.iter().enumerate() {
            let i = lo + k;
            for y in 0..h {
                for ch in 0..c {
                    out[[y, o, ch]] += wt * input[[y, i, ch]];
                }
            }
        }
    }
    out
}

fn scatter_rows(grad_out: &Array3<f64>, plan: &AxisPlan, n_in: usize) -> Array3<f64> {
    let (_, w, c) = grad_out.dim();
    let mut out = Array3::zeros((n_in, w, c));
    for (o, (lo, weights)) in plan.taps.iter().enumerate() {
        for (k, &wt) in weights.iter().enumerate() {
            let i = lo + k;
            for x in 0..w {
                for ch in 0..c {
                    out[[i, x, ch]] += wt * grad_out[[o, x, ch]];
                }
            }
        }
    }
    out
}

fn scatter_cols(grad_out: &Array3<f64>, plan: &AxisPlan, n_in: usize) -> Array3<f64> {
    let (h, _, c) = grad_out.dim();
    let mut out = Array3::zeros((h, n_in, c));
    for (o, (lo, weights)) in plan.taps.iter().enumerate() {
        for (k, &wt) in weights.iter().enumerate() {
            let i = lo + k;
            for y in 0..h {
                for ch in 0..c {
                    out[[y, i, ch]] += wt * grad_out[[y, o, ch]];
                }
            }
        }
    }
    out
}

/// Resizes a square image to `side` x `side`.
pub fn resize(image: &ImageBuffer, side: usize) -> Result<ImageBuffer> {
    if side < 8 {
        return Err(crate::error::Error::InvalidConfig(format!(
            "resize target side must be >= 8, got {side}"
        )));
    }
    let n_in = image.side();
    let plan = axis_plan(n_in, side);
    let rows = apply_rows(image.data(), &plan);
    let out = apply_cols(&rows, &plan);
    ImageBuffer::new(out)
}

/// Gradient of `resize` with respect to its input: applies the transposed
/// tap pattern, columns first to mirror the forward order.
pub fn resize_grad(grad_out: &Array3<f64>, in_side: usize) -> Array3<f64> {
    let out_side = grad_out.dim().0;
    let plan = axis_plan(in_side, out_side);
    let cols = scatter_cols(grad_out, &plan, in_side);
    scatter_rows(&cols, &plan, in_side)
}
