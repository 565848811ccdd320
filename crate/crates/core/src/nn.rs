//! Differentiable numeric primitives.
//!
//! Forward passes come paired with explicit vector-Jacobian products. Only
//! gradients with respect to *inputs* are implemented: the toolkit optimizes
//! latent codes against frozen weights, never the weights themselves.

use ndarray::{Array1, Array2, Array3, Array4};

/// 3x3 convolution, stride 1, zero padding 1 (same spatial size).
///
/// `input` is C_in x H x W, `weight` is C_out x C_in x 3 x 3.
pub fn conv3x3(input: &Array3<f64>, weight: &Array4<f64>, bias: &Array1<f64>) -> Array3<f64> {
    let (cin, h, w) = input.dim();
    let (cout, wcin, kh, kw) = weight.dim();
    assert_eq!(cin, wcin, "conv3x3 channel mismatch");
    assert_eq!((kh, kw), (3, 3));

    let (ph, pw) = (h + 2, w + 2);
    let mut padded = vec![0.0f64; cin * ph * pw];
    let input_s = input.as_slice().expect("standard layout");
    for c in 0..cin {
        for y in 0..h {
            let src = &input_s[c * h * w + y * w..c * h * w + y * w + w];
            let dst = &mut padded[c * ph * pw + (y + 1) * pw + 1..c * ph * pw + (y + 1) * pw + 1 + w];
            dst.copy_from_slice(src);
        }
    }

    let mut out = Array3::zeros((cout, h, w));
    let out_s = out.as_slice_mut().expect("standard layout");
    for co in 0..cout {
        let plane = &mut out_s[co * h * w..(co + 1) * h * w];
        plane.fill(bias[co]);
        for ci in 0..cin {
            let pad = &padded[ci * ph * pw..(ci + 1) * ph * pw];
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = weight[[co, ci, ky, kx]];
                    for y in 0..h {
                        let row = &pad[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let out_row = &mut plane[y * w..y * w + w];
                        for x in 0..w {
                            out_row[x] += k * row[x];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient of [`conv3x3`] with respect to its input: correlate the output
/// gradient with the kernels flipped in both spatial axes.
pub fn conv3x3_backward_input(grad_out: &Array3<f64>, weight: &Array4<f64>) -> Array3<f64> {
    let (cout, cin, _, _) = weight.dim();
    let mut flipped = Array4::zeros((cin, cout, 3, 3));
    for co in 0..cout {
        for ci in 0..cin {
            for ky in 0..3 {
                for kx in 0..3 {
                    flipped[[ci, co, 2 - ky, 2 - kx]] = weight[[co, ci, ky, kx]];
                }
            }
        }
    }
    conv3x3(grad_out, &flipped, &Array1::zeros(cin))
}

/// 1x1 convolution (per-pixel linear map across channels).
pub fn conv1x1(input: &Array3<f64>, weight: &Array2<f64>, bias: &Array1<f64>) -> Array3<f64> {
    let (cin, h, w) = input.dim();
    let (cout, wcin) = weight.dim();
    assert_eq!(cin, wcin, "conv1x1 channel mismatch");
    let input_s = input.as_slice().expect("standard layout");
    let mut out = Array3::zeros((cout, h, w));
    let out_s = out.as_slice_mut().expect("standard layout");
    for co in 0..cout {
        let plane = &mut out_s[co * h * w..(co + 1) * h * w];
        plane.fill(bias[co]);
        for ci in 0..cin {
            let k = weight[[co, ci]];
            let in_plane = &input_s[ci * h * w..(ci + 1) * h * w];
            for p in 0..h * w {
                plane[p] += k * in_plane[p];
            }
        }
    }
    out
}

pub fn conv1x1_backward_input(grad_out: &Array3<f64>, weight: &Array2<f64>) -> Array3<f64> {
    let (cout, h, w) = grad_out.dim();
    let cin = weight.dim().1;
    let grad_s = grad_out.as_slice().expect("standard layout");
    let mut out = Array3::zeros((cin, h, w));
    let out_s = out.as_slice_mut().expect("standard layout");
    for ci in 0..cin {
        let plane = &mut out_s[ci * h * w..(ci + 1) * h * w];
        for co in 0..cout {
            let k = weight[[co, ci]];
            let g_plane = &grad_s[co * h * w..(co + 1) * h * w];
            for p in 0..h * w {
                plane[p] += k * g_plane[p];
            }
        }
    }
    out
}

/// Nearest-neighbor 2x upsample.
pub fn upsample2x(input: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = input.dim();
    let mut out = Array3::zeros((c, h * 2, w * 2));
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = input[[ch, y, x]];
                out[[ch, 2 * y, 2 * x]] = v;
                out[[ch, 2 * y, 2 * x + 1]] = v;
                out[[ch, 2 * y + 1, 2 * x]] = v;
                out[[ch, 2 * y + 1, 2 * x + 1]] = v;
            }
        }
    }
    out
}

pub fn upsample2x_backward(grad_out: &Array3<f64>) -> Array3<f64> {
    let (c, h2, w2) = grad_out.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = Array3::zeros((c, h, w));
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[[ch, y, x]] = grad_out[[ch, 2 * y, 2 * x]]
                    + grad_out[[ch, 2 * y, 2 * x + 1]]
                    + grad_out[[ch, 2 * y + 1, 2 * x]]
                    + grad_out[[ch, 2 * y + 1, 2 * x + 1]];
            }
        }
    }
    out
}

/// 2x2 average pooling, stride 2.
pub fn avgpool2(input: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = input.dim();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array3::zeros((c, oh, ow));
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                out[[ch, y, x]] = 0.25
                    * (input[[ch, 2 * y, 2 * x]]
                        + input[[ch, 2 * y, 2 * x + 1]]
                        + input[[ch, 2 * y + 1, 2 * x]]
                        + input[[ch, 2 * y + 1, 2 * x + 1]]);
            }
        }
    }
    out
}

pub fn avgpool2_backward(grad_out: &Array3<f64>) -> Array3<f64> {
    let (c, oh, ow) = grad_out.dim();
    let mut out = Array3::zeros((c, oh * 2, ow * 2));
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let g = 0.25 * grad_out[[ch, y, x]];
                out[[ch, 2 * y, 2 * x]] = g;
                out[[ch, 2 * y, 2 * x + 1]] = g;
                out[[ch, 2 * y + 1, 2 * x]] = g;
                out[[ch, 2 * y + 1, 2 * x + 1]] = g;
            }
        }
    }
    out
}

/// Leaky rectifier applied in place. Returns nothing; callers keep the
/// pre-activation around for the backward pass.
pub fn leaky_relu_inplace(values: &mut [f64], slope: f64) {
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
}

/// Multiplies `grad` by the rectifier derivative at `pre` (pre-activation).
pub fn leaky_relu_backward_inplace(grad: &mut [f64], pre: &[f64], slope: f64) {
    for (g, &x) in grad.iter_mut().zip(pre) {
        if x < 0.0 {
            *g *= slope;
        }
    }
}

/// Fully connected layer with frozen weights.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Array2<f64>, // out x in
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        self.weight.dot(x) + &self.bias
    }

    pub fn backward_input(&self, grad_out: &Array1<f64>) -> Array1<f64> {
        self.weight.t().dot(grad_out)
    }

    pub fn in_dim(&self) -> usize {
        self.weight.dim().1
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dim().0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn finite_diff<F: Fn(&Array3<f64>) -> f64>(
        f: F,
        point: &Array3<f64>,
        idx: (usize, usize, usize),
        eps: f64,
    ) -> f64 {
        let mut plus = point.clone();
        plus[[idx.0, idx.1, idx.2]] += eps;
        let mut minus = point.clone();
        minus[[idx.0, idx.1, idx.2]] -= eps;
        (f(&plus) - f(&minus)) / (2.0 * eps)
    }

    #[test]
    fn conv3x3_identity_kernel() {
        let input = Array3::from_shape_fn((1, 4, 4), |(_, y, x)| (y * 4 + x) as f64);
        let mut weight = Array4::zeros((1, 1, 3, 3));
        weight[[0, 0, 1, 1]] = 1.0;
        let out = conv3x3(&input, &weight, &Array1::zeros(1));
        assert_eq!(out, input);
    }

    #[test]
    fn conv3x3_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let input = Array3::from_shape_fn((2, 5, 5), |_| rng.gen_range(-1.0..1.0));
        let weight = Array4::from_shape_fn((3, 2, 3, 3), |_| rng.gen_range(-1.0..1.0));
        let bias = Array1::from_shape_fn(3, |_| rng.gen_range(-1.0..1.0));

        // Scalar loss: weighted sum of outputs.
        let probe = Array3::from_shape_fn((3, 5, 5), |_| rng.gen_range(-1.0..1.0));
        let loss = |x: &Array3<f64>| (&conv3x3(x, &weight, &bias) * &probe).sum();

        let grad = conv3x3_backward_input(&probe, &weight);
        for &idx in &[(0, 0, 0), (1, 2, 3), (0, 4, 4), (1, 0, 2)] {
            let fd = finite_diff(loss, &input, idx, 1e-5);
            assert!((grad[[idx.0, idx.1, idx.2]] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn upsample_and_pool_are_adjoint_shapes() {
        let input = array![[[1.0, 2.0], [3.0, 4.0]]];
        let up = upsample2x(&input);
        assert_eq!(up.dim(), (1, 4, 4));
        assert_eq!(up[[0, 0, 1]], 1.0);
        assert_eq!(up[[0, 3, 3]], 4.0);
        let back = upsample2x_backward(&up);
        assert_eq!(back, &input * 4.0);

        let pooled = avgpool2(&up);
        assert_eq!(pooled, input);
    }

    #[test]
    fn avgpool_backward_spreads_evenly() {
        let grad = array![[[4.0]]];
        let back = avgpool2_backward(&grad);
        assert_eq!(back, array![[[1.0, 1.0], [1.0, 1.0]]]);
    }

    #[test]
    fn leaky_relu_round_trip() {
        let mut v = vec![-2.0, -0.5, 0.0, 1.5];
        leaky_relu_inplace(&mut v, 0.2);
        assert_eq!(v, vec![-0.4, -0.1, 0.0, 1.5]);

        let pre = [-2.0, -0.5, 0.0, 1.5];
        let mut g = vec![1.0; 4];
        leaky_relu_backward_inplace(&mut g, &pre, 0.2);
        assert_eq!(g, vec![0.2, 0.2, 1.0, 1.0]);
    }

    #[test]
    fn linear_backward_is_transpose() {
        let layer = Linear {
            weight: array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            bias: array![0.1, 0.2, 0.3],
        };
        let x = array![1.0, -1.0];
        let y = layer.forward(&x);
        assert_eq!(y, array![-0.9, -0.8, -0.7]);
        let g = layer.backward_input(&array![1.0, 1.0, 1.0]);
        assert_eq!(g, array![9.0, 12.0]);
    }
}
