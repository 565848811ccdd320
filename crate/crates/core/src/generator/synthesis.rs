//! Synthesis network internals: layer geometry, weight sampling, and the
//! differentiable forward/backward pass from a per-layer style code to an
//! image.
//!
//! Each style layer runs conv -> noise -> leaky rectifier -> modulation,
//! where modulation standardizes every channel over space and re-scales it
//! with an affine function of that layer's style row (scale starts at
//! identity: `y = (1 + s) * normalized + t`).

use ndarray::{Array1, Array2, Array3, Array4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::nn;

pub(crate) const LEAKY_SLOPE: f64 = 0.2;
const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub(crate) struct SynthesisLayerWeights {
    pub conv_weight: Array4<f64>, // out x in x 3 x 3
    pub conv_bias: Array1<f64>,
    pub style_weight: Array2<f64>, // 2*out x style_dim; first half scale, second half shift
    pub style_bias: Array1<f64>,
    pub noise_scale: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct SynthesisWeights {
    pub constant: Array3<f64>, // c0 x 4 x 4
    pub layers: Vec<SynthesisLayerWeights>,
    pub rgb_weight: Array2<f64>, // 3 x c_last
    pub rgb_bias: Array1<f64>,
}

/// Static geometry of one style layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerGeometry {
    pub resolution: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub upsample: bool,
}

/// Channel count at a given layer resolution: wide at the base, halving as
/// the resolution doubles, capped.
pub fn channels_at(resolution: usize, base_channels: usize, channel_cap: usize, res: usize) -> usize {
    (base_channels * resolution / res).min(channel_cap)
}

/// Two layers per resolution from 4x4 up to the output resolution; the
/// first layer of each new resolution upsamples (except the 4x4 pair).
pub fn layer_geometry(resolution: usize, base_channels: usize, channel_cap: usize) -> Vec<LayerGeometry> {
    let levels = resolution.ilog2() as usize - 1; // 4 -> 1, 8 -> 2, ...
    let mut layers = Vec::with_capacity(2 * levels);
    for i in 0..2 * levels {
        let res = 4usize << (i / 2);
        let prev_res = if i == 0 { 4 } else { 4usize << ((i - 1) / 2) };
        layers.push(LayerGeometry {
            resolution: res,
            in_channels: channels_at(resolution, base_channels, channel_cap, prev_res),
            out_channels: channels_at(resolution, base_channels, channel_cap, res),
            upsample: i > 0 && i % 2 == 0,
        });
    }
    layers
}

/// Draws one tensor's worth of values: zero-mean Gaussians with standard
/// deviation 1/sqrt(fan_in), sampled as f32 and widened so that checkpoint
/// round-trips through f32 storage are exact.
fn draw<R: Rng>(rng: &mut R, count: usize, fan_in: usize) -> Vec<f64> {
    let std = 1.0 / (fan_in as f32).sqrt();
    (0..count)
        .map(|_| {
            let v: f32 = rng.sample(StandardNormal);
            f64::from(v * std)
        })
        .collect()
}

pub(crate) fn sample_mapping<R: Rng>(rng: &mut R, style_dim: usize, layers: usize) -> Vec<nn::Linear> {
    (0..layers)
        .map(|_| {
            let weight = Array2::from_shape_vec(
                (style_dim, style_dim),
                draw(rng, style_dim * style_dim, style_dim),
            )
            .unwrap();
            let bias = Array1::from_vec(draw(rng, style_dim, 1));
            nn::Linear { weight, bias }
        })
        .collect()
}

pub(crate) fn sample_synthesis<R: Rng>(
    rng: &mut R,
    geometry: &[LayerGeometry],
    style_dim: usize,
) -> SynthesisWeights {
    let c0 = geometry[0].in_channels;
    let constant = Array3::from_shape_vec((c0, 4, 4), draw(rng, c0 * 16, 1)).unwrap();
    let layers = geometry
        .iter()
        .map(|geo| {
            let (ci, co) = (geo.in_channels, geo.out_channels);
            SynthesisLayerWeights {
                conv_weight: Array4::from_shape_vec((co, ci, 3, 3), draw(rng, co * ci * 9, ci * 9))
                    .unwrap(),
                conv_bias: Array1::from_vec(draw(rng, co, 1)),
                style_weight: Array2::from_shape_vec(
                    (2 * co, style_dim),
                    draw(rng, 2 * co * style_dim, style_dim),
                )
                .unwrap(),
                style_bias: Array1::from_vec(draw(rng, 2 * co, 1)),
                // The noise joins the conv output, so it shares that site's
                // fan-in scaling.
                noise_scale: draw(rng, 1, ci * 9)[0],
            }
        })
        .collect();
    let c_last = geometry.last().unwrap().out_channels;
    let rgb_weight = Array2::from_shape_vec((3, c_last), draw(rng, 3 * c_last, c_last)).unwrap();
    let rgb_bias = Array1::from_vec(draw(rng, 3, 1));
    SynthesisWeights {
        constant,
        layers,
        rgb_weight,
        rgb_bias,
    }
}

/// Per-layer values the backward pass needs.
struct LayerTrace {
    pre_activation: Array3<f64>,
    normalized: Array3<f64>,
    inv_std: Array1<f64>,
    scale: Array1<f64>, // the (1 + s) factor per channel
}

/// Everything cached by a traced forward pass.
pub(crate) struct SynthesisTrace {
    layers: Vec<LayerTrace>,
}

/// Forward pass. `latent` is L x D, `noise` one plane per layer. Returns the
/// native-range image planes (3 x R x R, values around [-1, 1]).
pub(crate) fn forward(
    weights: &SynthesisWeights,
    latent: &Array2<f64>,
    noise: &[Array2<f64>],
    mut trace: Option<&mut SynthesisTrace>,
) -> Array3<f64> {
    if let Some(t) = trace.as_deref_mut() {
        t.layers.clear();
    }
    let mut x = weights.constant.clone();
    for (i, layer) in weights.layers.iter().enumerate() {
        let co = layer.conv_bias.len();
        if x.dim().1 < noise[i].dim().0 {
            x = nn::upsample2x(&x);
        }
        let mut a = nn::conv3x3(&x, &layer.conv_weight, &layer.conv_bias);

        // Fixed noise plane shared across channels, scaled per layer.
        let (h, w) = noise[i].dim();
        {
            let a_s = a.as_slice_mut().unwrap();
            let n_s = noise[i].as_slice().unwrap();
            for c in 0..co {
                let plane = &mut a_s[c * h * w..(c + 1) * h * w];
                for p in 0..h * w {
                    plane[p] += layer.noise_scale * n_s[p];
                }
            }
        }

        let pre_activation = a.clone();
        nn::leaky_relu_inplace(a.as_slice_mut().unwrap(), LEAKY_SLOPE);

        // Channel standardization followed by the style affine.
        let style = layer.style_weight.dot(&latent.row(i)) + &layer.style_bias;
        let mut inv_std = Array1::zeros(co);
        let mut scale = Array1::zeros(co);
        let m = (h * w) as f64;
        let mut normalized = a;
        {
            let n_s = normalized.as_slice_mut().unwrap();
            for c in 0..co {
                let plane = &mut n_s[c * h * w..(c + 1) * h * w];
                let mean = plane.iter().sum::<f64>() / m;
                let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
                let is = 1.0 / (var + NORM_EPS).sqrt();
                inv_std[c] = is;
                for v in plane.iter_mut() {
                    *v = (*v - mean) * is;
                }
                scale[c] = 1.0 + style[c];
            }
        }
        let mut y = normalized.clone();
        {
            let y_s = y.as_slice_mut().unwrap();
            for c in 0..co {
                let (sc, sh) = (scale[c], style[co + c]);
                let plane = &mut y_s[c * h * w..(c + 1) * h * w];
                for v in plane.iter_mut() {
                    *v = sc * *v + sh;
                }
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.layers.push(LayerTrace {
                pre_activation,
                normalized,
                inv_std,
                scale,
            });
        }
        x = y;
    }
    nn::conv1x1(&x, &weights.rgb_weight, &weights.rgb_bias)
}

pub(crate) fn new_trace() -> SynthesisTrace {
    SynthesisTrace { layers: Vec::new() }
}

/// Backward pass: gradient of a scalar loss with respect to the latent,
/// given the gradient with respect to the native-range image planes.
pub(crate) fn backward(
    weights: &SynthesisWeights,
    trace: &SynthesisTrace,
    grad_image: &Array3<f64>,
) -> Array2<f64> {
    let num_layers = weights.layers.len();
    let style_dim = weights.layers[0].style_weight.dim().1;
    let mut grad_latent = Array2::zeros((num_layers, style_dim));

    let mut g = nn::conv1x1_backward_input(grad_image, &weights.rgb_weight);
    for i in (0..num_layers).rev() {
        let layer = &weights.layers[i];
        let cache = &trace.layers[i];
        let (co, h, w) = cache.normalized.dim();
        let m = (h * w) as f64;

        // Modulation backward: y = scale * xhat + shift.
        let mut grad_style = Array1::zeros(2 * co);
        let mut g_xhat = g;
        {
            let g_s = g_xhat.as_slice_mut().unwrap();
            let xhat_s = cache.normalized.as_slice().unwrap();
            for c in 0..co {
                let gp = &mut g_s[c * h * w..(c + 1) * h * w];
                let xp = &xhat_s[c * h * w..(c + 1) * h * w];
                let mut g_scale = 0.0;
                let mut g_shift = 0.0;
                for p in 0..h * w {
                    g_scale += gp[p] * xp[p];
                    g_shift += gp[p];
                }
                grad_style[c] = g_scale;
                grad_style[co + c] = g_shift;
                let sc = cache.scale[c];
                for v in gp.iter_mut() {
                    *v *= sc;
                }
            }
        }
        grad_latent
            .row_mut(i)
            .assign(&layer.style_weight.t().dot(&grad_style));

        // Standardization backward per channel.
        let mut g_act = g_xhat;
        {
            let g_s = g_act.as_slice_mut().unwrap();
            let xhat_s = cache.normalized.as_slice().unwrap();
            for c in 0..co {
                let gp = &mut g_s[c * h * w..(c + 1) * h * w];
                let xp = &xhat_s[c * h * w..(c + 1) * h * w];
                let mean_g = gp.iter().sum::<f64>() / m;
                let mean_gx = gp.iter().zip(xp).map(|(a, b)| a * b).sum::<f64>() / m;
                let is = cache.inv_std[c];
                for (gv, &xv) in gp.iter_mut().zip(xp) {
                    *gv = is * (*gv - mean_g - xv * mean_gx);
                }
            }
        }

        // Rectifier, then (noise add is identity), then conv.
        nn::leaky_relu_backward_inplace(
            g_act.as_slice_mut().unwrap(),
            cache.pre_activation.as_slice().unwrap(),
            LEAKY_SLOPE,
        );
        let mut g_in = nn::conv3x3_backward_input(&g_act, &layer.conv_weight);
        if i > 0 && trace.layers[i - 1].normalized.dim().1 < h {
            g_in = nn::upsample2x_backward(&g_in);
        }
        g = g_in;
    }
    grad_latent
}
