//! Semantic latent-space algebra: morphing, style crossover, expression
//! transfer, and latent distance diagnostics. All operations are pure.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::generator::{ExtendedLatent, GeneratorHandle};
use crate::image::ImageBuffer;

fn check_same_shape(a: &ExtendedLatent, b: &ExtendedLatent) -> Result<()> {
    if a.layers() != b.layers() || a.dim() != b.dim() {
        return Err(Error::shape(
            format!("latent {}x{}", a.layers(), a.dim()),
            format!("{}x{}", b.layers(), b.dim()),
        ));
    }
    Ok(())
}

/// Linear morph: lambda * w1 + (1 - lambda) * w2. The closed interval is
/// accepted so the endpoints are expressible. Coordinates shared by both
/// codes pass through bit-exactly, so degenerate morphs stay constant.
pub fn interpolate(w1: &ExtendedLatent, w2: &ExtendedLatent, lambda: f64) -> Result<ExtendedLatent> {
    check_same_shape(w1, w2)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(format!(
            "interpolation lambda must be in [0, 1], got {lambda}"
        )));
    }
    let mut rows = w1.rows().clone();
    rows.zip_mut_with(w2.rows(), |x, &y| {
        if *x != y {
            *x = lambda * *x + (1.0 - lambda) * y;
        }
    });
    ExtendedLatent::new(rows)
}

/// Renders a morph sequence. Frame 0 is the `w2` endpoint, the last frame
/// the `w1` endpoint; the handle's constant noise is used throughout.
pub fn morph_sequence(
    handle: &GeneratorHandle,
    w1: &ExtendedLatent,
    w2: &ExtendedLatent,
    frames: usize,
) -> Result<Vec<ImageBuffer>> {
    if frames < 2 {
        return Err(Error::InvalidConfig("frames must be >= 2".into()));
    }
    (0..frames)
        .map(|k| {
            let lambda = k as f64 / (frames - 1) as f64;
            let code = interpolate(w1, w2, lambda)?;
            handle.synthesize(&code, handle.noise())
        })
        .collect()
}

/// Style-transfer crossover: rows [0, split) from `content`, rows
/// [split, L) from `style`.
pub fn crossover(
    content: &ExtendedLatent,
    style: &ExtendedLatent,
    split: usize,
) -> Result<ExtendedLatent> {
    check_same_shape(content, style)?;
    let layers = content.layers();
    if split > layers {
        return Err(Error::InvalidConfig(format!(
            "split {split} out of range for {layers} layers"
        )));
    }
    let mut rows = content.rows().clone();
    for i in split..layers {
        rows.row_mut(i).assign(&style.rows().row(i));
    }
    ExtendedLatent::new(rows)
}

/// Default split point: content keeps the coarse half of the layers
/// (9 of 18 at full scale).
pub fn default_split(layers: usize) -> usize {
    layers.div_ceil(2)
}

/// A thresholded, optionally normalized expression direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionDirection {
    rows: Array2<f64>,
    threshold_used: f64,
    normalized: bool,
}

impl ExpressionDirection {
    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn threshold_used(&self) -> f64 {
        self.threshold_used
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }
}

/// Difference of an expressive and a neutral code, with per-layer rows whose
/// L2 norm falls below `threshold` zeroed, then (optionally) the whole
/// matrix scaled to unit Frobenius norm.
pub fn expression_direction(
    w_neutral: &ExtendedLatent,
    w_expressive: &ExtendedLatent,
    threshold: f64,
    normalize: bool,
) -> Result<ExpressionDirection> {
    check_same_shape(w_neutral, w_expressive)?;
    if threshold < 0.0 {
        return Err(Error::InvalidConfig("threshold must be >= 0".into()));
    }
    let mut rows = w_expressive.rows() - w_neutral.rows();
    for mut row in rows.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < threshold {
            row.fill(0.0);
        }
    }
    if normalize {
        let frob = rows.iter().map(|v| v * v).sum::<f64>().sqrt();
        if frob == 0.0 {
            return Err(Error::DegenerateDirection);
        }
        rows /= frob;
    }
    Ok(ExpressionDirection {
        rows,
        threshold_used: threshold,
        normalized: normalize,
    })
}

/// w_target + lambda * direction, any real lambda (both signs span the
/// expression axis).
pub fn apply_expression(
    w_target: &ExtendedLatent,
    dir: &ExpressionDirection,
    lambda: f64,
) -> Result<ExtendedLatent> {
    if w_target.rows().dim() != dir.rows.dim() {
        return Err(Error::shape(
            format!("{}x{}", w_target.layers(), w_target.dim()),
            format!("{}x{}", dir.rows.dim().0, dir.rows.dim().1),
        ));
    }
    ExtendedLatent::new(w_target.rows() + &(lambda * &dir.rows))
}

/// Frobenius distance between two codes.
pub fn latent_distance(a: &ExtendedLatent, b: &ExtendedLatent) -> Result<f64> {
    check_same_shape(a, b)?;
    Ok((a.rows() - b.rows()).iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Symmetric pairwise distance matrix with labeled CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    pub values: Array2<f64>,
}

pub fn pairwise_distances(
    latents: &[ExtendedLatent],
    labels: &[String],
) -> Result<DistanceMatrix> {
    if latents.len() < 2 {
        return Err(Error::InvalidConfig(
            "pairwise distances need at least 2 latents".into(),
        ));
    }
    if latents.len() != labels.len() {
        return Err(Error::InvalidConfig(format!(
            "{} latents but {} labels",
            latents.len(),
            labels.len()
        )));
    }
    let n = latents.len();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d = latent_distance(&latents[i], &latents[j])?;
            values[[i, j]] = d;
            values[[j, i]] = d;
        }
    }
    Ok(DistanceMatrix {
        labels: labels.to_vec(),
        values,
    })
}

impl DistanceMatrix {
    /// CSV with the labels as first row and first column.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("label");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for j in 0..self.labels.len() {
                out.push_str(&format!(",{}", self.values[[i, j]]));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn latent(rows: Array2<f64>) -> ExtendedLatent {
        ExtendedLatent::new(rows).unwrap()
    }

    fn seeded(layers: usize, dim: usize, seed: u64) -> ExtendedLatent {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, crate::rng::StreamTag::ZSamples);
        latent(Array2::from_shape_simple_fn((layers, dim), || {
            rng.gen_range(-2.0..2.0)
        }))
    }

    #[test]
    fn interpolate_endpoints_and_midpoint() {
        let w1 = seeded(4, 3, 1);
        let w2 = seeded(4, 3, 2);
        assert_eq!(interpolate(&w1, &w2, 1.0).unwrap(), w1);
        assert_eq!(interpolate(&w1, &w2, 0.0).unwrap(), w2);

        let zeros = latent(Array2::zeros((2, 2)));
        let twos = latent(Array2::from_elem((2, 2), 2.0));
        let mid = interpolate(&zeros, &twos, 0.5).unwrap();
        assert_eq!(mid.rows(), &Array2::from_elem((2, 2), 1.0));
    }

    #[test]
    fn interpolate_symmetry() {
        let w1 = seeded(4, 3, 3);
        let w2 = seeded(4, 3, 4);
        for &lambda in &[0.0, 0.25, 0.5, 0.8, 1.0] {
            let a = interpolate(&w1, &w2, lambda).unwrap();
            let b = interpolate(&w2, &w1, 1.0 - lambda).unwrap();
            let diff = (a.rows() - b.rows()).iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn interpolate_rejects_bad_inputs() {
        let w1 = seeded(4, 3, 1);
        let w2 = seeded(5, 3, 2);
        assert!(interpolate(&w1, &w2, 0.5).is_err());
        let w3 = seeded(4, 3, 2);
        assert!(interpolate(&w1, &w3, 1.5).is_err());
    }

    #[test]
    fn crossover_row_provenance() {
        let content = seeded(6, 4, 5);
        let style = seeded(6, 4, 6);
        let mixed = crossover(&content, &style, 2).unwrap();
        for i in 0..6 {
            let expected = if i < 2 {
                content.rows().row(i)
            } else {
                style.rows().row(i)
            };
            assert_eq!(mixed.rows().row(i), expected);
        }
        assert_eq!(crossover(&content, &style, 6).unwrap(), content);
        assert_eq!(crossover(&content, &style, 0).unwrap(), style);
        assert_eq!(crossover(&content, &content, 3).unwrap(), content);
        assert!(crossover(&content, &style, 7).is_err());
    }

    #[test]
    fn default_split_is_nine_of_eighteen() {
        assert_eq!(default_split(18), 9);
        assert_eq!(default_split(8), 4);
        assert_eq!(default_split(5), 3);
    }

    #[test]
    fn expression_threshold_zeroes_weak_rows() {
        let neutral = latent(Array2::zeros((1, 2)));
        let expressive = latent(array![[0.3, 0.4]]); // norm 0.5
        let dir = expression_direction(&neutral, &expressive, 1.0, false).unwrap();
        assert_eq!(dir.rows(), &array![[0.0, 0.0]]);
        assert_eq!(dir.threshold_used(), 1.0);

        // Threshold 0 keeps everything.
        let dir0 = expression_direction(&neutral, &expressive, 0.0, false).unwrap();
        assert_eq!(dir0.rows(), &array![[0.3, 0.4]]);
    }

    #[test]
    fn expression_four_row_fixture() {
        // Rows with norms {0.5, 2.0, 0.9, 3.0} at threshold 1: rows 1 and 3
        // survive; the normalized matrix has Frobenius norm 1 and the
        // surviving entries are 2/sqrt(13) and 3/sqrt(13).
        let neutral = latent(Array2::zeros((4, 4)));
        let expressive = latent(array![
            [0.5, 0.0, 0.0, 0.0],
            [2.0, 0.0, 0.0, 0.0],
            [0.0, 0.9, 0.0, 0.0],
            [0.0, 0.0, 3.0, 0.0],
        ]);
        let dir = expression_direction(&neutral, &expressive, 1.0, true).unwrap();
        let s = 13.0f64.sqrt();
        let expected = array![
            [0.0, 0.0, 0.0, 0.0],
            [2.0 / s, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 3.0 / s, 0.0],
        ];
        let diff = (dir.rows() - &expected).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
        let frob = dir.rows().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((frob - 1.0).abs() < 1e-9);
        assert!(dir.normalized());
    }

    #[test]
    fn degenerate_direction_errors_when_normalizing() {
        let neutral = latent(Array2::zeros((2, 2)));
        let expressive = latent(Array2::from_elem((2, 2), 0.1));
        assert!(matches!(
            expression_direction(&neutral, &expressive, 10.0, true),
            Err(Error::DegenerateDirection)
        ));
        // Without normalization the all-zero direction is allowed.
        let dir = expression_direction(&neutral, &expressive, 10.0, false).unwrap();
        assert_eq!(dir.rows().sum(), 0.0);
    }

    #[test]
    fn apply_expression_identities() {
        let target = seeded(4, 3, 7);
        let dir = expression_direction(&seeded(4, 3, 8), &seeded(4, 3, 9), 0.0, true).unwrap();

        let same = apply_expression(&target, &dir, 0.0).unwrap();
        assert_eq!(same, target);

        // Additivity: apply(apply(w, d, a), d, b) == apply(w, d, a + b).
        let a = apply_expression(&apply_expression(&target, &dir, 0.7).unwrap(), &dir, 0.3).unwrap();
        let b = apply_expression(&target, &dir, 1.0).unwrap();
        let diff = (a.rows() - b.rows()).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12);

        // +lambda and -lambda reflect about the target.
        let plus = apply_expression(&target, &dir, 0.5).unwrap();
        let minus = apply_expression(&target, &dir, -0.5).unwrap();
        let mid = (plus.rows() + minus.rows()) / 2.0;
        let diff = (&mid - target.rows()).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn distance_is_a_metric_on_fixtures() {
        let a = latent(array![[0.0, 0.0], [0.0, 0.0]]);
        let b = latent(array![[3.0, 4.0], [0.0, 0.0]]);
        assert_eq!(latent_distance(&a, &b).unwrap(), 5.0);
        assert_eq!(latent_distance(&a, &a).unwrap(), 0.0);

        for seed in 0..5 {
            let x = seeded(3, 4, seed);
            let y = seeded(3, 4, seed + 100);
            let z = seeded(3, 4, seed + 200);
            let xy = latent_distance(&x, &y).unwrap();
            let yx = latent_distance(&y, &x).unwrap();
            assert!((xy - yx).abs() < 1e-12);
            let xz = latent_distance(&x, &z).unwrap();
            let yz = latent_distance(&y, &z).unwrap();
            assert!(xz <= xy + yz + 1e-12);
        }
    }

    #[test]
    fn pairwise_matrix_matches_hand_computation() {
        let a = latent(array![[0.0, 0.0]]);
        let b = latent(array![[3.0, 4.0]]);
        let c = latent(array![[0.0, 1.0]]);
        let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let m = pairwise_distances(&[a, b, c], &labels).unwrap();

        assert_eq!(m.values[[0, 0]], 0.0);
        assert_eq!(m.values[[1, 1]], 0.0);
        assert_eq!(m.values[[0, 1]], 5.0);
        assert_eq!(m.values[[0, 2]], 1.0);
        assert_eq!(m.values[[1, 2]], (9.0f64 + 9.0).sqrt());
        assert_eq!(m.values, m.values.t());

        let csv = m.to_csv();
        assert!(csv.starts_with("label,a,b,c\n"));
        assert!(csv.contains("a,0,5,1\n"));
    }

    #[test]
    fn pairwise_requires_two_latents_and_matching_labels() {
        let a = latent(array![[0.0, 0.0]]);
        assert!(pairwise_distances(std::slice::from_ref(&a), &["a".to_string()]).is_err());
        assert!(pairwise_distances(&[a.clone(), a], &["a".to_string()]).is_err());
    }

    #[test]
    fn morph_endpoints_and_constant_sequence() {
        let handle =
            crate::generator::build_toy_generator(&crate::generator::GeneratorConfig::toy(16, 8, 3))
                .unwrap();
        let layers = handle.num_style_layers();
        let mut rng = crate::rng::stream(60, crate::rng::StreamTag::ZSamples);
        let w1 = handle
            .map_latent(&crate::generator::standard_z(8, &mut rng))
            .unwrap()
            .broadcast(layers);
        let w2 = handle
            .map_latent(&crate::generator::standard_z(8, &mut rng))
            .unwrap()
            .broadcast(layers);

        let frames = morph_sequence(&handle, &w1, &w2, 2).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0], handle.synthesize(&w2, handle.noise()).unwrap());
        assert_eq!(frames[1], handle.synthesize(&w1, handle.noise()).unwrap());

        let same = morph_sequence(&handle, &w1, &w1, 4).unwrap();
        assert!(same.iter().all(|f| *f == same[0]));

        assert!(morph_sequence(&handle, &w1, &w2, 1).is_err());
    }

    #[test]
    fn morph_adjacent_frames_shrink_with_frame_count() {
        // Local Lipschitz sweep: halving the step (16 -> 32 frames) must
        // shrink the largest adjacent-frame distance accordingly.
        let handle =
            crate::generator::build_toy_generator(&crate::generator::GeneratorConfig::toy(16, 8, 4))
                .unwrap();
        let layers = handle.num_style_layers();
        let mut rng = crate::rng::stream(61, crate::rng::StreamTag::ZSamples);
        let w1 = handle
            .map_latent(&crate::generator::standard_z(8, &mut rng))
            .unwrap()
            .broadcast(layers);
        let w2 = handle
            .map_latent(&crate::generator::standard_z(8, &mut rng))
            .unwrap()
            .broadcast(layers);

        let max_adjacent = |count: usize| {
            let frames = morph_sequence(&handle, &w1, &w2, count).unwrap();
            frames
                .windows(2)
                .map(|w| w[0].rmse(&w[1]).unwrap())
                .fold(0.0, f64::max)
        };
        let coarse = max_adjacent(16);
        let fine = max_adjacent(32);
        assert!(fine > 0.0);
        let ratio = coarse / fine;
        assert!(
            ratio <= 2.5,
            "adjacent-frame distance ratio {ratio} exceeds the Lipschitz bound"
        );
    }
}
