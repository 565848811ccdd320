//! Square RGB image buffer.
//!
//! Pixels are reals nominally in [0,1], stored row-major as H x W x 3.
//! Values are clamped only when exporting to 8-bit; intermediate math keeps
//! them unclamped.

use ndarray::Array3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    data: Array3<f64>,
}

impl ImageBuffer {
    /// Wraps an H x W x 3 array. The image must be square.
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h != w || c != 3 {
            return Err(Error::shape("square HxWx3 image", format!("{h}x{w}x{c}")));
        }
        Ok(Self { data })
    }

    pub fn zeros(side: usize) -> Self {
        Self {
            data: Array3::zeros((side, side, 3)),
        }
    }

    pub fn constant(side: usize, value: f64) -> Self {
        Self {
            data: Array3::from_elem((side, side, 3), value),
        }
    }

    pub fn side(&self) -> usize {
        self.data.dim().0
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    /// Channel-major copy (3 x H x W), the layout the networks consume.
    pub fn to_planes(&self) -> Array3<f64> {
        let (h, w, _) = self.data.dim();
        let mut planes = Array3::zeros((3, h, w));
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    planes[[c, y, x]] = self.data[[y, x, c]];
                }
            }
        }
        planes
    }

    pub fn from_planes(planes: &Array3<f64>) -> Result<Self> {
        let (c, h, w) = planes.dim();
        if c != 3 {
            return Err(Error::shape("3xHxW planes", format!("{c}x{h}x{w}")));
        }
        let mut data = Array3::zeros((h, w, 3));
        for y in 0..h {
            for x in 0..w {
                for ch in 0..3 {
                    data[[y, x, ch]] = planes[[ch, y, x]];
                }
            }
        }
        Self::new(data)
    }

    /// 8-bit export with the fixed rounding rule round(clamp(x,0,1)*255).
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_rgb8(side: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != side * side * 3 {
            return Err(Error::shape(
                format!("{} bytes", side * side * 3),
                format!("{}", bytes.len()),
            ));
        }
        let data = Array3::from_shape_vec(
            (side, side, 3),
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
        .expect("length checked above");
        Self::new(data)
    }

    /// Mean squared difference over all scalars.
    pub fn mse(&self, other: &ImageBuffer) -> Result<f64> {
        if self.side() != other.side() {
            return Err(Error::shape(
                format!("side {}", self.side()),
                format!("side {}", other.side()),
            ));
        }
        let n = self.data.len() as f64;
        let sum: f64 = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum / n)
    }

    /// Per-pixel RMSE in [0,1] units.
    pub fn rmse(&self, other: &ImageBuffer) -> Result<f64> {
        Ok(self.mse(other)?.sqrt())
    }

    /// Mean squared difference restricted to a rectangle (x, y, w, h).
    pub fn region_mse(&self, other: &ImageBuffer, rect: (usize, usize, usize, usize)) -> Result<f64> {
        let (x, y, w, h) = rect;
        let side = self.side();
        if self.side() != other.side() {
            return Err(Error::shape(
                format!("side {}", self.side()),
                format!("side {}", other.side()),
            ));
        }
        if x + w > side || y + h > side || w == 0 || h == 0 {
            return Err(Error::InvalidConfig(format!(
                "rectangle ({x},{y},{w},{h}) outside {side}x{side} image"
            )));
        }
        let mut sum = 0.0;
        for yy in y..y + h {
            for xx in x..x + w {
                for c in 0..3 {
                    let d = self.data[[yy, xx, c]] - other.data[[yy, xx, c]];
                    sum += d * d;
                }
            }
        }
        Ok(sum / (w * h * 3) as f64)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_square() {
        assert!(ImageBuffer::new(Array3::zeros((4, 5, 3))).is_err());
        assert!(ImageBuffer::new(Array3::zeros((4, 4, 1))).is_err());
    }

    #[test]
    fn plane_round_trip() {
        let mut img = ImageBuffer::zeros(4);
        img.data_mut()[[1, 2, 0]] = 0.25;
        img.data_mut()[[3, 0, 2]] = 0.75;
        let back = ImageBuffer::from_planes(&img.to_planes()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn rgb8_rounding_rule() {
        let mut img = ImageBuffer::zeros(1);
        img.data_mut()[[0, 0, 0]] = -0.3; // clamps to 0
        img.data_mut()[[0, 0, 1]] = 0.5; // rounds to 128
        img.data_mut()[[0, 0, 2]] = 1.7; // clamps to 255
        assert_eq!(img.to_rgb8(), vec![0, 128, 255]);
    }

    #[test]
    fn region_mse_bounds() {
        let a = ImageBuffer::zeros(8);
        let b = ImageBuffer::constant(8, 1.0);
        assert_eq!(a.region_mse(&b, (0, 0, 8, 8)).unwrap(), 1.0);
        assert!(a.region_mse(&b, (4, 4, 8, 8)).is_err());
    }
}
