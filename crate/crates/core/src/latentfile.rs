//! Binary container for one extended latent code.
//!
//! Layout: magic `WPLT`, little-endian u32 version (= 1), u32 layer count L,
//! u32 dimension D, then L*D float32 values row-major. Total size is
//! 16 + 4*L*D bytes. Values round-trip bit-exactly through f32.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::generator::ExtendedLatent;

const MAGIC: [u8; 4] = *b"WPLT";
const VERSION: u32 = 1;

pub fn write_latent(latent: &ExtendedLatent, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&MAGIC)?;
    f.write_all(&VERSION.to_le_bytes())?;
    f.write_all(&(latent.layers() as u32).to_le_bytes())?;
    f.write_all(&(latent.dim() as u32).to_le_bytes())?;
    for &v in latent.rows().iter() {
        f.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_latent(path: impl AsRef<Path>) -> Result<ExtendedLatent> {
    let mut f = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;

    if bytes.len() < 16 || bytes[..4] != MAGIC {
        return Err(Error::LatentBadMagic);
    }
    let u32_at = |off: usize| u32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]);
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::LatentBadVersion(version));
    }
    let layers = u32_at(8) as usize;
    let dim = u32_at(12) as usize;
    let expected = 16 + 4 * layers * dim;
    if bytes.len() != expected {
        return Err(Error::LatentSizeMismatch {
            expected: expected as u64,
            got: bytes.len() as u64,
        });
    }
    let values: Vec<f64> = bytes[16..]
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    let rows = Array2::from_shape_vec((layers, dim), values)
        .map_err(|e| Error::CorruptManifest(e.to_string()))?;
    ExtendedLatent::new(rows)
}

/// Quantizes a latent to the file's f32 precision without touching disk.
/// Artifacts derived from a saved latent (reconstruction images, traces)
/// are rendered from this quantized code so that saving and reloading
/// reproduces them bit-exactly.
pub fn quantize(latent: &ExtendedLatent) -> ExtendedLatent {
    ExtendedLatent::new(latent.rows().mapv(|v| f64::from(v as f32)))
        .expect("quantization preserves finiteness")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_latent() -> ExtendedLatent {
        let rows = Array2::from_shape_fn((3, 4), |(i, j)| (i as f64 - 1.5) * 0.7 + j as f64 * 0.3);
        ExtendedLatent::new(rows).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("code.wplt");
        let latent = quantize(&sample_latent());
        write_latent(&latent, &path).unwrap();
        let back = read_latent(&path).unwrap();
        assert_eq!(latent, back);

        let size = std::fs::metadata(&path).unwrap().len();
        assert_eq!(size, 16 + 4 * 3 * 4);
    }

    #[test]
    fn malformed_files_yield_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("code.wplt");
        write_latent(&sample_latent(), &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(read_latent(&path), Err(Error::LatentBadMagic)));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        std::fs::write(&path, &bad_version).unwrap();
        assert!(matches!(
            read_latent(&path),
            Err(Error::LatentBadVersion(9))
        ));

        std::fs::write(&path, &good[..good.len() - 3]).unwrap();
        match read_latent(&path) {
            Err(Error::LatentSizeMismatch { expected, got }) => {
                assert_eq!(expected, 64);
                assert_eq!(got, 61);
            }
            other => panic!("expected size mismatch, got {other:?}"),
        }
    }

    #[test]
    fn quantize_is_idempotent() {
        let q1 = quantize(&sample_latent());
        let q2 = quantize(&q1);
        assert_eq!(q1, q2);
    }
}
