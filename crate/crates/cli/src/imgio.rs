//! PNG import/export. Quantization happens only here: 8-bit RGB with the
//! fixed rule round(clamp(x, 0, 1) * 255).

use std::path::Path;

use lsg_core::ImageBuffer;

use crate::errors::{CliError, CliResult};

pub fn read_png(path: &Path) -> CliResult<ImageBuffer> {
    let img = image::open(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    if w != h {
        return Err(CliError::Args(format!(
            "{}: image must be square, got {w}x{h}",
            path.display()
        )));
    }
    ImageBuffer::from_rgb8(h as usize, img.as_raw()).map_err(CliError::from)
}

pub fn write_png(image: &ImageBuffer, path: &Path) -> CliResult<()> {
    let side = image.side() as u32;
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(side, side, image.to_rgb8()).expect("sized buffer");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}
