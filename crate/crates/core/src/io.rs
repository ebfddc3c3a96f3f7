//! File output helpers: atomic writes, sidecars and 8-bit gray images.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageFormat};

use crate::error::{Error, Result};
use crate::tensor::ScalarField;

/// `<path>.<suffix>`, keeping the original extension.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name: OsString = path.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

fn temp_path(path: &Path) -> PathBuf {
    sidecar(path, &format!("tmp{}", std::process::id()))
}

/// Writes to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_path(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        e.into()
    })
}

/// Writes a row-major `width x height` gray image; PGM or PNG by extension.
pub fn write_gray_image(path: &Path, width: usize, height: usize, pixels: Vec<u8>) -> Result<()> {
    let img_err = |message: String| Error::Image { path: path.to_path_buf(), message };
    let format = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pgm") => ImageFormat::Pnm,
        Some("png") => ImageFormat::Png,
        other => return Err(img_err(format!("unsupported image extension {other:?}, use .pgm or .png"))),
    };
    let img = GrayImage::from_raw(width as u32, height as u32, pixels)
        .ok_or_else(|| img_err("pixel buffer does not match dimensions".into()))?;
    let tmp = temp_path(path);
    img.save_with_format(&tmp, format).map_err(|e| img_err(e.to_string()))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Gray level of `v` on the scale `[lo, hi]`, clamped; a flat scale maps to mid-gray.
pub fn gray_level(v: f64, lo: f64, hi: f64) -> u8 {
    if hi <= lo {
        return 128;
    }
    (255.0 * ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).round() as u8
}

/// Writes a scalar field as an 8-bit image plus a `<path>.legend.txt` with
/// the gray-scale bounds. `scale` fixes the bounds; otherwise the field's
/// extrema are used. Returns the bounds.
pub fn export_scalar_map(field: &ScalarField, path: &Path, scale: Option<(f64, f64)>) -> Result<(f64, f64)> {
    let g = field.grid;
    let bad: Vec<(usize, usize)> =
        field.data.iter().enumerate().filter(|(_, v)| !v.is_finite()).map(|(k, _)| g.unindex(k)).take(16).collect();
    if !bad.is_empty() {
        return Err(Error::NonFinite(bad));
    }
    let (lo, hi) = scale.unwrap_or_else(|| (field.min(), field.max()));
    let pixels = (0..g.n2)
        .flat_map(|y| (0..g.n1).map(move |x| (x, y)))
        .map(|(x, y)| gray_level(field.get(x, y), lo, hi))
        .collect();
    write_gray_image(path, g.n1, g.n2, pixels)?;
    write_atomic(&sidecar(path, "legend.txt"), format!("min {lo:e}\nmax {hi:e}\n").as_bytes())?;
    Ok((lo, hi))
}
