use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Binary `P5` graymap bytes, maxval 255.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::dim("pgm", &[width * height], &[pixels.len()]));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Min-max normalizes `values` to 8 bits. Returns the pixels and `(min, max)`.
pub fn normalize(values: &[f64]) -> (Vec<u8>, f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let pixels = values
        .iter()
        .map(|v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    (pixels, lo, hi)
}

pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm(width, height, pixels)?;
    File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}

/// Writes a normalized graymap plus a `<name>.scale.txt` sidecar holding the
/// value range that maps to 0 and 255.
pub fn write_scaled_pgm(path: impl AsRef<Path>, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let (pixels, lo, hi) = normalize(values);
    write_pgm(path, width, height, &pixels)?;
    let sidecar = path.with_extension("scale.txt");
    std::fs::write(&sidecar, format!("min = {lo:e}\nmax = {hi:e}\n")).map_err(|e| Error::io(&sidecar, e))
}
