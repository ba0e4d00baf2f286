//! Binary greyscale PGM (P5) output.

use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};

/// Maps `pixels` linearly onto `0..=255` by their own min and max. A
/// constant image becomes uniform mid-grey (128).
pub fn normalize_to_bytes(pixels: &[f64]) -> Result<Vec<u8>> {
    if pixels.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("image export"));
    }
    let lo = pixels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if pixels.is_empty() || lo == hi {
        return Ok(vec![128; pixels.len()]);
    }
    Ok(pixels
        .iter()
        .map(|&v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect())
}

pub fn encode_pgm(width: usize, height: usize, bytes: &[u8]) -> Result<Vec<u8>> {
    if width * height != bytes.len() || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "{} pixels do not form a {width}x{height} image",
            bytes.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(bytes);
    Ok(out)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[f64]) -> Result<()> {
    write_atomic(path, &encode_pgm(width, height, &normalize_to_bytes(pixels)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_mid_grey() {
        assert_eq!(normalize_to_bytes(&[0.3; 4]).unwrap(), vec![128; 4]);
    }

    #[test]
    fn min_max_stretch() {
        assert_eq!(normalize_to_bytes(&[-1.0, 0.0, 1.0]).unwrap(), vec![0, 128, 255]);
    }

    #[test]
    fn header() {
        let bytes = encode_pgm(2, 1, &[0, 255]).unwrap();
        assert_eq!(bytes, b"P5\n2 1\n255\n\x00\xff");
        assert!(encode_pgm(3, 1, &[0, 1]).is_err());
    }
}
