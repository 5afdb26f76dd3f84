//! Grayscale little-endian Portable FloatMap.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::DistanceMap;

/// Raw PFM contents. Rows are stored top-down here; the file keeps them
/// bottom-up.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatMap {
    pub fn from_distance(d: &DistanceMap) -> Self {
        Self { width: d.width(), height: d.height(), data: d.data().iter().map(|&x| x as f32).collect() }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&x| f64::from(x)).collect()
    }

    /// Fails unless every value is a valid distance.
    pub fn to_distance_map(&self) -> Result<DistanceMap> {
        DistanceMap::new(self.width, self.height, self.to_f64())
    }
}

/// Splits the next whitespace-delimited header token off `bytes`.
fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PFM header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::Format("PFM header is not ASCII".into()))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<FloatMap> {
    let mut pos = 0;
    match token(bytes, &mut pos)? {
        "Pf" => {}
        "PF" => return Err(Error::Format("colour PFM (PF) is not supported, expected grayscale Pf".into())),
        other => return Err(Error::Format(format!("not a PFM file (magic {other:?})"))),
    }
    let dim = |s: &str, what: &str| -> Result<usize> {
        match s.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::Format(format!("invalid PFM {what} {s:?}"))),
        }
    };
    let width = dim(token(bytes, &mut pos)?, "width")?;
    let height = dim(token(bytes, &mut pos)?, "height")?;
    let scale_str = token(bytes, &mut pos)?;
    let scale: f64 = scale_str
        .parse()
        .map_err(|_| Error::Format(format!("invalid PFM scale {scale_str:?}")))?;
    if !scale.is_finite() || scale == 0.0 {
        return Err(Error::Format(format!("invalid PFM scale {scale_str:?}")));
    }
    if scale > 0.0 {
        return Err(Error::Format(format!(
            "big-endian PFM (scale {scale_str}) is not supported, expected a negative scale"
        )));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("truncated PFM header".into()));
    }
    pos += 1;
    let n = width
        .checked_mul(height)
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| Error::Format(format!("PFM dimensions {width}x{height} overflow")))?;
    let payload = &bytes[pos..];
    if payload.len() != n * 4 {
        return Err(Error::Format(format!(
            "PFM payload has {} bytes, expected {} for {width}x{height}",
            payload.len(),
            n * 4
        )));
    }
    let mut data = vec![0f32; n];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if v.is_nan() {
            return Err(Error::Format(format!("NaN at PFM sample {i}")));
        }
        let (row, col) = (i / width, i % width);
        data[(height - 1 - row) * width + col] = v;
    }
    Ok(FloatMap { width, height, data })
}

pub fn encode_pfm(map: &FloatMap) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    out.reserve(map.data.len() * 4);
    for row in map.data.chunks(map.width).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<FloatMap> {
    let path = path.as_ref();
    decode_pfm(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

pub fn write_pfm(path: impl AsRef<Path>, map: &FloatMap) -> Result<()> {
    std::fs::write(path, encode_pfm(map))?;
    Ok(())
}

/// Reads a PFM that must hold a valid distance map.
pub fn read_distance(path: impl AsRef<Path>) -> Result<DistanceMap> {
    let path = path.as_ref();
    read_pfm(path)?.to_distance_map().map_err(|e| with_path(e, path))
}

/// Stores a distance map as 32-bit floats.
pub fn write_distance(path: impl AsRef<Path>, d: &DistanceMap) -> Result<()> {
    write_pfm(path, &FloatMap::from_distance(d))
}

/// Reads a whole file, naming it in the error.
pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_bytes(path)?).map_err(|_| Error::Format(format!("{}: not UTF-8 text", path.display())))
}

pub(crate) fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let map = FloatMap { width: 4, height: 3, data: (0..12).map(|i| 0.1 + i as f32 * 1.37).collect() };
        let bytes = encode_pfm(&map);
        assert!(bytes.starts_with(b"Pf\n4 3\n-1.0\n"));
        assert_eq!(bytes.len(), 12 + 48);
        let back = decode_pfm(&bytes).unwrap();
        assert_eq!(back, map);
        assert_eq!(encode_pfm(&back), bytes);
    }

    #[test]
    fn rows_are_bottom_up() {
        let mut bytes = b"Pf\n1 2\n-1.0\n".to_vec();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().data, vec![2.0, 1.0]);
    }

    #[test]
    fn rejects_unsupported_and_malformed() {
        let mut big = b"Pf\n1 1\n+1.0\n".to_vec();
        big.extend_from_slice(&[0, 0, 128, 63]);
        let err = decode_pfm(&big).unwrap_err().to_string();
        assert!(err.contains("big-endian"), "{err}");

        let mut colour = b"PF\n1 1\n-1.0\n".to_vec();
        colour.extend_from_slice(&[0; 12]);
        assert!(decode_pfm(&colour).is_err());

        let mut nan = b"Pf\n1 1\n-1.0\n".to_vec();
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_pfm(&nan).unwrap_err().to_string().contains("NaN"));

        assert!(decode_pfm(b"Pf\n4 3\n-1.0\n").is_err());
        assert!(decode_pfm(b"Pf\nx 3\n-1.0\n").is_err());
        assert!(decode_pfm(b"Pf\n99999999999 99999999999\n-1.0\n").is_err());
        assert!(decode_pfm(b"P5\n1 1\n255\n").is_err());
    }
}
