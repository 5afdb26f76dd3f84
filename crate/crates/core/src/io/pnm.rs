//! 8-bit binary PGM/PPM, and PNG behind the `png` feature.

use std::path::Path;

use super::pfm::{read_bytes, with_path};
use crate::error::{Error, Result};
use crate::image::Image;

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("malformed PNM header".into()))
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::Format("expected binary PGM (P5) or PPM (P6) magic".into())),
    };
    let mut pos = 2;
    let width = header_token(bytes, &mut pos)?;
    let height = header_token(bytes, &mut pos)?;
    let maxval = header_token(bytes, &mut pos)?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("invalid PNM size {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("only 8-bit PNM is supported, maxval {maxval}")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("truncated PNM header".into()));
    }
    pos += 1;
    let n = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Format(format!("PNM dimensions {width}x{height} overflow")))?;
    let payload = &bytes[pos..];
    if payload.len() < n {
        return Err(Error::Format(format!("PNM payload has {} bytes, expected {n}", payload.len())));
    }
    let data = payload[..n].iter().map(|&b| f64::from(b.min(maxval as u8)) / maxval as f64).collect();
    Image::new(width, height, channels, data)
}

fn quantise(img: &Image) -> Vec<u8> {
    img.data().iter().map(|&x| (x * 255.0).round() as u8).collect()
}

pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(quantise(img));
    out
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads a PGM, PPM or (with the `png` feature) PNG file into `[0, 1]`.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let decoded = if is_png(path) { decode_png(&bytes) } else { decode_pnm(&bytes) };
    decoded.map_err(|e| with_path(e, path))
}

/// Writes PGM/PPM, or PNG for a `.png` path.
pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        return write_png(path, img);
    }
    std::fs::write(path, encode_pnm(img))?;
    Ok(())
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<Image> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = if img.color().has_color() { (3, img.to_rgb8().into_raw()) } else { (1, img.to_luma8().into_raw()) };
    Image::new(w, h, channels, raw.into_iter().map(|b| f64::from(b) / 255.0).collect())
}

#[cfg(feature = "png")]
fn write_png(path: &Path, img: &Image) -> Result<()> {
    let colour = if img.channels() == 1 { image::ExtendedColorType::L8 } else { image::ExtendedColorType::Rgb8 };
    image::save_buffer_with_format(path, &quantise(img), img.width() as u32, img.height() as u32, colour, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("{}: PNG: {e}", path.display())))
}

#[cfg(not(feature = "png"))]
fn decode_png(_: &[u8]) -> Result<Image> {
    Err(Error::Format("PNG support is disabled (build with the `png` feature)".into()))
}

#[cfg(not(feature = "png"))]
fn write_png(_: &Path, _: &Image) -> Result<()> {
    Err(Error::Format("PNG support is disabled (build with the `png` feature)".into()))
}
