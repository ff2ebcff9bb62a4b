//! Image file formats.
//!
//! PFM layout (color, little-endian):
//!
//! ```text
//! "PF\n"
//! "<width> <height>\n"
//! "-1.0\n"                      negative scale marks little-endian
//! width*height*3 f32 LE values  rows bottom-to-top, RGB interleaved
//! ```
//!
//! PNG previews are 8-bit sRGB: `round(255 · srgb_encode(clamp(exposure · L, 0, 1)))`.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::imageproc::{srgb_decode, srgb_encode};
use crate::render::RadianceImage;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed PFM: {reason}")]
    Pfm { path: String, reason: String },
    #[error("{path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io { path: path.display().to_string(), source }
}

pub fn encode_pfm(img: &RadianceImage) -> Vec<u8> {
    let mut out = format!("PF\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 4);
    for y in (0..img.height).rev() {
        let row = &img.data[y * img.width * 3..(y + 1) * img.width * 3];
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<RadianceImage, String> {
    let mut fields = Vec::with_capacity(3);
    let mut pos = 0;
    while fields.len() < 3 {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or("truncated header")? + pos;
        fields.push(std::str::from_utf8(&bytes[pos..end]).map_err(|_| "header is not UTF-8")?.trim().to_owned());
        pos = end + 1;
    }
    if fields[0] != "PF" {
        return Err(format!("expected color PFM magic `PF`, found `{}`", fields[0]));
    }
    let dims: Vec<usize> = fields[1].split_whitespace().map(|s| s.parse::<usize>()).collect::<Result<_, _>>().map_err(|_| "bad dimensions")?;
    let [width, height] = dims[..] else {
        return Err("expected two dimensions".into());
    };
    let scale: f32 = fields[2].parse().map_err(|_| "bad scale")?;
    let little = scale < 0.0;
    let payload = &bytes[pos..];
    let n = width * height * 3;
    if payload.len() != n * 4 {
        return Err(format!("payload has {} bytes, expected {}", payload.len(), n * 4));
    }
    let mut img = RadianceImage::zeros(width, height);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let file_row = i / (width * 3);
        let col = i % (width * 3);
        img.data[(height - 1 - file_row) * width * 3 + col] = v;
    }
    Ok(img)
}

pub fn write_pfm(path: &Path, img: &RadianceImage) -> Result<(), FormatError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&encode_pfm(img)).map_err(io_err(path))
}

pub fn read_pfm(path: &Path) -> Result<RadianceImage, FormatError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_pfm(&bytes).map_err(|reason| FormatError::Pfm { path: path.display().to_string(), reason })
}

pub fn to_srgb8(img: &RadianceImage, exposure: f64) -> image::RgbImage {
    let mut out = image::RgbImage::new(img.width as u32, img.height as u32);
    for (dst, src) in out.pixels_mut().zip(img.pixels()) {
        dst.0 = src.map(|v| {
            let lin = (v as f64 * exposure).clamp(0.0, 1.0);
            (srgb_encode(lin) * 255.0).round() as u8
        });
    }
    out
}

pub fn write_png(path: &Path, img: &RadianceImage, exposure: f64) -> Result<(), FormatError> {
    to_srgb8(img, exposure)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| FormatError::Image { path: path.display().to_string(), source })
}

/// Loads an 8-bit photograph (PNG or JPEG) and linearizes it through the
/// sRGB transfer curve into `[0, 1]`. No exposure calibration is applied.
pub fn read_photo(path: &Path) -> Result<RadianceImage, FormatError> {
    let img = image::open(path).map_err(|source| FormatError::Image { path: path.display().to_string(), source })?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = RadianceImage::zeros(w, h);
    for (dst, px) in out.data.chunks_exact_mut(3).zip(img.pixels()) {
        for c in 0..3 {
            dst[c] = srgb_decode(px.0[c] as f64 / 255.0) as f32;
        }
    }
    Ok(out)
}

/// Reads either a PFM (returned as stored) or an 8-bit photo (linearized).
pub fn read_image(path: &Path) -> Result<RadianceImage, FormatError> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(ext) if ext == "pfm" => read_pfm(path),
        _ => read_photo(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_layout_is_bottom_up_little_endian() {
        let img = RadianceImage::from_fn(2, 2, |x, y| [(y * 2 + x) as f32, 0.5, -1.0]);
        let bytes = encode_pfm(&img);
        let header = b"PF\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        // first stored pixel is the bottom-left one, value 2.0
        assert_eq!(&bytes[header.len()..header.len() + 4], &2.0f32.to_le_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn pfm_rejects_truncation() {
        let img = RadianceImage::from_fn(3, 2, |x, _| [x as f32; 3]);
        let bytes = encode_pfm(&img);
        assert!(decode_pfm(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_pfm(b"Pf\n1 1\n-1.0\n").is_err());
        assert!(decode_pfm(b"PF\n1").is_err());
    }

    #[test]
    fn srgb8_mapping() {
        let img = RadianceImage::from_fn(2, 1, |x, _| if x == 0 { [0.0, 1.0, 4.0] } else { [0.5; 3] });
        let out = to_srgb8(&img, 0.5);
        assert_eq!(out.get_pixel(0, 0).0, [0, 188, 255]);
        assert_eq!(out.get_pixel(1, 0).0, [137, 137, 137]);
    }
}
