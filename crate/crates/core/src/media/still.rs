//! PNG stills and the grayscale frame-difference metric.

use std::io::Cursor;

use crate::error::{Error, Result};

/// An 8-bit luma plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: u32,
    pub height: u32,
    pub luma: Vec<u8>,
}

/// BT.601 integer luma, rounded.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

pub fn encode_rgb_png(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, width, height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::CorruptMedia(format!("png encode: {e}")))?;
    writer
        .write_image_data(rgb)
        .map_err(|e| Error::CorruptMedia(format!("png encode: {e}")))?;
    writer
        .finish()
        .map_err(|e| Error::CorruptMedia(format!("png encode: {e}")))?;
    Ok(out)
}

pub fn decode_gray(png_bytes: &[u8]) -> Result<GrayFrame> {
    let corrupt = |e: png::DecodingError| Error::CorruptMedia(format!("png decode: {e}"));
    let mut decoder = png::Decoder::new(Cursor::new(png_bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(corrupt)?;
    let data = &buf[..info.buffer_size()];
    let luma = match info.color_type {
        png::ColorType::Grayscale => data.to_vec(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).map(|p| p[0]).collect(),
        png::ColorType::Rgb => data.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect(),
        png::ColorType::Rgba => data.chunks_exact(4).map(|p| luma(p[0], p[1], p[2])).collect(),
        png::ColorType::Indexed => {
            return Err(Error::CorruptMedia("palette png was not expanded".into()))
        }
    };
    Ok(GrayFrame {
        width: info.width,
        height: info.height,
        luma,
    })
}

/// Mean absolute luma difference normalized to `[0, 1]`.
pub fn mean_abs_diff(a: &GrayFrame, b: &GrayFrame) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) || a.luma.len() != b.luma.len() {
        return Err(Error::CorruptMedia(format!(
            "frame size changed mid-stream: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.luma.is_empty() {
        return Ok(0.0);
    }
    let total: u64 = a
        .luma
        .iter()
        .zip(&b.luma)
        .map(|(x, y)| x.abs_diff(*y) as u64)
        .sum();
    Ok(total as f64 / (a.luma.len() as f64 * 255.0))
}
