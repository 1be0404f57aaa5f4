//! Mono 16-bit PCM WAV encoding and strict validation.

use crate::error::{Error, Result};

pub const CANONICAL_SAMPLE_RATE: u32 = 22_050;

/// Header facts plus the decoded sample payload of a validated WAV file.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmWav {
    pub sample_rate_hz: u32,
    pub channels: u16,
    pub bit_depth: u16,
    pub samples: Vec<i16>,
}

impl PcmWav {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Encode mono 16-bit little-endian PCM as a canonical 44-byte-header WAV.
pub fn encode_mono16(samples: &[i16], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut buf = Vec::with_capacity(44 + samples.len() * 2);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_len).to_le_bytes());
    buf.extend_from_slice(b"WAVE");
    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes()); // PCM
    buf.extend_from_slice(&1u16.to_le_bytes()); // mono
    buf.extend_from_slice(&sample_rate.to_le_bytes());
    buf.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    buf.extend_from_slice(&2u16.to_le_bytes());
    buf.extend_from_slice(&16u16.to_le_bytes());
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    buf
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parse a RIFF/WAVE file and require PCM, mono, 16-bit.
///
/// The error names the first violated field: `header`, `format`, `channels`,
/// `sample_rate`, `bit_depth`, `block_align`, `byte_rate` or `data`.
pub fn parse_pcm_mono16(bytes: &[u8]) -> Result<PcmWav> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::audio("header", "missing RIFF/WAVE preamble"));
    }
    let mut fmt: Option<(u16, u16, u32, u32, u16, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(len).unwrap_or(usize::MAX);
        match id {
            b"fmt " => {
                if len < 16 || body_end > bytes.len() {
                    return Err(Error::audio("header", "truncated fmt chunk"));
                }
                let b = &bytes[body_start..];
                fmt = Some((
                    u16_at(b, 0),
                    u16_at(b, 2),
                    u32_at(b, 4),
                    u32_at(b, 8),
                    u16_at(b, 12),
                    u16_at(b, 14),
                ));
            }
            b"data" => {
                if body_end > bytes.len() {
                    return Err(Error::audio("data", "data chunk extends past end of file"));
                }
                data = Some(&bytes[body_start..body_end]);
                break;
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_end.saturating_add(len & 1);
    }
    let (format, channels, rate, byte_rate, block_align, bits) =
        fmt.ok_or_else(|| Error::audio("header", "no fmt chunk before end of file"))?;
    if format != 1 {
        return Err(Error::audio("format", format!("format tag {format}, expected 1 (PCM)")));
    }
    if channels != 1 {
        return Err(Error::audio("channels", format!("{channels} channels, expected 1")));
    }
    if rate == 0 {
        return Err(Error::audio("sample_rate", "sample rate is zero"));
    }
    if bits != 16 {
        return Err(Error::audio("bit_depth", format!("{bits} bits, expected 16")));
    }
    if block_align != 2 {
        return Err(Error::audio("block_align", format!("{block_align}, expected 2")));
    }
    if byte_rate != rate * 2 {
        return Err(Error::audio(
            "byte_rate",
            format!("{byte_rate}, expected {}", rate * 2),
        ));
    }
    let data = data.ok_or_else(|| Error::audio("data", "no data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(Error::audio("data", "odd payload length for 16-bit samples"));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok(PcmWav {
        sample_rate_hz: rate,
        channels,
        bit_depth: bits,
        samples,
    })
}
