//! A minimal uncompressed video container (`.vcv`).
//!
//! This is the native format of `vcass-mediatool`, the reference
//! implementation of the decoder/muxer subprocess contract. Layout, all
//! integers little-endian:
//!
//! ```text
//! "VCV1" | width u32 | height u32 | fps_num u32 | fps_den u32 | frame_count u32
//! frame_count x (width * height * 3) bytes of RGB8
//! optional: "AUD1" | len u64 | len bytes (a WAV file, stored verbatim)
//! ```

use crate::digest::sha256_hex;

pub const MAGIC: &[u8; 4] = b"VCV1";
pub const AUDIO_MAGIC: &[u8; 4] = b"AUD1";
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawVideo {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    /// RGB8 frames, each `width * height * 3` bytes.
    pub frames: Vec<Vec<u8>>,
    pub audio: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// Frames alternate between solid black and solid white.
    Alternating,
    /// A slow brightness ramp with a hard cut every two seconds.
    Gradient,
    /// Warm reds and golds with drifting highlights.
    Festival,
}

impl std::str::FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alternating" => Ok(Pattern::Alternating),
            "gradient" => Ok(Pattern::Gradient),
            "festival" => Ok(Pattern::Festival),
            other => Err(format!("unknown pattern `{other}`")),
        }
    }
}

impl RawVideo {
    pub fn frame_len(&self) -> usize {
        self.width as usize * self.height as usize * 3
    }

    pub fn fps(&self) -> f64 {
        self.fps_num as f64 / self.fps_den as f64
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 * self.fps_den as f64 / self.fps_num as f64
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err("not a VCV1 container".into());
        }
        let field = |i: usize| {
            let at = 4 + i * 4;
            u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
        };
        let (width, height, fps_num, fps_den, count) =
            (field(0), field(1), field(2), field(3), field(4));
        if width == 0 || height == 0 || fps_num == 0 || fps_den == 0 {
            return Err("zero dimension or frame rate".into());
        }
        let frame_len = width as usize * height as usize * 3;
        let video_end = frame_len
            .checked_mul(count as usize)
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or("frame payload size overflows")?;
        if bytes.len() < video_end {
            return Err(format!(
                "truncated: {} bytes, header promises {video_end}",
                bytes.len()
            ));
        }
        let frames = bytes[HEADER_LEN..video_end]
            .chunks_exact(frame_len)
            .map(<[u8]>::to_vec)
            .collect();
        let rest = &bytes[video_end..];
        let audio = if rest.is_empty() {
            None
        } else {
            if rest.len() < 12 || &rest[..4] != AUDIO_MAGIC {
                return Err("trailing bytes are not an audio chunk".into());
            }
            let len = u64::from_le_bytes(rest[4..12].try_into().unwrap()) as usize;
            if rest.len() != 12 + len {
                return Err("audio chunk length mismatch".into());
            }
            Some(rest[12..].to_vec())
        };
        Ok(RawVideo {
            width,
            height,
            fps_num,
            fps_den,
            frames,
            audio,
        })
    }

    /// Header plus frame payload, i.e. everything except the audio chunk.
    pub fn video_stream_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.frames.len() * self.frame_len());
        out.extend_from_slice(MAGIC);
        for v in [
            self.width,
            self.height,
            self.fps_num,
            self.fps_den,
            self.frames.len() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for frame in &self.frames {
            out.extend_from_slice(frame);
        }
        out
    }

    pub fn video_stream_sha256(&self) -> String {
        sha256_hex(self.video_stream_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.video_stream_bytes();
        if let Some(audio) = &self.audio {
            out.extend_from_slice(AUDIO_MAGIC);
            out.extend_from_slice(&(audio.len() as u64).to_le_bytes());
            out.extend_from_slice(audio);
        }
        out
    }

    /// Synthesize a deterministic fixture clip.
    pub fn fixture(pattern: Pattern, frame_count: u32, fps: u32, width: u32, height: u32) -> Self {
        let frames = (0..frame_count)
            .map(|i| render_frame(pattern, i, fps, width, height))
            .collect();
        RawVideo {
            width,
            height,
            fps_num: fps,
            fps_den: 1,
            frames,
            audio: None,
        }
    }
}

fn render_frame(pattern: Pattern, index: u32, fps: u32, width: u32, height: u32) -> Vec<u8> {
    let mut frame = Vec::with_capacity((width * height * 3) as usize);
    for y in 0..height {
        for x in 0..width {
            let rgb = match pattern {
                Pattern::Alternating => {
                    let v = if index % 2 == 0 { 0 } else { 255 };
                    [v, v, v]
                }
                Pattern::Gradient => {
                    let shot = index / (2 * fps.max(1));
                    let base = (shot * 97 % 200) as u8;
                    let ramp = ((index % (2 * fps.max(1))) * 50 / (2 * fps.max(1))) as u8;
                    let v = base.saturating_add(ramp).saturating_add((x + y) as u8 % 8);
                    [v, v, v]
                }
                Pattern::Festival => {
                    let phase = (x + 2 * y + index * 3) % 64;
                    let glow = if phase < 8 { 60 } else { 0 };
                    [
                        200u8.saturating_add(glow / 2),
                        (120 + (phase as u8)).saturating_add(glow),
                        (30 + (y % 16) as u8).saturating_add(glow / 3),
                    ]
                }
            };
            frame.extend_from_slice(&rgb);
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip_with_audio() {
        let mut v = RawVideo::fixture(Pattern::Festival, 5, 25, 8, 6);
        v.audio = Some(vec![1, 2, 3, 4]);
        assert_eq!(RawVideo::parse(&v.to_bytes()).unwrap(), v);
    }

    #[test]
    fn rejects_truncation() {
        let v = RawVideo::fixture(Pattern::Gradient, 3, 25, 4, 4);
        let bytes = v.to_bytes();
        assert!(RawVideo::parse(&bytes[..bytes.len() - 1]).is_err());
        assert!(RawVideo::parse(b"").is_err());
    }

    #[test]
    fn alternating_is_black_then_white() {
        let v = RawVideo::fixture(Pattern::Alternating, 3, 25, 2, 2);
        assert!(v.frames[0].iter().all(|&b| b == 0));
        assert!(v.frames[1].iter().all(|&b| b == 255));
        assert!(v.frames[2].iter().all(|&b| b == 0));
    }
}
