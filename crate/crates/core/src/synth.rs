//! Stage III: instruct-to-speech synthesis behind a pluggable backend.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendEndpoint, HttpClient};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::instruct::SpeechInstruction;
use crate::wav::{encode_mono16, parse_pcm_mono16, PcmWav, CANONICAL_SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    pub sample_rate_hz: u32,
    pub channels: u16,
    pub bit_depth: u16,
    #[serde(skip)]
    pub samples: Vec<i16>,
    pub duration_s: f64,
    pub source_instruction_hash: String,
}

impl AudioClip {
    pub fn from_samples(samples: Vec<i16>, sample_rate_hz: u32, source_instruction_hash: impl Into<String>) -> Self {
        AudioClip {
            sample_rate_hz,
            channels: 1,
            bit_depth: 16,
            duration_s: samples.len() as f64 / sample_rate_hz as f64,
            samples,
            source_instruction_hash: source_instruction_hash.into(),
        }
    }

    pub fn to_wav(&self) -> Vec<u8> {
        encode_mono16(&self.samples, self.sample_rate_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    #[default]
    Expressive,
    NeutralBaseline,
}

impl std::str::FromStr for SynthesisMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "expressive" => Ok(Self::Expressive),
            "neutral" | "neutral_baseline" => Ok(Self::NeutralBaseline),
            other => Err(format!("unknown synthesis mode `{other}` (expected expressive or neutral)")),
        }
    }
}

/// Parse and validate a WAV file as a pipeline clip (mono, 16-bit PCM).
/// The source hash is left empty.
pub fn validate_wav(bytes: &[u8]) -> Result<AudioClip> {
    let PcmWav { sample_rate_hz, samples, .. } = parse_pcm_mono16(bytes)?;
    Ok(AudioClip::from_samples(samples, sample_rate_hz, ""))
}

/// Linear-interpolation resampling to `to_hz`.
pub fn resample(samples: &[i16], from_hz: u32, to_hz: u32) -> Vec<i16> {
    if from_hz == to_hz || samples.is_empty() {
        return samples.to_vec();
    }
    let out_len = (samples.len() as u64 * to_hz as u64).div_ceil(from_hz as u64) as usize;
    let step = from_hz as f64 / to_hz as f64;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let j = pos.floor() as usize;
            let frac = pos - j as f64;
            let a = samples[j.min(samples.len() - 1)] as f64;
            let b = samples[(j + 1).min(samples.len() - 1)] as f64;
            (a + (b - a) * frac).round() as i16
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesizeRequest {
    pub instruction: String,
}

impl SynthesizeRequest {
    /// Exact request body bytes; their digest is the clip's source hash.
    pub fn body(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("string field serializes")
    }
}

/// The text sent for `mode`: the full rendered instruction, or only the
/// transcript when the style is stripped for the baseline arm.
pub fn request_for(instruction: &SpeechInstruction, mode: SynthesisMode) -> SynthesizeRequest {
    let instruction = match mode {
        SynthesisMode::Expressive => instruction.rendered_instruction.clone(),
        SynthesisMode::NeutralBaseline => instruction.transcript.text.clone(),
    };
    SynthesizeRequest { instruction }
}

pub trait SpeechBackend: Send + Sync {
    /// Returns the WAV bytes for the request.
    fn synthesize(&self, request: &SynthesizeRequest) -> Result<Vec<u8>>;
}

pub struct HttpSpeech {
    client: HttpClient,
}

impl HttpSpeech {
    pub fn new(endpoint: &BackendEndpoint) -> Result<Self> {
        Ok(HttpSpeech { client: HttpClient::new("tts", endpoint)? })
    }
}

impl SpeechBackend for HttpSpeech {
    fn synthesize(&self, request: &SynthesizeRequest) -> Result<Vec<u8>> {
        self.client.post_json_raw("/v1/synthesize", request)
    }
}

/// Deterministic sine-tone synthesizer.
///
/// Frequency is `200 + (first two digest bytes as u16 BE) % 400` Hz from the
/// payload's SHA-256; duration is `max(1.0, 0.06 × words)` seconds where the
/// words are those of the quoted `Say: "..."` segment if present, otherwise
/// of the whole payload.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockSpeech;

impl MockSpeech {
    pub fn spoken_words(payload: &str) -> usize {
        let spoken = payload
            .find("Say: \"")
            .map(|i| &payload[i + 6..])
            .map(|s| s.strip_suffix('"').unwrap_or(s))
            .unwrap_or(payload);
        spoken.split_whitespace().count()
    }

    pub fn duration_s(payload: &str) -> f64 {
        (0.06 * Self::spoken_words(payload) as f64).max(1.0)
    }

    pub fn frequency_hz(payload: &str) -> f64 {
        let digest = hex::decode(sha256_hex(payload)).expect("hex digest");
        200.0 + (u16::from_be_bytes([digest[0], digest[1]]) % 400) as f64
    }

    pub fn render(payload: &str) -> Vec<i16> {
        let n = (Self::duration_s(payload) * CANONICAL_SAMPLE_RATE as f64).round() as usize;
        let f = Self::frequency_hz(payload);
        let rate = CANONICAL_SAMPLE_RATE as f64;
        (0..n)
            .map(|i| (0.3 * i16::MAX as f64 * (2.0 * PI * f * i as f64 / rate).sin()).round() as i16)
            .collect()
    }
}

impl SpeechBackend for MockSpeech {
    fn synthesize(&self, request: &SynthesizeRequest) -> Result<Vec<u8>> {
        Ok(encode_mono16(&Self::render(&request.instruction), CANONICAL_SAMPLE_RATE))
    }
}

pub fn speech_backend(endpoint: &BackendEndpoint) -> Result<Box<dyn SpeechBackend>> {
    if endpoint.is_mock() {
        Ok(Box::new(MockSpeech))
    } else {
        Ok(Box::new(HttpSpeech::new(endpoint)?))
    }
}

/// Synthesize `instruction` in `mode`. Audio returned at another sample rate
/// is resampled to the canonical 22050 Hz; the clip is re-validated before
/// it is returned.
pub fn synthesize(instruction: &SpeechInstruction, mode: SynthesisMode, backend: &dyn SpeechBackend) -> Result<AudioClip> {
    instruction.validate()?;
    let request = request_for(instruction, mode);
    let hash = sha256_hex(request.body());
    let bytes = backend.synthesize(&request)?;
    let clip = validate_wav(&bytes)?;
    let samples = resample(&clip.samples, clip.sample_rate_hz, CANONICAL_SAMPLE_RATE);
    if samples.is_empty() {
        return Err(Error::audio("data", "backend returned no samples"));
    }
    let clip = AudioClip::from_samples(samples, CANONICAL_SAMPLE_RATE, hash);
    let check = validate_wav(&clip.to_wav())?;
    debug_assert_eq!(check.samples, clip.samples);
    Ok(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruct::{render_instruction, Transcript};
    use crate::kb::{Graded, Pitch, VocalStyle};

    fn instruction(text: &str, style: VocalStyle) -> SpeechInstruction {
        let transcript = Transcript::new(text, "en").unwrap();
        SpeechInstruction {
            rendered_instruction: render_instruction(&style, "Lively.", &transcript),
            transcript,
            style_directives: style,
            emotional_summary: "Lively.".into(),
            trace_ref: "t".into(),
        }
    }

    fn warm() -> VocalStyle {
        VocalStyle { tone: Some("warm".into()), pitch: Some(Graded::plain(Pitch::High)), ..Default::default() }
    }

    #[test]
    fn one_second_of_silence() {
        let clip = validate_wav(&encode_mono16(&vec![0; 22050], 22050)).unwrap();
        assert!((clip.duration_s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mock_duration_formula() {
        let ten = "one two three four five six seven eight nine ten";
        let ins = instruction(ten, warm());
        let clip = synthesize(&ins, SynthesisMode::Expressive, &MockSpeech).unwrap();
        assert!((clip.duration_s - 1.0).abs() < 1e-6);
        let long = vec!["word"; 30].join(" ");
        let clip = synthesize(&instruction(&long, warm()), SynthesisMode::Expressive, &MockSpeech).unwrap();
        assert!((clip.duration_s - 1.8).abs() < 1e-4, "{}", clip.duration_s);
    }

    #[test]
    fn modes_differ_in_payload() {
        let ins = instruction("People gather in the square.", warm());
        let a = synthesize(&ins, SynthesisMode::Expressive, &MockSpeech).unwrap();
        let b = synthesize(&ins, SynthesisMode::NeutralBaseline, &MockSpeech).unwrap();
        assert_ne!(a.source_instruction_hash, b.source_instruction_hash);
        assert_eq!(request_for(&ins, SynthesisMode::NeutralBaseline).instruction, "People gather in the square.");
        let again = synthesize(&ins, SynthesisMode::Expressive, &MockSpeech).unwrap();
        assert_eq!(a.to_wav(), again.to_wav());
    }

    #[test]
    fn resample_length() {
        let out = resample(&vec![100; 44100], 44100, 22050);
        assert_eq!(out.len(), 22050);
        assert!(out.iter().all(|&s| s == 100));
    }
}
