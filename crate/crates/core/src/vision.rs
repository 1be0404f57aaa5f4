//! Stage I: keyframes plus a prompt go to a vision-language backend; the
//! text answer is parsed into a [`VisualCueReport`].

use std::collections::BTreeMap;
use std::fs;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendEndpoint, HttpClient, TextResponse};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::media::KeyframeSet;
use crate::prompts::{self, VlmPrompt};
use crate::sections;

pub const FIELDS: [&str; 4] = ["visual_effects", "color_composition", "environment", "emotional_tone"];

const LABELS: &[(&str, &str)] = &[
    ("visual_effects", "visual_effects"),
    ("color_composition", "color_composition"),
    ("colour_composition", "color_composition"),
    ("environment", "environment"),
    ("environmental_context", "environment"),
    ("emotional_tone", "emotional_tone"),
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualCueReport {
    pub visual_effects: Vec<String>,
    pub color_composition: Vec<String>,
    pub environment: Vec<String>,
    pub emotional_tone: Vec<String>,
    pub raw_response: String,
    pub source_hashes: Vec<String>,
}

impl VisualCueReport {
    pub fn field(&self, name: &str) -> &[String] {
        match name {
            "visual_effects" => &self.visual_effects,
            "color_composition" => &self.color_composition,
            "environment" => &self.environment,
            "emotional_tone" => &self.emotional_tone,
            _ => &[],
        }
    }

    fn field_mut(&mut self, name: &str) -> &mut Vec<String> {
        match name {
            "visual_effects" => &mut self.visual_effects,
            "color_composition" => &mut self.color_composition,
            "environment" => &mut self.environment,
            _ => &mut self.emotional_tone,
        }
    }

    /// Every cue with its field name, in taxonomy order.
    pub fn cues(&self) -> impl Iterator<Item = (&'static str, &str)> {
        FIELDS
            .into_iter()
            .flat_map(move |f| self.field(f).iter().map(move |c| (f, c.as_str())))
    }

    pub fn is_empty(&self) -> bool {
        self.cues().next().is_none()
    }
}

/// Parse a labeled-section answer. Text outside known sections is kept only
/// in `raw_response`.
pub fn parse_report(raw: &str) -> Result<VisualCueReport> {
    if raw.trim().is_empty() {
        return Err(Error::parse_failure("empty response", raw));
    }
    let found = sections::parse(raw, LABELS);
    if found.is_empty() {
        return Err(Error::parse_failure("no recognizable section labels", raw));
    }
    let mut report = VisualCueReport { raw_response: raw.to_string(), ..Default::default() };
    for section in &found {
        report
            .field_mut(section.label)
            .extend(sections::list_values(section).into_iter().map(String::from));
    }
    Ok(report)
}

/// Labeled-section text for a report; [`parse_report`] recovers the same
/// structured fields from it.
pub fn serialize_report(report: &VisualCueReport) -> String {
    let mut out = String::new();
    for field in FIELDS {
        out.push_str(field);
        out.push_str(":\n");
        for cue in report.field(field) {
            out.push_str("- ");
            out.push_str(cue);
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePayload {
    pub hash: String,
    pub png_base64: String,
}

/// Body of `POST {base_url}/v1/analyze`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzeRequest {
    pub prompt: String,
    pub frames: Vec<FramePayload>,
}

pub trait VisionBackend: Send + Sync {
    /// Return the backend's raw text answer.
    fn analyze(&self, request: &AnalyzeRequest) -> Result<String>;
}

pub struct HttpVision {
    client: HttpClient,
}

impl HttpVision {
    pub fn new(endpoint: &BackendEndpoint) -> Result<Self> {
        Ok(HttpVision { client: HttpClient::new("vlm", endpoint)? })
    }
}

impl VisionBackend for HttpVision {
    fn analyze(&self, request: &AnalyzeRequest) -> Result<String> {
        let resp: TextResponse = self.client.post_json("/v1/analyze", request)?;
        Ok(resp.text)
    }
}

const MOCK_EFFECTS: &[&str] = &[
    "soft light with slight shadow",
    "bokeh highlights from string lights",
    "harsh light and heavy shadow",
    "smooth lines along the skyline",
    "straight lines of the building facades",
    "shallow depth of field on a close-up",
];
const MOCK_COLORS: &[&str] = &[
    "warm golden and orange tones",
    "cool blue palette",
    "muted grey and desaturated tones",
    "bright sunlight with saturated colors",
];
const MOCK_ENVIRONMENTS: &[&str] = &[
    "crowded outdoor square",
    "empty street at dusk",
    "wide shot of an open sky",
    "symmetrical courtyard",
];
const MOCK_TONES: &[&str] = &[
    "warmth", "festivity", "energy", "calm", "melancholy", "tension", "hope", "nostalgia",
];

/// Deterministic stand-in for a vision-language model.
///
/// Requests are keyed by [`MockVision::request_key`]. Registered keys return
/// their canned answer; any other key gets a schema-valid synthetic answer
/// derived from the key's bytes.
#[derive(Debug, Clone, Default)]
pub struct MockVision {
    canned: BTreeMap<String, String>,
}

impl MockVision {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(mut self, key: impl Into<String>, raw: impl Into<String>) -> Self {
        self.canned.insert(key.into(), raw.into());
        self
    }

    /// `sha256(prompt + "\n" + sorted frame hashes joined by "\n")`.
    pub fn request_key<S: AsRef<str>>(prompt: &str, frame_hashes: &[S]) -> String {
        let mut hashes: Vec<&str> = frame_hashes.iter().map(AsRef::as_ref).collect();
        hashes.sort_unstable();
        sha256_hex(format!("{prompt}\n{}", hashes.join("\n")))
    }

    pub fn synthetic_response(key: &str) -> String {
        let bytes = hex::decode(key).unwrap_or_else(|_| sha256_hex(key).into_bytes());
        let b = |i: usize| bytes[i % bytes.len()] as usize;
        let pick2 = |list: &[&'static str], i: usize| -> [&'static str; 2] {
            let first = b(i) % list.len();
            let second = (first + 1 + b(i + 1) % (list.len() - 1)) % list.len();
            [list[first], list[second]]
        };
        let effects = pick2(MOCK_EFFECTS, 0);
        let colors = MOCK_COLORS[b(2) % MOCK_COLORS.len()];
        let env = MOCK_ENVIRONMENTS[b(3) % MOCK_ENVIRONMENTS.len()];
        let tones = pick2(MOCK_TONES, 4);
        format!(
            "Synthetic analysis for request {}.\n\nvisual_effects:\n- {}\n- {}\ncolor_composition:\n- {}\nenvironment:\n- {}\nemotional_tone:\n- {}\n- {}\n",
            &key[..key.len().min(12)],
            effects[0],
            effects[1],
            colors,
            env,
            tones[0],
            tones[1]
        )
    }
}

impl VisionBackend for MockVision {
    fn analyze(&self, request: &AnalyzeRequest) -> Result<String> {
        let hashes: Vec<&str> = request.frames.iter().map(|f| f.hash.as_str()).collect();
        let key = Self::request_key(&request.prompt, &hashes);
        Ok(self
            .canned
            .get(&key)
            .cloned()
            .unwrap_or_else(|| Self::synthetic_response(&key)))
    }
}

pub fn vision_backend(endpoint: &BackendEndpoint) -> Result<Box<dyn VisionBackend>> {
    if endpoint.is_mock() {
        Ok(Box::new(MockVision::new()))
    } else {
        Ok(Box::new(HttpVision::new(endpoint)?))
    }
}

/// Fill the prompt's `{frame_count}` and `{timestamps}` placeholders.
pub fn render_prompt(prompt: &VlmPrompt, keyframes: &KeyframeSet) -> Result<String> {
    let timestamps = keyframes
        .frames
        .iter()
        .map(|f| format!("{:.3}", f.timestamp_s))
        .collect::<Vec<_>>()
        .join(", ");
    prompts::render(
        &prompt.template_id,
        &prompt.text,
        &[("frame_count", &keyframes.len().to_string()), ("timestamps", &timestamps)],
    )
}

pub fn build_request(keyframes: &KeyframeSet, prompt: &VlmPrompt) -> Result<AnalyzeRequest> {
    if keyframes.is_empty() {
        return Err(Error::InvalidInput("analysis needs at least one keyframe".into()));
    }
    let engine = base64::engine::general_purpose::STANDARD;
    let frames = keyframes
        .frames
        .iter()
        .map(|f| {
            let bytes = fs::read(&f.image_path)
                .map_err(|_| Error::FileNotFound(f.image_path.clone()))?;
            Ok(FramePayload { hash: f.content_hash.clone(), png_base64: engine.encode(bytes) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalyzeRequest { prompt: render_prompt(prompt, keyframes)?, frames })
}

/// Run Stage I: one request carrying every keyframe and the rendered prompt.
pub fn analyze(keyframes: &KeyframeSet, prompt: &VlmPrompt, backend: &dyn VisionBackend) -> Result<VisualCueReport> {
    let request = build_request(keyframes, prompt)?;
    let raw = backend.analyze(&request)?;
    let mut report = parse_report(&raw)?;
    report.source_hashes = keyframes.hashes();
    Ok(report)
}
