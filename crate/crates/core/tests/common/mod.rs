#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use vcass_core::digest::{file_sha256, json_digest};
use vcass_core::eval::{Condition, Polarity, RatingRecord};
use vcass_core::instruct::Transcript;
use vcass_core::media::MediaTool;
use vcass_core::pipeline::{Pipeline, PipelineConfig, RunManifest, Stage};
use vcass_core::rawvid::{Pattern, RawVideo};

pub const FESTIVAL_TRANSCRIPT: &str = "People gather in the square as lanterns light up the evening.";

pub fn mediatool() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_vcass-mediatool"))
}

pub fn vcass() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_vcass"))
}

pub fn tool() -> MediaTool {
    MediaTool::reference(&mediatool())
}

pub fn write_video(dir: &Path, name: &str, pattern: Pattern, frames: u32, fps: u32) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, RawVideo::fixture(pattern, frames, fps, 16, 12).to_bytes()).unwrap();
    path
}

/// The 10 s, 25 fps festival clip.
pub fn festival(dir: &Path) -> PathBuf {
    write_video(dir, "festival.vcv", Pattern::Festival, 250, 25)
}

pub fn write_transcript(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

pub fn mock_config(cache: &Path) -> PipelineConfig {
    PipelineConfig::mock(cache, tool())
}

/// Reference tendency rows as (condition, PPT, NNT) in tenths of a percent.
pub const TENDENCY_ROWS: [(Condition, u32, u32); 3] = [
    (Condition::Neutral, 706, 574),
    (Condition::Aligned, 911, 688),
    (Condition::Contradictory, 649, 511),
];

pub const SIMILARITY_KB_LLM: [f64; 10] = [0.67, 0.75, 0.73, 0.65, 0.61, 0.70, 0.80, 0.67, 0.73, 0.67];
pub const SIMILARITY_PLAIN_LLM: [f64; 10] = [0.68, 0.64, 0.65, 0.61, 0.52, 0.69, 0.57, 0.68, 0.61, 0.59];

/// Balanced records, 1000 per intent group, realizing the given per-mille
/// proportions exactly.
pub fn tendency_records(condition: Condition, ppt: u32, nnt: u32) -> Vec<RatingRecord> {
    let mut out = Vec::new();
    for i in 0..1000u32 {
        for (intent, agree) in [(Polarity::Positive, i < ppt), (Polarity::Negative, i < nnt)] {
            let judged = if agree { intent } else { intent.opposite() };
            out.push(RatingRecord {
                video_id: format!("{intent:?}-{i}"),
                participant_id: "p".into(),
                intent,
                judged_tendency: judged,
                condition,
            });
        }
    }
    out
}

/// The run id a pipeline assigns to these inputs.
pub fn run_id(p: &Pipeline, video: &Path, transcript: &Path) -> String {
    let t = Transcript::load(transcript).unwrap();
    p.run_id(&file_sha256(video).unwrap(), &json_digest(&t))
}

pub fn calls(vlm: u64, llm: u64, tts: u64) -> BTreeMap<String, u64> {
    BTreeMap::from([("vlm".into(), vlm), ("llm".into(), llm), ("tts".into(), tts)])
}

pub fn add(a: &BTreeMap<String, u64>, b: &BTreeMap<String, u64>) -> BTreeMap<String, u64> {
    a.iter().map(|(k, v)| (k.clone(), v + b.get(k).copied().unwrap_or(0))).collect()
}

pub fn composed_bytes(p: &Pipeline, m: &RunManifest) -> Vec<u8> {
    fs::read(p.artifact_path(m.artifact(Stage::Compose).unwrap())).unwrap()
}

/// Nearest integer to i·(n−1)/(k−1), ties up, by exact quotient/remainder.
pub fn uniform_oracle(n: u32, k: u32) -> Vec<u32> {
    if k == 1 {
        return vec![0];
    }
    let mut out: Vec<u32> = Vec::new();
    for i in 0..k {
        let num = i * (n - 1);
        let den = k - 1;
        let (q, r) = (num / den, num % den);
        let idx = if 2 * r >= den { q + 1 } else { q };
        if out.last() != Some(&idx) {
            out.push(idx);
        }
    }
    out
}

fn float_luma(p: &[u8]) -> f64 {
    (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round()
}

/// Frame 0, then every frame whose mean absolute grayscale difference from
/// the last selected frame exceeds `threshold`, up to `max`.
pub fn scene_oracle(video: &RawVideo, threshold: f64, max: usize) -> Vec<u32> {
    let gray: Vec<Vec<f64>> = video.frames.iter().map(|f| f.chunks(3).map(float_luma).collect()).collect();
    let mut picked = vec![0usize];
    for i in 1..gray.len() {
        if picked.len() == max {
            break;
        }
        let last = &gray[*picked.last().unwrap()];
        let diff = gray[i].iter().zip(last).map(|(a, b)| (a - b).abs()).sum::<f64>() / (last.len() as f64 * 255.0);
        if diff > threshold {
            picked.push(i);
        }
    }
    picked.into_iter().map(|i| i as u32).collect()
}
