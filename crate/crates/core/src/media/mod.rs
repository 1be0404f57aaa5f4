//! Video probing and keyframe extraction.
//!
//! Raw decoding is delegated to an external utility through the argv
//! contract in [`tool`]; this module owns frame selection, still hashing and
//! the invariants on the resulting [`KeyframeSet`].

pub mod still;
pub mod tool;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
pub use still::GrayFrame;
pub use tool::MediaTool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRef {
    pub path: PathBuf,
    pub duration_s: f64,
    pub frame_count: u32,
    pub fps: f64,
}

impl VideoRef {
    pub fn new(path: impl Into<PathBuf>, duration_s: f64, frame_count: u32, fps: f64) -> Result<Self> {
        let path = path.into();
        if !path.exists() {
            return Err(Error::FileNotFound(path));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::CorruptMedia(format!("non-positive frame rate {fps}")));
        }
        if !(duration_s.is_finite() && duration_s >= 0.0) {
            return Err(Error::CorruptMedia(format!("invalid duration {duration_s}")));
        }
        if frame_count == 0 {
            return Err(Error::CorruptMedia("video has no frames".into()));
        }
        if (duration_s * fps - frame_count as f64).abs() > 1.0 + 1e-6 {
            return Err(Error::CorruptMedia(format!(
                "duration {duration_s} s at {fps} fps disagrees with {frame_count} frames"
            )));
        }
        Ok(VideoRef { path, duration_s, frame_count, fps })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub index: u32,
    pub timestamp_s: f64,
    pub image_path: PathBuf,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSet {
    pub frames: Vec<Keyframe>,
}

impl KeyframeSet {
    pub fn indices(&self) -> Vec<u32> {
        self.frames.iter().map(|f| f.index).collect()
    }

    pub fn hashes(&self) -> Vec<String> {
        self.frames.iter().map(|f| f.content_hash.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyframeMode {
    Uniform,
    SceneChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyframePolicy {
    pub mode: KeyframeMode,
    pub k: u32,
    pub diff_threshold: f64,
    pub max_frames: u32,
}

impl Default for KeyframePolicy {
    fn default() -> Self {
        KeyframePolicy {
            mode: KeyframeMode::Uniform,
            k: 5,
            diff_threshold: 0.25,
            max_frames: 8,
        }
    }
}

impl KeyframePolicy {
    pub fn uniform(k: u32) -> Self {
        KeyframePolicy { mode: KeyframeMode::Uniform, k, max_frames: k.max(1), ..Default::default() }
    }

    pub fn scene_change(diff_threshold: f64, max_frames: u32) -> Self {
        KeyframePolicy {
            mode: KeyframeMode::SceneChange,
            k: 1,
            diff_threshold,
            max_frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidPolicy("k must be at least 1".into()));
        }
        if self.max_frames == 0 {
            return Err(Error::InvalidPolicy("max_frames must be at least 1".into()));
        }
        if self.k > self.max_frames {
            return Err(Error::InvalidPolicy(format!(
                "k = {} exceeds max_frames = {}",
                self.k, self.max_frames
            )));
        }
        if !(0.0..=1.0).contains(&self.diff_threshold) {
            return Err(Error::InvalidPolicy(format!(
                "diff_threshold {} outside [0, 1]",
                self.diff_threshold
            )));
        }
        Ok(())
    }
}

/// Evenly spaced frame indices `round(i * (n - 1) / (k - 1))`, deduplicated.
///
/// Rounding is half-up, computed in integers. `k == 1` selects frame 0.
pub fn uniform_indices(frame_count: u32, k: u32) -> Vec<u32> {
    if frame_count == 0 || k == 0 {
        return Vec::new();
    }
    if k == 1 {
        return vec![0];
    }
    let span = (frame_count - 1) as u64;
    let steps = (k - 1) as u64;
    let mut out: Vec<u32> = (0..k as u64)
        .map(|i| ((2 * i * span + steps) / (2 * steps)) as u32)
        .collect();
    out.dedup();
    out
}

/// Incremental scene-change selection: frame 0 is always kept, later frames
/// are kept when their difference from the last kept frame exceeds the
/// threshold.
#[derive(Debug)]
pub struct SceneSelector {
    threshold: f64,
    max_frames: usize,
    last: Option<GrayFrame>,
    selected: Vec<u32>,
}

impl SceneSelector {
    pub fn new(threshold: f64, max_frames: u32) -> Self {
        SceneSelector { threshold, max_frames: max_frames as usize, last: None, selected: Vec::new() }
    }

    pub fn is_full(&self) -> bool {
        self.selected.len() >= self.max_frames
    }

    /// Offer the next frame in decode order; returns whether it was kept.
    pub fn offer(&mut self, index: u32, frame: GrayFrame) -> Result<bool> {
        if self.is_full() {
            return Ok(false);
        }
        let keep = match &self.last {
            None => true,
            Some(prev) => still::mean_abs_diff(prev, &frame)? > self.threshold,
        };
        if keep {
            self.selected.push(index);
            self.last = Some(frame);
        }
        Ok(keep)
    }

    pub fn selected(&self) -> &[u32] {
        &self.selected
    }
}

/// Parse `key=value` probe output into a [`VideoRef`].
pub fn parse_probe_output(path: &Path, text: &str) -> Result<VideoRef> {
    let mut duration = None;
    let mut frames = None;
    let mut fps = None;
    for line in text.lines() {
        let Some((key, value)) = line.trim().split_once('=') else { continue };
        let value = value.trim();
        if value.is_empty() || value == "N/A" {
            continue;
        }
        match key.trim() {
            "duration" => duration = value.parse::<f64>().ok(),
            "nb_read_frames" | "nb_frames" => {
                frames = frames.or_else(|| value.parse::<u32>().ok())
            }
            "r_frame_rate" | "avg_frame_rate" => fps = fps.or_else(|| parse_rate(value)),
            _ => {}
        }
    }
    let fps = fps.ok_or_else(|| Error::CorruptMedia(format!("probe output has no frame rate: {text:?}")))?;
    let (duration, frames) = match (duration, frames) {
        (Some(d), Some(n)) => (d, n),
        (None, Some(n)) => (n as f64 / fps, n),
        (Some(d), None) => (d, (d * fps).round() as u32),
        (None, None) => {
            return Err(Error::CorruptMedia(format!(
                "probe output has neither duration nor frame count: {text:?}"
            )))
        }
    };
    VideoRef::new(path, duration, frames, fps)
}

fn parse_rate(value: &str) -> Option<f64> {
    let rate = match value.split_once('/') {
        Some((n, d)) => {
            let (n, d) = (n.parse::<f64>().ok()?, d.parse::<f64>().ok()?);
            if d == 0.0 {
                return None;
            }
            n / d
        }
        None => value.parse().ok()?,
    };
    (rate > 0.0).then_some(rate)
}

/// Probe a video file through the external tool.
pub fn probe(path: &Path, tool: &MediaTool) -> Result<VideoRef> {
    let meta = fs::metadata(path).map_err(|_| Error::FileNotFound(path.to_path_buf()))?;
    if meta.len() == 0 {
        return Err(Error::CorruptMedia(format!("{} is empty", path.display())));
    }
    let out = tool.run_probe(path)?;
    if !out.status.success() {
        return Err(Error::CorruptMedia(format!(
            "probe exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    parse_probe_output(path, &String::from_utf8_lossy(&out.stdout))
}

pub fn still_name(index: u32) -> String {
    format!("frame_{index:06}.png")
}

fn extracted_still(tool: &MediaTool, video: &VideoRef, dir: &Path, index: u32) -> Result<(PathBuf, Vec<u8>)> {
    tool.run_extract(&video.path, dir, index)?;
    let path = dir.join(still_name(index));
    let bytes = fs::read(&path).map_err(|e| Error::DecoderFailure {
        status: "0".into(),
        stderr: format!("decoder reported success but {} is unreadable: {e}", path.display()),
    })?;
    Ok((path, bytes))
}

fn keyframe(video: &VideoRef, index: u32, image_path: PathBuf, bytes: &[u8]) -> Keyframe {
    Keyframe {
        index,
        timestamp_s: index as f64 / video.fps,
        image_path,
        content_hash: sha256_hex(bytes),
    }
}

/// Select and extract keyframes into `out_dir` as `frame_%06d.png` stills.
pub fn extract_keyframes(
    video: &VideoRef,
    policy: &KeyframePolicy,
    tool: &MediaTool,
    out_dir: &Path,
) -> Result<KeyframeSet> {
    policy.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut frames = Vec::new();
    match policy.mode {
        KeyframeMode::Uniform => {
            for index in uniform_indices(video.frame_count, policy.k) {
                let (path, bytes) = extracted_still(tool, video, out_dir, index)?;
                frames.push(keyframe(video, index, path, &bytes));
            }
        }
        KeyframeMode::SceneChange => {
            let scratch = tempfile::Builder::new().prefix(".scan-").tempdir_in(out_dir)?;
            let mut selector = SceneSelector::new(policy.diff_threshold, policy.max_frames);
            for index in 0..video.frame_count {
                if selector.is_full() {
                    break;
                }
                let (path, bytes) = extracted_still(tool, video, scratch.path(), index)?;
                if selector.offer(index, still::decode_gray(&bytes)?)? {
                    let dest = out_dir.join(still_name(index));
                    fs::rename(&path, &dest)?;
                    frames.push(keyframe(video, index, dest, &bytes));
                } else {
                    fs::remove_file(&path)?;
                }
            }
        }
    }
    Ok(KeyframeSet { frames })
}
