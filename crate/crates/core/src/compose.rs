//! Attach synthesized speech to the source video under a duration policy.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{MediaTool, VideoRef};
use crate::synth::AudioClip;
use crate::wav::encode_mono16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrunPolicy {
    #[default]
    Error,
    PadVideoTailBlack,
    TruncateAudio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnderrunPolicy {
    #[default]
    PadAudioSilence,
    LeaveShort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComposePolicy {
    #[serde(default)]
    pub overrun: OverrunPolicy,
    #[serde(default)]
    pub underrun: UnderrunPolicy,
}

impl std::str::FromStr for ComposePolicy {
    type Err = String;

    /// `overrun=<..>,underrun=<..>`; either part may be omitted.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut policy = ComposePolicy::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| format!("expected key=value, got `{part}`"))?;
            let quoted = format!("\"{}\"", value.trim());
            match key.trim() {
                "overrun" => {
                    policy.overrun = serde_json::from_str(&quoted).map_err(|_| {
                        format!("unknown overrun policy `{value}` (error, pad_video_tail_black, truncate_audio)")
                    })?
                }
                "underrun" => {
                    policy.underrun = serde_json::from_str(&quoted)
                        .map_err(|_| format!("unknown underrun policy `{value}` (pad_audio_silence, leave_short)"))?
                }
                other => return Err(format!("unknown policy key `{other}`")),
            }
        }
        Ok(policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioFit {
    Unchanged,
    PaddedSilence,
    Truncated,
    VideoPadded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeReport {
    pub output: PathBuf,
    pub video_duration_s: f64,
    pub input_audio_duration_s: f64,
    pub output_audio_duration_s: f64,
    /// Black frames appended to the video tail, if any.
    pub video_pad_frames: u32,
    pub fit: AudioFit,
}

/// The audio samples to mux and the number of black tail frames to add.
pub fn fit_audio(video: &VideoRef, audio: &AudioClip, policy: ComposePolicy) -> Result<(Vec<i16>, u32, AudioFit)> {
    let rate = audio.sample_rate_hz as f64;
    let video_s = video.frame_count as f64 / video.fps;
    let target = (video_s * rate).round() as usize;
    let n = audio.samples.len();
    let mut samples = audio.samples.clone();
    if n > target {
        match policy.overrun {
            OverrunPolicy::Error => {
                return Err(Error::Overrun { overrun_s: (n - target) as f64 / rate });
            }
            OverrunPolicy::TruncateAudio => {
                samples.truncate(target);
                Ok((samples, 0, AudioFit::Truncated))
            }
            OverrunPolicy::PadVideoTailBlack => {
                let overrun_s = (n - target) as f64 / rate;
                let pad = (overrun_s * video.fps - 1e-9).ceil().max(1.0) as u32;
                let padded_target = ((video.frame_count + pad) as f64 / video.fps * rate).round() as usize;
                samples.resize(padded_target.max(n), 0);
                Ok((samples, pad, AudioFit::VideoPadded))
            }
        }
    } else if n < target && policy.underrun == UnderrunPolicy::PadAudioSilence {
        samples.resize(target, 0);
        Ok((samples, 0, AudioFit::PaddedSilence))
    } else {
        Ok((samples, 0, AudioFit::Unchanged))
    }
}

fn temp_in(dir: &Path, suffix: &str) -> Result<tempfile::NamedTempFile> {
    Ok(tempfile::Builder::new().prefix(".vcass-compose-").suffix(suffix).tempfile_in(dir)?)
}

/// Mux `audio` onto `video` at `out_path`. The muxer writes to a temporary
/// file in the destination directory that is renamed into place only on
/// success, so `out_path` never holds a partial file.
pub fn compose(
    video: &VideoRef,
    audio: &AudioClip,
    policy: ComposePolicy,
    out_path: &Path,
    tool: &MediaTool,
) -> Result<ComposeReport> {
    if audio.channels != 1 || audio.bit_depth != 16 {
        return Err(Error::audio("channels", "compose expects mono 16-bit audio"));
    }
    let (samples, pad_frames, fit) = fit_audio(video, audio, policy)?;
    let dir = match out_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let wav = temp_in(&dir, ".wav")?;
    std::fs::write(wav.path(), encode_mono16(&samples, audio.sample_rate_hz))?;
    let suffix = out_path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    let staged = temp_in(&dir, &suffix)?;
    let pad_s = (pad_frames > 0).then(|| pad_frames as f64 / video.fps);
    tool.run_mux(&video.path, wav.path(), staged.path(), pad_s)?;
    staged.persist(out_path).map_err(|e| Error::Io(e.error))?;
    Ok(ComposeReport {
        output: out_path.to_path_buf(),
        video_duration_s: (video.frame_count + pad_frames) as f64 / video.fps,
        input_audio_duration_s: audio.duration_s,
        output_audio_duration_s: samples.len() as f64 / audio.sample_rate_hz as f64,
        video_pad_frames: pad_frames,
        fit,
    })
}
