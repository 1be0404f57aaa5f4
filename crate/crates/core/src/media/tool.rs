//! Argv templates for the external decoder/muxer utility.
//!
//! Placeholders are substituted inside each argument:
//!
//! | template  | placeholders                                   |
//! |-----------|------------------------------------------------|
//! | `probe`   | `{input}`                                      |
//! | `extract` | `{input}`, `{out_dir}`, `{frame_index}`        |
//! | `mux`     | `{video}`, `{audio}`, `{output}`               |
//! | `mux_pad` | `{video}`, `{audio}`, `{output}`, `{video_pad_s}` |
//!
//! `probe` prints `key=value` lines (`duration`, `nb_read_frames` or
//! `nb_frames`, `r_frame_rate`), the ffprobe `default=noprint_wrappers=1`
//! layout. `extract` must write exactly one still named
//! `{out_dir}/frame_%06d.png`, numbered by `{frame_index}`. Exit status 0 is
//! success for every command.

use std::io::ErrorKind;
use std::path::Path;
use std::process::{Command, Output};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaTool {
    pub probe: Vec<String>,
    pub extract: Vec<String>,
    pub mux: Vec<String>,
    pub mux_pad: Vec<String>,
}

fn owned(args: &[&str]) -> Vec<String> {
    args.iter().map(|s| s.to_string()).collect()
}

impl Default for MediaTool {
    /// ffmpeg/ffprobe templates.
    fn default() -> Self {
        MediaTool {
            probe: owned(&[
                "ffprobe", "-v", "error", "-select_streams", "v:0", "-count_frames",
                "-show_entries", "stream=nb_read_frames,r_frame_rate:format=duration",
                "-of", "default=noprint_wrappers=1", "{input}",
            ]),
            extract: owned(&[
                "ffmpeg", "-v", "error", "-y", "-i", "{input}",
                "-vf", "select=eq(n\\,{frame_index})", "-frames:v", "1",
                "-start_number", "{frame_index}", "{out_dir}/frame_%06d.png",
            ]),
            mux: owned(&[
                "ffmpeg", "-v", "error", "-y", "-i", "{video}", "-i", "{audio}",
                "-map", "0:v:0", "-map", "1:a:0", "-c:v", "copy", "-c:a", "pcm_s16le",
                "{output}",
            ]),
            mux_pad: owned(&[
                "ffmpeg", "-v", "error", "-y", "-i", "{video}", "-i", "{audio}",
                "-map", "0:v:0", "-map", "1:a:0",
                "-vf", "tpad=stop_mode=add:stop_duration={video_pad_s}:color=black",
                "-c:a", "pcm_s16le", "{output}",
            ]),
        }
    }
}

impl MediaTool {
    /// Templates for the bundled `vcass-mediatool` binary.
    pub fn reference(exe: &Path) -> Self {
        let exe = exe.to_string_lossy().into_owned();
        let with = |rest: &[&str]| {
            std::iter::once(exe.clone())
                .chain(rest.iter().map(|s| s.to_string()))
                .collect()
        };
        MediaTool {
            probe: with(&["probe", "{input}"]),
            extract: with(&["extract", "{input}", "{out_dir}", "{frame_index}"]),
            mux: with(&["mux", "{video}", "{audio}", "{output}"]),
            mux_pad: with(&["mux", "{video}", "{audio}", "{output}", "--pad-video", "{video_pad_s}"]),
        }
    }

    pub(crate) fn run_probe(&self, input: &Path) -> Result<Output> {
        run(&render(&self.probe, &[("input", &path_str(input))]))
    }

    pub(crate) fn run_extract(&self, input: &Path, out_dir: &Path, index: u32) -> Result<()> {
        let argv = render(
            &self.extract,
            &[
                ("input", &path_str(input)),
                ("out_dir", &path_str(out_dir)),
                ("frame_index", &index.to_string()),
            ],
        );
        let out = run(&argv)?;
        if !out.status.success() {
            return Err(Error::DecoderFailure {
                status: out.status.to_string(),
                stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
            });
        }
        Ok(())
    }

    pub(crate) fn run_mux(
        &self,
        video: &Path,
        audio: &Path,
        output: &Path,
        video_pad_s: Option<f64>,
    ) -> Result<()> {
        let (video, audio, output) = (path_str(video), path_str(audio), path_str(output));
        let pad;
        let mut vars = vec![("video", video.as_str()), ("audio", audio.as_str()), ("output", output.as_str())];
        let template = match video_pad_s {
            Some(s) => {
                pad = format!("{s:.6}");
                vars.push(("video_pad_s", &pad));
                &self.mux_pad
            }
            None => &self.mux,
        };
        let out = run(&render(template, &vars))?;
        if !out.status.success() {
            return Err(Error::MuxerFailure {
                status: out.status.to_string(),
                stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
            });
        }
        Ok(())
    }
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Substitute `{name}` placeholders in every argument of `template`.
pub(crate) fn render(template: &[String], vars: &[(&str, &str)]) -> Vec<String> {
    template
        .iter()
        .map(|arg| {
            vars.iter().fold(arg.clone(), |acc, (name, value)| {
                acc.replace(&format!("{{{name}}}"), value)
            })
        })
        .collect()
}

fn run(argv: &[String]) -> Result<Output> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| Error::Config("empty media tool argv template".into()))?;
    Command::new(program).args(args).output().map_err(|e| {
        if e.kind() == ErrorKind::NotFound || e.kind() == ErrorKind::PermissionDenied {
            Error::DecoderUnavailable(format!("{program}: {e}"))
        } else {
            Error::Io(e)
        }
    })
}
