//! Reference implementation of the decoder/muxer subprocess contract for the
//! uncompressed `.vcv` container. Point the media templates of a pipeline
//! config at this binary to run without ffmpeg.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vcass_core::media::still::encode_rgb_png;
use vcass_core::media::still_name;
use vcass_core::rawvid::{Pattern, RawVideo};
use vcass_core::wav::{encode_mono16, parse_pcm_mono16};

#[derive(Parser)]
#[command(name = "vcass-mediatool", version, about = "Probe, extract, mux and demux .vcv containers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print `r_frame_rate`, `nb_read_frames` and `duration` lines
    Probe { input: PathBuf },
    /// Write frame INDEX as OUT_DIR/frame_%06d.png
    Extract { input: PathBuf, out_dir: PathBuf, index: u32 },
    /// Replace the audio track of VIDEO with AUDIO (mono 16-bit WAV)
    Mux {
        video: PathBuf,
        audio: PathBuf,
        output: PathBuf,
        /// Append black frames covering this many seconds
        #[arg(long)]
        pad_video: Option<f64>,
    },
    /// Split a container into its video stream and its audio WAV
    Demux {
        input: PathBuf,
        #[arg(long)]
        video_out: Option<PathBuf>,
        #[arg(long)]
        audio_out: Option<PathBuf>,
    },
    /// Write a synthetic fixture clip
    MakeFixture {
        #[arg(long, default_value = "festival")]
        pattern: Pattern,
        #[arg(long, default_value_t = 250)]
        frames: u32,
        #[arg(long, default_value_t = 25)]
        fps: u32,
        #[arg(long, default_value_t = 64)]
        width: u32,
        #[arg(long, default_value_t = 48)]
        height: u32,
        /// Attach this many seconds of silence as the audio track
        #[arg(long)]
        audio_seconds: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<RawVideo, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    RawVideo::parse(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Probe { input } => {
            let v = load(&input)?;
            println!("r_frame_rate={}/{}", v.fps_num, v.fps_den);
            println!("nb_read_frames={}", v.frames.len());
            println!("duration={:.6}", v.duration_s());
        }
        Command::Extract { input, out_dir, index } => {
            let v = load(&input)?;
            let frame = v
                .frames
                .get(index as usize)
                .ok_or_else(|| format!("frame {index} out of range ({} frames)", v.frames.len()))?;
            let png = encode_rgb_png(v.width, v.height, frame).map_err(|e| e.to_string())?;
            fs::create_dir_all(&out_dir).map_err(|e| e.to_string())?;
            fs::write(out_dir.join(still_name(index)), png).map_err(|e| e.to_string())?;
        }
        Command::Mux { video, audio, output, pad_video } => {
            let mut v = load(&video)?;
            let wav = fs::read(&audio).map_err(|e| format!("{}: {e}", audio.display()))?;
            parse_pcm_mono16(&wav).map_err(|e| e.to_string())?;
            if let Some(s) = pad_video {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(format!("invalid --pad-video {s}"));
                }
                // tolerate the rounding of a decimal seconds argument
                let pad = (s * v.fps() - 1e-6).ceil().max(0.0) as usize;
                let black = vec![0u8; v.frame_len()];
                v.frames.extend(std::iter::repeat_n(black, pad));
            }
            v.audio = Some(wav);
            fs::write(&output, v.to_bytes()).map_err(|e| format!("{}: {e}", output.display()))?;
        }
        Command::Demux { input, video_out, audio_out } => {
            let v = load(&input)?;
            if let Some(path) = video_out {
                fs::write(&path, v.video_stream_bytes()).map_err(|e| e.to_string())?;
            }
            let audio_duration = match &v.audio {
                Some(wav) => {
                    if let Some(path) = &audio_out {
                        fs::write(path, wav).map_err(|e| e.to_string())?;
                    }
                    Some(parse_pcm_mono16(wav).map_err(|e| e.to_string())?.duration_s())
                }
                None => None,
            };
            let summary = serde_json::json!({
                "video_sha256": v.video_stream_sha256(),
                "frame_count": v.frames.len(),
                "video_duration_s": v.duration_s(),
                "audio_duration_s": audio_duration,
            });
            println!("{summary}");
        }
        Command::MakeFixture { pattern, frames, fps, width, height, audio_seconds, out } => {
            if fps == 0 || width == 0 || height == 0 {
                return Err("fps, width and height must be positive".into());
            }
            let mut v = RawVideo::fixture(pattern, frames, fps, width, height);
            if let Some(s) = audio_seconds {
                let n = (s * 22050.0).round() as usize;
                v.audio = Some(encode_mono16(&vec![0; n], 22050));
            }
            fs::write(&out, v.to_bytes()).map_err(|e| format!("{}: {e}", out.display()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vcass-mediatool: {e}");
            ExitCode::FAILURE
        }
    }
}
