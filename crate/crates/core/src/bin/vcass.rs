use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use vcass_core::compose::{compose, ComposePolicy};
use vcass_core::eval::{self, Condition};
use vcass_core::instruct::{completion_backend, InstructionBuilder, SpeechInstruction, Transcript};
use vcass_core::kb::{match_cues, KnowledgeBase};
use vcass_core::media::{extract_keyframes, probe, KeyframePolicy, KeyframeSet, MediaTool};
use vcass_core::pipeline::{self, Pipeline, PipelineConfig, RunOptions, Stage};
use vcass_core::synth::{speech_backend, synthesize, validate_wav, SynthesisMode};
use vcass_core::vision::{self, vision_backend};
use vcass_core::{Error, Result};

#[derive(Parser)]
#[command(name = "vcass", version, about = "Vision-context-aware expressive speech pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Env {
    /// Pipeline config (TOML); endpoints and media templates come from it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use the bundled reference media tool at this path instead of ffmpeg
    #[arg(long, global = true)]
    mediatool: Option<PathBuf>,
}

impl Env {
    fn config(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::mock(".vcass-cache", MediaTool::default()),
        };
        if let Some(exe) = &self.mediatool {
            config.media = MediaTool::reference(exe);
        }
        Ok(config)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Uniform,
    Scene,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Expressive,
    Neutral,
}

impl From<ModeArg> for SynthesisMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Expressive => SynthesisMode::Expressive,
            ModeArg::Neutral => SynthesisMode::NeutralBaseline,
        }
    }
}

#[derive(Args)]
struct ReportOut {
    /// Print only the JSON report
    #[arg(long)]
    json: bool,
    /// Also write the JSON report to this file
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Select and extract keyframes; writes stills and keyframes.json to DIR
    Frames {
        video: PathBuf,
        #[arg(long, value_enum, default_value = "uniform")]
        policy: PolicyKind,
        #[arg(long, default_value_t = 5)]
        k: u32,
        #[arg(long, default_value_t = 0.25)]
        threshold: f64,
        #[arg(long = "max", default_value_t = 8)]
        max_frames: u32,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        env: Env,
    },
    /// Analyze keyframes (a keyframes.json) into a visual cue report
    Analyze {
        #[arg(long)]
        keyframes: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        env: Env,
    },
    /// Knowledge-base tools
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Build a speech instruction from a cue report and a transcript
    Instruct {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        transcript: PathBuf,
        /// Knowledge-base file (built-in base when omitted)
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        single_shot: bool,
        /// Directory for instruction.json and trace.json
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        env: Env,
    },
    /// Synthesize speech for an instruction
    Synth {
        #[arg(long)]
        instruction: PathBuf,
        #[arg(long, value_enum, default_value = "expressive")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        env: Env,
    },
    /// Mux a WAV onto a video under a duration policy
    Compose {
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        /// `overrun=error|pad_video_tail_black|truncate_audio,underrun=pad_audio_silence|leave_short`
        #[arg(long, default_value = "")]
        policy: ComposePolicy,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        env: Env,
    },
    /// Study metrics
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Run the whole pipeline
    Run {
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Copy the composed media here
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this stage (fault injection for testing resume)
        #[arg(long, hide = true)]
        fail_after: Option<Stage>,
        #[command(flatten)]
        env: Env,
    },
    /// Finish a partial run
    Resume {
        #[arg(long)]
        run_id: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[command(flatten)]
        env: Env,
    },
    /// Cache maintenance
    Cache {
        #[command(subcommand)]
        command: CacheCommand,
    },
}

#[derive(Subcommand)]
enum KbCommand {
    /// Validate a knowledge-base file
    Lint { file: PathBuf },
    /// Rank the rules matching a cue phrase
    Query {
        #[arg(long)]
        cue: String,
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Tendency and consistency rates per condition
    Tendency {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        condition: Condition,
        #[command(flatten)]
        out: ReportOut,
    },
    /// Embedding similarity to human descriptions
    Similarity {
        #[arg(long)]
        human: PathBuf,
        #[arg(long)]
        kb_llm: PathBuf,
        #[arg(long)]
        plain_llm: PathBuf,
        #[command(flatten)]
        out: ReportOut,
        #[command(flatten)]
        env: Env,
    },
    /// Share of choices preferring the expressive version
    Preference {
        #[arg(long)]
        choices: PathBuf,
        #[command(flatten)]
        out: ReportOut,
    },
}

#[derive(Subcommand)]
enum CacheCommand {
    /// Delete the oldest runs until the cache fits in N bytes
    Gc {
        #[arg(long)]
        max_bytes: u64,
        /// Cache directory (defaults to the config's cache_dir)
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[command(flatten)]
        env: Env,
    },
}

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout().lock(), $($arg)*)?
    };
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    out!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn emit<T: Serialize>(report: &T, table: String, out: &ReportOut) -> Result<()> {
    if let Some(path) = &out.report {
        write_json(path, report)?;
    }
    if out.json {
        print_json(report)
    } else {
        write!(std::io::stdout().lock(), "{table}")?;
        Ok(())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|_| Error::FileNotFound(path.to_path_buf()))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn load_kb(path: Option<&Path>) -> Result<KnowledgeBase> {
    match path {
        Some(p) => KnowledgeBase::load(p),
        None => Ok(KnowledgeBase::builtin()),
    }
}

/// Accepts a bare SpeechInstruction or an `{instruction, trace}` artifact.
fn load_instruction(path: &Path) -> Result<SpeechInstruction> {
    let value: serde_json::Value = read_json(path)?;
    let inner = value.get("instruction").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Frames { video, policy, k, threshold, max_frames, out, env } => {
            let config = env.config()?;
            let policy = match policy {
                PolicyKind::Uniform => KeyframePolicy { k, max_frames: max_frames.max(k), ..KeyframePolicy::uniform(k) },
                PolicyKind::Scene => KeyframePolicy::scene_change(threshold, max_frames),
            };
            let video = probe(&video, &config.media)?;
            let set = extract_keyframes(&video, &policy, &config.media, &out)?;
            write_json(&out.join("keyframes.json"), &set)?;
            print_json(&set)
        }
        Command::Analyze { keyframes, out, env } => {
            let config = env.config()?;
            let mut set: KeyframeSet = read_json(&keyframes)?;
            let base = keyframes.parent().unwrap_or(Path::new(""));
            for f in &mut set.frames {
                if f.image_path.is_relative() && !f.image_path.exists() {
                    f.image_path = base.join(&f.image_path);
                }
            }
            let prompt = config.prompt_library()?.vlm(&config.prompts.vlm)?;
            let backend = vision_backend(&config.endpoints.vlm)?;
            let report = vision::analyze(&set, &prompt, &*backend)?;
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            print_json(&report)
        }
        Command::Kb { command: KbCommand::Lint { file } } => {
            let kb = KnowledgeBase::load(&file)?;
            out!("ok: {} rules, version {}, checksum {}", kb.rules.len(), kb.version, kb.checksum);
            Ok(())
        }
        Command::Kb { command: KbCommand::Query { cue, kb, json } } => {
            let kb = load_kb(kb.as_deref())?;
            let results = kb.query(&cue);
            if json {
                return print_json(&results);
            }
            if results.is_empty() {
                out!("no rule matches `{cue}`");
            }
            for (rank, m) in results.iter().enumerate() {
                let rule = kb.rule(&m.rule_id).expect("match names a rule");
                out!(
                    "{}. {} (score {}, keyword `{}`) -> {} [{}]",
                    rank + 1,
                    m.rule_id,
                    m.score,
                    m.matched_keyword,
                    rule.emotional_state,
                    rule.vocal_expression.compact()
                );
            }
            Ok(())
        }
        Command::Instruct { report, transcript, kb, single_shot, out, env } => {
            let config = env.config()?;
            let report = read_json(&report)?;
            let transcript = Transcript::load(&transcript)?;
            let kb = match kb {
                Some(p) => KnowledgeBase::load(&p)?,
                None => config.knowledge_base()?,
            };
            let prompts = config.prompt_library()?.family(&config.prompts)?;
            let backend = completion_backend(&config.endpoints.llm)?;
            let matches = match_cues(&kb, &report);
            let builder = InstructionBuilder { kb: &kb, prompts: &prompts, backend: &*backend, single_shot };
            let (instruction, trace) = builder.build(&report, &matches, &transcript)?;
            fs::create_dir_all(&out)?;
            write_json(&out.join("instruction.json"), &instruction)?;
            write_json(&out.join("trace.json"), &trace)?;
            print_json(&instruction)
        }
        Command::Synth { instruction, mode, out, env } => {
            let config = env.config()?;
            let instruction = load_instruction(&instruction)?;
            let backend = speech_backend(&config.endpoints.tts)?;
            let clip = synthesize(&instruction, mode.into(), &*backend)?;
            fs::write(&out, clip.to_wav())?;
            print_json(&clip)
        }
        Command::Compose { video, audio, policy, out, env } => {
            let config = env.config()?;
            let video = probe(&video, &config.media)?;
            let clip = validate_wav(&fs::read(&audio).map_err(|_| Error::FileNotFound(audio.clone()))?)?;
            let report = compose(&video, &clip, policy, &out, &config.media)?;
            print_json(&report)
        }
        Command::Eval { command } => match command {
            EvalCommand::Tendency { records, condition, out } => {
                let records = eval::read_records(&records)?;
                let table = eval::tendency_table(&records, condition)?;
                let text = eval::tendency_text_table(std::slice::from_ref(&table));
                emit(&table, text, &out)
            }
            EvalCommand::Similarity { human, kb_llm, plain_llm, out, env } => {
                let config = env.config()?;
                let embedder = eval::embedder(&config.endpoints.embed)?;
                let report = eval::similarity_report(
                    &eval::read_human_dir(&human)?,
                    &eval::read_model_dir(&kb_llm)?,
                    &eval::read_model_dir(&plain_llm)?,
                    &*embedder,
                )?;
                let text = report.text_table();
                emit(&report, text, &out)
            }
            EvalCommand::Preference { choices, out } => {
                let report = eval::preference_rate(&eval::read_choices(&choices)?)?;
                let text = report.text_table();
                emit(&report, text, &out)
            }
        },
        Command::Run { video, transcript, mode, out, fail_after, env } => {
            if env.config.is_none() {
                return Err(Error::Config("`vcass run` needs --config".into()));
            }
            let mut config = env.config()?;
            if let Some(m) = mode {
                config.mode = m.into();
            }
            let pipeline = Pipeline::new(config)?;
            let manifest = pipeline.run(&video, &transcript, RunOptions { fail_after })?;
            if let (Some(out), Some(artifact)) = (out, manifest.artifact(Stage::Compose)) {
                fs::copy(pipeline.artifact_path(artifact), out)?;
            }
            print_json(&manifest)
        }
        Command::Resume { run_id, mode, env } => {
            if env.config.is_none() {
                return Err(Error::Config("`vcass resume` needs --config".into()));
            }
            let mut config = env.config()?;
            if let Some(m) = mode {
                config.mode = m.into();
            }
            print_json(&Pipeline::new(config)?.resume(&run_id, RunOptions::default())?)
        }
        Command::Cache { command: CacheCommand::Gc { max_bytes, cache_dir, env } } => {
            let root = match cache_dir {
                Some(dir) => dir,
                None if env.config.is_some() => env.config()?.cache_root(),
                None => return Err(Error::Config("give --cache-dir or --config".into())),
            };
            print_json(&pipeline::gc(&root, max_bytes)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // the reader went away (e.g. `| head`); nothing left to report
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vcass: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
