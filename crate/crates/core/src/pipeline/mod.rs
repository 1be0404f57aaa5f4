//! End-to-end runner: ingest → analyze → match → instruct → synthesize →
//! compose, with every intermediate artifact cached by content.

pub mod cache;
pub mod config;
pub mod log;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backend::CallCounter;
use crate::compose::compose;
use crate::digest::{digest_parts, file_sha256, json_digest};
use crate::error::{Error, Result};
use crate::instruct::{completion_backend, CompletionBackend, CotTrace, InstructionBuilder, SpeechInstruction, Transcript};
use crate::kb::{match_cues, KnowledgeBase, MatchResult};
use crate::media::{extract_keyframes, probe, Keyframe, KeyframeSet, VideoRef};
use crate::prompts::{LlmPromptFamily, VlmPrompt};
use crate::synth::{self, speech_backend, validate_wav, SpeechBackend, SynthesizeRequest};
use crate::vision::{self, vision_backend, AnalyzeRequest, VisionBackend, VisualCueReport};

pub use cache::{gc, Cache, GcReport, IndexEntry};
pub use config::{ConfigSlices, Endpoints, PipelineConfig};
use log::RunLog;

pub const MANIFEST_FILE: &str = "manifest";
pub const LOG_FILE: &str = "run.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Analyze,
    Match,
    Instruct,
    Synthesize,
    Compose,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Ingest, Stage::Analyze, Stage::Match, Stage::Instruct, Stage::Synthesize, Stage::Compose];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Analyze => "analyze",
            Stage::Match => "match",
            Stage::Instruct => "instruct",
            Stage::Synthesize => "synthesize",
            Stage::Compose => "compose",
        }
    }

    /// The model backend the stage calls, if any.
    pub fn backend(self) -> Option<&'static str> {
        match self {
            Stage::Analyze => Some("vlm"),
            Stage::Instruct => Some("llm"),
            Stage::Synthesize => Some("tts"),
            _ => None,
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInputs {
    pub video_path: PathBuf,
    pub video_hash: String,
    pub transcript_path: PathBuf,
    pub transcript_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageArtifact {
    /// Relative to the cache root.
    pub path: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_digest: String,
    pub inputs: RunInputs,
    pub stage_artifacts: BTreeMap<String, StageArtifact>,
    pub complete: bool,
    pub timings_ms: BTreeMap<String, u64>,
    /// Backend calls made by the invocation that wrote this manifest.
    pub backend_call_count: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn artifact(&self, stage: Stage) -> Option<&StageArtifact> {
        self.stage_artifacts.get(stage.as_str())
    }

    /// The manifest with timings and call counts cleared, for comparing
    /// runs that reached the same state by different routes.
    pub fn normalized(&self) -> RunManifest {
        RunManifest { timings_ms: BTreeMap::new(), backend_call_count: BTreeMap::new(), ..self.clone() }
    }
}

/// Stage I output: probe facts plus keyframes whose `image_path` is a file
/// name beside the artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestArtifact {
    pub duration_s: f64,
    pub frame_count: u32,
    pub fps: f64,
    pub keyframes: Vec<Keyframe>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructArtifact {
    pub instruction: SpeechInstruction,
    pub trace: CotTrace,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Stop with [`Error::Interrupted`] right after this stage is recorded.
    pub fail_after: Option<Stage>,
}

pub struct Backends {
    pub vision: Box<dyn VisionBackend>,
    pub llm: Box<dyn CompletionBackend>,
    pub tts: Box<dyn SpeechBackend>,
}

impl Backends {
    pub fn from_config(config: &PipelineConfig) -> Result<Self> {
        Ok(Backends {
            vision: vision_backend(&config.endpoints.vlm)?,
            llm: completion_backend(&config.endpoints.llm)?,
            tts: speech_backend(&config.endpoints.tts)?,
        })
    }
}

struct Counted<'a, B: ?Sized> {
    inner: &'a B,
    counter: CallCounter,
}

impl VisionBackend for Counted<'_, dyn VisionBackend> {
    fn analyze(&self, request: &AnalyzeRequest) -> Result<String> {
        self.counter.increment();
        self.inner.analyze(request)
    }
}

impl CompletionBackend for Counted<'_, dyn CompletionBackend> {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.counter.increment();
        self.inner.complete(prompt)
    }
}

impl SpeechBackend for Counted<'_, dyn SpeechBackend> {
    fn synthesize(&self, request: &SynthesizeRequest) -> Result<Vec<u8>> {
        self.counter.increment();
        self.inner.synthesize(request)
    }
}

#[derive(Default, Clone)]
struct Counters {
    vlm: CallCounter,
    llm: CallCounter,
    tts: CallCounter,
}

impl Counters {
    fn snapshot(&self) -> [u64; 3] {
        [self.vlm.get(), self.llm.get(), self.tts.get()]
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    kb: KnowledgeBase,
    vlm_prompt: VlmPrompt,
    llm_prompts: LlmPromptFamily,
    slices: ConfigSlices,
    config_digest: String,
    backends: Backends,
    counters: Counters,
    cache: Cache,
}

fn stage_key(stage: Stage, inputs: &[&str], slice: &serde_json::Value) -> String {
    let slice = json_digest(slice);
    digest_parts([stage.as_str()].into_iter().chain(inputs.iter().copied()).chain([slice.as_str()]))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let backends = Backends::from_config(&config)?;
        Self::with_backends(config, backends)
    }

    pub fn with_backends(config: PipelineConfig, backends: Backends) -> Result<Self> {
        config.validate()?;
        let kb = config.knowledge_base()?;
        let library = config.prompt_library()?;
        let vlm_prompt = library.vlm(&config.prompts.vlm)?;
        let llm_prompts = library.family(&config.prompts)?;
        let slices = ConfigSlices::new(&config, &kb, &vlm_prompt, &llm_prompts);
        let config_digest = slices.digest(&config);
        let cache = Cache::new(config.cache_root());
        Ok(Pipeline { config, kb, vlm_prompt, llm_prompts, slices, config_digest, backends, counters: Counters::default(), cache })
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    /// Backend calls made through this pipeline so far: vlm, llm, tts.
    pub fn calls(&self) -> BTreeMap<String, u64> {
        let [v, l, t] = self.counters.snapshot();
        BTreeMap::from([("vlm".into(), v), ("llm".into(), l), ("tts".into(), t)])
    }

    pub fn run_id(&self, video_hash: &str, transcript_hash: &str) -> String {
        digest_parts([self.config_digest.as_str(), video_hash, transcript_hash])
    }

    pub fn manifest_path(&self, run_id: &str) -> PathBuf {
        self.cache.root().join(run_id).join(MANIFEST_FILE)
    }

    /// Absolute path of a manifest artifact.
    pub fn artifact_path(&self, artifact: &StageArtifact) -> PathBuf {
        self.cache.abs(&artifact.path)
    }

    fn inputs(&self, video: &Path, transcript_path: &Path) -> Result<(RunInputs, Transcript)> {
        if !video.exists() {
            return Err(Error::FileNotFound(video.to_path_buf()));
        }
        let transcript = Transcript::load(transcript_path)?;
        Ok((
            RunInputs {
                video_path: video.to_path_buf(),
                video_hash: file_sha256(video)?,
                transcript_path: transcript_path.to_path_buf(),
                transcript_hash: json_digest(&transcript),
            },
            transcript,
        ))
    }

    pub fn run(&self, video: &Path, transcript_path: &Path, opts: RunOptions) -> Result<RunManifest> {
        let (inputs, transcript) = self.inputs(video, transcript_path)?;
        self.execute(inputs, transcript, opts)
    }

    /// Finish a partial run. A complete run is returned unchanged.
    pub fn resume(&self, run_id: &str, opts: RunOptions) -> Result<RunManifest> {
        let path = self.manifest_path(run_id);
        if !path.exists() {
            return Err(Error::UnknownRun(run_id.to_string()));
        }
        let manifest = RunManifest::load(&path)?;
        if manifest.config_digest != self.config_digest {
            return Err(Error::ConfigDrift { expected: manifest.config_digest, found: self.config_digest.clone() });
        }
        if manifest.complete {
            return Ok(manifest);
        }
        let (inputs, transcript) = self.inputs(&manifest.inputs.video_path, &manifest.inputs.transcript_path)?;
        if inputs.video_hash != manifest.inputs.video_hash {
            return Err(Error::InputChanged(format!("video {}", inputs.video_path.display())));
        }
        if inputs.transcript_hash != manifest.inputs.transcript_hash {
            return Err(Error::InputChanged(format!("transcript {}", inputs.transcript_path.display())));
        }
        self.execute(inputs, transcript, opts)
    }

    fn execute(&self, inputs: RunInputs, transcript: Transcript, opts: RunOptions) -> Result<RunManifest> {
        let run_id = self.run_id(&inputs.video_hash, &inputs.transcript_hash);
        let run_dir = self.cache.root().join(&run_id);
        fs::create_dir_all(&run_dir)?;
        let mut run = Run {
            p: self,
            run_id: run_id.clone(),
            log: RunLog::new(run_dir.join(LOG_FILE), &run_id),
            start_calls: self.counters.snapshot(),
            opts,
            manifest: RunManifest {
                run_id,
                config_digest: self.config_digest.clone(),
                inputs,
                stage_artifacts: BTreeMap::new(),
                complete: false,
                timings_ms: BTreeMap::new(),
                backend_call_count: BTreeMap::new(),
            },
        };
        run.all(&transcript)?;
        run.manifest.complete = true;
        run.save()?;
        run.log.event("run", "complete", None, None, Some("ok"));
        Ok(run.manifest)
    }
}

struct Run<'a> {
    p: &'a Pipeline,
    run_id: String,
    log: RunLog,
    start_calls: [u64; 3],
    opts: RunOptions,
    manifest: RunManifest,
}

impl Run<'_> {
    fn save(&mut self) -> Result<()> {
        let now = self.p.counters.snapshot();
        self.manifest.backend_call_count = ["vlm", "llm", "tts"]
            .iter()
            .zip(now.iter().zip(self.start_calls))
            .map(|(name, (n, s))| (name.to_string(), n - s))
            .collect();
        cache::write_atomic(&self.p.manifest_path(&self.run_id), &serde_json::to_vec_pretty(&self.manifest)?)
    }

    /// Answer `stage` from the cache or compute it, record it in the
    /// manifest, and honour fault injection.
    fn stage(
        &mut self,
        stage: Stage,
        key: String,
        compute: impl FnOnce(&Pipeline, &str) -> Result<IndexEntry>,
    ) -> Result<IndexEntry> {
        let started = Instant::now();
        let backend = stage.backend();
        self.log.event(stage.as_str(), "start", None, backend, None);
        let cache = &self.p.cache;
        let (entry, event) = match cache.lookup(stage.as_str(), &key) {
            Some(hit) => (cache.adopt(&self.run_id, stage.as_str(), &hit), "cache_hit"),
            None => {
                let computed = compute(self.p, &self.run_id);
                if let Ok(e) = &computed {
                    cache.record(stage.as_str(), &key, e)?;
                }
                (computed, "computed")
            }
        };
        let elapsed = started.elapsed().as_millis() as u64;
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                self.log.event(stage.as_str(), "error", Some(elapsed), backend, Some(&e.to_string()));
                self.save()?;
                return Err(e.in_stage(stage.as_str()));
            }
        };
        self.log.event(stage.as_str(), event, Some(elapsed), backend, Some("ok"));
        self.manifest.timings_ms.insert(stage.as_str().into(), elapsed);
        self.manifest
            .stage_artifacts
            .insert(stage.as_str().into(), StageArtifact { path: entry.artifact.clone(), hash: entry.hash.clone() });
        self.save()?;
        if self.opts.fail_after == Some(stage) {
            return Err(Error::Interrupted(stage.as_str().into()));
        }
        Ok(entry)
    }

    fn all(&mut self, transcript: &Transcript) -> Result<()> {
        let p = self.p;
        let video_path = self.manifest.inputs.video_path.clone();
        let video_hash = self.manifest.inputs.video_hash.clone();
        let transcript_hash = self.manifest.inputs.transcript_hash.clone();

        let ingest = self.stage(Stage::Ingest, stage_key(Stage::Ingest, &[&video_hash], &p.slices.ingest), |p, run_id| {
            let video = probe(&video_path, &p.config.media)?;
            let dir = p.cache.abs(&Cache::stage_rel(run_id, Stage::Ingest.as_str()));
            fs::create_dir_all(&dir)?;
            let scratch = tempfile::Builder::new().prefix(".extract-").tempdir_in(&dir)?;
            let set = extract_keyframes(&video, &p.config.keyframes, &p.config.media, scratch.path())?;
            let mut extras = Vec::new();
            let mut keyframes = Vec::new();
            for frame in set.frames {
                let (rel, hash) = p.cache.store_file(run_id, Stage::Ingest.as_str(), &frame.image_path, "png")?;
                extras.push(rel);
                keyframes.push(Keyframe { image_path: PathBuf::from(format!("{hash}.png")), ..frame });
            }
            let artifact = IngestArtifact { duration_s: video.duration_s, frame_count: video.frame_count, fps: video.fps, keyframes };
            let (rel, hash) = p.cache.store(run_id, Stage::Ingest.as_str(), &serde_json::to_vec_pretty(&artifact)?, "json")?;
            Ok(IndexEntry { artifact: rel, hash, extras })
        })?;
        let ingest_path = p.cache.abs(&ingest.artifact);
        let ingested: IngestArtifact = read_json(&ingest_path)?;

        let analyze = self.stage(Stage::Analyze, stage_key(Stage::Analyze, &[&ingest.hash], &p.slices.analyze), |p, run_id| {
            let dir = ingest_path.parent().unwrap();
            let set = KeyframeSet {
                frames: ingested
                    .keyframes
                    .iter()
                    .map(|k| Keyframe { image_path: dir.join(&k.image_path), ..k.clone() })
                    .collect(),
            };
            let backend = Counted { inner: &*p.backends.vision, counter: p.counters.vlm.clone() };
            let report = vision::analyze(&set, &p.vlm_prompt, &backend)?;
            let (rel, hash) = p.cache.store(run_id, Stage::Analyze.as_str(), &serde_json::to_vec_pretty(&report)?, "json")?;
            Ok(IndexEntry { artifact: rel, hash, extras: vec![] })
        })?;
        let report: VisualCueReport = read_json(&p.cache.abs(&analyze.artifact))?;

        let matched = self.stage(Stage::Match, stage_key(Stage::Match, &[&analyze.hash], &p.slices.match_), |p, run_id| {
            let matches = match_cues(&p.kb, &report);
            let (rel, hash) = p.cache.store(run_id, Stage::Match.as_str(), &serde_json::to_vec_pretty(&matches)?, "json")?;
            Ok(IndexEntry { artifact: rel, hash, extras: vec![] })
        })?;
        let matches: Vec<MatchResult> = read_json(&p.cache.abs(&matched.artifact))?;

        let instruct_key =
            stage_key(Stage::Instruct, &[&analyze.hash, &matched.hash, &transcript_hash], &p.slices.instruct);
        let instructed = self.stage(Stage::Instruct, instruct_key, |p, run_id| {
            let backend = Counted { inner: &*p.backends.llm, counter: p.counters.llm.clone() };
            let builder = InstructionBuilder {
                kb: &p.kb,
                prompts: &p.llm_prompts,
                backend: &backend,
                single_shot: p.config.single_shot,
            };
            let (instruction, trace) = builder.build(&report, &matches, transcript)?;
            let artifact = InstructArtifact { instruction, trace };
            let (rel, hash) = p.cache.store(run_id, Stage::Instruct.as_str(), &serde_json::to_vec_pretty(&artifact)?, "json")?;
            Ok(IndexEntry { artifact: rel, hash, extras: vec![] })
        })?;
        let instruction: InstructArtifact = read_json(&p.cache.abs(&instructed.artifact))?;

        let synth_key = stage_key(Stage::Synthesize, &[&instructed.hash], &p.slices.synthesize);
        let synthesized = self.stage(Stage::Synthesize, synth_key, |p, run_id| {
            let backend = Counted { inner: &*p.backends.tts, counter: p.counters.tts.clone() };
            let clip = synth::synthesize(&instruction.instruction, p.config.mode, &backend)?;
            let (rel, hash) = p.cache.store(run_id, Stage::Synthesize.as_str(), &clip.to_wav(), "wav")?;
            Ok(IndexEntry { artifact: rel, hash, extras: vec![] })
        })?;
        let wav_path = p.cache.abs(&synthesized.artifact);

        let compose_key = stage_key(Stage::Compose, &[&video_hash, &synthesized.hash], &p.slices.compose);
        self.stage(Stage::Compose, compose_key, |p, run_id| {
            let clip = validate_wav(&fs::read(&wav_path)?)?;
            let video = VideoRef::new(&video_path, ingested.duration_s, ingested.frame_count, ingested.fps)?;
            let ext = video_path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "bin".into());
            let dir = p.cache.abs(&Cache::stage_rel(run_id, Stage::Compose.as_str()));
            fs::create_dir_all(&dir)?;
            let staging = tempfile::Builder::new().prefix(".compose-").tempdir_in(&dir)?;
            let out = staging.path().join(format!("out.{ext}"));
            compose(&video, &clip, p.config.compose, &out, &p.config.media)?;
            let (rel, hash) = p.cache.store_file(run_id, Stage::Compose.as_str(), &out, &ext)?;
            Ok(IndexEntry { artifact: rel, hash, extras: vec![] })
        })?;
        Ok(())
    }
}

/// Run the pipeline with backends built from `config`.
pub fn run_pipeline(video: &Path, transcript: &Path, config: PipelineConfig) -> Result<RunManifest> {
    Pipeline::new(config)?.run(video, transcript, RunOptions::default())
}

pub fn resume(run_id: &str, config: PipelineConfig) -> Result<RunManifest> {
    Pipeline::new(config)?.resume(run_id, RunOptions::default())
}
