use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::BackendEndpoint;
use crate::compose::ComposePolicy;
use crate::digest::json_digest;
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::media::{KeyframePolicy, MediaTool};
use crate::prompts::{LlmPromptFamily, PromptLibrary, PromptVersions, VlmPrompt};
use crate::synth::SynthesisMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub vlm: BackendEndpoint,
    pub llm: BackendEndpoint,
    pub tts: BackendEndpoint,
    pub embed: BackendEndpoint,
}

impl Endpoints {
    pub fn mock() -> Self {
        Endpoints {
            vlm: BackendEndpoint::mock(),
            llm: BackendEndpoint::mock(),
            tts: BackendEndpoint::mock(),
            embed: BackendEndpoint::mock(),
        }
    }
}

/// Run configuration, read from a TOML file. Relative paths resolve against
/// the file's directory. Credentials never appear here: endpoints name the
/// environment variable holding their token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub endpoints: Endpoints,
    #[serde(default)]
    pub keyframes: KeyframePolicy,
    /// Knowledge-base file; the built-in base when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb_path: Option<PathBuf>,
    #[serde(default)]
    pub compose: ComposePolicy,
    pub cache_dir: PathBuf,
    #[serde(default)]
    pub prompts: PromptVersions,
    /// Directory of extra `<id>.v<n>.txt` templates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_dir: Option<PathBuf>,
    #[serde(default)]
    pub single_shot: bool,
    #[serde(default)]
    pub mode: SynthesisMode,
    #[serde(default)]
    pub media: MediaTool,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    /// All-mock configuration caching under `cache_dir`.
    pub fn mock(cache_dir: impl Into<PathBuf>, media: MediaTool) -> Self {
        PipelineConfig {
            endpoints: Endpoints::mock(),
            keyframes: KeyframePolicy::default(),
            kb_path: None,
            compose: ComposePolicy::default(),
            cache_dir: cache_dir.into(),
            prompts: PromptVersions::default(),
            prompt_dir: None,
            single_shot: false,
            mode: SynthesisMode::Expressive,
            media,
            base_dir: PathBuf::new(),
        }
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.base_dir = base_dir.to_path_buf();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::FileNotFound(path.to_path_buf()))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn cache_root(&self) -> PathBuf {
        self.resolve(&self.cache_dir)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, ep) in [
            ("vlm", &self.endpoints.vlm),
            ("llm", &self.endpoints.llm),
            ("tts", &self.endpoints.tts),
            ("embed", &self.endpoints.embed),
        ] {
            ep.validate().map_err(|e| Error::Config(format!("endpoint {name}: {e}")))?;
        }
        self.keyframes.validate()?;
        for p in self.kb_path.iter().chain(&self.prompt_dir) {
            let full = self.resolve(p);
            if !full.exists() {
                return Err(Error::FileNotFound(full));
            }
        }
        Ok(())
    }

    pub fn knowledge_base(&self) -> Result<KnowledgeBase> {
        match &self.kb_path {
            Some(p) => KnowledgeBase::load(&self.resolve(p)),
            None => Ok(KnowledgeBase::builtin()),
        }
    }

    pub fn prompt_library(&self) -> Result<PromptLibrary> {
        match &self.prompt_dir {
            Some(dir) => PromptLibrary::with_dir(&self.resolve(dir)),
            None => Ok(PromptLibrary::builtin()),
        }
    }
}

/// Everything a stage's output depends on besides its input artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigSlices {
    pub ingest: serde_json::Value,
    pub analyze: serde_json::Value,
    pub match_: serde_json::Value,
    pub instruct: serde_json::Value,
    pub synthesize: serde_json::Value,
    pub compose: serde_json::Value,
}

impl ConfigSlices {
    pub fn new(config: &PipelineConfig, kb: &KnowledgeBase, vlm: &VlmPrompt, llm: &LlmPromptFamily) -> Self {
        use serde_json::json;
        let llm_prompts = if config.single_shot {
            json!([llm.single_shot.text])
        } else {
            json!([llm.classify.text, llm.map_emotion.text, llm.compose.text])
        };
        ConfigSlices {
            ingest: json!({ "keyframes": config.keyframes }),
            analyze: json!({ "backend": config.endpoints.vlm.base_url, "prompt": vlm.text }),
            match_: json!({ "kb": kb.checksum }),
            instruct: json!({
                "backend": config.endpoints.llm.base_url,
                "prompts": llm_prompts,
                "single_shot": config.single_shot,
                "kb": kb.checksum,
            }),
            synthesize: json!({ "backend": config.endpoints.tts.base_url, "mode": config.mode }),
            compose: json!({ "policy": config.compose }),
        }
    }

    /// The run's config digest: every slice plus the knowledge-base path as
    /// written. Cache location and media tool templates are excluded.
    pub fn digest(&self, config: &PipelineConfig) -> String {
        json_digest(&serde_json::json!({ "slices": self, "kb_path": config.kb_path }))
    }
}
