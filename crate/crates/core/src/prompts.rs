//! Versioned prompt templates.
//!
//! Templates are plain text files named `<template_id>.v<version>.txt`.
//! Placeholders are `{name}` with `name` made of lowercase letters and
//! underscores; rendering fails if the template uses a placeholder the caller
//! does not supply. LLM templates declare their chain-of-thought step on a
//! `### step: <step>` line.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BUILTIN: &[(&str, &str)] = &[
    ("vlm_default.v1", include_str!("../config/prompts/vlm_default.v1.txt")),
    ("llm_classify.v1", include_str!("../config/prompts/llm_classify.v1.txt")),
    ("llm_map_emotion.v1", include_str!("../config/prompts/llm_map_emotion.v1.txt")),
    ("llm_compose.v1", include_str!("../config/prompts/llm_compose.v1.txt")),
    ("llm_single_shot.v1", include_str!("../config/prompts/llm_single_shot.v1.txt")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CotStep {
    Classify,
    MapEmotion,
    Compose,
    /// All three steps in one request.
    SingleShot,
}

impl CotStep {
    pub fn as_str(self) -> &'static str {
        match self {
            CotStep::Classify => "classify",
            CotStep::MapEmotion => "map_emotion",
            CotStep::Compose => "compose",
            CotStep::SingleShot => "single_shot",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "classify" => CotStep::Classify,
            "map_emotion" => CotStep::MapEmotion,
            "compose" => CotStep::Compose,
            "single_shot" => CotStep::SingleShot,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlmPrompt {
    pub template_id: String,
    pub text: String,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmPrompt {
    pub template_id: String,
    pub step: CotStep,
    pub text: String,
    pub version: u32,
}

/// The prompt family driving one instruction build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmPromptFamily {
    pub classify: LlmPrompt,
    pub map_emotion: LlmPrompt,
    pub compose: LlmPrompt,
    pub single_shot: LlmPrompt,
}

/// Names of the templates a run uses, keyed by step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptVersions {
    pub vlm: String,
    pub classify: String,
    pub map_emotion: String,
    pub compose: String,
    pub single_shot: String,
}

impl Default for PromptVersions {
    fn default() -> Self {
        PromptVersions {
            vlm: "vlm_default.v1".into(),
            classify: "llm_classify.v1".into(),
            map_emotion: "llm_map_emotion.v1".into(),
            compose: "llm_compose.v1".into(),
            single_shot: "llm_single_shot.v1".into(),
        }
    }
}

/// A set of raw template texts keyed by `<template_id>.v<version>`.
#[derive(Debug, Clone, Default)]
pub struct PromptLibrary {
    texts: BTreeMap<String, String>,
}

impl PromptLibrary {
    pub fn builtin() -> Self {
        PromptLibrary {
            texts: BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Built-in templates overlaid with every `*.txt` file in `dir`.
    pub fn with_dir(dir: &Path) -> Result<Self> {
        let mut lib = Self::builtin();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                lib.texts.insert(stem.to_string(), fs::read_to_string(&path)?);
            }
        }
        Ok(lib)
    }

    fn get(&self, key: &str) -> Result<(String, u32, &str)> {
        let text = self.texts.get(key).ok_or_else(|| Error::Prompt {
            template: key.into(),
            message: "no such template".into(),
        })?;
        let (id, version) = split_key(key)?;
        if text.trim().is_empty() {
            return Err(Error::Prompt { template: key.into(), message: "template is empty".into() });
        }
        Ok((id, version, text))
    }

    pub fn vlm(&self, key: &str) -> Result<VlmPrompt> {
        let (template_id, version, text) = self.get(key)?;
        Ok(VlmPrompt { template_id, text: text.to_string(), version })
    }

    pub fn llm(&self, key: &str, expected: CotStep) -> Result<LlmPrompt> {
        let (template_id, version, text) = self.get(key)?;
        let step = declared_step(text).ok_or_else(|| Error::Prompt {
            template: key.into(),
            message: "missing `### step: <step>` line".into(),
        })?;
        if step != expected {
            return Err(Error::Prompt {
                template: key.into(),
                message: format!("declares step `{}`, expected `{}`", step.as_str(), expected.as_str()),
            });
        }
        Ok(LlmPrompt { template_id, step, text: text.to_string(), version })
    }

    pub fn family(&self, versions: &PromptVersions) -> Result<LlmPromptFamily> {
        Ok(LlmPromptFamily {
            classify: self.llm(&versions.classify, CotStep::Classify)?,
            map_emotion: self.llm(&versions.map_emotion, CotStep::MapEmotion)?,
            compose: self.llm(&versions.compose, CotStep::Compose)?,
            single_shot: self.llm(&versions.single_shot, CotStep::SingleShot)?,
        })
    }
}

impl LlmPromptFamily {
    pub fn builtin() -> Self {
        PromptLibrary::builtin()
            .family(&PromptVersions::default())
            .expect("built-in prompt family is valid")
    }
}

impl VlmPrompt {
    pub fn builtin() -> Self {
        PromptLibrary::builtin()
            .vlm(&PromptVersions::default().vlm)
            .expect("built-in vlm prompt is valid")
    }
}

fn split_key(key: &str) -> Result<(String, u32)> {
    key.rsplit_once(".v")
        .and_then(|(id, v)| Some((id.to_string(), v.parse().ok()?)))
        .ok_or_else(|| Error::Prompt {
            template: key.into(),
            message: "template name must look like `<id>.v<version>`".into(),
        })
}

/// The step named on the first `### step:` line of a template or prompt.
pub fn declared_step(text: &str) -> Option<CotStep> {
    text.lines()
        .find_map(|l| l.trim().strip_prefix("### step:"))
        .and_then(|s| CotStep::parse(s.trim()))
}

enum Piece<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        match close {
            Some(close)
                if close > 0 && after[..close].bytes().all(|b| b.is_ascii_lowercase() || b == b'_') =>
            {
                out.push(Piece::Literal(&rest[..open]));
                out.push(Piece::Placeholder(&after[..close]));
                rest = &after[close + 1..];
            }
            _ => {
                out.push(Piece::Literal(&rest[..open + 1]));
                rest = after;
            }
        }
    }
    out.push(Piece::Literal(rest));
    out
}

/// Placeholder names used by a template, in order of first use.
pub fn placeholders(text: &str) -> Vec<&str> {
    let mut seen = Vec::new();
    for p in pieces(text) {
        if let Piece::Placeholder(name) = p {
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
    }
    seen
}

/// Single-pass substitution; values are inserted verbatim and never rescanned.
pub fn render(template_id: &str, text: &str, vars: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    for p in pieces(text) {
        match p {
            Piece::Literal(s) => out.push_str(s),
            Piece::Placeholder(name) => {
                let value = vars.iter().find(|(k, _)| *k == name).ok_or_else(|| Error::Prompt {
                    template: template_id.into(),
                    message: format!("unresolved placeholder {{{name}}}"),
                })?;
                out.push_str(value.1);
            }
        }
    }
    Ok(out)
}
