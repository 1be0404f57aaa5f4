//! Stage II: knowledge-infused chain-of-thought translation of visual cues
//! into a speech instruction.
//!
//! The chain runs classify → map_emotion → compose as three backend calls
//! (or one call in single-shot mode). Knowledge-base matches are infused
//! into the prompts as a compact rule table. Step answers use the
//! labeled-section format of [`crate::sections`].

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendEndpoint, HttpClient, TextResponse};
use crate::digest::json_digest;
use crate::error::{Error, Result};
use crate::kb::{CueCategory, Graded, KnowledgeBase, MatchResult, Pace, Pitch, VocalStyle, Volume};
use crate::prompts::{self, declared_step, CotStep, LlmPrompt, LlmPromptFamily};
use crate::sections::{self, Section};
use crate::vision::VisualCueReport;

/// Support tag for an emotional state no knowledge-base rule backs.
pub const LLM_INFERRED: &str = "llm-inferred";

const NEUTRAL_SENTENCE: &str = "Speak in a neutral, even tone";
const FALLBACK_SUMMARY: &str = "No visual cue matched the expert knowledge, so the delivery stays neutral.";

fn default_language() -> String {
    "en".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    pub language_tag: String,
    pub word_count: usize,
}

impl Transcript {
    pub fn new(text: impl Into<String>, language_tag: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let t = Transcript { word_count: text.split_whitespace().count(), text, language_tag: language_tag.into() };
        t.validate()?;
        Ok(t)
    }

    /// A `.json` file holding `{text, language_tag}`, or plain UTF-8 text
    /// (trimmed) with language tag `en`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::FileNotFound(path.to_path_buf()))?;
        if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Raw {
                text: String,
                #[serde(default = "default_language")]
                language_tag: String,
            }
            let raw: Raw = serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
            Self::new(raw.text, raw.language_tag)
        } else {
            Self::new(text.trim(), default_language())
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::InvalidInput("transcript text is empty".into()));
        }
        if self.word_count != self.text.split_whitespace().count() {
            return Err(Error::InvalidInput(format!(
                "word_count {} does not match the text's {} words",
                self.word_count,
                self.text.split_whitespace().count()
            )));
        }
        let tag_ok = !self.language_tag.is_empty()
            && self
                .language_tag
                .split('-')
                .all(|p| !p.is_empty() && p.len() <= 8 && p.bytes().all(|b| b.is_ascii_alphanumeric()));
        if !tag_ok {
            return Err(Error::InvalidInput(format!("`{}` is not a BCP-47 language tag", self.language_tag)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedCue {
    pub cue: String,
    pub category: CueCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionalState {
    pub label: String,
    /// Supporting rule ids, or the single tag [`LLM_INFERRED`].
    pub support: Vec<String>,
}

impl EmotionalState {
    pub fn is_grounded(&self) -> bool {
        self.support.iter().any(|s| s != LLM_INFERRED)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CotMode {
    Chained,
    SingleShot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotTrace {
    pub trace_id: String,
    pub mode: CotMode,
    pub step1_classified_cues: Vec<ClassifiedCue>,
    pub step2_emotional_states: Vec<EmotionalState>,
    pub step3_raw: String,
    pub backend_calls: u32,
    /// Whether the single repair retry was spent.
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechInstruction {
    pub transcript: Transcript,
    pub style_directives: VocalStyle,
    pub emotional_summary: String,
    pub rendered_instruction: String,
    pub trace_ref: String,
}

impl SpeechInstruction {
    pub fn validate(&self) -> Result<()> {
        self.transcript.validate()?;
        if !self.style_directives.has_any() {
            return Err(Error::InstructionInvalid("style directives set no field".into()));
        }
        if !self.rendered_instruction.contains(&self.transcript.text) {
            return Err(Error::InstructionInvalid("rendered instruction does not contain the transcript".into()));
        }
        Ok(())
    }
}

fn join_and(parts: &[String]) -> String {
    match parts {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn with_qualifier(base: String, q: &Option<String>) -> String {
    match q {
        Some(q) => format!("{base} ({q})"),
        None => base,
    }
}

/// The leading sentence (without final period) describing a vocal style.
pub fn style_sentence(style: &VocalStyle) -> String {
    if style.is_neutral() || !style.has_any() {
        return NEUTRAL_SENTENCE.to_string();
    }
    let mut parts = Vec::new();
    if let Some(tone) = style.tone.as_deref().map(str::trim).filter(|t| !t.is_empty()) {
        parts.push(format!("a {tone} tone"));
    }
    if let Some(p) = &style.pitch {
        parts.push(with_qualifier(format!("{} pitch", p.level), &p.qualifier));
    }
    if let Some(p) = &style.rhythm_pace {
        parts.push(with_qualifier(format!("a {} pace", p.level), &p.qualifier));
    }
    if let Some(v) = &style.volume {
        parts.push(with_qualifier(format!("{} volume", v.level), &v.qualifier));
    }
    format!("Speak with {}", join_and(&parts))
}

/// `<style sentence>. <summary> Say: "<transcript>"`, transcript verbatim.
pub fn render_instruction(style: &VocalStyle, summary: &str, transcript: &Transcript) -> String {
    let sentence = style_sentence(style);
    let summary = summary.trim();
    if summary.is_empty() {
        format!("{sentence}. Say: \"{}\"", transcript.text)
    } else {
        let end = if summary.ends_with(['.', '!', '?']) { "" } else { "." };
        format!("{sentence}. {summary}{end} Say: \"{}\"", transcript.text)
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

pub struct HttpCompletion {
    client: HttpClient,
}

impl HttpCompletion {
    pub fn new(endpoint: &BackendEndpoint) -> Result<Self> {
        Ok(HttpCompletion { client: HttpClient::new("llm", endpoint)? })
    }
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    prompt: &'a str,
}

impl CompletionBackend for HttpCompletion {
    fn complete(&self, prompt: &str) -> Result<String> {
        let resp: TextResponse = self.client.post_json("/v1/complete", &CompleteRequest { prompt })?;
        Ok(resp.text)
    }
}

pub fn completion_backend(endpoint: &BackendEndpoint) -> Result<Box<dyn CompletionBackend>> {
    if endpoint.is_mock() {
        Ok(Box::new(MockLlm))
    } else {
        Ok(Box::new(HttpCompletion::new(endpoint)?))
    }
}

/// Returns canned answers in order and records every prompt it receives.
#[derive(Debug, Default)]
pub struct ScriptedCompletion {
    answers: Mutex<VecDeque<String>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedCompletion {
    pub fn new<S: Into<String>>(answers: impl IntoIterator<Item = S>) -> Self {
        ScriptedCompletion {
            answers: Mutex::new(answers.into_iter().map(Into::into).collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl CompletionBackend for ScriptedCompletion {
    fn complete(&self, prompt: &str) -> Result<String> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        self.answers
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| Error::BackendRejected { backend: "llm".into(), status: 500, body: "script exhausted".into() })
    }
}

// ---------------------------------------------------------------------------
// Prompt sections

fn none_if_empty(lines: Vec<String>, empty: &str) -> String {
    if lines.is_empty() {
        empty.to_string()
    } else {
        lines.join("\n")
    }
}

fn cue_lines(report: &VisualCueReport) -> String {
    none_if_empty(report.cues().map(|(f, c)| format!("- [{f}] {c}")).collect(), "(none)")
}

fn rule_table<'a>(kb: &KnowledgeBase, ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut seen: Vec<&str> = Vec::new();
    for id in ids {
        if !seen.contains(&id) {
            seen.push(id);
        }
    }
    none_if_empty(
        seen.into_iter()
            .filter_map(|id| kb.rule(id))
            .map(|r| {
                format!(
                    "- {} | {} | {} | {}",
                    r.id,
                    r.cue_category.as_str(),
                    r.emotional_state,
                    r.vocal_expression.compact()
                )
            })
            .collect(),
        "(no matching rules)",
    )
}

fn match_lines(matches: &[MatchResult]) -> String {
    none_if_empty(
        matches
            .iter()
            .map(|m| format!("- {} | {} | {} | {}", m.rule_id, m.matched_keyword, m.score, m.matched_cue))
            .collect(),
        "(none)",
    )
}

fn classified_lines(cues: &[ClassifiedCue]) -> String {
    none_if_empty(cues.iter().map(|c| format!("- {} | {}", c.cue, c.category.as_str())).collect(), "(none)")
}

fn state_lines(states: &[EmotionalState]) -> String {
    none_if_empty(states.iter().map(|s| format!("- {} | {}", s.label, s.support.join(", "))).collect(), "(none)")
}

// ---------------------------------------------------------------------------
// Answer parsing

const ANSWER_LABELS: &[(&str, &str)] = &[
    ("classified_cues", "classified_cues"),
    ("emotional_states", "emotional_states"),
    ("tone", "tone"),
    ("pitch", "pitch"),
    ("rhythm_pace", "rhythm_pace"),
    ("pace", "rhythm_pace"),
    ("volume", "volume"),
    ("summary", "summary"),
];

fn find<'a, 'b>(found: &'b [Section<'a>], label: &str) -> Option<&'b Section<'a>> {
    found.iter().find(|s| s.label == label)
}

fn section_items<'a>(s: &Section<'a>) -> impl Iterator<Item = &'a str> + use<'a> {
    s.inline.into_iter().chain(s.items.clone())
}

fn parse_classified(raw: &str) -> std::result::Result<Vec<ClassifiedCue>, String> {
    let found = sections::parse(raw, ANSWER_LABELS);
    let section = find(&found, "classified_cues").ok_or("answer has no `classified_cues` section")?;
    Ok(section_items(section)
        .filter(|l| !l.starts_with('('))
        .map(|line| {
            let (cue, cat) = line.rsplit_once('|').unwrap_or((line, "other"));
            ClassifiedCue { cue: cue.trim().to_string(), category: cat.parse().unwrap_or(CueCategory::Other) }
        })
        .filter(|c| !c.cue.is_empty())
        .collect())
}

fn parse_states(raw: &str, kb: &KnowledgeBase) -> std::result::Result<Vec<EmotionalState>, String> {
    let found = sections::parse(raw, ANSWER_LABELS);
    let section = find(&found, "emotional_states").ok_or("answer has no `emotional_states` section")?;
    let mut states = Vec::new();
    for line in section_items(section).filter(|l| !l.starts_with('(')) {
        let (label, ids) = line.split_once('|').unwrap_or((line, ""));
        let label = label.trim();
        if label.is_empty() {
            return Err(format!("emotional state without a label: `{line}`"));
        }
        let mut support: Vec<String> =
            ids.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        if support.is_empty() {
            support.push(LLM_INFERRED.to_string());
        }
        if let Some(unknown) = support.iter().find(|id| *id != LLM_INFERRED && !kb.contains(id)) {
            return Err(format!("emotional state `{label}` cites unknown rule id `{unknown}`"));
        }
        states.push(EmotionalState { label: label.to_string(), support });
    }
    Ok(states)
}

fn parse_style(raw: &str) -> std::result::Result<(VocalStyle, String), String> {
    let found = sections::parse(raw, ANSWER_LABELS);
    let scalar = |label: &str| find(&found, label).map(sections::scalar_value).filter(|v| !v.trim().is_empty());
    fn graded<L: crate::kb::Level>(v: Option<String>, key: &str) -> std::result::Result<Option<Graded<L>>, String> {
        v.map(|v| v.parse::<Graded<L>>().map_err(|e| format!("{key}: {e}"))).transpose()
    }
    let style = VocalStyle {
        tone: scalar("tone").map(|t| t.trim().to_string()),
        pitch: graded::<Pitch>(scalar("pitch"), "pitch")?,
        rhythm_pace: graded::<Pace>(scalar("rhythm_pace"), "rhythm_pace")?,
        volume: graded::<Volume>(scalar("volume"), "volume")?,
    };
    if !style.has_any() {
        return Err("answer sets none of tone, pitch, rhythm_pace, volume".into());
    }
    let summary = scalar("summary").ok_or("answer has no `summary`")?;
    Ok((style, summary.trim().to_string()))
}

// ---------------------------------------------------------------------------
// Builder

/// Drives one instruction build against a completion backend.
pub struct InstructionBuilder<'a> {
    pub kb: &'a KnowledgeBase,
    pub prompts: &'a LlmPromptFamily,
    pub backend: &'a dyn CompletionBackend,
    pub single_shot: bool,
}

struct Calls<'a> {
    backend: &'a dyn CompletionBackend,
    count: u32,
    repair_available: bool,
}

impl Calls<'_> {
    /// Call, parse, and on a validation failure spend the single repair
    /// retry by re-prompting with the error appended.
    fn step<T>(
        &mut self,
        prompt: &str,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<(T, String)> {
        self.count += 1;
        let raw = self.backend.complete(prompt)?;
        match parse(&raw) {
            Ok(v) => Ok((v, raw)),
            Err(first) if self.repair_available => {
                self.repair_available = false;
                self.count += 1;
                let repair = format!(
                    "{prompt}\n\n### validation error\n{first}\nAnswer again in exactly the same format.\n"
                );
                let raw = self.backend.complete(&repair)?;
                parse(&raw).map(|v| (v, raw)).map_err(|e| Error::InstructionInvalid(format!("{e} (after repair retry)")))
            }
            Err(e) => Err(Error::InstructionInvalid(e)),
        }
    }
}

fn render_step(prompt: &LlmPrompt, vars: &[(&str, &str)]) -> Result<String> {
    prompts::render(&prompt.template_id, &prompt.text, vars)
}

impl InstructionBuilder<'_> {
    pub fn build(
        &self,
        report: &VisualCueReport,
        matches: &[MatchResult],
        transcript: &Transcript,
    ) -> Result<(SpeechInstruction, CotTrace)> {
        transcript.validate()?;
        let mut calls = Calls { backend: self.backend, count: 0, repair_available: true };
        let cues = cue_lines(report);
        let matched_table = rule_table(self.kb, matches.iter().map(|m| m.rule_id.as_str()));
        let match_text = match_lines(matches);

        let (classified, states, (style, summary), step3_raw, mode) = if self.single_shot {
            let prompt = render_step(
                &self.prompts.single_shot,
                &[("kb_table", &matched_table), ("matches", &match_text), ("cues", &cues), ("transcript", &transcript.text)],
            )?;
            let ((classified, states, styled), raw) = calls.step(&prompt, |raw| {
                Ok((parse_classified(raw)?, parse_states(raw, self.kb)?, parse_style(raw)?))
            })?;
            (classified, states, styled, raw, CotMode::SingleShot)
        } else {
            let p1 = render_step(
                &self.prompts.classify,
                &[("kb_table", &matched_table), ("matches", &match_text), ("cues", &cues)],
            )?;
            let (classified, _) = calls.step(&p1, parse_classified)?;

            let p2 = render_step(
                &self.prompts.map_emotion,
                &[("kb_table", &matched_table), ("matches", &match_text), ("classified", &classified_lines(&classified))],
            )?;
            let (states, _) = calls.step(&p2, |raw| parse_states(raw, self.kb))?;

            let cited = states.iter().flat_map(|s| s.support.iter().map(String::as_str));
            let compose_table = rule_table(
                self.kb,
                matches.iter().map(|m| m.rule_id.as_str()).chain(cited),
            );
            let p3 = render_step(
                &self.prompts.compose,
                &[("kb_table", &compose_table), ("states", &state_lines(&states)), ("transcript", &transcript.text)],
            )?;
            let (styled, raw) = calls.step(&p3, parse_style)?;
            (classified, states, styled, raw, CotMode::Chained)
        };

        let (style, summary) = if matches.is_empty() {
            (VocalStyle::neutral(), FALLBACK_SUMMARY.to_string())
        } else {
            (style, summary)
        };

        let mut trace = CotTrace {
            trace_id: String::new(),
            mode,
            step1_classified_cues: classified,
            step2_emotional_states: states,
            step3_raw,
            backend_calls: calls.count,
            repaired: !calls.repair_available,
        };
        trace.trace_id = json_digest(&trace);

        let instruction = SpeechInstruction {
            rendered_instruction: render_instruction(&style, &summary, transcript),
            transcript: transcript.clone(),
            style_directives: style,
            emotional_summary: summary,
            trace_ref: trace.trace_id.clone(),
        };
        instruction.validate()?;
        Ok((instruction, trace))
    }
}

// ---------------------------------------------------------------------------
// Mock LLM

/// Deterministic stand-in for the language model.
///
/// It reads the step marker and the `### ` sections of the prompt and
/// answers like a diligent expert: cues are classified by the category of
/// their best matching rule, states are the emotional states of the matched
/// rules (unmatched cues become `llm-inferred` states), and the style is the
/// vocal expression of the best grounded rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockLlm;

struct PromptView<'a> {
    text: &'a str,
}

impl<'a> PromptView<'a> {
    fn section(&self, header: &str) -> Vec<&'a str> {
        let mut lines = Vec::new();
        let mut inside = false;
        for line in self.text.lines() {
            if let Some(h) = line.trim().strip_prefix("### ") {
                inside = h.trim() == header;
                continue;
            }
            if inside {
                let item = sections::strip_bullet(line);
                if !item.is_empty() && !item.starts_with('(') {
                    lines.push(item);
                }
            }
        }
        lines
    }

    fn cells(&self, header: &str) -> Vec<Vec<&'a str>> {
        self.section(header).into_iter().map(|l| l.split(" | ").map(str::trim).collect()).collect()
    }
}

struct MockRule<'a> {
    id: &'a str,
    category: &'a str,
    state: &'a str,
    style: &'a str,
}

fn mock_rules<'a>(view: &PromptView<'a>) -> Vec<MockRule<'a>> {
    view.cells("knowledge")
        .into_iter()
        .filter(|c| c.len() >= 4)
        .map(|c| MockRule { id: c[0], category: c[1], state: c[2], style: c[3] })
        .collect()
}

/// (rule_id, cue) pairs in ranking order.
fn mock_matches<'a>(view: &PromptView<'a>) -> Vec<(&'a str, &'a str)> {
    view.cells("matches").into_iter().filter(|c| c.len() >= 4).map(|c| (c[0], c[3])).collect()
}

fn mock_classify(view: &PromptView<'_>) -> Vec<(String, String)> {
    let rules = mock_rules(view);
    let matches = mock_matches(view);
    view.section("cues")
        .into_iter()
        .map(|line| {
            let cue = line.split_once("] ").map(|(_, c)| c).unwrap_or(line);
            let category = matches
                .iter()
                .find(|(_, c)| *c == cue)
                .and_then(|(id, _)| rules.iter().find(|r| r.id == *id))
                .map(|r| r.category)
                .unwrap_or("other");
            (cue.to_string(), category.to_string())
        })
        .collect()
}

fn mock_states(view: &PromptView<'_>, classified: &[(String, String)]) -> Vec<(String, Vec<String>)> {
    let rules = mock_rules(view);
    let matches = mock_matches(view);
    let mut states: Vec<(String, Vec<String>)> = Vec::new();
    for (id, _) in &matches {
        let Some(rule) = rules.iter().find(|r| r.id == *id) else { continue };
        match states.iter_mut().find(|(label, _)| label == rule.state) {
            Some((_, ids)) if !ids.iter().any(|x| x == id) => ids.push(id.to_string()),
            Some(_) => {}
            None => states.push((rule.state.to_string(), vec![id.to_string()])),
        }
    }
    for (cue, category) in classified {
        if category == "other" && !matches.iter().any(|(_, c)| c == cue) {
            states.push((cue.clone(), vec![LLM_INFERRED.to_string()]));
        }
    }
    states
}

fn lexicon_style(label: &str) -> &'static str {
    let l = label.to_lowercase();
    let table: &[(&[&str], &str)] = &[
        (&["warm", "festiv", "joy", "energ", "cheer", "excite"], "tone=warm and lively; pitch=high; rhythm_pace=fast; volume=normal"),
        (&["calm", "peace", "serene", "hope", "nostalg"], "tone=gentle and calm; pitch=mid; rhythm_pace=slow; volume=soft"),
        (&["melanch", "sad", "lonel", "grief"], "tone=subdued and wistful; pitch=low; rhythm_pace=slow; volume=soft"),
        (&["tens", "fear", "nerv", "anx", "suspens"], "tone=tense and hushed; pitch=low; rhythm_pace=slow; volume=soft"),
    ];
    table
        .iter()
        .find(|(keys, _)| keys.iter().any(|k| l.contains(k)))
        .map(|(_, style)| *style)
        .unwrap_or("tone=neutral; pitch=mid; rhythm_pace=moderate; volume=normal")
}

fn mock_compose(view: &PromptView<'_>, states: &[(String, Vec<String>)]) -> String {
    let rules = mock_rules(view);
    let grounded = states
        .iter()
        .flat_map(|(_, ids)| ids.iter())
        .find_map(|id| rules.iter().find(|r| r.id == id.as_str()))
        .map(|r| r.style);
    let style = grounded.unwrap_or_else(|| states.first().map(|(l, _)| lexicon_style(l)).unwrap_or(lexicon_style("")));
    let mut out = String::new();
    for part in style.split(';') {
        if let Some((k, v)) = part.split_once('=') {
            out.push_str(&format!("{}: {}\n", k.trim(), v.trim()));
        }
    }
    let labels: Vec<String> = states.iter().take(3).map(|(l, _)| l.clone()).collect();
    let summary = if labels.is_empty() {
        "The scene carries no marked emotional tone.".to_string()
    } else {
        format!("The scene conveys {}.", join_and(&labels))
    };
    out.push_str(&format!("summary: {summary}\n"));
    out
}

fn format_classified(classified: &[(String, String)]) -> String {
    let mut out = String::from("classified_cues:\n");
    for (cue, cat) in classified {
        out.push_str(&format!("- {cue} | {cat}\n"));
    }
    out
}

fn format_states(states: &[(String, Vec<String>)]) -> String {
    let mut out = String::from("emotional_states:\n");
    for (label, ids) in states {
        out.push_str(&format!("- {label} | {}\n", ids.join(", ")));
    }
    out
}

impl CompletionBackend for MockLlm {
    fn complete(&self, prompt: &str) -> Result<String> {
        let view = PromptView { text: prompt };
        match declared_step(prompt) {
            Some(CotStep::Classify) => Ok(format_classified(&mock_classify(&view))),
            Some(CotStep::MapEmotion) => {
                let classified: Vec<(String, String)> = view
                    .cells("classified cues")
                    .into_iter()
                    .filter(|c| c.len() >= 2)
                    .map(|c| (c[0].to_string(), c[1].to_string()))
                    .collect();
                Ok(format_states(&mock_states(&view, &classified)))
            }
            Some(CotStep::Compose) => {
                let states: Vec<(String, Vec<String>)> = view
                    .cells("emotional states")
                    .into_iter()
                    .map(|c| {
                        let ids = c.get(1).map(|ids| ids.split(',').map(|s| s.trim().to_string()).collect()).unwrap_or_default();
                        (c[0].to_string(), ids)
                    })
                    .collect();
                Ok(mock_compose(&view, &states))
            }
            Some(CotStep::SingleShot) => {
                let classified = mock_classify(&view);
                let states = mock_states(&view, &classified);
                Ok(format!("{}{}{}", format_classified(&classified), format_states(&states), mock_compose(&view, &states)))
            }
            None => Err(Error::BackendRejected {
                backend: "llm".into(),
                status: 400,
                body: "mock llm: prompt declares no `### step:`".into(),
            }),
        }
    }
}
