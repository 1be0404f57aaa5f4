//! Visual-to-vocal para-linguistic mapping knowledge and keyword matching.
//!
//! # File format
//!
//! UTF-8 text. Records are separated by blank lines; each record is a set of
//! `key: value` lines. Lines starting with `#` are comments. An optional
//! leading record holding only `kb_version` names the knowledge base version.
//! Rule records accept these keys:
//!
//! ```text
//! id:              unique rule id                         (required)
//! cue_category:    color | lighting | line | layout |
//!                  composition | camera | other          (required)
//! cue_keywords:    comma-separated lowercase keywords     (required)
//! emotional_state: free text                              (required)
//! tone:            free text
//! pitch:           low | mid | high, then an optional qualifier
//! rhythm_pace:     slow | moderate | fast, then an optional qualifier
//! volume:          soft | normal | loud, then an optional qualifier
//! priority:        integer, default 0; higher wins ties
//! provenance:      citation text, default "unspecified"
//! ```
//!
//! At least one of `tone`, `pitch`, `rhythm_pace`, `volume` must be set.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::vision::VisualCueReport;

pub const DEFAULT_KB: &str = include_str!("../data/default.kb");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueCategory {
    Color,
    Lighting,
    Line,
    Layout,
    Composition,
    Camera,
    Other,
}

impl CueCategory {
    pub const ALL: [CueCategory; 7] = [
        CueCategory::Color,
        CueCategory::Lighting,
        CueCategory::Line,
        CueCategory::Layout,
        CueCategory::Composition,
        CueCategory::Camera,
        CueCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CueCategory::Color => "color",
            CueCategory::Lighting => "lighting",
            CueCategory::Line => "line",
            CueCategory::Layout => "layout",
            CueCategory::Composition => "composition",
            CueCategory::Camera => "camera",
            CueCategory::Other => "other",
        }
    }
}

impl FromStr for CueCategory {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        CueCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s || (s == "colour" && *c == CueCategory::Color))
            .ok_or_else(|| format!("unknown cue category `{s}`"))
    }
}

/// A vocal dimension's discrete level names.
pub trait Level: Copy + Eq + FromStr<Err = String> + fmt::Display {}

macro_rules! level_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "`{other}` is not one of {}",
                        [$($text),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }

        impl Level for $name {}
    };
}

level_enum!(Pitch { Low => "low", Mid => "mid", High => "high" });
level_enum!(Pace { Slow => "slow", Moderate => "moderate", Fast => "fast" });
level_enum!(Volume { Soft => "soft", Normal => "normal", Loud => "loud" });

/// A level plus optional free-text qualifier, e.g. `low` + `trembling`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Graded<L> {
    pub level: L,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qualifier: Option<String>,
}

impl<L: Level> Graded<L> {
    pub fn plain(level: L) -> Self {
        Graded { level, qualifier: None }
    }

    pub fn qualified(level: L, qualifier: impl Into<String>) -> Self {
        let q = qualifier.into();
        Graded { level, qualifier: (!q.trim().is_empty()).then(|| q.trim().to_string()) }
    }
}

impl<L: Level> FromStr for Graded<L> {
    type Err = String;

    /// First word is the level; the rest, if any, is the qualifier.
    /// Parenthesized qualifiers such as `high (bright)` are unwrapped.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let (word, rest) = s.split_once(char::is_whitespace).unwrap_or((s, ""));
        let word = word.trim_end_matches([',', ';']);
        let level = word.parse::<L>()?;
        let q = rest.trim().trim_start_matches([',', ';', '-']).trim();
        let q = q.strip_prefix('(').and_then(|q| q.strip_suffix(')')).unwrap_or(q);
        Ok(Graded::qualified(level, q))
    }
}

impl<L: Level> fmt::Display for Graded<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{} {}", self.level, q),
            None => write!(f, "{}", self.level),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VocalStyle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tone: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch: Option<Graded<Pitch>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhythm_pace: Option<Graded<Pace>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<Graded<Volume>>,
}

impl VocalStyle {
    /// Neutral delivery: neutral tone, mid pitch, moderate pace, normal volume.
    pub fn neutral() -> Self {
        VocalStyle {
            tone: Some("neutral".into()),
            pitch: Some(Graded::plain(Pitch::Mid)),
            rhythm_pace: Some(Graded::plain(Pace::Moderate)),
            volume: Some(Graded::plain(Volume::Normal)),
        }
    }

    pub fn is_neutral(&self) -> bool {
        *self == Self::neutral()
    }

    pub fn has_any(&self) -> bool {
        self.tone.as_deref().is_some_and(|t| !t.trim().is_empty())
            || self.pitch.is_some()
            || self.rhythm_pace.is_some()
            || self.volume.is_some()
    }

    /// Compact `tone=..; pitch=..; rhythm_pace=..; volume=..` form for prompts.
    pub fn compact(&self) -> String {
        let mut parts = Vec::new();
        if let Some(t) = &self.tone {
            parts.push(format!("tone={t}"));
        }
        if let Some(p) = &self.pitch {
            parts.push(format!("pitch={p}"));
        }
        if let Some(p) = &self.rhythm_pace {
            parts.push(format!("rhythm_pace={p}"));
        }
        if let Some(v) = &self.volume {
            parts.push(format!("volume={v}"));
        }
        parts.join("; ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRule {
    pub id: String,
    pub cue_category: CueCategory,
    pub cue_keywords: Vec<String>,
    pub emotional_state: String,
    pub vocal_expression: VocalStyle,
    pub priority: i64,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub rules: Vec<MappingRule>,
    pub version: String,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub rule_id: String,
    pub matched_keyword: String,
    pub matched_cue: String,
    pub score: u32,
}

#[derive(Default)]
struct Draft {
    start_line: usize,
    fields: Vec<(String, String, usize)>,
}

impl Draft {
    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.fields.iter().find(|(k, _, _)| k == key).map(|(_, v, l)| (v.as_str(), *l))
    }
}

const RULE_KEYS: &[&str] = &[
    "id", "cue_category", "cue_keywords", "emotional_state", "tone", "pitch", "rhythm_pace",
    "volume", "priority", "provenance",
];

fn split_records(text: &str) -> Result<Vec<Draft>> {
    let mut drafts = Vec::new();
    let mut current: Option<Draft> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            continue;
        }
        if trimmed.is_empty() {
            drafts.extend(current.take());
            continue;
        }
        let (key, value) = trimmed.split_once(':').ok_or_else(|| Error::KbParse {
            line: lineno,
            message: format!("expected `key: value`, found `{trimmed}`"),
        })?;
        let key = key.trim().to_string();
        if key.is_empty() || !key.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
            return Err(Error::KbParse { line: lineno, message: format!("malformed key `{key}`") });
        }
        let draft = current.get_or_insert_with(|| Draft { start_line: lineno, ..Default::default() });
        if draft.get(&key).is_some() {
            return Err(Error::KbParse { line: lineno, message: format!("repeated key `{key}` in record") });
        }
        draft.fields.push((key, value.trim().to_string(), lineno));
    }
    drafts.extend(current);
    Ok(drafts)
}

fn build_rule(draft: &Draft) -> Result<MappingRule> {
    for (key, _, line) in &draft.fields {
        if !RULE_KEYS.contains(&key.as_str()) {
            return Err(Error::KbParse { line: *line, message: format!("unknown key `{key}`") });
        }
    }
    let required = |key: &str| {
        draft
            .get(key)
            .filter(|(v, _)| !v.is_empty())
            .ok_or_else(|| Error::KbValidation {
                line: draft.start_line,
                message: format!("record is missing `{key}`"),
            })
    };
    let invalid = |line: usize, message: String| Error::KbValidation { line, message };

    let (id, _) = required("id")?;
    let (category, cat_line) = required("cue_category")?;
    let cue_category = category.parse::<CueCategory>().map_err(|m| invalid(cat_line, m))?;

    let (keywords, kw_line) = required("cue_keywords")?;
    let mut cue_keywords = Vec::new();
    for kw in keywords.split(',') {
        let kw = kw.trim();
        if kw.is_empty() {
            return Err(invalid(kw_line, format!("rule `{id}` has an empty keyword")));
        }
        if kw != kw.to_lowercase() {
            return Err(invalid(kw_line, format!("rule `{id}` keyword `{kw}` is not lowercase")));
        }
        cue_keywords.push(kw.to_string());
    }

    let (emotional_state, _) = required("emotional_state")?;

    fn graded<L: Level>(draft: &Draft, key: &str) -> Result<Option<Graded<L>>> {
        match draft.get(key) {
            None | Some(("", _)) => Ok(None),
            Some((v, line)) => v
                .parse::<Graded<L>>()
                .map(Some)
                .map_err(|m| Error::KbValidation { line, message: format!("{key}: {m}") }),
        }
    }
    let vocal_expression = VocalStyle {
        tone: draft.get("tone").map(|(v, _)| v.to_string()).filter(|v| !v.is_empty()),
        pitch: graded(draft, "pitch")?,
        rhythm_pace: graded(draft, "rhythm_pace")?,
        volume: graded(draft, "volume")?,
    };
    if !vocal_expression.has_any() {
        return Err(invalid(draft.start_line, format!("rule `{id}` sets no vocal expression field")));
    }

    let priority = match draft.get("priority") {
        None => 0,
        Some((v, line)) => v
            .parse::<i64>()
            .map_err(|_| invalid(line, format!("priority `{v}` is not an integer")))?,
    };
    let provenance = draft
        .get("provenance")
        .map(|(v, _)| v.to_string())
        .filter(|v| !v.is_empty())
        .unwrap_or_else(|| "unspecified".into());

    Ok(MappingRule {
        id: id.to_string(),
        cue_category,
        cue_keywords,
        emotional_state: emotional_state.to_string(),
        vocal_expression,
        priority,
        provenance,
    })
}

impl KnowledgeBase {
    /// Build from rules, validating ids and computing the checksum.
    pub fn new(version: impl Into<String>, rules: Vec<MappingRule>) -> Result<Self> {
        let mut seen = HashSet::new();
        for rule in &rules {
            if !seen.insert(rule.id.as_str()) {
                return Err(Error::KbValidation { line: 0, message: format!("duplicate rule id `{}`", rule.id) });
            }
            if rule.cue_keywords.is_empty() || rule.cue_keywords.iter().any(|k| k.trim().is_empty()) {
                return Err(Error::KbValidation { line: 0, message: format!("rule `{}` has an empty keyword", rule.id) });
            }
        }
        let mut kb = KnowledgeBase { rules, version: version.into(), checksum: String::new() };
        kb.checksum = sha256_hex(kb.serialize());
        Ok(kb)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut drafts = split_records(text)?.into_iter().peekable();
        let mut version = "unversioned".to_string();
        if let Some(first) = drafts.peek() {
            if let Some((v, line)) = first.get("kb_version") {
                if first.fields.len() != 1 {
                    return Err(Error::KbParse { line, message: "`kb_version` must be alone in the header record".into() });
                }
                version = v.to_string();
                drafts.next();
            }
        }
        let mut rules = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        for draft in drafts {
            let rule = build_rule(&draft)?;
            if !seen.insert(rule.id.clone()) {
                let line = draft.get("id").map(|(_, l)| l).unwrap_or(draft.start_line);
                return Err(Error::KbValidation { line, message: format!("duplicate rule id `{}`", rule.id) });
            }
            rules.push(rule);
        }
        Self::new(version, rules)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::parse(&text)
    }

    /// The knowledge base shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_KB).expect("shipped knowledge base is valid")
    }

    /// Canonical text form; [`KnowledgeBase::parse`] inverts it.
    pub fn serialize(&self) -> String {
        let mut out = format!("kb_version: {}\n", self.version);
        for r in &self.rules {
            out.push('\n');
            out.push_str(&format!("id: {}\n", r.id));
            out.push_str(&format!("cue_category: {}\n", r.cue_category.as_str()));
            out.push_str(&format!("cue_keywords: {}\n", r.cue_keywords.join(", ")));
            out.push_str(&format!("emotional_state: {}\n", r.emotional_state));
            let v = &r.vocal_expression;
            if let Some(t) = &v.tone {
                out.push_str(&format!("tone: {t}\n"));
            }
            if let Some(p) = &v.pitch {
                out.push_str(&format!("pitch: {p}\n"));
            }
            if let Some(p) = &v.rhythm_pace {
                out.push_str(&format!("rhythm_pace: {p}\n"));
            }
            if let Some(p) = &v.volume {
                out.push_str(&format!("volume: {p}\n"));
            }
            out.push_str(&format!("priority: {}\n", r.priority));
            out.push_str(&format!("provenance: {}\n", r.provenance));
        }
        out
    }

    pub fn rule(&self, id: &str) -> Option<&MappingRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.rule(id).is_some()
    }

    /// Rank rules against a single cue string.
    pub fn query(&self, cue: &str) -> Vec<MatchResult> {
        self.match_cue_list(std::iter::once(cue))
    }

    fn match_cue_list<'a>(&self, cues: impl IntoIterator<Item = &'a str>) -> Vec<MatchResult> {
        // (score, priority, rule order, cue order) drives the ordering
        let mut hits: Vec<(u32, i64, usize, usize, MatchResult)> = Vec::new();
        for (cue_pos, cue) in cues.into_iter().enumerate() {
            let lowered = cue.to_lowercase();
            for (rule_pos, rule) in self.rules.iter().enumerate() {
                let matched: Vec<&String> = rule
                    .cue_keywords
                    .iter()
                    .filter(|kw| lowered.contains(kw.to_lowercase().as_str()))
                    .collect();
                if let Some(first) = matched.first() {
                    let score = matched.len() as u32;
                    hits.push((
                        score,
                        rule.priority,
                        rule_pos,
                        cue_pos,
                        MatchResult {
                            rule_id: rule.id.clone(),
                            matched_keyword: (*first).clone(),
                            matched_cue: cue.to_string(),
                            score,
                        },
                    ));
                }
            }
        }
        hits.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then(b.1.cmp(&a.1))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        });
        hits.into_iter().map(|h| h.4).collect()
    }
}

/// Match every cue of a report against the knowledge base.
///
/// One result per (rule, cue) pair with at least one keyword occurring as a
/// case-insensitive substring of the cue, ordered by score, then priority,
/// then rule file order, then cue order in the report.
pub fn match_cues(kb: &KnowledgeBase, report: &VisualCueReport) -> Vec<MatchResult> {
    kb.match_cue_list(report.cues().map(|(_, c)| c))
}
