//! Study metrics: intent/tendency consistency, pleasure categorization,
//! embedding similarity against human descriptions, and preference rates.
//!
//! Rating records are CSV with the header
//! `video_id,participant_id,intent,judged_tendency,condition`; preference
//! choices are CSV with `participant_id,video_id,chosen`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendEndpoint, HttpClient};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn opposite(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Neutral,
    Aligned,
    Contradictory,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Neutral => "neutral",
            Condition::Aligned => "aligned",
            Condition::Contradictory => "contradictory",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "neutral" => Ok(Condition::Neutral),
            "aligned" => Ok(Condition::Aligned),
            "contradictory" => Ok(Condition::Contradictory),
            other => Err(format!("unknown condition `{other}` (neutral, aligned, contradictory)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RatingRecord {
    pub video_id: String,
    pub participant_id: String,
    pub intent: Polarity,
    pub judged_tendency: Polarity,
    pub condition: Condition,
}

/// Reject duplicate (video_id, participant_id, condition) keys.
pub fn validate_records(records: &[RatingRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert((&r.video_id, &r.participant_id, r.condition)) {
            return Err(Error::RatingData(format!(
                "duplicate record for video `{}`, participant `{}`, condition {}",
                r.video_id,
                r.participant_id,
                r.condition.as_str()
            )));
        }
    }
    Ok(())
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| Error::RatingData(e.to_string()))?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        out.push(row.map_err(|e| Error::RatingData(format!("{}: row {}: {e}", path.display(), i + 2)))?);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<RatingRecord>> {
    let records = read_csv(path)?;
    validate_records(&records)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TendencyTable {
    pub condition: Condition,
    pub ppt: f64,
    pub pnt: f64,
    pub npt: f64,
    pub nnt: f64,
    pub consistent: f64,
    pub inconsistent: f64,
    pub positive_intent_n: u64,
    pub negative_intent_n: u64,
}

/// Intent-conditioned tendency proportions for one condition.
///
/// With balanced intent groups, `consistent = (ppt + nnt) / 2`; otherwise
/// the group-size-weighted `(PP + NN) / (PI + NI)`.
pub fn tendency_table(records: &[RatingRecord], condition: Condition) -> Result<TendencyTable> {
    let (mut pp, mut pn, mut np, mut nn) = (0u64, 0u64, 0u64, 0u64);
    for r in records.iter().filter(|r| r.condition == condition) {
        match (r.intent, r.judged_tendency) {
            (Polarity::Positive, Polarity::Positive) => pp += 1,
            (Polarity::Positive, Polarity::Negative) => pn += 1,
            (Polarity::Negative, Polarity::Positive) => np += 1,
            (Polarity::Negative, Polarity::Negative) => nn += 1,
        }
    }
    let (pi, ni) = (pp + pn, np + nn);
    if pi == 0 {
        return Err(Error::MissingIntentGroup("positive"));
    }
    if ni == 0 {
        return Err(Error::MissingIntentGroup("negative"));
    }
    let (ppt, nnt) = (pp as f64 / pi as f64, nn as f64 / ni as f64);
    let consistent = if pi == ni { (ppt + nnt) / 2.0 } else { (pp + nn) as f64 / (pi + ni) as f64 };
    Ok(TendencyTable {
        condition,
        ppt,
        pnt: pn as f64 / pi as f64,
        npt: np as f64 / ni as f64,
        nnt,
        consistent,
        inconsistent: 1.0 - consistent,
        positive_intent_n: pi,
        negative_intent_n: ni,
    })
}

/// Round half up (toward +∞) to `decimals` places, treating values within
/// 1e-9 of a half as exact halves so binary representation error does not
/// flip the tie.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x * scale;
    let floor = scaled.floor();
    let frac = scaled - floor;
    let rounded = if (frac - 0.5).abs() < 1e-9 || frac > 0.5 { floor + 1.0 } else { floor };
    rounded / scale
}

fn pct(x: f64) -> String {
    format!("{:.2}%", round_half_up(x * 100.0, 2))
}

pub fn tendency_text_table(tables: &[TendencyTable]) -> String {
    let header = ["Condition", "PPT", "PNT", "NPT", "NNT", "Consistent", "Inconsistent"];
    let rows: Vec<Vec<String>> = tables
        .iter()
        .map(|t| {
            vec![
                t.condition.as_str().to_string(),
                pct(t.ppt),
                pct(t.pnt),
                pct(t.npt),
                pct(t.nnt),
                pct(t.consistent),
                pct(t.inconsistent),
            ]
        })
        .collect();
    aligned(&header, &rows)
}

fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(header.to_vec()));
    let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-|-"));
    for row in rows {
        let _ = writeln!(out, "{}", line(row.iter().map(String::as_str).collect()));
    }
    out
}

/// Positive above the band, negative below its mirror, `None` (excluded)
/// inside it.
pub fn categorize_pleasure(raw: f64, neutral_band: f64) -> Result<Option<Polarity>> {
    if !(-1.0..=1.0).contains(&raw) {
        return Err(Error::OutOfRange(format!("pleasure rating {raw} outside [-1, 1]")));
    }
    if !(0.0..1.0).contains(&neutral_band) {
        return Err(Error::OutOfRange(format!("neutral band {neutral_band} outside [0, 1)")));
    }
    Ok(if raw > neutral_band {
        Some(Polarity::Positive)
    } else if raw < -neutral_band {
        Some(Polarity::Negative)
    } else {
        None
    })
}

pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

pub const MOCK_EMBED_DIM: usize = 256;

/// Bag of words hashed into 256 buckets, L2-normalized. Tokens are
/// lowercased alphanumeric runs; a token's bucket is the first eight bytes
/// of its SHA-256 read big-endian, modulo 256.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockEmbedder;

impl MockEmbedder {
    pub fn vector(text: &str) -> Vec<f64> {
        let mut v = vec![0.0; MOCK_EMBED_DIM];
        for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let digest = hex::decode(sha256_hex(token.to_lowercase())).expect("hex digest");
            let bucket = u64::from_be_bytes(digest[..8].try_into().unwrap()) % MOCK_EMBED_DIM as u64;
            v[bucket as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| Self::vector(t)).collect())
    }
}

pub struct HttpEmbedder {
    client: HttpClient,
}

impl HttpEmbedder {
    pub fn new(endpoint: &BackendEndpoint) -> Result<Self> {
        Ok(HttpEmbedder { client: HttpClient::new("embed", endpoint)? })
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let resp: EmbedResponse = self.client.post_json("/v1/embed", &EmbedRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::parse_failure(
                format!("{} vectors for {} texts", resp.vectors.len(), texts.len()),
                String::new(),
            ));
        }
        Ok(resp.vectors)
    }
}

pub fn embedder(endpoint: &BackendEndpoint) -> Result<Box<dyn Embedder>> {
    if endpoint.is_mock() {
        Ok(Box::new(MockEmbedder))
    } else {
        Ok(Box::new(HttpEmbedder::new(endpoint)?))
    }
}

/// Cosine similarity clamped to [-1, 1]; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoScores {
    pub kb_llm: f64,
    pub plain_llm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub per_video: BTreeMap<String, VideoScores>,
    /// Means rounded half up to 2 decimals: (kb_llm, plain_llm).
    pub averages: (f64, f64),
    /// Unrounded means.
    pub means: (f64, f64),
}

impl SimilarityReport {
    pub fn from_scores(per_video: BTreeMap<String, VideoScores>) -> Self {
        let n = per_video.len().max(1) as f64;
        let kb = per_video.values().map(|s| s.kb_llm).sum::<f64>() / n;
        let plain = per_video.values().map(|s| s.plain_llm).sum::<f64>() / n;
        SimilarityReport { per_video, averages: (round_half_up(kb, 2), round_half_up(plain, 2)), means: (kb, plain) }
    }

    pub fn text_table(&self) -> String {
        let mut header = vec!["LLM".to_string()];
        header.extend(self.per_video.keys().cloned());
        header.push("Average".into());
        let row = |name: &str, pick: fn(&VideoScores) -> f64, avg: f64| {
            let mut r = vec![name.to_string()];
            r.extend(self.per_video.values().map(|s| format!("{:.2}", round_half_up(pick(s), 2))));
            r.push(format!("{avg:.2}"));
            r
        };
        let rows = vec![
            row("knowledge-infused", |s| s.kb_llm, self.averages.0),
            row("plain", |s| s.plain_llm, self.averages.1),
        ];
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        aligned(&header, &rows)
    }
}

/// Per video, the mean over human texts of cosine(embed(human), embed(model))
/// for each of the two model outputs.
pub fn similarity_report(
    human: &BTreeMap<String, Vec<String>>,
    kb_llm: &BTreeMap<String, String>,
    plain_llm: &BTreeMap<String, String>,
    embedder: &dyn Embedder,
) -> Result<SimilarityReport> {
    let ids: BTreeSet<&String> = human.keys().collect();
    for (name, other) in [("knowledge-infused", kb_llm), ("plain", plain_llm)] {
        let theirs: BTreeSet<&String> = other.keys().collect();
        if theirs != ids {
            let diff: Vec<&&String> = ids.symmetric_difference(&theirs).collect();
            return Err(Error::KeyMismatch(format!("{name} texts and human texts differ on video ids {diff:?}")));
        }
    }
    if ids.is_empty() {
        return Err(Error::InvalidInput("no videos to compare".into()));
    }
    let mut per_video = BTreeMap::new();
    for id in ids {
        let humans = &human[id];
        if humans.is_empty() {
            return Err(Error::InvalidInput(format!("video `{id}` has no human texts")));
        }
        let mut batch = humans.clone();
        batch.push(kb_llm[id].clone());
        batch.push(plain_llm[id].clone());
        let vectors = embedder.embed(&batch)?;
        let (kb_v, plain_v) = (&vectors[humans.len()], &vectors[humans.len() + 1]);
        let n = humans.len() as f64;
        let kb = vectors[..humans.len()].iter().map(|h| cosine(h, kb_v)).sum::<f64>() / n;
        let plain = vectors[..humans.len()].iter().map(|h| cosine(h, plain_v)).sum::<f64>() / n;
        per_video.insert(id.clone(), VideoScores { kb_llm: kb, plain_llm: plain });
    }
    Ok(SimilarityReport::from_scores(per_video))
}

fn text_files(dir: &Path) -> Result<BTreeMap<String, String>> {
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.to_path_buf()));
    }
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            let id = path.file_stem().unwrap().to_string_lossy().into_owned();
            out.insert(id, std::fs::read_to_string(&path)?);
        }
    }
    Ok(out)
}

/// `<video_id>.txt` per video; each non-empty line is one participant's text.
pub fn read_human_dir(dir: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    Ok(text_files(dir)?
        .into_iter()
        .map(|(id, text)| (id, text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()))
        .collect())
}

/// `<video_id>.txt` per video holding one model text.
pub fn read_model_dir(dir: &Path) -> Result<BTreeMap<String, String>> {
    Ok(text_files(dir)?.into_iter().map(|(id, t)| (id, t.trim().to_string())).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Expressive,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub participant_id: String,
    pub video_id: String,
    pub chosen: Choice,
}

pub fn read_choices(path: &Path) -> Result<Vec<ChoiceRecord>> {
    read_csv(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceReport {
    pub expressive: u64,
    /// The denominator: number of choice rows.
    pub total: u64,
    pub proportion: f64,
    /// Exact-fraction percentage rounded half up to 2 decimals, e.g. `74.68%`.
    pub percent: String,
}

impl PreferenceReport {
    pub fn text_table(&self) -> String {
        aligned(
            &["Preferred", "Count", "Total", "Rate"],
            &[vec!["expressive".into(), self.expressive.to_string(), self.total.to_string(), self.percent.clone()]],
        )
    }
}

/// Integer half-up percentage with two decimals of `num / den`.
pub fn percent_string(num: u64, den: u64) -> String {
    let bp = (2 * 10_000 * num as u128 + den as u128) / (2 * den as u128);
    format!("{}.{:02}%", bp / 100, bp % 100)
}

pub fn preference_rate(choices: &[ChoiceRecord]) -> Result<PreferenceReport> {
    if choices.is_empty() {
        return Err(Error::RatingData("no preference choices".into()));
    }
    let total = choices.len() as u64;
    let expressive = choices.iter().filter(|c| c.chosen == Choice::Expressive).count() as u64;
    Ok(PreferenceReport {
        expressive,
        total,
        proportion: expressive as f64 / total as f64,
        percent: percent_string(expressive, total),
    })
}
