//! Shared domain types and the summary validator.
//!
//! Every type is a plain value object with a canonical snake_case JSON form.
//! [`validate_summary`] mechanically checks the attribution, uniqueness and
//! ordering invariants of a finished summary against its corpus.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use crate::text::{member_key, nfc};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub display_name: String,
}

impl Entity {
    pub fn new(id: impl Into<String>, display_name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            display_name: display_name.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub url: String,
    pub entity_id: String,
    /// 1 is the top search result.
    pub search_rank: u32,
    pub raw_text: String,
    #[serde(default)]
    pub essential_sentences: Vec<Sentence>,
}

/// A sentence (or fragment of one) lifted verbatim from a document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub doc_url: String,
    /// Byte offset of `text` inside the document's `raw_text`.
    pub char_offset: usize,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Extraction {
    pub attribute: String,
    pub value: String,
    pub evidence: String,
    pub source_url: String,
    pub entity_id: String,
    pub tile_id: String,
}

/// A value group kept by value merging. `members` index into the owning
/// side's extraction list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueGroup {
    pub center: String,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeCluster {
    pub canonical_attribute: String,
    pub member_attributes: Vec<String>,
    pub values_a: Vec<Extraction>,
    pub values_b: Vec<Extraction>,
    /// Empty until value merging has run.
    #[serde(default)]
    pub groups_a: Vec<ValueGroup>,
    #[serde(default)]
    pub groups_b: Vec<ValueGroup>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::A => "A",
            Side::B => "B",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s {
            "A" => Some(Side::A),
            "B" => Some(Side::B),
            _ => None,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

impl AttributeCluster {
    pub fn values(&self, side: Side) -> &Vec<Extraction> {
        match side {
            Side::A => &self.values_a,
            Side::B => &self.values_b,
        }
    }

    pub fn values_mut(&mut self, side: Side) -> &mut Vec<Extraction> {
        match side {
            Side::A => &mut self.values_a,
            Side::B => &mut self.values_b,
        }
    }

    pub fn groups(&self, side: Side) -> &Vec<ValueGroup> {
        match side {
            Side::A => &self.groups_a,
            Side::B => &self.groups_b,
        }
    }

    pub fn groups_mut(&mut self, side: Side) -> &mut Vec<ValueGroup> {
        match side {
            Side::A => &mut self.groups_a,
            Side::B => &mut self.groups_b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContrastLevel {
    High,
    Low,
    None,
}

impl ContrastLevel {
    pub fn score(self) -> f64 {
        match self {
            ContrastLevel::High => 1.0,
            ContrastLevel::Low => 0.5,
            ContrastLevel::None => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContrastLevel::High => "HIGH",
            ContrastLevel::Low => "LOW",
            ContrastLevel::None => "NONE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "HIGH" => Some(ContrastLevel::High),
            "LOW" => Some(ContrastLevel::Low),
            "NONE" => Some(ContrastLevel::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Evidence {
    pub url: String,
    pub text: String,
}

/// One shown value in a summary cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellValue {
    pub value: String,
    pub source_urls: Vec<String>,
    pub support_count: u32,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub attribute: String,
    #[serde(default)]
    pub member_attributes: Vec<String>,
    pub cell_a: Vec<CellValue>,
    pub cell_b: Vec<CellValue>,
    pub contrast_level: ContrastLevel,
    pub importance: f64,
    pub rank_score: f64,
}

impl ComparisonRow {
    pub fn cell(&self, side: Side) -> &Vec<CellValue> {
        match side {
            Side::A => &self.cell_a,
            Side::B => &self.cell_b,
        }
    }

    pub fn support(&self) -> u32 {
        self.cell_a
            .iter()
            .chain(&self.cell_b)
            .map(|v| v.support_count)
            .sum()
    }
}

/// Final row order: rank_score desc, support desc, attribute asc.
pub fn row_order(a: &ComparisonRow, b: &ComparisonRow) -> Ordering {
    b.rank_score
        .total_cmp(&a.rank_score)
        .then_with(|| b.support().cmp(&a.support()))
        .then_with(|| a.attribute.cmp(&b.attribute))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub backend_id: String,
    pub config_hash: String,
    /// Wall-clock time; omitted from persisted artifacts so reruns compare
    /// byte-for-byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
    pub trace_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub entity_a: Entity,
    pub entity_b: Entity,
    pub rows: Vec<ComparisonRow>,
    pub run_metadata: RunMetadata,
}

impl ComparisonSummary {
    /// Copy with timing stripped.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.run_metadata.duration_ms = None;
        out
    }

    pub fn entity(&self, side: Side) -> &Entity {
        match side {
            Side::A => &self.entity_a,
            Side::B => &self.entity_b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyEntityName,
    EmptyAttribute,
    EmptyRow,
    EmptyValue,
    MissingSource,
    ZeroSupport,
    UnknownSource,
    SourceOfOtherEntity,
    Extractiveness,
    ValueNotInEvidence,
    DuplicateAttribute,
    InvalidScore,
    RankOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub row: Option<usize>,
    pub detail: String,
}

impl Violation {
    fn new(kind: ViolationKind, row: Option<usize>, detail: impl Into<String>) -> Self {
        Self {
            kind,
            row,
            detail: detail.into(),
        }
    }
}

/// Check every summary invariant against the run corpus. An empty result
/// means the summary is attributable, non-redundant and correctly ordered.
pub fn validate_summary(summary: &ComparisonSummary, corpus: &[SourceDocument]) -> Vec<Violation> {
    let mut out = Vec::new();
    for e in [&summary.entity_a, &summary.entity_b] {
        if e.display_name.trim().is_empty() {
            out.push(Violation::new(
                ViolationKind::EmptyEntityName,
                None,
                format!("entity {:?} has an empty display name", e.id),
            ));
        }
    }

    let docs: HashMap<(&str, &str), String> = corpus
        .iter()
        .map(|d| ((d.url.as_str(), d.entity_id.as_str()), nfc(&d.raw_text)))
        .collect();
    let urls: HashSet<&str> = corpus.iter().map(|d| d.url.as_str()).collect();

    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, row) in summary.rows.iter().enumerate() {
        let row_idx = Some(i);
        if row.attribute.trim().is_empty() {
            out.push(Violation::new(ViolationKind::EmptyAttribute, row_idx, "empty attribute"));
        }
        if let Some(prev) = seen.insert(member_key(&row.attribute), i) {
            out.push(Violation::new(
                ViolationKind::DuplicateAttribute,
                row_idx,
                format!("attribute {:?} already shown in row {prev}", row.attribute),
            ));
        }
        if row.cell_a.is_empty() && row.cell_b.is_empty() {
            out.push(Violation::new(ViolationKind::EmptyRow, row_idx, "both cells empty"));
        }
        if !(row.importance.is_finite() && row.importance >= 0.0)
            || !(row.rank_score.is_finite() && row.rank_score >= 0.0)
        {
            out.push(Violation::new(
                ViolationKind::InvalidScore,
                row_idx,
                format!("importance {} rank_score {}", row.importance, row.rank_score),
            ));
        }

        for side in [Side::A, Side::B] {
            let entity_id = summary.entity(side).id.as_str();
            for cv in row.cell(side) {
                check_cell_value(cv, entity_id, i, &docs, &urls, &mut out);
            }
        }
    }

    for (i, pair) in summary.rows.windows(2).enumerate() {
        if row_order(&pair[0], &pair[1]) == Ordering::Greater {
            out.push(Violation::new(
                ViolationKind::RankOrder,
                Some(i + 1),
                format!("{:?} ranked below {:?}", pair[1].attribute, pair[0].attribute),
            ));
        }
    }
    out
}

fn check_cell_value(
    cv: &CellValue,
    entity_id: &str,
    row: usize,
    docs: &HashMap<(&str, &str), String>,
    urls: &HashSet<&str>,
    out: &mut Vec<Violation>,
) {
    let row_idx = Some(row);
    if cv.value.trim().is_empty() {
        out.push(Violation::new(ViolationKind::EmptyValue, row_idx, "empty value"));
    }
    if cv.support_count == 0 {
        out.push(Violation::new(
            ViolationKind::ZeroSupport,
            row_idx,
            format!("value {:?} has zero support", cv.value),
        ));
    }
    if cv.source_urls.is_empty() || cv.evidence.is_empty() {
        out.push(Violation::new(
            ViolationKind::MissingSource,
            row_idx,
            format!("value {:?} has no source", cv.value),
        ));
    }
    for url in &cv.source_urls {
        if !cv.evidence.iter().any(|e| &e.url == url) {
            out.push(Violation::new(
                ViolationKind::MissingSource,
                row_idx,
                format!("source {url} of {:?} has no evidence", cv.value),
            ));
        }
    }
    let value = nfc(&cv.value);
    let mut value_in_some_evidence = cv.evidence.is_empty();
    for ev in &cv.evidence {
        let text = nfc(&ev.text);
        if text.contains(&value) {
            value_in_some_evidence = true;
        }
        match docs.get(&(ev.url.as_str(), entity_id)) {
            Some(raw) => {
                if !raw.contains(&text) {
                    out.push(Violation::new(
                        ViolationKind::Extractiveness,
                        row_idx,
                        format!("evidence {:?} not found in {}", ev.text, ev.url),
                    ));
                }
            }
            None if urls.contains(ev.url.as_str()) => out.push(Violation::new(
                ViolationKind::SourceOfOtherEntity,
                row_idx,
                format!("{} belongs to another entity", ev.url),
            )),
            None => out.push(Violation::new(
                ViolationKind::UnknownSource,
                row_idx,
                format!("{} not in corpus", ev.url),
            )),
        }
        if !cv.source_urls.contains(&ev.url) {
            out.push(Violation::new(
                ViolationKind::MissingSource,
                row_idx,
                format!("evidence url {} not listed in source_urls", ev.url),
            ));
        }
    }
    if !value_in_some_evidence {
        out.push(Violation::new(
            ViolationKind::ValueNotInEvidence,
            row_idx,
            format!("value {:?} is not part of its evidence", cv.value),
        ));
    }
}
