//! Rule-based offline backend.
//!
//! Reads the payload block out of the prompt and answers in the stage
//! grammar. The answer is a pure function of `(stage_tag, prompt)`; an
//! unreadable payload yields a bare `NONE`.

use regex::Regex;
use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use super::grammar::{
    render_stage_output, AttributeGroup, ContrastHint, CritiqueRecord, Edit, ExtractedItem, KeptValues,
    StageOutput, StructuredExtractionList, UsefulnessVerdict,
};
use super::payload::{
    AttributeMergeInput, CompareRowInput, ContrastInput, CritiqueInput, ExtractInput, ReviseInput, RowInput,
    SourceLine, ValueEntry, ValueMergeInput,
};
use super::templates::extract_payload;
use super::{CompletionBackend, CompletionRequest, CompletionResult, GatewayError, StageTag};
use crate::critique::{CritiqueKind, Target};
use crate::eval::RowLabel;
use crate::model::{ContrastLevel, Side};
use crate::rules::{self, ValueKind};
use crate::text::{mentions, phrase_key};

pub const BACKEND_ID: &str = "deterministic-v1";

/// Exhaustive subset search cutoff used when resolving conflicts.
const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Default)]
pub struct DeterministicBackend;

impl CompletionBackend for DeterministicBackend {
    fn id(&self) -> String {
        BACKEND_ID.to_string()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        Ok(CompletionResult {
            text: respond(req.stage_tag, &req.prompt),
            latency_ms: 0,
            backend_id: BACKEND_ID.to_string(),
        })
    }
}

/// The backend's answer to one prompt.
pub fn respond(stage: StageTag, prompt: &str) -> String {
    let Some(payload) = extract_payload(prompt) else {
        return "NONE\n".to_string();
    };
    let out = match stage {
        StageTag::Extract => ExtractInput::parse(payload).map(|x| StageOutput::Extract(extract(&x))),
        StageTag::AttributeMerge => {
            AttributeMergeInput::parse(payload).map(|x| StageOutput::AttributeMerge(attribute_merge(&x.attributes)))
        }
        StageTag::ValueMerge => ValueMergeInput::parse(payload).map(|x| StageOutput::ValueMerge(value_merge(&x))),
        StageTag::Contrast => ContrastInput::parse(payload).map(|x| StageOutput::Contrast(contrast(&x))),
        StageTag::Usefulness => RowInput::parse(payload).map(|x| StageOutput::Usefulness(usefulness(&x))),
        StageTag::Autorate => RowInput::parse(payload).map(|x| StageOutput::Rating(rate(&x))),
        StageTag::Critique => CritiqueInput::parse(payload).map(|x| StageOutput::Critique(critique(&x))),
        StageTag::Revise => ReviseInput::parse(payload).map(|x| StageOutput::Revise(revise(&x))),
    };
    match out {
        Some(out) => render_stage_output(&out),
        None => "NONE\n".to_string(),
    }
}

fn patterns() -> &'static [Regex; 2] {
    static P: OnceLock<[Regex; 2]> = OnceLock::new();
    P.get_or_init(|| {
        [
            Regex::new(r"^The (?P<attr>.+?) of (?P<ent>.+?) (?:is|are) (?P<val>.+?)[.!?]$").unwrap(),
            Regex::new(r"^(?P<ent>.+?)['’]s (?P<attr>.+?) (?:is|are) (?P<val>.+?)[.!?]$").unwrap(),
        ]
    })
}

/// One record per sentence that matches a pattern. The entity named in the
/// sentence is not checked against the payload entity; that is the wrong
/// entity critique's job.
pub fn extract(input: &ExtractInput) -> StructuredExtractionList {
    let mut items = Vec::new();
    for sentence in &input.sentences {
        let s = sentence.trim();
        for re in patterns() {
            if let Some(c) = re.captures(s) {
                let attribute = c["attr"].trim().to_string();
                let value = c["val"].trim().to_string();
                if !attribute.is_empty() && !value.is_empty() {
                    items.push(ExtractedItem {
                        attribute,
                        value,
                        evidence: s.to_string(),
                    });
                }
                break;
            }
        }
    }
    StructuredExtractionList { items }
}

/// Shortest member, ties to the lexicographically smallest.
pub fn cluster_center(members: &[String]) -> String {
    members
        .iter()
        .min_by(|a, b| a.chars().count().cmp(&b.chars().count()).then_with(|| a.cmp(b)))
        .cloned()
        .unwrap_or_default()
}

pub fn attribute_merge(attributes: &[String]) -> Vec<AttributeGroup> {
    let mut order: Vec<String> = Vec::new();
    let mut by_key: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for a in attributes {
        let k = rules::attribute_key(a);
        let members = by_key.entry(k.clone()).or_default();
        if members.is_empty() {
            order.push(k);
        }
        if !members.contains(a) {
            members.push(a.clone());
        }
    }
    order
        .into_iter()
        .map(|k| {
            let members = by_key.remove(&k).unwrap_or_default();
            AttributeGroup {
                center: cluster_center(&members),
                members,
            }
        })
        .collect()
}

struct Group {
    members: Vec<(String, u32)>,
}

impl Group {
    fn weight(&self) -> u64 {
        self.members.iter().map(|(_, s)| u64::from(*s)).sum()
    }

    fn center(&self) -> String {
        self.members
            .iter()
            .min_by(|(a, sa), (b, sb)| {
                sb.cmp(sa)
                    .then(a.chars().count().cmp(&b.chars().count()))
                    .then_with(|| a.cmp(b))
            })
            .map(|(v, _)| v.clone())
            .unwrap_or_default()
    }

    fn compatible_with(&self, other: &Group) -> bool {
        self.members
            .iter()
            .all(|(a, _)| other.members.iter().all(|(b, _)| !rules::conflicts(a, b)))
    }
}

fn group_values(entries: &[&ValueEntry]) -> Vec<Group> {
    let mut groups: Vec<Group> = Vec::new();
    for e in entries {
        let key = phrase_key(&e.value);
        let slot = groups.iter().position(|g| {
            g.members.iter().any(|(m, _)| phrase_key(m) == key)
                || (g.members.iter().all(|(m, _)| !rules::conflicts(m, &e.value))
                    && g.members.iter().any(|(m, _)| rules::token_subset(m, &e.value)))
        });
        match slot {
            Some(i) => groups[i].members.push((e.value.clone(), e.support)),
            None => groups.push(Group {
                members: vec![(e.value.clone(), e.support)],
            }),
        }
    }
    groups
}

/// Group restatements together, then drop groups that conflict with a
/// consistent majority holding more than the threshold of the side's
/// support. Without such a majority every group is kept.
pub fn value_merge(input: &ValueMergeInput) -> Vec<KeptValues> {
    let mut kept = Vec::new();
    for side in [Side::A, Side::B] {
        let entries: Vec<&ValueEntry> = input.values.iter().filter(|v| v.side == side).collect();
        let groups = group_values(&entries);
        let weights: Vec<u64> = groups.iter().map(Group::weight).collect();
        let total: u64 = weights.iter().sum();
        let (best, _) = rules::max_compatible_subset(&weights, |i, j| groups[i].compatible_with(&groups[j]), EXACT_LIMIT);
        let best_weight: u64 = best.iter().map(|&i| weights[i]).sum();
        let majority = total > 0 && (best_weight as f64) / (total as f64) > input.threshold;
        for (i, g) in groups.iter().enumerate() {
            if majority && !best.contains(&i) {
                continue;
            }
            kept.push(KeptValues {
                side,
                center: g.center(),
                members: g.members.iter().map(|(v, _)| v.clone()).collect(),
            });
        }
    }
    kept
}

pub fn contrast_level(values: &[ValueEntry]) -> ContrastLevel {
    let set = |side: Side| -> HashSet<String> {
        values
            .iter()
            .filter(|v| v.side == side)
            .map(|v| phrase_key(&v.value))
            .collect()
    };
    let (a, b) = (set(Side::A), set(Side::B));
    if a.is_empty() || b.is_empty() {
        ContrastLevel::Low
    } else if a == b {
        ContrastLevel::None
    } else {
        ContrastLevel::High
    }
}

pub fn contrast(input: &ContrastInput) -> Vec<ContrastHint> {
    input
        .rows
        .iter()
        .map(|r| ContrastHint {
            attribute: r.attribute.clone(),
            level: contrast_level(&r.values),
            hint: r.values.iter().map(|v| f64::from(v.support)).sum(),
        })
        .collect()
}

pub fn usefulness(row: &RowInput) -> UsefulnessVerdict {
    if rules::is_unhelpful_attribute(&row.attribute) {
        UsefulnessVerdict {
            useful: false,
            reason: format!("{:?} does not help tell the options apart", row.attribute),
        }
    } else {
        UsefulnessVerdict {
            useful: true,
            reason: String::new(),
        }
    }
}

fn orthogonal<'a>(values: impl Iterator<Item = (Side, &'a str)> + Clone) -> bool {
    let kinds = |side: Side| -> HashSet<ValueKind> {
        values
            .clone()
            .filter(|(s, _)| *s == side)
            .map(|(_, v)| rules::value_kind(v))
            .collect()
    };
    let (a, b) = (kinds(Side::A), kinds(Side::B));
    !a.is_empty() && !b.is_empty() && a.is_disjoint(&b)
}

/// Mock row rater: the checks run in label order and the first hit wins.
pub fn rate(row: &RowInput) -> RowLabel {
    let other_names = |side: Side| row.names(side.other());
    let bad_extraction = rules::is_unhelpful_attribute(&row.attribute)
        || row
            .values
            .iter()
            .any(|v| rules::is_unhelpful_value(&v.value) || rules::insufficient_context(&v.value))
        || row
            .evidence
            .iter()
            .any(|(side, text)| other_names(*side).iter().any(|n| mentions(text, n)));
    if bad_extraction {
        return RowLabel::NoBadExtraction;
    }
    for side in [Side::A, Side::B] {
        let vals: Vec<&str> = row.values.iter().filter(|v| v.side == side).map(|v| v.value.as_str()).collect();
        if pairs(&vals).any(|(a, b)| rules::conflicts(a, b)) {
            return RowLabel::NoInconsistentValues;
        }
    }
    for side in [Side::A, Side::B] {
        let vals: Vec<&str> = row.values.iter().filter(|v| v.side == side).map(|v| v.value.as_str()).collect();
        if pairs(&vals).any(|(a, b)| rules::under_merged(a, b)) {
            return RowLabel::NoUndermergedValues;
        }
    }
    if orthogonal(row.values.iter().map(|v| (v.side, v.value.as_str()))) {
        return RowLabel::NoOrthogonalValues;
    }
    if row.contrast == ContrastLevel::None && row.importance < 1.0 {
        return RowLabel::Ok;
    }
    RowLabel::Yes
}

fn pairs<'a, T: Copy>(xs: &'a [T]) -> impl Iterator<Item = (T, T)> + 'a {
    xs.iter()
        .enumerate()
        .flat_map(move |(i, a)| xs[i + 1..].iter().map(move |b| (*a, *b)))
}

fn crit(kind: CritiqueKind, target: Target, note: impl Into<String>) -> CritiqueRecord {
    CritiqueRecord {
        kind,
        target,
        note: note.into(),
    }
}

pub fn critique(input: &CritiqueInput) -> Vec<CritiqueRecord> {
    let mut out = Vec::new();
    match input {
        CritiqueInput::Extract {
            others, extractions, ..
        } => {
            for (i, e) in extractions {
                if rules::insufficient_context(&e.value) {
                    out.push(crit(
                        CritiqueKind::InsufficientContext,
                        Target::Extraction(*i),
                        format!("{:?} says little about {:?} on its own", e.value, e.attribute),
                    ));
                }
            }
            for (i, e) in extractions {
                if let Some(name) = others.iter().find(|n| mentions(&e.evidence, n)) {
                    out.push(crit(
                        CritiqueKind::WrongEntity,
                        Target::Extraction(*i),
                        format!("evidence is about {name}"),
                    ));
                }
            }
            for (i, e) in extractions {
                if rules::is_unhelpful_attribute(&e.attribute) {
                    out.push(crit(
                        CritiqueKind::UnhelpfulAttributeExtract,
                        Target::Extraction(*i),
                        format!("{:?} is not a useful attribute", e.attribute),
                    ));
                }
            }
        }
        CritiqueInput::Compare { rows } => {
            for r in rows {
                if orthogonal(r.groups.iter().map(|g| (g.side, g.value.as_str()))) {
                    out.push(crit(
                        CritiqueKind::OrthogonalValues,
                        Target::Row(r.index),
                        "values describe different aspects on each side",
                    ));
                }
            }
            for r in rows {
                for side in [Side::A, Side::B] {
                    let vals: Vec<&str> = r.groups_of(side).map(|g| g.value.as_str()).collect();
                    if pairs(&vals).any(|(a, b)| rules::conflicts(a, b)) {
                        out.push(crit(
                            CritiqueKind::InconsistentValues,
                            Target::Side(r.index, side),
                            "conflicting values for one entity",
                        ));
                    }
                }
            }
            for r in rows {
                if rules::is_unhelpful_attribute(&r.attribute) {
                    out.push(crit(
                        CritiqueKind::UnhelpfulAttributeOrValue,
                        Target::Row(r.index),
                        format!("{:?} is not a useful attribute", r.attribute),
                    ));
                    continue;
                }
                for g in &r.groups {
                    if rules::is_unhelpful_value(&g.value) {
                        out.push(crit(
                            CritiqueKind::UnhelpfulAttributeOrValue,
                            Target::Group(r.index, g.side, g.index),
                            format!("{:?} carries no information", g.value),
                        ));
                    }
                }
            }
            for (pos, r) in rows.iter().enumerate() {
                if let Some(prev) = duplicate_of(rows, pos) {
                    out.push(crit(
                        CritiqueKind::UnderOrOverMerged,
                        Target::Row(r.index),
                        format!("same attribute as R{}", prev.index),
                    ));
                } else if member_keys(r).len() > 1 {
                    out.push(crit(
                        CritiqueKind::UnderOrOverMerged,
                        Target::Row(r.index),
                        "unrelated attributes merged into one row",
                    ));
                }
                for side in [Side::A, Side::B] {
                    let groups: Vec<_> = r.groups_of(side).collect();
                    for (k, g) in groups.iter().enumerate() {
                        if groups[..k].iter().any(|h| rules::under_merged(&h.value, &g.value)) {
                            out.push(crit(
                                CritiqueKind::UnderOrOverMerged,
                                Target::Group(r.index, side, g.index),
                                "restates another value group",
                            ));
                        }
                    }
                }
            }
            for r in rows {
                for g in &r.groups {
                    if rules::is_long_complex(&g.value) {
                        out.push(crit(
                            CritiqueKind::LongComplexClaim,
                            Target::Group(r.index, g.side, g.index),
                            "several claims in one value",
                        ));
                    }
                }
            }
        }
    }
    out
}

fn member_keys(r: &CompareRowInput) -> Vec<String> {
    let mut keys: Vec<String> = Vec::new();
    for m in std::iter::once(&r.attribute).chain(&r.members) {
        let k = rules::attribute_key(m);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys
}

fn duplicate_of(rows: &[CompareRowInput], pos: usize) -> Option<&CompareRowInput> {
    let key = rules::attribute_key(&rows[pos].attribute);
    rows[..pos].iter().find(|r| rules::attribute_key(&r.attribute) == key)
}

fn attribute_words(attribute: &str) -> Vec<String> {
    phrase_key(attribute)
        .split(' ')
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Source sentences that talk about every word of the attribute.
fn about<'a>(attribute: &str, sources: &'a [SourceLine]) -> impl Iterator<Item = &'a SourceLine> + 'a {
    let words = attribute_words(attribute);
    sources.iter().filter(move |s| {
        let k = phrase_key(&s.text);
        let have: HashSet<&str> = k.split(' ').collect();
        words.iter().all(|w| have.contains(w.as_str()))
    })
}

/// Byte range of `needle` in `hay`, ASCII case-insensitive.
fn find_ci(hay: &str, needle: &str) -> Option<usize> {
    hay.find(needle)
        .or_else(|| hay.to_ascii_lowercase().find(&needle.to_ascii_lowercase()))
}

fn trim_claim(s: &str) -> &str {
    s.trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '.' | '!' | '?'))
        .trim()
}

/// A longer value for a bare qualifier: the rest of a source sentence
/// starting at the qualifier, e.g. "good" → "good view from the rooftop".
fn recontextualize(attribute: &str, value: &str, evidence: &str, sources: &[SourceLine]) -> Option<(String, String)> {
    about(attribute, sources).filter(|s| s.text != evidence).find_map(|s| {
        let at = find_ci(&s.text, value)?;
        let v = trim_claim(&s.text[at..]);
        (crate::text::token_count(v) >= rules::MIN_CONTEXT_TOKENS).then(|| (v.to_string(), s.text.clone()))
    })
}

/// `<amount> <unit>` as written in a source sentence.
fn quantity_span(text: &str, unit: &str) -> Option<String> {
    let tokens: Vec<(usize, &str)> = text
        .split_whitespace()
        .map(|t| (t.as_ptr() as usize - text.as_ptr() as usize, t))
        .collect();
    for (k, (start, tok)) in tokens.iter().enumerate() {
        if !rules::has_digit(tok) {
            continue;
        }
        let q = rules::quantity(&text[*start..])?;
        if q.unit != unit {
            continue;
        }
        let own_unit = tok.starts_with('$') || tok.ends_with('%') || tok.chars().last().is_some_and(char::is_alphabetic);
        let end = if own_unit {
            start + tok.len()
        } else {
            let (s, t) = tokens.get(k + 1)?;
            s + t.len()
        };
        return Some(trim_claim(text[*start..end].trim_end_matches([',', ';', ':'])).to_string());
    }
    None
}

fn numeric_unit<'a>(values: impl Iterator<Item = &'a str>) -> Option<String> {
    values.filter_map(rules::quantity).map(|q| q.unit).find(|u| !u.is_empty())
}

pub fn revise(input: &ReviseInput) -> Vec<Edit> {
    let c = &input.critique;
    match (&input.base, c.kind) {
        (CritiqueInput::Extract { extractions, .. }, kind) => {
            let Target::Extraction(i) = c.target else {
                return Vec::new();
            };
            let Some((_, e)) = extractions.iter().find(|(j, _)| *j == i) else {
                return Vec::new();
            };
            match kind {
                CritiqueKind::InsufficientContext => {
                    match recontextualize(&e.attribute, &e.value, &e.evidence, &input.sources) {
                        Some((value, evidence)) => vec![Edit::Set {
                            target: c.target,
                            value,
                            evidence,
                        }],
                        None => vec![Edit::Delete(c.target)],
                    }
                }
                CritiqueKind::UnhelpfulAttributeExtract => {
                    let key = rules::attribute_key(&e.attribute);
                    extractions
                        .iter()
                        .filter(|(_, x)| rules::attribute_key(&x.attribute) == key)
                        .map(|(j, _)| Edit::Delete(Target::Extraction(*j)))
                        .collect()
                }
                _ => vec![Edit::Delete(c.target)],
            }
        }
        (CritiqueInput::Compare { rows }, kind) => {
            let Some(row_idx) = c.target.row() else {
                return Vec::new();
            };
            let Some(pos) = rows.iter().position(|r| r.index == row_idx) else {
                return Vec::new();
            };
            let row = &rows[pos];
            match kind {
                CritiqueKind::OrthogonalValues => revise_orthogonal(row, &input.sources),
                CritiqueKind::InconsistentValues => {
                    let Target::Side(_, side) = c.target else {
                        return Vec::new();
                    };
                    let groups: Vec<_> = row.groups_of(side).collect();
                    let weights: Vec<u64> = groups.iter().map(|g| u64::from(g.support)).collect();
                    let compatible = |i: usize, j: usize| !rules::conflicts(&groups[i].value, &groups[j].value);
                    let (best, _) = rules::max_compatible_subset(&weights, compatible, EXACT_LIMIT);
                    let best_weight: u64 = best.iter().map(|&k| weights[k]).sum();
                    // An excluded group that anchors an equally heavy subset
                    // means there is no majority to keep.
                    let tied = (0..groups.len()).filter(|k| !best.contains(k)).any(|k| {
                        let w: Vec<u64> = (0..groups.len())
                            .map(|j| if j == k || compatible(j, k) { weights[j] } else { 0 })
                            .collect();
                        let (alt, _) = rules::max_compatible_subset(&w, compatible, EXACT_LIMIT);
                        alt.iter().map(|&j| w[j]).sum::<u64>() >= best_weight
                    });
                    if tied {
                        return Vec::new();
                    }
                    groups
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| !best.contains(k))
                        .map(|(_, g)| Edit::Delete(Target::Group(row.index, side, g.index)))
                        .collect()
                }
                CritiqueKind::UnderOrOverMerged => match c.target {
                    Target::Row(_) => {
                        if let Some(prev) = duplicate_of(rows, pos) {
                            vec![Edit::Merge {
                                into: Target::Row(prev.index),
                                from: c.target,
                            }]
                        } else {
                            regroup(row)
                        }
                    }
                    Target::Group(_, side, g) => {
                        let groups: Vec<_> = row.groups_of(side).collect();
                        let Some(k) = groups.iter().position(|x| x.index == g) else {
                            return Vec::new();
                        };
                        match groups[..k].iter().find(|h| rules::under_merged(&h.value, &groups[k].value)) {
                            Some(h) => vec![Edit::Merge {
                                into: Target::Group(row.index, side, h.index),
                                from: c.target,
                            }],
                            None => Vec::new(),
                        }
                    }
                    _ => Vec::new(),
                },
                CritiqueKind::LongComplexClaim => {
                    let Target::Group(_, side, g) = c.target else {
                        return Vec::new();
                    };
                    let Some(group) = row.groups_of(side).find(|x| x.index == g) else {
                        return Vec::new();
                    };
                    match rules::split_claim(&group.value) {
                        Some(parts) => vec![Edit::Split {
                            target: c.target,
                            parts,
                        }],
                        None => vec![Edit::Delete(c.target)],
                    }
                }
                _ => vec![Edit::Delete(c.target)],
            }
        }
    }
}

/// Replace the descriptive side with a quantity in the unit the other side
/// uses, found in that entity's sources; without one the row goes.
fn revise_orthogonal(row: &CompareRowInput, sources: &[SourceLine]) -> Vec<Edit> {
    for side in [Side::A, Side::B] {
        let mine: Vec<&str> = row.groups_of(side).map(|g| g.value.as_str()).collect();
        if mine.iter().any(|v| rules::value_kind(v) == ValueKind::Numeric) {
            continue;
        }
        let Some(unit) = numeric_unit(row.groups_of(side.other()).map(|g| g.value.as_str())) else {
            continue;
        };
        let own: Vec<SourceLine> = sources.iter().filter(|s| s.side == Some(side)).cloned().collect();
        for s in about(&row.attribute, &own) {
            if let Some(value) = quantity_span(&s.text, &unit) {
                return vec![Edit::Set {
                    target: Target::Side(row.index, side),
                    value,
                    evidence: s.text.clone(),
                }];
            }
        }
    }
    vec![Edit::Delete(Target::Row(row.index))]
}

fn regroup(row: &CompareRowInput) -> Vec<Edit> {
    let mut parts: Vec<(String, Vec<String>)> = Vec::new();
    for m in &row.members {
        let k = rules::attribute_key(m);
        match parts.iter_mut().find(|(key, _)| *key == k) {
            Some((_, ms)) => ms.push(m.clone()),
            None => parts.push((k, vec![m.clone()])),
        }
    }
    if parts.len() < 2 {
        return Vec::new();
    }
    let keep = rules::attribute_key(&row.attribute);
    parts
        .into_iter()
        .filter(|(k, _)| *k != keep)
        .map(|(_, members)| Edit::Regroup {
            target: Target::Row(row.index),
            members,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::payload::GroupInput;

    fn ve(side: Side, value: &str, support: u32) -> ValueEntry {
        ValueEntry {
            side,
            value: value.into(),
            support,
        }
    }

    #[test]
    fn pattern_extraction() {
        let x = ExtractInput {
            entity: "PhoneX".into(),
            sentences: vec![
                "The battery life of PhoneX is 10 hours.".into(),
                "Welcome to our site.".into(),
                "PhoneX's screen is a bright OLED panel.".into(),
            ],
        };
        let items = extract(&x).items;
        assert_eq!(items.len(), 2);
        assert_eq!(
            items[0],
            ExtractedItem {
                attribute: "battery life".into(),
                value: "10 hours".into(),
                evidence: "The battery life of PhoneX is 10 hours.".into(),
            }
        );
        assert_eq!(items[1].attribute, "screen");
    }

    #[test]
    fn plural_attributes_merge_on_the_shorter() {
        let groups = attribute_merge(&["room".into(), "rooms".into(), "price".into()]);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].center, "room");
        assert_eq!(groups[0].members, vec!["room", "rooms"]);
        let g = attribute_merge(&["amenities".into(), "facilities".into()]);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn majority_value_survives() {
        let input = ValueMergeInput {
            attribute: "view".into(),
            threshold: 0.5,
            values: vec![ve(Side::A, "good view", 1), ve(Side::A, "bad view", 9)],
        };
        let kept = value_merge(&input);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].center, "bad view");
        let tie = ValueMergeInput {
            values: vec![ve(Side::A, "good view", 5), ve(Side::A, "bad view", 5)],
            ..input.clone()
        };
        assert_eq!(value_merge(&tie).len(), 2);
        let calm = ValueMergeInput {
            values: vec![ve(Side::B, "rooftop pool", 1), ve(Side::B, "free parking", 3)],
            ..input
        };
        assert_eq!(value_merge(&calm).len(), 2);
    }

    #[test]
    fn restatements_share_a_group() {
        let input = ValueMergeInput {
            attribute: "volume".into(),
            threshold: 0.5,
            values: vec![
                ve(Side::A, "46 liters", 2),
                ve(Side::A, "46 liters of space", 1),
                ve(Side::A, "45 liters", 1),
            ],
        };
        let kept = value_merge(&input);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].center, "46 liters");
        assert_eq!(kept[0].members.len(), 2);
    }

    #[test]
    fn contrast_levels() {
        assert_eq!(
            contrast_level(&[ve(Side::A, "10 hours", 1), ve(Side::B, "6 hours", 1)]),
            ContrastLevel::High
        );
        assert_eq!(
            contrast_level(&[ve(Side::A, "10 hours", 1), ve(Side::B, "10 Hours", 1)]),
            ContrastLevel::None
        );
        assert_eq!(contrast_level(&[ve(Side::A, "10 hours", 1)]), ContrastLevel::Low);
    }

    fn row(attribute: &str, values: Vec<ValueEntry>) -> RowInput {
        RowInput {
            names_a: vec!["CarA".into()],
            names_b: vec!["CarB".into()],
            attribute: attribute.into(),
            contrast: ContrastLevel::High,
            importance: 2.0,
            values,
            evidence: vec![],
        }
    }

    #[test]
    fn rater_labels() {
        assert_eq!(rate(&row("transmission", vec![ve(Side::A, "bright", 1)])), RowLabel::NoBadExtraction);
        assert_eq!(
            rate(&row("monthly fee", vec![ve(Side::A, "$10", 1), ve(Side::A, "$5000", 1)])),
            RowLabel::NoInconsistentValues
        );
        assert_eq!(
            rate(&row("range", vec![ve(Side::A, "300 miles", 2), ve(Side::B, "250 miles", 1)])),
            RowLabel::Yes
        );
        assert_eq!(
            rate(&row("fuel tank", vec![ve(Side::A, "an iconic teardrop shape", 1), ve(Side::B, "3.3 gallons", 1)])),
            RowLabel::NoOrthogonalValues
        );
    }

    #[test]
    fn orthogonal_revision_finds_a_quantity() {
        let r = CompareRowInput {
            index: 0,
            attribute: "fuel tank".into(),
            level: ContrastLevel::High,
            members: vec!["fuel tank".into()],
            groups: vec![
                GroupInput {
                    side: Side::A,
                    index: 0,
                    value: "an iconic teardrop shape".into(),
                    support: 1,
                },
                GroupInput {
                    side: Side::B,
                    index: 0,
                    value: "3.3 gallons".into(),
                    support: 1,
                },
            ],
        };
        let sources = vec![SourceLine {
            side: Some(Side::A),
            url: "u".into(),
            text: "BikeA's fuel tank holds 4.2 gallons of fuel.".into(),
        }];
        assert_eq!(
            revise_orthogonal(&r, &sources),
            vec![Edit::Set {
                target: Target::Side(0, Side::A),
                value: "4.2 gallons".into(),
                evidence: "BikeA's fuel tank holds 4.2 gallons of fuel.".into(),
            }]
        );
        assert_eq!(revise_orthogonal(&r, &[]), vec![Edit::Delete(Target::Row(0))]);
    }

    #[test]
    fn bare_qualifier_gets_context() {
        let sources = vec![SourceLine {
            side: None,
            url: "u".into(),
            text: "HotelA has a good view from the rooftop, limited view from most of the rooms.".into(),
        }];
        assert_eq!(
            recontextualize("views", "good", "The views of HotelA are good.", &sources),
            Some((
                "good view from the rooftop, limited view from most of the rooms".into(),
                sources[0].text.clone()
            ))
        );
    }
}
