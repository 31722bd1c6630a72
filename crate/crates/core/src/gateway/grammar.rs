//! Line-oriented output grammar for every stage.
//!
//! Records are single lines of TAB-separated fields. Inside a field, `\`,
//! TAB, LF and CR are written as `\\`, `\t`, `\n` and `\r`. Lines that are
//! not records of the expected shape are treated as prose and skipped, so a
//! model may wrap its answer in explanation. A stage that legitimately has
//! nothing to report answers with a line reading `NONE`.
//!
//! | stage           | record                                              |
//! |-----------------|-----------------------------------------------------|
//! | EXTRACT         | `ATTR<TAB>VALUE<TAB>EVIDENCE`                        |
//! | ATTRIBUTE_MERGE | `GROUP<TAB>center<TAB>member<TAB>member...`          |
//! | VALUE_MERGE     | `KEEP<TAB>A|B<TAB>center<TAB>member...`              |
//! | CONTRAST        | `CONTRAST<TAB>attribute<TAB>HIGH|LOW|NONE<TAB>hint`  |
//! | USEFULNESS      | `RATING: YES|NO` (text after the label is a reason)  |
//! | AUTORATE        | `RATING: <row label>`                                |
//! | CRITIQUE        | `CRITIQUE<TAB>KIND<TAB>target<TAB>note`              |
//! | REVISE          | edit lines, see [`Edit`]                             |
//!
//! Targets are `E<i>` (extraction), `R<i>` (row), `R<i>.A` (one side of a
//! row) and `R<i>.A.<g>` (one value group of a side).
//!
//! Training exports use one more grammar for a finished row:
//! `ROW<TAB>attribute<TAB>LEVEL` followed by `VALUE<TAB>A|B<TAB>value`
//! lines, or `DROP<TAB>attribute` for a row that was filtered out.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use super::StageTag;
use crate::critique::{CritiqueKind, Target};
use crate::eval::RowLabel;
use crate::model::{ContrastLevel, Side};

pub fn escape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Join escaped fields into one record line.
pub fn record<S: AsRef<str>>(fields: &[S]) -> String {
    fields
        .iter()
        .map(|f| escape(f.as_ref()))
        .collect::<Vec<_>>()
        .join("\t")
}

/// Split a record line into unescaped fields.
pub fn fields(line: &str) -> Vec<String> {
    line.trim_end_matches('\r').split('\t').map(unescape).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedItem {
    pub attribute: String,
    pub value: String,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StructuredExtractionList {
    pub items: Vec<ExtractedItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeGroup {
    pub center: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeptValues {
    pub side: Side,
    pub center: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastHint {
    pub attribute: String,
    pub level: ContrastLevel,
    pub hint: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueRecord {
    pub kind: CritiqueKind,
    pub target: Target,
    pub note: String,
}

/// One revision operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Edit {
    /// `DELETE<TAB>target`
    Delete(Target),
    /// `SET<TAB>target<TAB>value<TAB>evidence`. On an extraction it replaces
    /// value and evidence; on a row side it replaces that side's values
    /// (several SET lines on one side accumulate).
    Set {
        target: Target,
        value: String,
        evidence: String,
    },
    /// `SPLIT<TAB>target<TAB>part<TAB>part...` on a value group.
    Split { target: Target, parts: Vec<String> },
    /// `MERGE<TAB>into<TAB>from`: fold the `from` row into `into`.
    Merge { into: Target, from: Target },
    /// `REGROUP<TAB>target<TAB>member<TAB>member...`: one line per new
    /// attribute group carved out of the target row.
    Regroup { target: Target, members: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsefulnessVerdict {
    pub useful: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StageOutput {
    Extract(StructuredExtractionList),
    AttributeMerge(Vec<AttributeGroup>),
    ValueMerge(Vec<KeptValues>),
    Contrast(Vec<ContrastHint>),
    Usefulness(UsefulnessVerdict),
    Rating(RowLabel),
    Critique(Vec<CritiqueRecord>),
    Revise(Vec<Edit>),
}

impl StageOutput {
    pub fn stage(&self) -> StageTag {
        match self {
            StageOutput::Extract(_) => StageTag::Extract,
            StageOutput::AttributeMerge(_) => StageTag::AttributeMerge,
            StageOutput::ValueMerge(_) => StageTag::ValueMerge,
            StageOutput::Contrast(_) => StageTag::Contrast,
            StageOutput::Usefulness(_) => StageTag::Usefulness,
            StageOutput::Rating(_) => StageTag::Autorate,
            StageOutput::Critique(_) => StageTag::Critique,
            StageOutput::Revise(_) => StageTag::Revise,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("cannot parse {stage} output: {reason}")]
pub struct ParseError {
    pub stage: StageTag,
    pub reason: String,
    pub raw: String,
}

impl ParseError {
    fn new(stage: StageTag, reason: impl Into<String>, raw: &str) -> Self {
        Self {
            stage,
            reason: reason.into(),
            raw: raw.to_string(),
        }
    }
}

const NONE_LINE: &str = "NONE";

fn is_none_line(line: &str) -> bool {
    line.trim() == NONE_LINE
}

/// Parse the raw completion for `stage`.
pub fn parse_stage_output(stage: StageTag, raw: &str) -> Result<StageOutput, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::new(stage, "empty output", raw));
    }
    match stage {
        StageTag::Extract => parse_records(stage, raw, |f| {
            (f.len() == 3).then(|| ExtractedItem {
                attribute: f[0].clone(),
                value: f[1].clone(),
                evidence: f[2].clone(),
            })
        })
        .map(|items| StageOutput::Extract(StructuredExtractionList { items })),
        StageTag::AttributeMerge => parse_records(stage, raw, |f| {
            (f.len() >= 3 && f[0] == "GROUP").then(|| AttributeGroup {
                center: f[1].clone(),
                members: f[2..].to_vec(),
            })
        })
        .map(StageOutput::AttributeMerge),
        StageTag::ValueMerge => parse_records(stage, raw, |f| {
            if f.len() < 4 || f[0] != "KEEP" {
                return None;
            }
            Some(KeptValues {
                side: Side::parse(&f[1])?,
                center: f[2].clone(),
                members: f[3..].to_vec(),
            })
        })
        .map(StageOutput::ValueMerge),
        StageTag::Contrast => parse_records(stage, raw, |f| {
            if f.len() != 4 || f[0] != "CONTRAST" {
                return None;
            }
            Some(ContrastHint {
                attribute: f[1].clone(),
                level: ContrastLevel::parse(&f[2])?,
                hint: f[3].parse().ok()?,
            })
        })
        .map(StageOutput::Contrast),
        StageTag::Usefulness => {
            let (label, reason) = rating_line(stage, raw)?;
            let useful = match label.as_str() {
                "YES" => true,
                "NO" => false,
                other => {
                    return Err(ParseError::new(stage, format!("unknown usefulness label {other:?}"), raw))
                }
            };
            Ok(StageOutput::Usefulness(UsefulnessVerdict { useful, reason }))
        }
        StageTag::Autorate => {
            let (label, _) = rating_line(stage, raw)?;
            RowLabel::parse(&label)
                .map(StageOutput::Rating)
                .ok_or_else(|| ParseError::new(stage, format!("unknown rating label {label:?}"), raw))
        }
        StageTag::Critique => parse_records(stage, raw, |f| {
            if f.len() != 4 || f[0] != "CRITIQUE" {
                return None;
            }
            Some(CritiqueRecord {
                kind: CritiqueKind::parse(&f[1])?,
                target: Target::parse(&f[2])?,
                note: f[3].clone(),
            })
        })
        .map(StageOutput::Critique),
        StageTag::Revise => parse_records(stage, raw, parse_edit).map(StageOutput::Revise),
    }
}

fn parse_edit(f: &[String]) -> Option<Edit> {
    match f.first()?.as_str() {
        "DELETE" if f.len() == 2 => Some(Edit::Delete(Target::parse(&f[1])?)),
        "SET" if f.len() == 4 => Some(Edit::Set {
            target: Target::parse(&f[1])?,
            value: f[2].clone(),
            evidence: f[3].clone(),
        }),
        "SPLIT" if f.len() >= 3 => Some(Edit::Split {
            target: Target::parse(&f[1])?,
            parts: f[2..].to_vec(),
        }),
        "MERGE" if f.len() == 3 => Some(Edit::Merge {
            into: Target::parse(&f[1])?,
            from: Target::parse(&f[2])?,
        }),
        "REGROUP" if f.len() >= 3 => Some(Edit::Regroup {
            target: Target::parse(&f[1])?,
            members: f[2..].to_vec(),
        }),
        _ => None,
    }
}

fn parse_records<T>(
    stage: StageTag,
    raw: &str,
    parse: impl Fn(&[String]) -> Option<T>,
) -> Result<Vec<T>, ParseError> {
    let mut out = Vec::new();
    let mut saw_none = false;
    for line in raw.lines() {
        if is_none_line(line) {
            saw_none = true;
            continue;
        }
        if !line.contains('\t') {
            continue;
        }
        if let Some(rec) = parse(&fields(line)) {
            out.push(rec);
        }
    }
    if out.is_empty() && !saw_none {
        return Err(ParseError::new(stage, "no records and no NONE line", raw));
    }
    Ok(out)
}

fn rating_line(stage: StageTag, raw: &str) -> Result<(String, String), ParseError> {
    for line in raw.lines() {
        if let Some(rest) = line.trim_start().strip_prefix("RATING:") {
            let rest = rest.trim_start();
            let label: String = rest
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
                .collect();
            let after = rest[label.len()..].trim();
            let mut reason = after.to_string();
            // an explanation may follow on later lines
            let tail: Vec<&str> = raw
                .lines()
                .skip_while(|l| !l.trim_start().starts_with("RATING:"))
                .skip(1)
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            if reason.is_empty() && !tail.is_empty() {
                reason = tail.join(" ");
            }
            return Ok((label, reason));
        }
    }
    Err(ParseError::new(stage, "no RATING line", raw))
}

/// Render a structured value in its stage grammar; the inverse of
/// [`parse_stage_output`].
pub fn render_stage_output(out: &StageOutput) -> String {
    let mut lines: Vec<String> = match out {
        StageOutput::Extract(list) => list
            .items
            .iter()
            .map(|i| record(&[&i.attribute, &i.value, &i.evidence]))
            .collect(),
        StageOutput::AttributeMerge(groups) => groups
            .iter()
            .map(|g| {
                let mut f = vec!["GROUP", g.center.as_str()];
                f.extend(g.members.iter().map(String::as_str));
                record(&f)
            })
            .collect(),
        StageOutput::ValueMerge(kept) => kept
            .iter()
            .map(|k| {
                let mut f = vec!["KEEP", k.side.as_str(), k.center.as_str()];
                f.extend(k.members.iter().map(String::as_str));
                record(&f)
            })
            .collect(),
        StageOutput::Contrast(hints) => hints
            .iter()
            .map(|h| record(&["CONTRAST", &h.attribute, h.level.as_str(), &h.hint.to_string()]))
            .collect(),
        StageOutput::Usefulness(v) => {
            let label = if v.useful { "YES" } else { "NO" };
            return if v.reason.is_empty() {
                format!("RATING: {label}\n")
            } else {
                format!("RATING: {label} {}\n", v.reason.replace('\n', " "))
            };
        }
        StageOutput::Rating(label) => return format!("RATING: {}\n", label.as_str()),
        StageOutput::Critique(crits) => crits
            .iter()
            .map(|c| record(&["CRITIQUE", c.kind.as_str(), &c.target.to_string(), &c.note]))
            .collect(),
        StageOutput::Revise(edits) => edits.iter().map(render_edit).collect(),
    };
    if lines.is_empty() {
        lines.push(NONE_LINE.to_string());
    }
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

pub fn render_edit(e: &Edit) -> String {
    match e {
        Edit::Delete(t) => record(&["DELETE", &t.to_string()]),
        Edit::Set {
            target,
            value,
            evidence,
        } => record(&["SET", &target.to_string(), value, evidence]),
        Edit::Split { target, parts } => {
            let mut f = vec!["SPLIT".to_string(), target.to_string()];
            f.extend(parts.iter().cloned());
            record(&f)
        }
        Edit::Merge { into, from } => record(&["MERGE", &into.to_string(), &from.to_string()]),
        Edit::Regroup { target, members } => {
            let mut f = vec!["REGROUP".to_string(), target.to_string()];
            f.extend(members.iter().cloned());
            record(&f)
        }
    }
}

/// A finished row (or its removal) in the training-export grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareTarget {
    Row {
        attribute: String,
        level: ContrastLevel,
        values: Vec<(Side, String)>,
    },
    Dropped {
        attribute: String,
    },
}

impl fmt::Display for CompareTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompareTarget::Row {
                attribute,
                level,
                values,
            } => {
                writeln!(f, "{}", record(&["ROW", attribute, level.as_str()]))?;
                for (side, v) in values {
                    writeln!(f, "{}", record(&["VALUE", side.as_str(), v]))?;
                }
                Ok(())
            }
            CompareTarget::Dropped { attribute } => writeln!(f, "{}", record(&["DROP", attribute])),
        }
    }
}

pub fn parse_compare_target(raw: &str) -> Result<CompareTarget, String> {
    let mut header: Option<(String, ContrastLevel)> = None;
    let mut values = Vec::new();
    for line in raw.lines().filter(|l| l.contains('\t')) {
        let f = fields(line);
        match f[0].as_str() {
            "DROP" if f.len() == 2 => {
                return Ok(CompareTarget::Dropped {
                    attribute: f[1].clone(),
                })
            }
            "ROW" if f.len() == 3 && header.is_none() => {
                let level = ContrastLevel::parse(&f[2]).ok_or_else(|| format!("bad level {:?}", f[2]))?;
                header = Some((f[1].clone(), level));
            }
            "VALUE" if f.len() == 3 && header.is_some() => {
                let side = Side::parse(&f[1]).ok_or_else(|| format!("bad side {:?}", f[1]))?;
                values.push((side, f[2].clone()));
            }
            _ => return Err(format!("unexpected line {line:?}")),
        }
    }
    let (attribute, level) = header.ok_or("no ROW or DROP line")?;
    Ok(CompareTarget::Row {
        attribute,
        level,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extract_records_with_surrounding_prose() {
        let raw = "Here are the extractions:\n\
                   battery life\t10 hours\tThe battery life of X is 10 hours.\n\
                   price\t$99\tThe price of X is $99.\n\
                   Hope this helps.";
        match parse_stage_output(StageTag::Extract, raw).unwrap() {
            StageOutput::Extract(list) => {
                assert_eq!(list.items.len(), 2);
                assert_eq!(list.items[1].value, "$99");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_output_is_a_parse_error() {
        let err = parse_stage_output(StageTag::Extract, "").unwrap_err();
        assert_eq!(err.stage, StageTag::Extract);
        assert!(parse_stage_output(StageTag::Extract, "I found nothing useful.").is_err());
        assert_eq!(
            parse_stage_output(StageTag::Extract, "NONE").unwrap(),
            StageOutput::Extract(StructuredExtractionList::default())
        );
    }

    #[test]
    fn autorate_label_with_explanation() {
        let out = parse_stage_output(StageTag::Autorate, "RATING: YES\nBoth values are related.").unwrap();
        assert_eq!(out, StageOutput::Rating(RowLabel::Yes));
        let out = parse_stage_output(StageTag::Autorate, "Thinking...\nRATING: NO_BAD_EXTRACTION because").unwrap();
        assert_eq!(out, StageOutput::Rating(RowLabel::NoBadExtraction));
        assert!(parse_stage_output(StageTag::Autorate, "RATING: MAYBE").is_err());
    }

    #[test]
    fn usefulness_reason_is_kept() {
        let out = parse_stage_output(StageTag::Usefulness, "RATING: NO\nwheels are not a differentiator").unwrap();
        assert_eq!(
            out,
            StageOutput::Usefulness(UsefulnessVerdict {
                useful: false,
                reason: "wheels are not a differentiator".into()
            })
        );
    }

    #[test]
    fn escaping_round_trips() {
        for s in ["plain", "a\tb", "line\nbreak", "back\\slash", "\\t literal", "trailing\\"] {
            assert_eq!(unescape(&escape(s)), s);
        }
    }

    #[test]
    fn compare_target_round_trip() {
        let t = CompareTarget::Row {
            attribute: "battery life".into(),
            level: ContrastLevel::High,
            values: vec![(Side::A, "10 hours".into()), (Side::B, "6\thours".into())],
        };
        assert_eq!(parse_compare_target(&t.to_string()).unwrap(), t);
        let d = CompareTarget::Dropped { attribute: "color".into() };
        assert_eq!(parse_compare_target(&d.to_string()).unwrap(), d);
    }

    fn text() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 $.,\\t\\n\\\\]{0,12}"
    }

    fn nonblank() -> impl Strategy<Value = String> {
        "[a-z][a-zA-Z0-9 .\\t\\\\]{0,10}"
    }

    fn target() -> impl Strategy<Value = Target> {
        prop_oneof![
            (0usize..50).prop_map(Target::Extraction),
            (0usize..50).prop_map(Target::Row),
            (0usize..50, any::<bool>()).prop_map(|(r, a)| Target::Side(r, if a { Side::A } else { Side::B })),
            (0usize..50, any::<bool>(), 0usize..9)
                .prop_map(|(r, a, g)| Target::Group(r, if a { Side::A } else { Side::B }, g)),
        ]
    }

    fn side() -> impl Strategy<Value = Side> {
        any::<bool>().prop_map(|a| if a { Side::A } else { Side::B })
    }

    fn stage_output() -> impl Strategy<Value = StageOutput> {
        let level = prop_oneof![
            Just(ContrastLevel::High),
            Just(ContrastLevel::Low),
            Just(ContrastLevel::None)
        ];
        prop_oneof![
            proptest::collection::vec((text(), text(), text()), 0..4).prop_map(|v| {
                StageOutput::Extract(StructuredExtractionList {
                    items: v
                        .into_iter()
                        .map(|(attribute, value, evidence)| ExtractedItem { attribute, value, evidence })
                        .collect(),
                })
            }),
            proptest::collection::vec((text(), proptest::collection::vec(text(), 1..4)), 0..4).prop_map(|v| {
                StageOutput::AttributeMerge(
                    v.into_iter().map(|(center, members)| AttributeGroup { center, members }).collect(),
                )
            }),
            proptest::collection::vec((side(), text(), proptest::collection::vec(text(), 1..3)), 0..4).prop_map(
                |v| StageOutput::ValueMerge(
                    v.into_iter().map(|(side, center, members)| KeptValues { side, center, members }).collect()
                )
            ),
            proptest::collection::vec((text(), level, -1e6f64..1e6), 0..4).prop_map(|v| {
                StageOutput::Contrast(
                    v.into_iter().map(|(attribute, level, hint)| ContrastHint { attribute, level, hint }).collect(),
                )
            }),
            (any::<bool>(), "[a-z]{0,3}( [a-z]{1,5}){0,3}").prop_map(|(useful, reason)| {
                StageOutput::Usefulness(UsefulnessVerdict { useful, reason: reason.trim().to_string() })
            }),
            proptest::sample::select(RowLabel::ALL.to_vec()).prop_map(StageOutput::Rating),
            proptest::collection::vec(
                (proptest::sample::select(CritiqueKind::ALL.to_vec()), target(), text()),
                0..4
            )
            .prop_map(|v| StageOutput::Critique(
                v.into_iter().map(|(kind, target, note)| CritiqueRecord { kind, target, note }).collect()
            )),
            proptest::collection::vec(
                prop_oneof![
                    target().prop_map(Edit::Delete),
                    (target(), text(), text()).prop_map(|(target, value, evidence)| Edit::Set {
                        target,
                        value,
                        evidence
                    }),
                    (target(), proptest::collection::vec(nonblank(), 1..4))
                        .prop_map(|(target, parts)| Edit::Split { target, parts }),
                    (target(), target()).prop_map(|(into, from)| Edit::Merge { into, from }),
                    (target(), proptest::collection::vec(nonblank(), 1..4))
                        .prop_map(|(target, members)| Edit::Regroup { target, members }),
                ],
                0..4
            )
            .prop_map(StageOutput::Revise),
        ]
    }

    proptest! {
        #[test]
        fn parse_inverts_render(out in stage_output()) {
            let raw = render_stage_output(&out);
            prop_assert_eq!(parse_stage_output(out.stage(), &raw).unwrap(), out);
        }
    }
}
