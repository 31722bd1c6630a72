//! Stage input payloads.
//!
//! The pipeline renders each stage's input into this line format and the
//! offline backend parses it back. Field escaping follows
//! [`super::grammar`].
//!
//! ```text
//! EXTRACT          ENTITY<TAB>name, then one escaped sentence per line
//! ATTRIBUTE_MERGE  ATTR<TAB>attribute
//! VALUE_MERGE      ATTRIBUTE<TAB>name / THRESHOLD<TAB>0.5 / VALUE<TAB>A|B<TAB>value<TAB>support
//! CONTRAST         ROW<TAB>attribute, followed by that row's VALUE lines
//! USEFULNESS,      ENTITY<TAB>A|B<TAB>name<TAB>alias... / ROW<TAB>attribute<TAB>LEVEL<TAB>importance /
//! AUTORATE         VALUE lines / EVIDENCE<TAB>A|B<TAB>text
//! CRITIQUE         SCOPE<TAB>EXTRACT, ENTITY<TAB>names..., OTHER<TAB>names...,
//!                  EXTRACTION<TAB>i<TAB>attribute<TAB>value<TAB>evidence
//!                  or SCOPE<TAB>COMPARE, ROW<TAB>i<TAB>attribute<TAB>LEVEL,
//!                  MEMBERS<TAB>i<TAB>member..., GROUP<TAB>i<TAB>A|B<TAB>g<TAB>value<TAB>support
//! REVISE           a CRITIQUE payload, one CRITIQUE record, and
//!                  SOURCE<TAB>A|B|-<TAB>url<TAB>sentence lines
//! ```

use serde::{Deserialize, Serialize};

use super::grammar::{fields, record, CritiqueRecord, ExtractedItem};
use crate::critique::{CritiqueKind, Scope, Target};
use crate::model::{ContrastLevel, Side};

fn lines_of(payload: &str) -> impl Iterator<Item = Vec<String>> + '_ {
    payload.lines().filter(|l| !l.is_empty()).map(fields)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractInput {
    pub entity: String,
    pub sentences: Vec<String>,
}

impl ExtractInput {
    pub fn render(&self) -> String {
        let mut out = record(&["ENTITY", &self.entity]);
        for s in &self.sentences {
            out.push('\n');
            out.push_str(&record(&[s]));
        }
        out
    }

    pub fn parse(payload: &str) -> Option<Self> {
        let mut lines = payload.lines();
        let head = fields(lines.next()?);
        if head.len() != 2 || head[0] != "ENTITY" {
            return None;
        }
        Some(Self {
            entity: head[1].clone(),
            sentences: lines.filter(|l| !l.is_empty()).map(|l| fields(l).join("\t")).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeMergeInput {
    pub attributes: Vec<String>,
}

impl AttributeMergeInput {
    pub fn render(&self) -> String {
        self.attributes
            .iter()
            .map(|a| record(&["ATTR", a]))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn parse(payload: &str) -> Option<Self> {
        let attributes = lines_of(payload)
            .filter(|f| f.len() == 2 && f[0] == "ATTR")
            .map(|f| f[1].clone())
            .collect();
        Some(Self { attributes })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueEntry {
    pub side: Side,
    pub value: String,
    pub support: u32,
}

impl ValueEntry {
    fn render(&self) -> String {
        record(&["VALUE", self.side.as_str(), &self.value, &self.support.to_string()])
    }

    fn parse(f: &[String]) -> Option<Self> {
        if f.len() != 4 || f[0] != "VALUE" {
            return None;
        }
        Some(Self {
            side: Side::parse(&f[1])?,
            value: f[2].clone(),
            support: f[3].parse().ok()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueMergeInput {
    pub attribute: String,
    pub threshold: f64,
    pub values: Vec<ValueEntry>,
}

impl ValueMergeInput {
    pub fn render(&self) -> String {
        let mut lines = vec![
            record(&["ATTRIBUTE", &self.attribute]),
            record(&["THRESHOLD", &self.threshold.to_string()]),
        ];
        lines.extend(self.values.iter().map(ValueEntry::render));
        lines.join("\n")
    }

    pub fn parse(payload: &str) -> Option<Self> {
        let mut attribute = None;
        let mut threshold = None;
        let mut values = Vec::new();
        for f in lines_of(payload) {
            match f[0].as_str() {
                "ATTRIBUTE" if f.len() == 2 => attribute = Some(f[1].clone()),
                "THRESHOLD" if f.len() == 2 => threshold = f[1].parse().ok(),
                "VALUE" => values.push(ValueEntry::parse(&f)?),
                _ => {}
            }
        }
        Some(Self {
            attribute: attribute?,
            threshold: threshold?,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastRowInput {
    pub attribute: String,
    pub values: Vec<ValueEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastInput {
    pub rows: Vec<ContrastRowInput>,
}

impl ContrastRowInput {
    pub fn render(&self) -> String {
        let mut lines = vec![record(&["ROW", &self.attribute])];
        lines.extend(self.values.iter().map(ValueEntry::render));
        lines.join("\n")
    }
}

impl ContrastInput {
    pub fn render(&self) -> String {
        self.rows
            .iter()
            .map(ContrastRowInput::render)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn parse(payload: &str) -> Option<Self> {
        let mut rows: Vec<ContrastRowInput> = Vec::new();
        for f in lines_of(payload) {
            match f[0].as_str() {
                "ROW" if f.len() == 2 => rows.push(ContrastRowInput {
                    attribute: f[1].clone(),
                    values: Vec::new(),
                }),
                "VALUE" => rows.last_mut()?.values.push(ValueEntry::parse(&f)?),
                _ => {}
            }
        }
        Some(Self { rows })
    }
}

/// A single summary row as seen by the usefulness filter and the row rater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowInput {
    pub names_a: Vec<String>,
    pub names_b: Vec<String>,
    pub attribute: String,
    pub contrast: ContrastLevel,
    pub importance: f64,
    pub values: Vec<ValueEntry>,
    pub evidence: Vec<(Side, String)>,
}

impl RowInput {
    pub fn names(&self, side: Side) -> &[String] {
        match side {
            Side::A => &self.names_a,
            Side::B => &self.names_b,
        }
    }

    pub fn render(&self) -> String {
        let mut lines = Vec::new();
        for (side, names) in [(Side::A, &self.names_a), (Side::B, &self.names_b)] {
            let mut f = vec!["ENTITY".to_string(), side.as_str().to_string()];
            f.extend(names.iter().cloned());
            lines.push(record(&f));
        }
        lines.push(record(&[
            "ROW",
            &self.attribute,
            self.contrast.as_str(),
            &self.importance.to_string(),
        ]));
        lines.extend(self.values.iter().map(ValueEntry::render));
        lines.extend(
            self.evidence
                .iter()
                .map(|(side, text)| record(&["EVIDENCE", side.as_str(), text])),
        );
        lines.join("\n")
    }

    pub fn parse(payload: &str) -> Option<Self> {
        let mut names_a = Vec::new();
        let mut names_b = Vec::new();
        let mut header = None;
        let mut values = Vec::new();
        let mut evidence = Vec::new();
        for f in lines_of(payload) {
            match f[0].as_str() {
                "ENTITY" if f.len() >= 3 => match Side::parse(&f[1])? {
                    Side::A => names_a = f[2..].to_vec(),
                    Side::B => names_b = f[2..].to_vec(),
                },
                "ROW" if f.len() == 4 => {
                    header = Some((f[1].clone(), ContrastLevel::parse(&f[2])?, f[3].parse().ok()?))
                }
                "VALUE" => values.push(ValueEntry::parse(&f)?),
                "EVIDENCE" if f.len() == 3 => evidence.push((Side::parse(&f[1])?, f[2].clone())),
                _ => {}
            }
        }
        let (attribute, contrast, importance) = header?;
        Some(Self {
            names_a,
            names_b,
            attribute,
            contrast,
            importance,
            values,
            evidence,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupInput {
    pub side: Side,
    pub index: usize,
    pub value: String,
    pub support: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompareRowInput {
    pub index: usize,
    pub attribute: String,
    pub level: ContrastLevel,
    pub members: Vec<String>,
    pub groups: Vec<GroupInput>,
}

impl CompareRowInput {
    pub fn render(&self) -> String {
        let i = self.index.to_string();
        let mut lines = vec![record(&["ROW", &i, &self.attribute, self.level.as_str()])];
        let mut m = vec!["MEMBERS".to_string(), i.clone()];
        m.extend(self.members.iter().cloned());
        lines.push(record(&m));
        for g in &self.groups {
            lines.push(record(&[
                "GROUP",
                &i,
                g.side.as_str(),
                &g.index.to_string(),
                &g.value,
                &g.support.to_string(),
            ]));
        }
        lines.join("\n")
    }

    pub fn groups_of(&self, side: Side) -> impl Iterator<Item = &GroupInput> {
        self.groups.iter().filter(move |g| g.side == side)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CritiqueInput {
    Extract {
        names: Vec<String>,
        others: Vec<String>,
        extractions: Vec<(usize, ExtractedItem)>,
    },
    Compare {
        rows: Vec<CompareRowInput>,
    },
}

impl CritiqueInput {
    pub fn scope(&self) -> Scope {
        match self {
            CritiqueInput::Extract { .. } => Scope::Extract,
            CritiqueInput::Compare { .. } => Scope::Compare,
        }
    }

    pub fn render(&self) -> String {
        let mut lines = vec![record(&["SCOPE", self.scope().as_str()])];
        match self {
            CritiqueInput::Extract {
                names,
                others,
                extractions,
            } => {
                let mut f = vec!["ENTITY".to_string()];
                f.extend(names.iter().cloned());
                lines.push(record(&f));
                if !others.is_empty() {
                    let mut f = vec!["OTHER".to_string()];
                    f.extend(others.iter().cloned());
                    lines.push(record(&f));
                }
                for (i, e) in extractions {
                    lines.push(record(&[
                        "EXTRACTION",
                        &i.to_string(),
                        &e.attribute,
                        &e.value,
                        &e.evidence,
                    ]));
                }
            }
            CritiqueInput::Compare { rows } => lines.extend(rows.iter().map(CompareRowInput::render)),
        }
        lines.join("\n")
    }

    pub fn parse(payload: &str) -> Option<Self> {
        let mut lines = lines_of(payload).peekable();
        let scope = loop {
            let f = lines.next()?;
            if f.len() == 2 && f[0] == "SCOPE" {
                break Scope::parse(&f[1])?;
            }
        };
        match scope {
            Scope::Extract => {
                let mut names = Vec::new();
                let mut others = Vec::new();
                let mut extractions = Vec::new();
                for f in lines {
                    match f[0].as_str() {
                        "ENTITY" => names = f[1..].to_vec(),
                        "OTHER" => others = f[1..].to_vec(),
                        "EXTRACTION" if f.len() == 5 => extractions.push((
                            f[1].parse().ok()?,
                            ExtractedItem {
                                attribute: f[2].clone(),
                                value: f[3].clone(),
                                evidence: f[4].clone(),
                            },
                        )),
                        _ => {}
                    }
                }
                Some(CritiqueInput::Extract {
                    names,
                    others,
                    extractions,
                })
            }
            Scope::Compare => {
                let mut rows: Vec<CompareRowInput> = Vec::new();
                for f in lines {
                    match f[0].as_str() {
                        "ROW" if f.len() == 4 => rows.push(CompareRowInput {
                            index: f[1].parse().ok()?,
                            attribute: f[2].clone(),
                            level: ContrastLevel::parse(&f[3])?,
                            members: Vec::new(),
                            groups: Vec::new(),
                        }),
                        "MEMBERS" if f.len() >= 2 => {
                            let row = rows.last_mut()?;
                            row.members = f[2..].to_vec();
                        }
                        "GROUP" if f.len() == 6 => {
                            let row = rows.last_mut()?;
                            row.groups.push(GroupInput {
                                side: Side::parse(&f[2])?,
                                index: f[3].parse().ok()?,
                                value: f[4].clone(),
                                support: f[5].parse().ok()?,
                            });
                        }
                        _ => {}
                    }
                }
                Some(CritiqueInput::Compare { rows })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLine {
    pub side: Option<Side>,
    pub url: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviseInput {
    pub base: CritiqueInput,
    pub critique: CritiqueRecord,
    pub sources: Vec<SourceLine>,
}

impl ReviseInput {
    pub fn render(&self) -> String {
        let mut out = self.base.render();
        out.push('\n');
        out.push_str(&record(&[
            "CRITIQUE",
            self.critique.kind.as_str(),
            &self.critique.target.to_string(),
            &self.critique.note,
        ]));
        for s in &self.sources {
            out.push('\n');
            out.push_str(&record(&[
                "SOURCE",
                s.side.map_or("-", Side::as_str),
                &s.url,
                &s.text,
            ]));
        }
        out
    }

    pub fn parse(payload: &str) -> Option<Self> {
        let base = CritiqueInput::parse(payload)?;
        let mut critique = None;
        let mut sources = Vec::new();
        for f in lines_of(payload) {
            match f[0].as_str() {
                "CRITIQUE" if f.len() == 4 => {
                    critique = Some(CritiqueRecord {
                        kind: CritiqueKind::parse(&f[1])?,
                        target: Target::parse(&f[2])?,
                        note: f[3].clone(),
                    })
                }
                "SOURCE" if f.len() == 4 => sources.push(SourceLine {
                    side: Side::parse(&f[1]),
                    url: f[2].clone(),
                    text: f[3].clone(),
                }),
                _ => {}
            }
        }
        Some(Self {
            base,
            critique: critique?,
            sources,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_input_round_trip() {
        let x = ExtractInput {
            entity: "PhoneX".into(),
            sentences: vec!["The battery life of PhoneX is 10 hours.".into(), "tab\there".into()],
        };
        assert_eq!(ExtractInput::parse(&x.render()).unwrap(), x);
    }

    #[test]
    fn row_input_round_trip() {
        let r = RowInput {
            names_a: vec!["X".into(), "X1".into()],
            names_b: vec!["Y".into()],
            attribute: "price".into(),
            contrast: ContrastLevel::High,
            importance: 1.5,
            values: vec![ValueEntry {
                side: Side::A,
                value: "$10".into(),
                support: 2,
            }],
            evidence: vec![(Side::A, "The price of X is $10.".into())],
        };
        assert_eq!(RowInput::parse(&r.render()).unwrap(), r);
    }

    #[test]
    fn revise_input_round_trip() {
        let r = ReviseInput {
            base: CritiqueInput::Compare {
                rows: vec![CompareRowInput {
                    index: 3,
                    attribute: "views".into(),
                    level: ContrastLevel::Low,
                    members: vec!["views".into(), "view".into()],
                    groups: vec![GroupInput {
                        side: Side::B,
                        index: 0,
                        value: "bad".into(),
                        support: 1,
                    }],
                }],
            },
            critique: CritiqueRecord {
                kind: CritiqueKind::InconsistentValues,
                target: Target::Side(3, Side::B),
                note: "conflict".into(),
            },
            sources: vec![SourceLine {
                side: None,
                url: "u".into(),
                text: "s".into(),
            }],
        };
        assert_eq!(ReviseInput::parse(&r.render()).unwrap(), r);
        let v = ValueMergeInput {
            attribute: "views".into(),
            threshold: 0.5,
            values: vec![],
        };
        assert_eq!(ValueMergeInput::parse(&v.render()).unwrap(), v);
    }
}
