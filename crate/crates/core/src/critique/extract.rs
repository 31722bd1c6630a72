use std::collections::HashSet;

use super::engine::CrState;
use super::{Critique, CritiqueKind, Scope, Target};
use crate::gateway::grammar::{Edit, ExtractedItem};
use crate::gateway::payload::{CritiqueInput, SourceLine};
use crate::gateway::GatewayError;
use crate::model::{Extraction, SourceDocument};
use crate::pipeline::StageRunner;
use crate::text::{digest, nfc, phrase_key};

/// One entity's extractions under revision. Deleted extractions leave an
/// empty slot so indices hold for the whole loop.
pub struct ExtractState<'a> {
    label: String,
    names: Vec<String>,
    others: Vec<String>,
    slots: Vec<Option<Extraction>>,
    docs: Vec<&'a SourceDocument>,
    /// Phrase-key words of every essential sentence, in `docs` order.
    sentence_words: std::sync::OnceLock<Vec<HashSet<String>>>,
}

impl<'a> ExtractState<'a> {
    /// `docs` are the entity's documents in rank order, with essential
    /// sentences filled in.
    pub fn new(
        label: impl Into<String>,
        names: Vec<String>,
        others: Vec<String>,
        extractions: Vec<Extraction>,
        docs: Vec<&'a SourceDocument>,
    ) -> Self {
        Self {
            label: label.into(),
            names,
            others,
            slots: extractions.into_iter().map(Some).collect(),
            docs,
            sentence_words: std::sync::OnceLock::new(),
        }
    }

    pub fn extractions(&self) -> impl Iterator<Item = &Extraction> {
        self.slots.iter().flatten()
    }

    pub fn into_extractions(self) -> Vec<Extraction> {
        self.slots.into_iter().flatten().collect()
    }

    fn get(&self, target: &Target) -> Option<&Extraction> {
        match *target {
            Target::Extraction(i) => self.slots.get(i)?.as_ref(),
            _ => None,
        }
    }

    /// First document, by rank, that holds `evidence` verbatim.
    fn locate(&self, evidence: &str) -> Option<&SourceDocument> {
        let ev = nfc(evidence);
        self.docs.iter().copied().find(|d| nfc(&d.raw_text).contains(&ev))
    }
}

impl CrState for ExtractState<'_> {
    fn scope(&self) -> Scope {
        Scope::Extract
    }

    fn label(&self) -> String {
        self.label.clone()
    }

    fn items(&self) -> Vec<usize> {
        (0..self.slots.len()).filter(|i| self.slots[*i].is_some()).collect()
    }

    fn payload(&self, items: &[usize]) -> CritiqueInput {
        CritiqueInput::Extract {
            names: self.names.clone(),
            others: self.others.clone(),
            extractions: items
                .iter()
                .filter_map(|&i| {
                    self.slots.get(i)?.as_ref().map(|e| {
                        (
                            i,
                            ExtractedItem {
                                attribute: e.attribute.clone(),
                                value: e.value.clone(),
                                evidence: e.evidence.clone(),
                            },
                        )
                    })
                })
                .collect(),
        }
    }

    fn has_target(&self, target: &Target) -> bool {
        self.get(target).is_some()
    }

    fn target_digest(&self, target: &Target) -> String {
        match self.get(target) {
            Some(e) => digest(&format!("{}\t{}\t{}", e.attribute, e.value, e.evidence)),
            None => String::new(),
        }
    }

    fn sources_for(&self, critique: &Critique) -> Vec<SourceLine> {
        if critique.kind != CritiqueKind::InsufficientContext {
            return Vec::new();
        }
        let Some(e) = self.get(&critique.target) else {
            return Vec::new();
        };
        let words: HashSet<String> = phrase_key(&e.attribute).split(' ').map(str::to_string).collect();
        let sentence_words = self.sentence_words.get_or_init(|| {
            self.docs
                .iter()
                .flat_map(|d| d.essential_sentences.iter())
                .map(|s| phrase_key(&s.text).split(' ').map(str::to_string).collect())
                .collect()
        });
        self.docs
            .iter()
            .flat_map(|d| d.essential_sentences.iter())
            .zip(sentence_words)
            .filter(|(s, sw)| s.text != e.evidence && !sw.is_disjoint(&words))
            .map(|(s, _)| s)
            .map(|s| SourceLine {
                side: None,
                url: s.doc_url.clone(),
                text: s.text.clone(),
            })
            .collect()
    }

    fn apply(&mut self, _critique: &Critique, edits: &[Edit]) -> Result<String, String> {
        let mut plan: Vec<(usize, Option<(String, String, String)>)> = Vec::new();
        for edit in edits {
            match edit {
                Edit::Delete(t @ Target::Extraction(i)) => {
                    if *i >= self.slots.len() {
                        return Err(format!("no extraction {t}"));
                    }
                    plan.push((*i, None));
                }
                Edit::Set {
                    target: t @ Target::Extraction(i),
                    value,
                    evidence,
                } => {
                    if *i >= self.slots.len() {
                        return Err(format!("no extraction {t}"));
                    }
                    if value.trim().is_empty() {
                        return Err("empty value".into());
                    }
                    if !nfc(evidence).contains(&nfc(value)) {
                        return Err(format!("value {value:?} is not inside its evidence"));
                    }
                    let doc = self
                        .locate(evidence)
                        .ok_or_else(|| format!("evidence {evidence:?} is not in the entity's sources"))?;
                    plan.push((*i, Some((value.clone(), evidence.clone(), doc.url.clone()))));
                }
                other => return Err(format!("edit {other:?} does not apply to extractions")),
            }
        }
        let mut actions = Vec::new();
        for (i, change) in plan {
            let Some(slot) = self.slots[i].as_mut() else {
                continue;
            };
            match change {
                None => {
                    self.slots[i] = None;
                    actions.push(format!("deleted E{i}"));
                }
                Some((value, evidence, url)) => {
                    actions.push(format!("E{i} value {:?} -> {value:?}", slot.value));
                    slot.value = value;
                    slot.evidence = evidence;
                    slot.source_url = url;
                }
            }
        }
        Ok(if actions.is_empty() {
            "nothing left to change".into()
        } else {
            actions.join("; ")
        })
    }

    fn settle(&mut self, _runner: &StageRunner) -> Result<Vec<String>, GatewayError> {
        Ok(Vec::new())
    }
}
