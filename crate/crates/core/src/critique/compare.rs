use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

use super::engine::CrState;
use super::{Critique, CritiqueKind, Scope, Target};
use crate::gateway::deterministic::cluster_center;
use crate::gateway::grammar::Edit;
use crate::gateway::payload::{CompareRowInput, CritiqueInput, GroupInput, SourceLine};
use crate::gateway::GatewayError;
use crate::model::{AttributeCluster, ContrastLevel, Extraction, Side, SourceDocument, ValueGroup};
use crate::par::parallel_map;
use crate::pipeline::{contrast_levels, value_merge_cluster, StageRunner};
use crate::text::{digest, member_key, nfc, phrase_key};

/// One candidate row: a value-merged cluster and its contrast level.
/// Removed entries stay in place, with the reason, so row indices never
/// move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareEntry {
    pub cluster: AttributeCluster,
    pub level: ContrastLevel,
    pub removed: Option<String>,
}

impl CompareEntry {
    fn live_groups(&self, side: Side) -> impl Iterator<Item = (usize, &ValueGroup)> {
        self.cluster
            .groups(side)
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.members.is_empty())
    }
}

/// What an edit invalidated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Restage {
    Contrast,
    ValueMerge,
}

/// Compare-scope payload. Value groups emptied by an edit act as
/// tombstones until [`CrState::settle`] compacts them.
pub struct CompareState<'a> {
    pub entries: Vec<CompareEntry>,
    docs: [Vec<&'a SourceDocument>; 2],
    threshold: f64,
    dead: HashSet<(usize, Side, usize)>,
    dirty: BTreeMap<usize, Restage>,
    rounds: u32,
}

fn side_ix(side: Side) -> usize {
    match side {
        Side::A => 0,
        Side::B => 1,
    }
}

enum Step {
    DeleteRow(usize),
    Tombstone(usize, Side, usize),
    SetSide {
        row: usize,
        side: Side,
        value: String,
        evidence: String,
        url: String,
        entity_id: String,
    },
    Split(usize, Side, usize, Vec<String>),
    MergeRows(usize, usize),
    MergeGroups(usize, Side, usize, usize),
    Regroup(usize, Vec<String>),
}

impl<'a> CompareState<'a> {
    pub fn new(entries: Vec<CompareEntry>, docs_a: Vec<&'a SourceDocument>, docs_b: Vec<&'a SourceDocument>, threshold: f64) -> Self {
        Self {
            entries,
            docs: [docs_a, docs_b],
            threshold,
            dead: HashSet::new(),
            dirty: BTreeMap::new(),
            rounds: 0,
        }
    }

    pub fn into_entries(self) -> Vec<CompareEntry> {
        self.entries
    }

    fn live(&self, i: usize) -> Option<&CompareEntry> {
        self.entries.get(i).filter(|e| e.removed.is_none())
    }

    fn group(&self, i: usize, side: Side, g: usize) -> Option<&ValueGroup> {
        self.live(i)?.cluster.groups(side).get(g).filter(|g| !g.members.is_empty())
    }

    fn locate(&self, side: Side, evidence: &str) -> Option<&SourceDocument> {
        let ev = nfc(evidence);
        self.docs[side_ix(side)].iter().copied().find(|d| nfc(&d.raw_text).contains(&ev))
    }

    fn mark(&mut self, i: usize, r: Restage) {
        let e = self.dirty.entry(i).or_insert(r);
        *e = (*e).max(r);
    }

    fn tombstone(&mut self, i: usize, side: Side, g: usize) {
        let members = std::mem::take(&mut self.entries[i].cluster.groups_mut(side)[g].members);
        for m in members {
            self.dead.insert((i, side, m));
        }
    }

    fn plan(&self, edit: &Edit) -> Result<Option<Step>, String> {
        let row_ok = |i: usize| -> Result<bool, String> {
            if i >= self.entries.len() {
                Err(format!("no row R{i}"))
            } else {
                Ok(self.live(i).is_some())
            }
        };
        Ok(match edit {
            Edit::Delete(Target::Row(i)) => row_ok(*i)?.then_some(Step::DeleteRow(*i)),
            Edit::Delete(Target::Side(i, side)) => {
                if !row_ok(*i)? {
                    return Ok(None);
                }
                let any = self.entries[*i].live_groups(*side).next().is_some();
                any.then_some(Step::Tombstone(*i, *side, usize::MAX))
            }
            Edit::Delete(Target::Group(i, side, g)) => {
                row_ok(*i)?;
                self.group(*i, *side, *g).map(|_| Step::Tombstone(*i, *side, *g))
            }
            Edit::Set {
                target: Target::Side(i, side),
                value,
                evidence,
            } => {
                if !row_ok(*i)? {
                    return Ok(None);
                }
                if value.trim().is_empty() {
                    return Err("empty value".into());
                }
                if !nfc(evidence).contains(&nfc(value)) {
                    return Err(format!("value {value:?} is not inside its evidence"));
                }
                let doc = self
                    .locate(*side, evidence)
                    .ok_or_else(|| format!("evidence {evidence:?} is not in side {} sources", side.as_str()))?;
                Some(Step::SetSide {
                    row: *i,
                    side: *side,
                    value: value.clone(),
                    evidence: evidence.clone(),
                    url: doc.url.clone(),
                    entity_id: doc.entity_id.clone(),
                })
            }
            Edit::Split {
                target: Target::Group(i, side, g),
                parts,
            } => {
                row_ok(*i)?;
                let Some(group) = self.group(*i, *side, *g) else {
                    return Ok(None);
                };
                let values = self.entries[*i].cluster.values(*side);
                for p in parts {
                    let p = nfc(p);
                    if p.trim().is_empty() {
                        return Err("empty split part".into());
                    }
                    if !group.members.iter().any(|&m| nfc(&values[m].evidence).contains(&p)) {
                        return Err(format!("split part {p:?} is not in any evidence"));
                    }
                }
                Some(Step::Split(*i, *side, *g, parts.clone()))
            }
            Edit::Merge {
                into: Target::Row(i),
                from: Target::Row(j),
            } => {
                if i == j {
                    return Err("row merged into itself".into());
                }
                (row_ok(*i)? && row_ok(*j)?).then_some(Step::MergeRows(*i, *j))
            }
            Edit::Merge {
                into: Target::Group(i, s, g),
                from: Target::Group(j, t, h),
            } => {
                if i != j || s != t || g == h {
                    return Err("groups must be distinct and on the same side of one row".into());
                }
                row_ok(*i)?;
                (self.group(*i, *s, *g).is_some() && self.group(*i, *s, *h).is_some())
                    .then_some(Step::MergeGroups(*i, *s, *g, *h))
            }
            Edit::Regroup {
                target: Target::Row(i),
                members,
            } => {
                if !row_ok(*i)? {
                    return Ok(None);
                }
                let have: HashSet<String> =
                    self.entries[*i].cluster.member_attributes.iter().map(|m| member_key(m)).collect();
                let moved: HashSet<String> = members.iter().map(|m| member_key(m)).collect();
                if moved.is_empty() || !moved.is_subset(&have) {
                    return Err("regroup members must come from the row".into());
                }
                if moved.len() == have.len() {
                    return Err("regroup would empty the row".into());
                }
                Some(Step::Regroup(*i, members.clone()))
            }
            other => return Err(format!("edit {other:?} does not apply to rows")),
        })
    }

    fn run(&mut self, step: Step, critique: &Critique) -> String {
        match step {
            Step::DeleteRow(i) => {
                self.entries[i].removed = Some(format!("{}: {}", critique.kind, critique.note));
                self.dirty.remove(&i);
                format!("removed R{i}")
            }
            Step::Tombstone(i, side, g) if g == usize::MAX => {
                let gs: Vec<usize> = self.entries[i].live_groups(side).map(|(g, _)| g).collect();
                for g in gs {
                    self.tombstone(i, side, g);
                }
                self.mark(i, Restage::Contrast);
                format!("cleared R{i}.{}", side.as_str())
            }
            Step::Tombstone(i, side, g) => {
                let center = self.entries[i].cluster.groups(side)[g].center.clone();
                self.tombstone(i, side, g);
                self.mark(i, Restage::Contrast);
                format!("dropped {center:?} from R{i}.{}", side.as_str())
            }
            Step::SetSide {
                row,
                side,
                value,
                evidence,
                url,
                entity_id,
            } => {
                let attribute = self.entries[row].cluster.canonical_attribute.clone();
                let values = self.entries[row].cluster.values_mut(side);
                values.push(Extraction {
                    attribute,
                    value: value.clone(),
                    evidence,
                    source_url: url,
                    entity_id,
                    tile_id: format!("revision-{}", self.rounds),
                });
                let idx = values.len() - 1;
                self.entries[row].cluster.groups_mut(side).push(ValueGroup {
                    center: value.clone(),
                    members: vec![idx],
                });
                self.mark(row, Restage::Contrast);
                format!("R{row}.{} set to {value:?}", side.as_str())
            }
            Step::Split(i, side, g, parts) => {
                let members = self.entries[i].cluster.groups(side)[g].members.clone();
                self.tombstone(i, side, g);
                for part in &parts {
                    let p = nfc(part);
                    let copies: Vec<Extraction> = members
                        .iter()
                        .map(|&m| &self.entries[i].cluster.values(side)[m])
                        .filter(|e| nfc(&e.evidence).contains(&p))
                        .map(|e| Extraction {
                            value: part.clone(),
                            ..e.clone()
                        })
                        .collect();
                    let values = self.entries[i].cluster.values_mut(side);
                    let start = values.len();
                    values.extend(copies);
                    let end = values.len();
                    self.entries[i].cluster.groups_mut(side).push(ValueGroup {
                        center: part.clone(),
                        members: (start..end).collect(),
                    });
                }
                self.mark(i, Restage::Contrast);
                format!("split R{i}.{}.{g} into {} parts", side.as_str(), parts.len())
            }
            Step::MergeRows(i, j) => {
                let from = self.entries[j].cluster.clone();
                for side in [Side::A, Side::B] {
                    let offset = self.entries[i].cluster.values(side).len();
                    for m in 0..from.values(side).len() {
                        if self.dead.remove(&(j, side, m)) {
                            self.dead.insert((i, side, m + offset));
                        }
                    }
                    self.entries[i].cluster.values_mut(side).extend(from.values(side).iter().cloned());
                    for g in from.groups(side) {
                        self.entries[i].cluster.groups_mut(side).push(ValueGroup {
                            center: g.center.clone(),
                            members: g.members.iter().map(|m| m + offset).collect(),
                        });
                    }
                }
                let into = &mut self.entries[i].cluster;
                for m in &from.member_attributes {
                    if !into.member_attributes.iter().any(|x| member_key(x) == member_key(m)) {
                        into.member_attributes.push(m.clone());
                    }
                }
                into.canonical_attribute = cluster_center(&into.member_attributes);
                let name = into.canonical_attribute.clone();
                self.entries[j].removed = Some(format!("{}: merged into {name:?}", critique.kind));
                self.dirty.remove(&j);
                self.mark(i, Restage::ValueMerge);
                format!("merged R{j} into R{i}")
            }
            Step::MergeGroups(i, side, g, h) => {
                let moved = std::mem::take(&mut self.entries[i].cluster.groups_mut(side)[h].members);
                self.entries[i].cluster.groups_mut(side)[g].members.extend(moved);
                self.mark(i, Restage::Contrast);
                format!("merged R{i}.{}.{h} into group {g}", side.as_str())
            }
            Step::Regroup(i, members) => {
                let moved: HashSet<String> = members.iter().map(|m| member_key(m)).collect();
                let mut fresh = AttributeCluster {
                    canonical_attribute: String::new(),
                    member_attributes: Vec::new(),
                    values_a: Vec::new(),
                    values_b: Vec::new(),
                    groups_a: Vec::new(),
                    groups_b: Vec::new(),
                };
                let (keep, gone): (Vec<String>, Vec<String>) = self.entries[i]
                    .cluster
                    .member_attributes
                    .iter()
                    .cloned()
                    .partition(|m| !moved.contains(&member_key(m)));
                fresh.member_attributes = gone;
                fresh.canonical_attribute = cluster_center(&fresh.member_attributes);
                for side in [Side::A, Side::B] {
                    let n = self.entries[i].cluster.values(side).len();
                    let mut out = Vec::new();
                    for m in 0..n {
                        let e = &self.entries[i].cluster.values(side)[m];
                        if moved.contains(&member_key(&e.attribute)) && !self.dead.contains(&(i, side, m)) {
                            out.push(e.clone());
                            self.dead.insert((i, side, m));
                        }
                    }
                    *fresh.values_mut(side) = out;
                    let dead = &self.dead;
                    for g in self.entries[i].cluster.groups_mut(side) {
                        g.members.retain(|m| !dead.contains(&(i, side, *m)));
                    }
                }
                let cluster = &mut self.entries[i].cluster;
                cluster.member_attributes = keep;
                cluster.canonical_attribute = cluster_center(&cluster.member_attributes);
                let level = self.entries[i].level;
                let name = fresh.canonical_attribute.clone();
                self.entries.push(CompareEntry {
                    cluster: fresh,
                    level,
                    removed: None,
                });
                let new_row = self.entries.len() - 1;
                self.mark(i, Restage::ValueMerge);
                self.mark(new_row, Restage::ValueMerge);
                format!("moved {name:?} out of R{i} into R{new_row}")
            }
        }
    }

    /// Drop dead extractions and emptied groups, renumbering what is left.
    fn compact(&mut self) {
        for i in 0..self.entries.len() {
            for side in [Side::A, Side::B] {
                let cluster = &mut self.entries[i].cluster;
                let n = cluster.values(side).len();
                let mut remap = vec![usize::MAX; n];
                let mut kept = Vec::new();
                for (m, e) in cluster.values(side).iter().enumerate() {
                    if !self.dead.contains(&(i, side, m)) {
                        remap[m] = kept.len();
                        kept.push(e.clone());
                    }
                }
                *cluster.values_mut(side) = kept;
                let groups = std::mem::take(cluster.groups_mut(side));
                let values = cluster.values(side).clone();
                *cluster.groups_mut(side) = groups
                    .into_iter()
                    .filter_map(|mut g| {
                        g.members = g.members.iter().map(|m| remap[*m]).filter(|m| *m != usize::MAX).collect();
                        if g.members.is_empty() {
                            return None;
                        }
                        if !g.members.iter().any(|&m| values[m].value == g.center) {
                            g.center = values[g.members[0]].value.clone();
                        }
                        Some(g)
                    })
                    .collect();
            }
        }
        self.dead.clear();
    }
}

impl CrState for CompareState<'_> {
    fn scope(&self) -> Scope {
        Scope::Compare
    }

    fn label(&self) -> String {
        "compare".into()
    }

    fn items(&self) -> Vec<usize> {
        (0..self.entries.len()).filter(|i| self.entries[*i].removed.is_none()).collect()
    }

    fn payload(&self, items: &[usize]) -> CritiqueInput {
        let rows = items
            .iter()
            .filter_map(|&i| {
                let e = self.live(i)?;
                let mut groups = Vec::new();
                for side in [Side::A, Side::B] {
                    for (g, group) in e.live_groups(side) {
                        groups.push(GroupInput {
                            side,
                            index: g,
                            value: group.center.clone(),
                            support: group.members.len() as u32,
                        });
                    }
                }
                Some(CompareRowInput {
                    index: i,
                    attribute: e.cluster.canonical_attribute.clone(),
                    level: e.level,
                    members: e.cluster.member_attributes.clone(),
                    groups,
                })
            })
            .collect();
        CritiqueInput::Compare { rows }
    }

    fn has_target(&self, target: &Target) -> bool {
        match *target {
            Target::Extraction(_) => false,
            Target::Row(i) | Target::Side(i, _) => self.live(i).is_some(),
            Target::Group(i, side, g) => self.group(i, side, g).is_some(),
        }
    }

    fn target_digest(&self, target: &Target) -> String {
        let Some(e) = target.row().and_then(|i| self.live(i)) else {
            return String::new();
        };
        let centers = |side: Side| -> Vec<String> { e.live_groups(side).map(|(_, g)| g.center.clone()).collect() };
        let text = match *target {
            Target::Row(_) => format!(
                "{}\t{:?}\t{:?}",
                e.cluster.canonical_attribute,
                centers(Side::A),
                centers(Side::B)
            ),
            Target::Side(_, side) => format!("{}\t{}\t{:?}", e.cluster.canonical_attribute, side.as_str(), centers(side)),
            Target::Group(i, side, g) => match self.group(i, side, g) {
                Some(group) => format!("{}\t{}\t{}", e.cluster.canonical_attribute, side.as_str(), group.center),
                None => return String::new(),
            },
            Target::Extraction(_) => return String::new(),
        };
        digest(&text)
    }

    fn sources_for(&self, critique: &Critique) -> Vec<SourceLine> {
        if critique.kind != CritiqueKind::OrthogonalValues {
            return Vec::new();
        }
        let Some(e) = critique.target.row().and_then(|i| self.live(i)) else {
            return Vec::new();
        };
        let words: HashSet<String> = e
            .cluster
            .member_attributes
            .iter()
            .flat_map(|m| phrase_key(m).split(' ').map(str::to_string).collect::<Vec<_>>())
            .collect();
        let mut out = Vec::new();
        for side in [Side::A, Side::B] {
            for d in &self.docs[side_ix(side)] {
                for s in &d.essential_sentences {
                    if phrase_key(&s.text).split(' ').any(|w| words.contains(w)) {
                        out.push(SourceLine {
                            side: Some(side),
                            url: s.doc_url.clone(),
                            text: s.text.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    fn apply(&mut self, critique: &Critique, edits: &[Edit]) -> Result<String, String> {
        let mut steps = Vec::new();
        for edit in edits {
            if let Some(step) = self.plan(edit)? {
                steps.push(step);
            }
        }
        let mut cleared: HashSet<(usize, Side)> = HashSet::new();
        let mut actions = Vec::new();
        for step in steps {
            if let Step::SetSide { row, side, .. } = &step {
                if cleared.insert((*row, *side)) {
                    let gs: Vec<usize> = self.entries[*row].live_groups(*side).map(|(g, _)| g).collect();
                    for g in gs {
                        self.tombstone(*row, *side, g);
                    }
                }
            }
            let still_live = match &step {
                Step::DeleteRow(i) | Step::MergeRows(i, _) | Step::Regroup(i, _) | Step::SetSide { row: i, .. } => {
                    self.live(*i).is_some()
                }
                Step::Tombstone(i, s, g) => {
                    self.live(*i).is_some() && (*g == usize::MAX || self.group(*i, *s, *g).is_some())
                }
                Step::Split(i, s, g, _) => self.group(*i, *s, *g).is_some(),
                Step::MergeGroups(i, s, g, h) => self.group(*i, *s, *g).is_some() && self.group(*i, *s, *h).is_some(),
            };
            if still_live {
                actions.push(self.run(step, critique));
            }
        }
        Ok(if actions.is_empty() {
            "nothing left to change".into()
        } else {
            actions.join("; ")
        })
    }

    fn settle(&mut self, runner: &StageRunner) -> Result<Vec<String>, GatewayError> {
        self.rounds += 1;
        self.compact();
        let mut warnings = Vec::new();
        let dirty: Vec<(usize, Restage)> = std::mem::take(&mut self.dirty)
            .into_iter()
            .filter(|(i, _)| self.live(*i).is_some())
            .collect();
        let remerge: Vec<usize> = dirty.iter().filter(|(_, r)| *r == Restage::ValueMerge).map(|(i, _)| *i).collect();
        let round = self.rounds;
        let merged = {
            let clusters: Vec<&AttributeCluster> = remerge.iter().map(|&i| &self.entries[i].cluster).collect();
            parallel_map(&clusters, runner.gateway().max_parallel(), |n, c| {
                value_merge_cluster(runner, &format!("cr{round}-vm{n:04}"), c, self.threshold)
            })
        };
        for (&i, result) in remerge.iter().zip(merged) {
            self.entries[i].cluster = result?;
        }
        for (i, _) in &dirty {
            let e = &mut self.entries[*i];
            if e.cluster.values_a.is_empty() && e.cluster.values_b.is_empty() {
                e.removed = Some("no values left after revision".into());
                warnings.push(format!("R{i} {:?} lost all values", e.cluster.canonical_attribute));
            }
        }
        for e in &mut self.entries {
            if e.removed.is_none() && e.cluster.groups_a.is_empty() && e.cluster.groups_b.is_empty() {
                e.removed = Some("no values left after revision".into());
            }
        }
        let recontrast: Vec<usize> = dirty.iter().map(|(i, _)| *i).filter(|i| self.live(*i).is_some()).collect();
        if !recontrast.is_empty() {
            let clusters: Vec<&AttributeCluster> = recontrast.iter().map(|&i| &self.entries[i].cluster).collect();
            let levels = contrast_levels(runner, &format!("cr{round}"), &clusters)?;
            for (&i, level) in recontrast.iter().zip(levels) {
                self.entries[i].level = level;
            }
        }
        Ok(warnings)
    }
}
