use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use super::{Critique, CritiqueKind, Scope, Target};
use crate::gateway::grammar::{Edit, StageOutput};
use crate::gateway::payload::{CritiqueInput, ReviseInput, SourceLine};
use crate::gateway::{GatewayError, StageTag};
use crate::par::parallel_map;
use crate::pipeline::StageRunner;

/// A payload that can be criticized and revised in place.
///
/// Item and target indices must stay stable until [`CrState::settle`],
/// which may renumber them.
pub trait CrState {
    fn scope(&self) -> Scope;

    /// Short label used in trace keys.
    fn label(&self) -> String;

    /// Live item ids in critique order.
    fn items(&self) -> Vec<usize>;

    /// Critique payload covering `items`.
    fn payload(&self, items: &[usize]) -> CritiqueInput;

    fn has_target(&self, target: &Target) -> bool;

    /// Content digest of a target, stable across renumbering.
    fn target_digest(&self, target: &Target) -> String;

    /// Source sentences a reviser may draw on for this critique.
    fn sources_for(&self, critique: &Critique) -> Vec<SourceLine>;

    /// Apply one revision atomically. `Err` leaves the state untouched and
    /// carries the rejection reason.
    fn apply(&mut self, critique: &Critique, edits: &[Edit]) -> Result<String, String>;

    /// End of an iteration: drop deleted items and re-run whatever stages
    /// the edits invalidated.
    fn settle(&mut self, runner: &StageRunner) -> Result<Vec<String>, GatewayError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrLogRecord {
    pub scope: Scope,
    pub payload: String,
    pub iteration: u32,
    pub kind: CritiqueKind,
    pub target: String,
    pub target_digest: String,
    pub note: String,
    pub action: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RevisionResult {
    pub applied: Vec<Critique>,
    /// Revise passes made; a clean first critique still counts one pass.
    pub iterations_used: u32,
    pub log: Vec<CrLogRecord>,
    pub warnings: Vec<String>,
}

/// Split the items into payloads that each fit one CRITIQUE call.
fn chunks(state: &dyn CrState, runner: &StageRunner) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for item in state.items() {
        current.push(item);
        if current.len() > 1 && !runner.fits(StageTag::Critique, &state.payload(&current).render()) {
            current.pop();
            out.push(std::mem::take(&mut current));
            current.push(item);
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Run CRITIQUE over every chunk. Critiques come back sorted by kind, then
/// target, with invalid or out-of-scope ones dropped.
pub fn critique(
    state: &dyn CrState,
    runner: &StageRunner,
    iteration: u32,
    warnings: &mut Vec<String>,
) -> Result<(Vec<(Critique, usize)>, Vec<Vec<usize>>), GatewayError> {
    let chunks = chunks(state, runner);
    let payloads: Vec<String> = chunks.iter().map(|c| state.payload(c).render()).collect();
    let label = state.label();
    let results = parallel_map(&payloads, runner.gateway().max_parallel(), |i, p| {
        runner.run(StageTag::Critique, &format!("{label}-it{iteration}-c{i:04}"), p, &[])
    });
    let mut found = Vec::new();
    for (chunk, result) in results.into_iter().enumerate() {
        let StageOutput::Critique(records) = result?.output else {
            unreachable!("stage output matches its tag")
        };
        for c in records {
            if c.kind.scope() != state.scope() {
                warnings.push(format!("dropped {} critique outside the {} scope", c.kind, state.scope().as_str()));
            } else if !state.has_target(&c.target) || !chunks[chunk].contains(&item_of(&c.target)) {
                warnings.push(format!("dropped {} critique on unknown target {}", c.kind, c.target));
            } else {
                found.push((c, chunk));
            }
        }
    }
    found.sort_by(|(a, _), (b, _)| (a.kind, a.target).cmp(&(b.kind, b.target)));
    found.dedup_by(|(a, _), (b, _)| a.kind == b.kind && a.target == b.target);
    Ok((found, chunks))
}

fn item_of(target: &Target) -> usize {
    match *target {
        Target::Extraction(i) | Target::Row(i) | Target::Side(i, _) | Target::Group(i, _, _) => i,
    }
}

fn revise_once(
    state: &mut dyn CrState,
    runner: &StageRunner,
    critique: &Critique,
    items: &[usize],
    key: &str,
) -> Result<Result<String, String>, GatewayError> {
    let alive: HashSet<usize> = state.items().into_iter().collect();
    let live: Vec<usize> = items.iter().copied().filter(|i| alive.contains(i)).collect();
    let mut input = ReviseInput {
        base: state.payload(&live),
        critique: critique.clone(),
        sources: state.sources_for(critique),
    };
    while !runner.fits(StageTag::Revise, &input.render()) && input.sources.pop().is_some() {}
    let label = format!("{} {} {}", critique.kind, critique.target, critique.note);
    let call = runner.run(StageTag::Revise, key, &input.render(), &[label])?;
    let StageOutput::Revise(edits) = call.output else {
        unreachable!("stage output matches its tag")
    };
    if edits.is_empty() {
        return Ok(Err("reviser proposed no edit".into()));
    }
    Ok(state.apply(critique, &edits))
}

/// Alternate critique and revision until the critique set is empty, equals
/// the previous one, or `max_iterations` revise passes have run.
pub fn refine_loop(
    state: &mut dyn CrState,
    runner: &StageRunner,
    max_iterations: u32,
) -> Result<RevisionResult, GatewayError> {
    let mut result = RevisionResult::default();
    let mut previous: Option<Vec<(CritiqueKind, String)>> = None;
    let label = state.label();
    for iteration in 1..=max_iterations.max(1) {
        runner.next_phase();
        let (found, chunk_items) = critique(&*state, runner, iteration, &mut result.warnings)?;
        if found.is_empty() {
            break;
        }
        let signature: Vec<(CritiqueKind, String)> =
            found.iter().map(|(c, _)| (c.kind, state.target_digest(&c.target))).collect();
        if previous.as_ref() == Some(&signature) {
            result
                .warnings
                .push(format!("{label}: critiques unchanged after a revision, stopping"));
            break;
        }
        result.iterations_used = iteration;
        let mut requeue = Vec::new();
        for (n, (c, chunk)) in found.iter().enumerate() {
            let items = chunk_items.get(*chunk).cloned().unwrap_or_default();
            let digest = state.target_digest(&c.target);
            if !state.has_target(&c.target) {
                continue;
            }
            let key = format!("{label}-it{iteration}-r{n:04}");
            match revise_once(state, runner, c, &items, &key)? {
                Ok(action) => {
                    result.applied.push(c.clone());
                    result.log.push(log_record(&label, state.scope(), iteration, c, digest, action));
                }
                Err(reason) => requeue.push((n, c.clone(), items, digest, reason)),
            }
        }
        for (n, c, items, digest, first_reason) in requeue {
            if !state.has_target(&c.target) {
                continue;
            }
            let key = format!("{label}-it{iteration}-q{n:04}");
            match revise_once(state, runner, &c, &items, &key)? {
                Ok(action) => {
                    result.applied.push(c.clone());
                    result.log.push(log_record(&label, state.scope(), iteration, &c, digest, action));
                }
                Err(reason) => {
                    result.warnings.push(format!(
                        "{label}: revision for {} on {} rejected twice ({first_reason}; {reason})",
                        c.kind, c.target
                    ));
                    result
                        .log
                        .push(log_record(&label, state.scope(), iteration, &c, digest, format!("rejected: {reason}")));
                }
            }
        }
        result.warnings.extend(state.settle(runner)?);
        previous = Some(signature);
    }
    result.iterations_used = result.iterations_used.max(1);
    Ok(result)
}

fn log_record(
    label: &str,
    scope: Scope,
    iteration: u32,
    c: &Critique,
    target_digest: String,
    action: String,
) -> CrLogRecord {
    CrLogRecord {
        scope,
        payload: label.to_string(),
        iteration,
        kind: c.kind,
        target: c.target.to_string(),
        target_digest,
        note: c.note.clone(),
        action,
    }
}
