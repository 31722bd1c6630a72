//! Training-data export for distillation.
//!
//! Each run leaves training candidates: the stage payload a model saw and
//! the revised stage output it should have produced. Export samples them
//! into a task mixture and writes JSON lines:
//!
//! ```json
//! {"task_tag":"EXTRACT","input_text":"...","target_text":"...","provenance":{"run_id":"...","trace_digest":"..."}}
//! ```
//!
//! `trace_digest` is the input digest of the stage trace that consumed
//! `input_text`, so it can be looked up in the run's `traces.json`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

use crate::gateway::grammar::parse_compare_target;
use crate::gateway::{parse_stage_output, StageTag};
use crate::text::digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskTag {
    Extract,
    AttributeMerge,
    Compare,
}

impl TaskTag {
    pub const ALL: [TaskTag; 3] = [TaskTag::Extract, TaskTag::AttributeMerge, TaskTag::Compare];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskTag::Extract => "EXTRACT",
            TaskTag::AttributeMerge => "ATTRIBUTE_MERGE",
            TaskTag::Compare => "COMPARE",
        }
    }

    pub fn parse(s: &str) -> Option<TaskTag> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

/// Check that `target` parses under the grammar of its task.
pub fn validate_target(task: TaskTag, target: &str) -> Result<(), String> {
    match task {
        TaskTag::Extract => parse_stage_output(StageTag::Extract, target).map(|_| ()).map_err(|e| e.to_string()),
        TaskTag::AttributeMerge => parse_stage_output(StageTag::AttributeMerge, target)
            .map(|_| ())
            .map_err(|e| e.to_string()),
        TaskTag::Compare => parse_compare_target(target).map(|_| ()),
    }
}

/// One exportable (payload, revised output) pair from a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingCandidate {
    pub task_tag: TaskTag,
    pub input_text: String,
    pub target_text: String,
    pub trace_digest: String,
}

impl TrainingCandidate {
    pub fn new(task_tag: TaskTag, input_text: String, target_text: String) -> Self {
        Self {
            task_tag,
            trace_digest: digest(&input_text),
            input_text,
            target_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub run_id: String,
    pub trace_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub task_tag: TaskTag,
    pub input_text: String,
    pub target_text: String,
    pub provenance: Provenance,
}

/// What export needs from one finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub run_id: String,
    pub cr_enabled: bool,
    pub candidates: Vec<TrainingCandidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMix {
    pub ratios: BTreeMap<TaskTag, u32>,
}

impl Default for TaskMix {
    fn default() -> Self {
        Self {
            ratios: [(TaskTag::Extract, 30), (TaskTag::AttributeMerge, 1), (TaskTag::Compare, 30)]
                .into_iter()
                .collect(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExportError {
    #[error("invalid task mix: {0}")]
    InvalidMix(String),
}

impl TaskMix {
    pub fn validate(&self) -> Result<(), ExportError> {
        if self.ratios.is_empty() {
            return Err(ExportError::InvalidMix("no tasks".into()));
        }
        if let Some((t, _)) = self.ratios.iter().find(|(_, w)| **w == 0) {
            return Err(ExportError::InvalidMix(format!("{} has zero weight", t.as_str())));
        }
        Ok(())
    }

    /// Parse `EXTRACT:30,ATTRIBUTE_MERGE:1,COMPARE:30`.
    pub fn parse(s: &str) -> Result<Self, ExportError> {
        let mut ratios = BTreeMap::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (tag, w) = part
                .split_once(':')
                .ok_or_else(|| ExportError::InvalidMix(format!("{part:?} is not TASK:WEIGHT")))?;
            let tag = TaskTag::parse(tag.trim())
                .ok_or_else(|| ExportError::InvalidMix(format!("unknown task {tag:?}")))?;
            let w: u32 = w
                .trim()
                .parse()
                .map_err(|_| ExportError::InvalidMix(format!("bad weight in {part:?}")))?;
            ratios.insert(tag, w);
        }
        let mix = Self { ratios };
        mix.validate()?;
        Ok(mix)
    }
}

/// Largest-remainder apportionment of `total` over the mix weights. Equal
/// remainders go to tasks in declaration order.
pub fn apportion(mix: &TaskMix, total: usize) -> BTreeMap<TaskTag, usize> {
    let sum: u64 = mix.ratios.values().map(|w| u64::from(*w)).sum();
    let mut out = BTreeMap::new();
    if sum == 0 {
        return out;
    }
    let mut rems: Vec<(u64, TaskTag)> = Vec::new();
    let mut given = 0usize;
    for (t, w) in &mix.ratios {
        let exact = total as u64 * u64::from(*w);
        let q = (exact / sum) as usize;
        out.insert(*t, q);
        given += q;
        rems.push((exact % sum, *t));
    }
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, t) in rems.into_iter().take(total - given) {
        *out.get_mut(&t).expect("task present") += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub task_tag: TaskTag,
    pub wanted: usize,
    pub available: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportReport {
    pub examples: Vec<TrainingExample>,
    pub counts: BTreeMap<TaskTag, usize>,
    pub shortfalls: Vec<Shortfall>,
    pub warnings: Vec<String>,
}

/// Sample `target_count` examples across `runs` in the proportions of
/// `mix`, without replacement inside a task. A task short of candidates
/// contributes what it has; the others are not topped up.
pub fn export_training_mix(
    runs: &[RunArtifacts],
    mix: &TaskMix,
    target_count: usize,
    seed: u64,
) -> Result<ExportReport, ExportError> {
    mix.validate()?;
    let mut report = ExportReport::default();
    let mut pools: BTreeMap<TaskTag, Vec<TrainingExample>> = BTreeMap::new();
    for run in runs {
        if !run.cr_enabled {
            report
                .warnings
                .push(format!("run {} was produced without critique and revision", run.run_id));
        }
        for c in &run.candidates {
            if let Err(e) = validate_target(c.task_tag, &c.target_text) {
                report
                    .warnings
                    .push(format!("run {}: skipped {} example: {e}", run.run_id, c.task_tag.as_str()));
                continue;
            }
            pools.entry(c.task_tag).or_default().push(TrainingExample {
                task_tag: c.task_tag,
                input_text: c.input_text.clone(),
                target_text: c.target_text.clone(),
                provenance: Provenance {
                    run_id: run.run_id.clone(),
                    trace_digest: c.trace_digest.clone(),
                },
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (task, wanted) in apportion(mix, target_count) {
        let pool = pools.remove(&task).unwrap_or_default();
        let take = wanted.min(pool.len());
        if take < wanted {
            report.shortfalls.push(Shortfall {
                task_tag: task,
                wanted,
                available: pool.len(),
            });
            report.warnings.push(format!(
                "{}: wanted {wanted} examples, only {} available",
                task.as_str(),
                pool.len()
            ));
        }
        let mut picked = sample(&mut rng, pool.len(), take).into_vec();
        picked.sort_unstable();
        report.counts.insert(task, take);
        report.examples.extend(picked.into_iter().map(|i| pool[i].clone()));
    }
    Ok(report)
}

pub fn write_jsonl(examples: &[TrainingExample], mut w: impl Write) -> std::io::Result<()> {
    for e in examples {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
