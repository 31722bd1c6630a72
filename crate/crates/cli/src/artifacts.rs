//! Files of a run directory, `runs/<run_id>/`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use contrast_core::export::RunArtifacts;
use contrast_core::pipeline::render_markdown;
use contrast_core::{Corpus, PipelineConfig, RunOutput, StageTag, TrainingCandidate};
use serde::{Deserialize, Serialize};

use crate::config::GatewaySnapshot;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";
pub const SUMMARY_MD: &str = "summary.md";
pub const TRACES: &str = "traces.json";
pub const CR_LOG: &str = "cr_log.jsonl";
pub const TRAINING: &str = "training.jsonl";
pub const CORPUS: &str = "corpus.json";
pub const EVAL_REPORT: &str = "eval_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub a: String,
    pub b: String,
}

/// File names inside the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactPaths {
    pub summary: String,
    pub summary_markdown: String,
    pub traces: String,
    pub cr_log: String,
    pub training: String,
    pub corpus: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub query: Query,
    pub corpus_digest: String,
    pub backend_id: String,
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub gateway: GatewaySnapshot,
    pub template_versions: BTreeMap<StageTag, String>,
    pub artifacts: ArtifactPaths,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        read_json(&dir.join(MANIFEST))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_json(&dir.join(MANIFEST), self)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::EvalInput(format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(CliError::io(format!("writing {}", path.display())))
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("artifact serializes");
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(CliError::io(format!("writing {}", path.display())))
}

/// Persist a finished run and return its directory.
pub fn write_run(
    out_root: &Path,
    manifest: &RunManifest,
    output: &RunOutput,
    corpus: &Corpus,
) -> Result<PathBuf, CliError> {
    let dir = out_root.join(&manifest.run_id);
    std::fs::create_dir_all(&dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    let summary = output.summary.without_timing();
    write_json(&dir.join(SUMMARY), &summary)?;
    write_text(&dir.join(SUMMARY_MD), &render_markdown(&summary))?;
    write_json(&dir.join(TRACES), &output.traces)?;
    write_lines(&dir.join(CR_LOG), &output.cr_log)?;
    write_lines(&dir.join(TRAINING), &output.training)?;
    write_json(&dir.join(CORPUS), corpus)?;
    manifest.write(&dir)?;
    Ok(dir)
}

/// Training candidates of a run directory, ready for export.
pub fn read_run_artifacts(dir: &Path) -> Result<RunArtifacts, CliError> {
    let manifest = RunManifest::read(dir)?;
    let path = dir.join(&manifest.artifacts.training);
    let text = std::fs::read_to_string(&path).map_err(CliError::io(format!("reading {}", path.display())))?;
    let candidates = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<TrainingCandidate>(l))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::EvalInput(format!("{}: {e}", path.display())))?;
    Ok(RunArtifacts {
        run_id: manifest.run_id,
        cr_enabled: manifest.pipeline.cr_enabled,
        candidates,
    })
}

/// Run directories under `root`, sorted by name.
pub fn run_dirs(root: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.join(MANIFEST).is_file())
        .collect();
    dirs.sort();
    dirs
}
