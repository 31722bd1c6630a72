//! End-to-end orchestration: corpus → tiles → extraction → clustering →
//! value merging → contrast → usefulness → ranked summary, with optional
//! critique-and-revision passes after extraction and after contrast.

mod render;
mod stages;
mod trace;

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

use crate::critique::{refine_loop, CompareEntry, CompareState, CrLogRecord, ExtractState};
use crate::export::{TaskTag, TrainingCandidate};
use crate::gateway::grammar::{render_stage_output, CompareTarget, ExtractedItem, StageOutput, StructuredExtractionList};
use crate::gateway::{Gateway, GatewayError, StageTag};
use crate::ingest::{load_corpus, Corpus, CorpusEntity, CorpusError};
use crate::model::{
    validate_summary, AttributeCluster, ComparisonRow, ComparisonSummary, ContrastLevel, Extraction, RunMetadata,
    Side, SourceDocument, Violation,
};
use crate::par::parallel_map;
use crate::text::{digest, member_key};
use crate::tile::{extract_essential_sentences, tile, TileError, TokenBudget};

pub use render::render_markdown;
pub use stages::{
    attribute_groups, attribute_payload, contrast_levels, contrast_row, importance, lm_attribute_merge, lm_extract,
    lm_usefulness, rank_rows, row_payload, value_merge_cluster, value_merge_payload, ExtractOutcome, RemovedRow,
};
pub use trace::{StageRunner, StageTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankWeights {
    pub contrast: f64,
    pub popularity: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        Self {
            contrast: 0.5,
            popularity: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub budget: TokenBudget,
    pub webpages_per_entity: usize,
    pub cr_enabled: bool,
    pub cr_max_iterations: u32,
    pub majority_threshold: f64,
    pub rank_weights: RankWeights,
    pub top_k_rows: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            budget: TokenBudget::default(),
            webpages_per_entity: 10,
            cr_enabled: true,
            cr_max_iterations: 3,
            majority_threshold: 0.5,
            rank_weights: RankWeights::default(),
            top_k_rows: 10,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if let Err(e) = self.budget.effective() {
            return bad(e.to_string());
        }
        if !(5..=20).contains(&self.webpages_per_entity) {
            return bad(format!("webpages_per_entity {} outside 5..=20", self.webpages_per_entity));
        }
        if self.cr_max_iterations == 0 {
            return bad("cr_max_iterations must be at least 1".into());
        }
        if !(0.5..=1.0).contains(&self.majority_threshold) {
            return bad(format!("majority_threshold {} outside [0.5, 1]", self.majority_threshold));
        }
        let w = self.rank_weights;
        if !(w.contrast >= 0.0 && w.popularity >= 0.0) || ((w.contrast + w.popularity) - 1.0).abs() > 1e-9 {
            return bad(format!(
                "rank weights {} and {} must be non-negative and sum to 1",
                w.contrast, w.popularity
            ));
        }
        if self.top_k_rows == 0 {
            return bad("top_k_rows must be at least 1".into());
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        digest(&serde_json::to_string(self).expect("config serializes"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("entity {0:?} not in corpus")]
    MissingEntity(String),
    #[error(transparent)]
    Tile(#[from] TileError),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: StageTag,
        #[source]
        source: GatewayError,
    },
    #[error("summary failed validation: {0:?}")]
    Invalid(Vec<Violation>),
}

impl PipelineError {
    fn stage(stage: StageTag) -> impl FnOnce(GatewayError) -> PipelineError {
        move |source| {
            let stage = match &source {
                GatewayError::Parse(p) => p.stage,
                _ => stage,
            };
            PipelineError::Stage { stage, source }
        }
    }
}

/// Everything a run produces besides the summary itself.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: ComparisonSummary,
    pub corpus: Vec<SourceDocument>,
    /// Per-side extractions after extract-scope revision.
    pub extractions: [Vec<Extraction>; 2],
    pub traces: Vec<StageTrace>,
    pub cr_log: Vec<CrLogRecord>,
    pub training: Vec<TrainingCandidate>,
    pub removed_rows: Vec<RemovedRow>,
    pub warnings: Vec<String>,
    pub latencies: BTreeMap<StageTag, Vec<f64>>,
    pub cr_iterations: BTreeMap<String, u32>,
}

/// Run id for a (corpus, query, config, backend) combination; reruns of the
/// same inputs land in the same place.
pub fn run_id(corpus: &Corpus, a: &str, b: &str, config: &PipelineConfig, backend_id: &str) -> String {
    let key = format!("{}\u{1f}{a}\u{1f}{b}\u{1f}{}\u{1f}{backend_id}", corpus.digest(), config.hash());
    digest(&key)[..16].to_string()
}

pub fn run_pipeline_from_path(
    corpus_path: &Path,
    a: &str,
    b: &str,
    gateway: &Gateway,
    config: &PipelineConfig,
) -> Result<RunOutput, PipelineError> {
    let corpus = load_corpus(corpus_path, None)?;
    run_pipeline(&corpus, a, b, gateway, config)
}

struct Prepared<'c> {
    entity: &'c CorpusEntity,
    docs: Vec<SourceDocument>,
}

fn prepare<'c>(
    corpus: &'c Corpus,
    name: &str,
    gateway: &Gateway,
    config: &PipelineConfig,
) -> Result<Prepared<'c>, PipelineError> {
    let entity = corpus
        .find_entity(name)
        .ok_or_else(|| PipelineError::MissingEntity(name.to_string()))?;
    let mut docs: Vec<SourceDocument> = corpus
        .documents_of(&entity.entity.id)
        .take(config.webpages_per_entity)
        .cloned()
        .collect();
    if docs.is_empty() {
        return Err(PipelineError::MissingEntity(name.to_string()));
    }
    for d in &mut docs {
        d.essential_sentences = extract_essential_sentences(d, gateway.tokenizer())?;
    }
    Ok(Prepared { entity, docs })
}

/// Run the full pipeline for `a` vs `b` over an in-memory corpus.
pub fn run_pipeline(
    corpus: &Corpus,
    a: &str,
    b: &str,
    gateway: &Gateway,
    config: &PipelineConfig,
) -> Result<RunOutput, PipelineError> {
    let started = Instant::now();
    config.validate()?;
    let sides = [prepare(corpus, a, gateway, config)?, prepare(corpus, b, gateway, config)?];
    if sides[0].entity.entity.id == sides[1].entity.entity.id {
        return Err(PipelineError::Config(format!("{a:?} and {b:?} name the same entity")));
    }
    let names = [sides[0].entity.names(), sides[1].entity.names()];
    let mut warnings: Vec<String> = corpus.warnings.clone();
    let runner = StageRunner::new(gateway);

    let mut tilings = Vec::new();
    for s in &sides {
        let sentences: Vec<_> = s.docs.iter().flat_map(|d| d.essential_sentences.iter().cloned()).collect();
        let t = tile(&s.entity.entity.id, &sentences, &config.budget, gateway.tokenizer())?;
        warnings.extend(t.warnings.iter().cloned());
        tilings.push(t.tiles);
    }

    runner.next_phase();
    let outcomes: Vec<ExtractOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..2)
            .map(|k| {
                let (s, tiles, runner) = (&sides[k], &tilings[k], &runner);
                scope.spawn(move || {
                    let docs: Vec<&SourceDocument> = s.docs.iter().collect();
                    lm_extract(runner, &s.entity.entity.id, &s.entity.entity.display_name, tiles, &docs)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("extract worker panicked")).collect()
    });

    let mut cr_log = Vec::new();
    let mut cr_iterations = BTreeMap::new();
    let mut extractions: Vec<Vec<Extraction>> = Vec::new();
    let mut extract_payloads: Vec<Vec<(String, String)>> = Vec::new();
    for (k, mut outcome) in outcomes.into_iter().enumerate() {
        if outcome.payloads.is_empty() {
            if let Some(e) = outcome.first_error.take() {
                return Err(PipelineError::stage(StageTag::Extract)(e));
            }
        }
        warnings.extend(outcome.warnings);
        extract_payloads.push(outcome.payloads);
        let mut ex = outcome.extractions;
        if config.cr_enabled {
            let s = &sides[k];
            let mut state = ExtractState::new(
                s.entity.entity.id.clone(),
                names[k].clone(),
                names[1 - k].clone(),
                ex,
                s.docs.iter().collect(),
            );
            let result =
                refine_loop(&mut state, &runner, config.cr_max_iterations).map_err(PipelineError::stage(StageTag::Critique))?;
            cr_iterations.insert(format!("extract:{}", s.entity.entity.id), result.iterations_used);
            cr_log.extend(result.log);
            warnings.extend(result.warnings);
            ex = state.into_extractions();
        }
        extractions.push(ex);
    }

    runner.next_phase();
    let merge_input = attribute_payload(&extractions[0], &extractions[1]).render();
    let (clusters, merge_warnings) = lm_attribute_merge(&runner, &extractions[0], &extractions[1])
        .map_err(PipelineError::stage(StageTag::AttributeMerge))?;
    warnings.extend(merge_warnings);

    let docs_of = |k: usize| sides[k].docs.iter().collect::<Vec<_>>();
    let compare = lm_compare(&runner, clusters, [docs_of(0), docs_of(1)], &names, config)?;
    warnings.extend(compare.warnings);
    cr_log.extend(compare.cr_log);
    if let Some(n) = compare.cr_iterations {
        cr_iterations.insert("compare".into(), n);
    }

    let mut rows = compare.rows.clone();
    rows.truncate(config.top_k_rows);
    let all_docs: Vec<SourceDocument> = sides.iter().flat_map(|s| s.docs.iter().cloned()).collect();
    let traces = runner.traces();
    let summary = ComparisonSummary {
        entity_a: sides[0].entity.entity.clone(),
        entity_b: sides[1].entity.entity.clone(),
        rows,
        run_metadata: RunMetadata {
            backend_id: gateway.backend_id(),
            config_hash: config.hash(),
            duration_ms: Some(started.elapsed().as_millis() as u64),
            trace_ids: traces.iter().map(|t| t.id.clone()).collect(),
        },
    };
    let violations = validate_summary(&summary, &all_docs);
    if !violations.is_empty() {
        return Err(PipelineError::Invalid(violations));
    }

    let mut training = Vec::new();
    for (k, payloads) in extract_payloads.iter().enumerate() {
        for (tile_id, payload) in payloads {
            let items = extractions[k]
                .iter()
                .filter(|e| &e.tile_id == tile_id)
                .map(|e| ExtractedItem {
                    attribute: e.attribute.clone(),
                    value: e.value.clone(),
                    evidence: e.evidence.clone(),
                })
                .collect();
            training.push(TrainingCandidate::new(
                TaskTag::Extract,
                payload.clone(),
                render_stage_output(&StageOutput::Extract(StructuredExtractionList { items })),
            ));
        }
    }
    if !compare.entries.is_empty() {
        training.push(TrainingCandidate::new(
            TaskTag::AttributeMerge,
            merge_input,
            render_stage_output(&StageOutput::AttributeMerge(final_grouping(&compare.entries))),
        ));
    }
    training.extend(compare.examples);

    let [ex_a, ex_b]: [Vec<Extraction>; 2] = extractions.try_into().expect("two sides");
    Ok(RunOutput {
        summary,
        corpus: all_docs,
        extractions: [ex_a, ex_b],
        traces,
        cr_log,
        training,
        removed_rows: compare.removed,
        warnings,
        latencies: runner.latencies(),
        cr_iterations,
    })
}

/// The clustering after revision: live rows first, then whatever only a
/// removed row still covers.
fn final_grouping(entries: &[CompareEntry]) -> Vec<crate::gateway::grammar::AttributeGroup> {
    let mut covered: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    let live = entries.iter().filter(|e| e.removed.is_none());
    let dead = entries.iter().filter(|e| e.removed.is_some());
    for e in live.chain(dead) {
        let members: Vec<String> = e
            .cluster
            .member_attributes
            .iter()
            .filter(|m| covered.insert(member_key(m)))
            .cloned()
            .collect();
        if !members.is_empty() {
            out.push(crate::gateway::grammar::AttributeGroup {
                center: crate::gateway::deterministic::cluster_center(&members),
                members,
            });
        }
    }
    out
}

/// Output of [`lm_compare`].
#[derive(Debug, Clone, Default)]
pub struct CompareOutcome {
    /// Ranked, filtered, not yet truncated.
    pub rows: Vec<ComparisonRow>,
    pub entries: Vec<CompareEntry>,
    pub removed: Vec<RemovedRow>,
    pub cr_log: Vec<CrLogRecord>,
    pub cr_iterations: Option<u32>,
    pub warnings: Vec<String>,
    pub examples: Vec<TrainingCandidate>,
}

/// VALUE_MERGE, CONTRAST (plus compare-scope revision when enabled), ranking
/// and USEFULNESS, in that order.
pub fn lm_compare(
    runner: &StageRunner,
    clusters: Vec<AttributeCluster>,
    docs: [Vec<&SourceDocument>; 2],
    names: &[Vec<String>; 2],
    config: &PipelineConfig,
) -> Result<CompareOutcome, PipelineError> {
    let mut out = CompareOutcome::default();
    if clusters.is_empty() {
        return Ok(out);
    }
    runner.next_phase();
    let merged = parallel_map(&clusters, runner.gateway().max_parallel(), |n, c| {
        value_merge_cluster(runner, &format!("vm{n:04}"), c, config.majority_threshold)
    });
    let mut entries = Vec::new();
    let mut inputs = Vec::new();
    for (c, result) in clusters.iter().zip(merged) {
        let cluster = result.map_err(PipelineError::stage(StageTag::ValueMerge))?;
        inputs.push(value_merge_payload(c, config.majority_threshold).render());
        let empty = cluster.groups_a.is_empty() && cluster.groups_b.is_empty();
        entries.push(CompareEntry {
            cluster,
            level: ContrastLevel::Low,
            removed: empty.then(|| "no values kept".to_string()),
        });
    }

    runner.next_phase();
    let live: Vec<usize> = (0..entries.len()).filter(|i| entries[*i].removed.is_none()).collect();
    let refs: Vec<&AttributeCluster> = live.iter().map(|&i| &entries[i].cluster).collect();
    let levels = contrast_levels(runner, "rows", &refs).map_err(PipelineError::stage(StageTag::Contrast))?;
    for (&i, level) in live.iter().zip(levels) {
        entries[i].level = level;
    }

    if config.cr_enabled {
        let [docs_a, docs_b] = docs.clone();
        let mut state = CompareState::new(entries, docs_a, docs_b, config.majority_threshold);
        let result =
            refine_loop(&mut state, runner, config.cr_max_iterations).map_err(PipelineError::stage(StageTag::Critique))?;
        out.cr_iterations = Some(result.iterations_used);
        out.cr_log = result.log;
        out.warnings.extend(result.warnings);
        entries = state.into_entries();
    }

    let rank_of: HashMap<(String, String), u32> = docs
        .iter()
        .flatten()
        .map(|d| ((d.entity_id.clone(), d.url.clone()), d.search_rank))
        .collect();
    let scored: Vec<(&AttributeCluster, ContrastLevel)> = entries
        .iter()
        .filter(|e| e.removed.is_none())
        .map(|e| (&e.cluster, e.level))
        .collect();
    let ranked = rank_rows(&scored, &rank_of, config.rank_weights);

    runner.next_phase();
    let (rows, removed) =
        lm_usefulness(runner, ranked, &names[0], &names[1]).map_err(PipelineError::stage(StageTag::Usefulness))?;
    for e in &entries {
        if let Some(reason) = &e.removed {
            out.removed.push(RemovedRow {
                attribute: e.cluster.canonical_attribute.clone(),
                stage: "COMPARE".into(),
                reason: reason.clone(),
            });
        }
    }
    out.removed.extend(removed);

    let by_attr: HashMap<&str, &ComparisonRow> = rows.iter().map(|r| (r.attribute.as_str(), r)).collect();
    for (i, input) in inputs.into_iter().enumerate() {
        let e = &entries[i];
        let row = e.removed.is_none().then(|| by_attr.get(e.cluster.canonical_attribute.as_str())).flatten();
        let target = match row {
            Some(r) => CompareTarget::Row {
                attribute: r.attribute.clone(),
                level: r.contrast_level,
                values: [Side::A, Side::B]
                    .into_iter()
                    .flat_map(|s| r.cell(s).iter().map(move |c| (s, c.value.clone())))
                    .collect(),
            },
            None => CompareTarget::Dropped {
                attribute: clusters[i].canonical_attribute.clone(),
            },
        };
        out.examples.push(TrainingCandidate::new(TaskTag::Compare, input, target.to_string()));
    }
    out.rows = rows;
    out.entries = entries;
    Ok(out)
}
