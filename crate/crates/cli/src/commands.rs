use std::fs::File;
use std::path::{Path, PathBuf};

use clap::Args;
use contrast_core::eval::{
    evaluate, read_ratings, throughput_bench, BenchConfig, EvalConfig, UsefulnessPolicy,
};
use contrast_core::export::{write_jsonl, TaskMix};
use contrast_core::pipeline::run_id;
use contrast_core::{export_training_mix, load_corpus, run_pipeline, ComparisonSummary, Corpus};

use crate::artifacts::{self, ArtifactPaths, Query, RunManifest};
use crate::config::{Backend, FileConfig, GatewaySnapshot, Toggle};
use crate::error::CliError;

/// Flags shared by commands that run the pipeline.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Corpus manifest (JSON).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// First entity, by id or display name.
    #[arg(long)]
    pub a: Option<String>,
    /// Second entity.
    #[arg(long)]
    pub b: Option<String>,
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// TOML config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Critique and revision.
    #[arg(long, value_enum)]
    pub cr: Option<Toggle>,
    /// Rows kept in the summary.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Seed for retry jitter and any other sampling.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Config file and flags merged.
pub struct Resolved {
    pub corpus_path: PathBuf,
    pub a: String,
    pub b: String,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub pipeline: contrast_core::PipelineConfig,
    pub snapshot: GatewaySnapshot,
}

impl PipelineArgs {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let file = FileConfig::load_opt(self.config.as_deref())?;
        let run = file.run;
        let missing = |flag: &str| CliError::Config(format!("--{flag} is required (flag or [run] {flag})"));
        let mut pipeline = file.pipeline;
        if let Some(cr) = self.cr.or(run.cr) {
            pipeline.cr_enabled = cr == Toggle::On;
        }
        if let Some(k) = self.top_k.or(run.top_k) {
            pipeline.top_k_rows = k;
        }
        pipeline.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let seed = self.seed.or(run.seed).unwrap_or(0);
        let backend = self.backend.or(run.backend).unwrap_or(Backend::Det);
        let mut remote = file.remote;
        remote.jitter_seed = seed;
        Ok(Resolved {
            corpus_path: self.corpus.clone().or(run.corpus).ok_or_else(|| missing("corpus"))?,
            a: self.a.clone().or(run.a).ok_or_else(|| missing("a"))?,
            b: self.b.clone().or(run.b).ok_or_else(|| missing("b"))?,
            seed,
            out: run.out,
            pipeline,
            snapshot: GatewaySnapshot {
                backend,
                gateway: file.gateway,
                remote: (backend == Backend::Remote).then_some(remote),
                templates: run.templates,
            },
        })
    }
}

fn load(path: &Path) -> Result<Corpus, CliError> {
    let corpus = load_corpus(path, None)?;
    for w in &corpus.warnings {
        tracing::warn!("{w}");
    }
    Ok(corpus)
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Root for run directories.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let r = args.pipeline.resolve()?;
    let gateway = r.snapshot.build()?;
    let corpus = load(&r.corpus_path)?;
    let output = run_pipeline(&corpus, &r.a, &r.b, &gateway, &r.pipeline)?;
    for w in &output.warnings {
        tracing::warn!("{w}");
    }
    let id = run_id(&corpus, &r.a, &r.b, &r.pipeline, &gateway.backend_id());
    let manifest = RunManifest {
        run_id: id,
        query: Query { a: r.a, b: r.b },
        corpus_digest: corpus.digest(),
        backend_id: gateway.backend_id(),
        seed: r.seed,
        pipeline: r.pipeline,
        gateway: r.snapshot,
        template_versions: gateway.templates().versions(),
        artifacts: ArtifactPaths {
            summary: artifacts::SUMMARY.into(),
            summary_markdown: artifacts::SUMMARY_MD.into(),
            traces: artifacts::TRACES.into(),
            cr_log: artifacts::CR_LOG.into(),
            training: artifacts::TRAINING.into(),
            corpus: artifacts::CORPUS.into(),
            eval_report: None,
        },
        warnings: output.warnings.clone(),
    };
    let root = args.out.clone().or(r.out).unwrap_or_else(|| PathBuf::from("runs"));
    let dir = artifacts::write_run(&root, &manifest, &output, &corpus)?;
    println!("{}", dir.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// A run directory written by `run`.
    #[arg(long, conflicts_with = "summary")]
    pub run: Option<PathBuf>,
    /// A bare summary JSON file, instead of a run directory.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Human ratings CSV: summary_id,row_index,rater_id,label.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Id the ratings use for this summary; defaults to the run id or the
    /// summary file stem.
    #[arg(long)]
    pub summary_id: Option<String>,
    /// Autorater backend for a bare summary; a run uses its own.
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Count OK rows as useful.
    #[arg(long)]
    pub ok_useful: bool,
    /// Report path; defaults to eval_report.json beside the summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let (summary_path, snapshot, id, aliases, default_out) = match (&args.run, &args.summary) {
        (Some(dir), _) => {
            let manifest = RunManifest::read(dir)?;
            let corpus: Corpus = artifacts::read_json(&dir.join(&manifest.artifacts.corpus))?;
            let aliases = [&manifest.query.a, &manifest.query.b].map(|name| {
                corpus.find_entity(name).map(|e| e.aliases.clone()).unwrap_or_default()
            });
            (
                dir.join(&manifest.artifacts.summary),
                manifest.gateway,
                manifest.run_id,
                aliases,
                dir.join(artifacts::EVAL_REPORT),
            )
        }
        (None, Some(path)) => {
            let file = FileConfig::load_opt(args.config.as_deref())?;
            let backend = args.backend.or(file.run.backend).unwrap_or(Backend::Det);
            let snapshot = GatewaySnapshot {
                backend,
                gateway: file.gateway,
                remote: (backend == Backend::Remote).then_some(file.remote),
                templates: file.run.templates,
            };
            let stem = path.file_stem().map_or("summary".into(), |s| s.to_string_lossy().into_owned());
            let out = path.with_file_name(format!("{stem}.eval_report.json"));
            (path.clone(), snapshot, stem, [vec![], vec![]], out)
        }
        (None, None) => return Err(CliError::Config("eval needs --run or --summary".into())),
    };
    let summary: ComparisonSummary = artifacts::read_json(&summary_path)?;
    let ratings = args
        .ratings
        .as_ref()
        .map(|p| {
            let f = File::open(p).map_err(|e| CliError::EvalInput(format!("{}: {e}", p.display())))?;
            read_ratings(f).map_err(CliError::from)
        })
        .transpose()?;
    let id = args.summary_id.clone().unwrap_or(id);
    let gateway = snapshot.build()?;
    let config = EvalConfig {
        k: args.k,
        policy: UsefulnessPolicy {
            ok_is_useful: args.ok_useful,
        },
    };
    let report = evaluate(&id, &summary, [&aliases[0], &aliases[1]], &gateway, ratings.as_ref(), config)?;
    for w in &report.warnings {
        tracing::warn!("{w}");
    }
    let out = args.out.clone().unwrap_or(default_out);
    artifacts::write_json(&out, &report)?;
    if let Some(dir) = &args.run {
        if args.out.is_none() {
            let mut manifest = RunManifest::read(dir)?;
            manifest.artifacts.eval_report = Some(artifacts::EVAL_REPORT.into());
            manifest.write(dir)?;
        }
    }
    println!(
        "{} rows, {:.1}% useful, redundancy {:.3}, inconsistent values {}, P@{} {:.3}",
        report.n_rows,
        report.pct_rows_useful * 100.0,
        report.redundancy,
        report.inconsistency_count,
        report.k,
        report.precision_at_k
    );
    if let Some(a) = &report.agreement {
        if let Some(hh) = a.human_human {
            println!("human-human agreement {hh:.3} over {} raters", a.n_raters);
        }
        if let Some(ha) = a.human_autorater {
            println!("human-autorater agreement {ha:.3}");
        }
    }
    println!("{}", out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Queries to time, warm-up included.
    #[arg(long, default_value_t = 20)]
    pub queries: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    /// Queries in flight at once.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let r = args.pipeline.resolve()?;
    if args.queries <= args.warmup {
        return Err(CliError::Config(format!(
            "--queries {} leaves nothing after {} warm-up",
            args.queries, args.warmup
        )));
    }
    let gateway = r.snapshot.build()?;
    let corpus = load(&r.corpus_path)?;
    for name in [&r.a, &r.b] {
        if corpus.find_entity(name).is_none() {
            return Err(CliError::Corpus(format!("entity {name:?} not in corpus")));
        }
    }
    let queries = vec![(r.a.clone(), r.b.clone()); args.queries];
    let bench = BenchConfig {
        warmup: args.warmup,
        parallel: args.parallel,
    };
    let report = throughput_bench(&corpus, &queries, &gateway, &r.pipeline, &bench)?;
    for w in &report.warnings {
        tracing::warn!("{w}");
    }
    print!("{}", report.to_table());
    if let Some(out) = &args.out {
        artifacts::write_json(out, &report)?;
    }
    if report.measured == report.failed {
        return Err(CliError::Stage("every measured query failed".into()));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Root holding run directories.
    #[arg(long, default_value = "runs")]
    pub runs: PathBuf,
    /// Number of examples to draw.
    #[arg(long, default_value_t = 61)]
    pub target: usize,
    /// Task weights, e.g. EXTRACT:30,ATTRIBUTE_MERGE:1,COMPARE:30.
    #[arg(long)]
    pub mix: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSONL file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_export(args: &ExportArgs) -> Result<(), CliError> {
    let mix = match &args.mix {
        Some(s) => TaskMix::parse(s).map_err(|e| CliError::Config(e.to_string()))?,
        None => TaskMix::default(),
    };
    let runs = artifacts::run_dirs(&args.runs)
        .iter()
        .map(|d| artifacts::read_run_artifacts(d))
        .collect::<Result<Vec<_>, _>>()?;
    let report = export_training_mix(&runs, &mix, args.target, args.seed).map_err(|e| CliError::Config(e.to_string()))?;
    for w in &report.warnings {
        tracing::warn!("{w}");
    }
    let file = File::create(&args.out).map_err(CliError::io(format!("creating {}", args.out.display())))?;
    write_jsonl(&report.examples, std::io::BufWriter::new(file))
        .map_err(CliError::io(format!("writing {}", args.out.display())))?;
    let counts: Vec<String> = report.counts.iter().map(|(t, n)| format!("{}={n}", t.as_str())).collect();
    println!("{} examples ({}) from {} runs", report.examples.len(), counts.join(", "), runs.len());
    if args.target > 0 && report.examples.is_empty() {
        return Err(CliError::EmptyExport(format!(
            "{} run(s) under {}",
            runs.len(),
            args.runs.display()
        )));
    }
    Ok(())
}
