//! Throughput benchmark: summaries per second plus per-stage latency.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use super::EvalError;
use crate::gateway::{Gateway, StageTag};
use crate::ingest::Corpus;
use crate::par::parallel_map;
use crate::pipeline::{run_pipeline, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Leading queries run but left out of the measurement.
    pub warmup: usize,
    /// Queries in flight at once; 1 is single-stream.
    pub parallel: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { warmup: 2, parallel: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        Self {
            count: n,
            mean_ms: if n == 0 { 0.0 } else { s.iter().sum::<f64>() / n as f64 },
            p50_ms: percentile(&s, 50.0),
            p90_ms: percentile(&s, 90.0),
            p99_ms: percentile(&s, 99.0),
            max_ms: s.last().copied().unwrap_or(0.0),
        }
    }
}

/// Upper bucket bounds in milliseconds; the last bucket is open.
pub const HISTOGRAM_BOUNDS_MS: [f64; 7] = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0];

pub fn histogram(samples: &[f64]) -> Vec<usize> {
    let mut h = vec![0; HISTOGRAM_BOUNDS_MS.len() + 1];
    for &x in samples {
        let i = HISTOGRAM_BOUNDS_MS.iter().position(|b| x <= *b).unwrap_or(HISTOGRAM_BOUNDS_MS.len());
        h[i] += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub stage: StageTag,
    pub stats: LatencyStats,
    pub histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub queries: usize,
    pub warmup: usize,
    pub measured: usize,
    pub failed: usize,
    pub parallel: usize,
    pub wall_seconds: f64,
    pub summaries_per_second: f64,
    pub end_to_end: LatencyStats,
    pub stages: Vec<StageLatency>,
    pub warnings: Vec<String>,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} measured ({} failed, {} warm-up), {} stream(s): {:.3} summ/s over {:.3} s",
            self.measured, self.failed, self.warmup, self.parallel, self.summaries_per_second, self.wall_seconds
        );
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>10} {:>10} {:>10} {:>10}",
            "stage", "calls", "p50 ms", "p90 ms", "p99 ms", "max ms"
        );
        let rows = self
            .stages
            .iter()
            .map(|s| (s.stage.as_str().to_string(), &s.stats))
            .chain(std::iter::once(("END_TO_END".to_string(), &self.end_to_end)));
        for (name, s) in rows {
            let _ = writeln!(
                out,
                "{:<16} {:>7} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
                name, s.count, s.p50_ms, s.p90_ms, s.p99_ms, s.max_ms
            );
        }
        out
    }
}

/// Run every query through the pipeline, discard the first `warmup`, and
/// time the rest. Failed queries are excluded from the rate.
pub fn throughput_bench(
    corpus: &Corpus,
    queries: &[(String, String)],
    gateway: &Gateway,
    pipeline: &PipelineConfig,
    config: &BenchConfig,
) -> Result<BenchReport, EvalError> {
    let mut warnings = Vec::new();
    let warm = config.warmup.min(queries.len());
    for (a, b) in &queries[..warm] {
        if let Err(e) = run_pipeline(corpus, a, b, gateway, pipeline) {
            warnings.push(format!("warm-up {a} vs {b} failed: {e}"));
        }
    }
    let measured = &queries[warm..];
    if measured.is_empty() {
        return Err(EvalError::NothingMeasured);
    }
    let started = Instant::now();
    let results = parallel_map(measured, config.parallel.max(1), |_, (a, b)| {
        let t = Instant::now();
        let r = run_pipeline(corpus, a, b, gateway, pipeline);
        (r, t.elapsed().as_secs_f64() * 1000.0)
    });
    let wall = started.elapsed().as_secs_f64();

    let mut ok = 0;
    let mut end_to_end = Vec::new();
    let mut per_stage: BTreeMap<StageTag, Vec<f64>> = BTreeMap::new();
    for ((a, b), (result, ms)) in measured.iter().zip(results) {
        match result {
            Ok(out) => {
                ok += 1;
                end_to_end.push(ms);
                for (stage, samples) in out.latencies {
                    per_stage.entry(stage).or_default().extend(samples);
                }
            }
            Err(e) => warnings.push(format!("{a} vs {b} failed: {e}")),
        }
    }
    if ok == 0 {
        return Err(EvalError::NothingMeasured);
    }
    Ok(BenchReport {
        queries: queries.len(),
        warmup: warm,
        measured: ok,
        failed: measured.len() - ok,
        parallel: config.parallel.max(1),
        wall_seconds: wall,
        summaries_per_second: if wall > 0.0 { ok as f64 / wall } else { f64::INFINITY },
        end_to_end: LatencyStats::from_samples(&end_to_end),
        stages: per_stage
            .into_iter()
            .map(|(stage, samples)| StageLatency {
                stage,
                stats: LatencyStats::from_samples(&samples),
                histogram: histogram(&samples),
            })
            .collect(),
        warnings,
    })
}
