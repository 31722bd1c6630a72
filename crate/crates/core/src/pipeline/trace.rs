//! Stage calls with observability: every call leaves a [`StageTrace`].

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::gateway::{Gateway, GatewayError, StageCall, StageTag};
use crate::text::digest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub id: String,
    pub stage_tag: StageTag,
    pub input_digest: String,
    pub output_digest: String,
    pub critiques_applied: Vec<String>,
    pub duration_ms: u64,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Runs stages through a gateway and records a trace per call. Trace ids
/// come from a phase counter bumped by sequential code plus a caller key,
/// so they do not depend on thread scheduling.
pub struct StageRunner<'g> {
    gateway: &'g Gateway,
    phase: AtomicU32,
    traces: Mutex<Vec<(u32, String, StageTrace)>>,
    latencies: Mutex<BTreeMap<StageTag, Vec<f64>>>,
}

impl<'g> StageRunner<'g> {
    pub fn new(gateway: &'g Gateway) -> Self {
        Self {
            gateway,
            phase: AtomicU32::new(0),
            traces: Mutex::new(Vec::new()),
            latencies: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn gateway(&self) -> &'g Gateway {
        self.gateway
    }

    /// Start a new phase; call only from sequential code.
    pub fn next_phase(&self) -> u32 {
        self.phase.fetch_add(1, Ordering::SeqCst) + 1
    }

    pub fn fits(&self, stage: StageTag, payload: &str) -> bool {
        self.gateway.fits(stage, payload)
    }

    pub fn run(
        &self,
        stage: StageTag,
        key: &str,
        payload: &str,
        critiques_applied: &[String],
    ) -> Result<StageCall, GatewayError> {
        let phase = self.phase.load(Ordering::SeqCst);
        let started = Instant::now();
        let result = self.gateway.run_stage(stage, payload);
        let elapsed = started.elapsed();
        let input_digest = digest(payload);
        let (output_digest, attempts, notes) = match &result {
            Ok(call) => (digest(&call.raw), call.attempts, Vec::new()),
            Err(e) => (String::new(), 0, vec![format!("failed: {e}")]),
        };
        let trace = StageTrace {
            id: format!("{phase:03}-{}-{key}-{}", stage.as_str().to_ascii_lowercase(), &input_digest[..8]),
            stage_tag: stage,
            input_digest,
            output_digest,
            critiques_applied: critiques_applied.to_vec(),
            duration_ms: elapsed.as_millis() as u64,
            attempts,
            notes,
        };
        self.traces
            .lock()
            .expect("trace log poisoned")
            .push((phase, key.to_string(), trace));
        self.latencies
            .lock()
            .expect("latency log poisoned")
            .entry(stage)
            .or_default()
            .push(elapsed.as_secs_f64() * 1000.0);
        result
    }

    /// Latency samples in milliseconds per stage.
    pub fn latencies(&self) -> BTreeMap<StageTag, Vec<f64>> {
        self.latencies.lock().expect("latency log poisoned").clone()
    }

    /// Traces in (phase, key) order.
    pub fn traces(&self) -> Vec<StageTrace> {
        let mut t = self.traces.lock().expect("trace log poisoned").clone();
        t.sort_by(|a, b| (a.0, &a.1, &a.2.id).cmp(&(b.0, &b.1, &b.2.id)));
        t.into_iter().map(|(_, _, t)| t).collect()
    }
}
