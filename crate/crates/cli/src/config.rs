//! TOML config file, merged under command-line flags.
//!
//! ```toml
//! [run]
//! corpus = "corpus.json"   # relative to this file
//! a = "SpeakerX"
//! b = "SpeakerY"
//! backend = "det"          # or "remote"
//! cr = "on"
//! seed = 0
//! out = "runs"
//!
//! [pipeline]               # any PipelineConfig field
//! top_k_rows = 10
//!
//! [gateway]
//! context_window = 8192
//!
//! [remote]
//! endpoint_url = "http://localhost:8080/complete"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ValueEnum;
use contrast_core::gateway::{RemoteConfig, Templates};
use contrast_core::{CompletionBackend, DeterministicBackend, Gateway, GatewayConfig, PipelineConfig, RemoteBackend};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Det,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub corpus: Option<PathBuf>,
    pub a: Option<String>,
    pub b: Option<String>,
    pub backend: Option<Backend>,
    pub cr: Option<Toggle>,
    pub top_k: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Directory of `<stage>.txt` prompt overrides.
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub run: RunSection,
    pub pipeline: PipelineConfig,
    pub gateway: GatewayConfig,
    pub remote: RemoteConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.run.corpus, &mut cfg.run.out, &mut cfg.run.templates].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// Everything needed to build a gateway, kept so a run can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewaySnapshot {
    pub backend: Backend,
    pub gateway: GatewayConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub remote: Option<RemoteConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub templates: Option<PathBuf>,
}

impl GatewaySnapshot {
    pub fn build(&self) -> Result<Gateway, CliError> {
        let backend: Arc<dyn CompletionBackend> = match self.backend {
            Backend::Det => Arc::new(DeterministicBackend),
            Backend::Remote => {
                let remote = self.remote.clone().unwrap_or_default();
                Arc::new(RemoteBackend::new(remote).map_err(|e| CliError::Config(e.to_string()))?)
            }
        };
        let mut gateway = Gateway::new(backend, self.gateway);
        if let Some(dir) = &self.templates {
            let t = Templates::from_dir(dir).map_err(|e| CliError::Config(format!("templates: {e}")))?;
            gateway = gateway.with_templates(t);
        }
        Ok(gateway)
    }
}
