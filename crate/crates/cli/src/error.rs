use contrast_core::eval::EvalError;
use contrast_core::gateway::GatewayError;
use contrast_core::ingest::CorpusError;
use contrast_core::PipelineError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const IO: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const CORPUS: u8 = 3;
    pub const GATEWAY: u8 = 4;
    pub const STAGE: u8 = 5;
    pub const EVAL_INPUT: u8 = 6;
    pub const EMPTY_EXPORT: u8 = 7;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("gateway: {0}")]
    Gateway(String),
    #[error("stage: {0}")]
    Stage(String),
    #[error("eval input: {0}")]
    EvalInput(String),
    #[error("export produced no examples: {0}")]
    EmptyExport(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Corpus(_) => exit::CORPUS,
            CliError::Gateway(_) => exit::GATEWAY,
            CliError::Stage(_) => exit::STAGE,
            CliError::EvalInput(_) => exit::EVAL_INPUT,
            CliError::EmptyExport(_) => exit::EMPTY_EXPORT,
            CliError::Io { .. } => exit::IO,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Corpus(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Config(m),
            PipelineError::Corpus(_) | PipelineError::MissingEntity(_) | PipelineError::Tile(_) => {
                CliError::Corpus(e.to_string())
            }
            PipelineError::Stage {
                source: GatewayError::Parse(_),
                ..
            }
            | PipelineError::Invalid(_) => CliError::Stage(e.to_string()),
            PipelineError::Stage { .. } => CliError::Gateway(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Gateway(g) => CliError::Gateway(g.to_string()),
            other => CliError::EvalInput(other.to_string()),
        }
    }
}
