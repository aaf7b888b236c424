use std::fmt;

use mapforensics_core::acquisition::AcquisitionError;
use mapforensics_core::corpus::CorpusError;
use mapforensics_core::metrics::MetricsError;
use mapforensics_core::prompt_grammar::GrammarError;
use mapforensics_detector::DetectorError;

/// Failure classes, each with its own process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Config,
    Validation,
    Io,
    Acquisition,
    Training,
    Format,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage | ErrorClass::Config => 2,
            ErrorClass::Validation => 3,
            ErrorClass::Io => 4,
            ErrorClass::Acquisition => 5,
            ErrorClass::Training => 6,
            ErrorClass::Format => 7,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Usage => "usage",
            ErrorClass::Config => "config",
            ErrorClass::Validation => "validation",
            ErrorClass::Io => "io",
            ErrorClass::Acquisition => "acquisition",
            ErrorClass::Training => "training",
            ErrorClass::Format => "format",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        CliError { class, message: message.into() }
    }

    /// `error<TAB>class=<class><TAB>code=<exit code><TAB>message=<text>` on one line.
    pub fn line(&self) -> String {
        let message: String = self
            .message
            .trim()
            .chars()
            .map(|c| if c == '\n' || c == '\t' || c == '\r' { ' ' } else { c })
            .collect();
        format!("error\tclass={}\tcode={}\tmessage={}", self.class.as_str(), self.class.exit_code(), message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.class.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(ErrorClass::Io, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new(ErrorClass::Format, e.to_string())
    }
}

impl From<GrammarError> for CliError {
    fn from(e: GrammarError) -> Self {
        let class = match e {
            GrammarError::Io(_) => ErrorClass::Io,
            GrammarError::Syntax { .. } => ErrorClass::Format,
            _ => ErrorClass::Validation,
        };
        CliError::new(class, e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let class = match &e {
            CorpusError::Io(_) => ErrorClass::Io,
            CorpusError::SchemaVersion { .. } | CorpusError::Corrupt { .. } | CorpusError::Json(_) => ErrorClass::Format,
            CorpusError::Grammar(GrammarError::Io(_)) => ErrorClass::Io,
            _ => ErrorClass::Validation,
        };
        CliError::new(class, e.to_string())
    }
}

impl From<AcquisitionError> for CliError {
    fn from(e: AcquisitionError) -> Self {
        let class = match e {
            AcquisitionError::Io(_) => ErrorClass::Io,
            AcquisitionError::InvalidRequest(_) => ErrorClass::Validation,
            _ => ErrorClass::Acquisition,
        };
        CliError::new(class, e.to_string())
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        let class = match e {
            DetectorError::Io(_) => ErrorClass::Io,
            DetectorError::NonFiniteLoss { .. } => ErrorClass::Training,
            DetectorError::CheckpointCorrupt(_) | DetectorError::Json(_) => ErrorClass::Format,
            _ => ErrorClass::Validation,
        };
        CliError::new(class, e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let class = match e {
            MetricsError::EmptyMatrix => ErrorClass::Validation,
            _ => ErrorClass::Format,
        };
        CliError::new(class, e.to_string())
    }
}
