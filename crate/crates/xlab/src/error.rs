use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum XlabError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("{path}: line {line}: {msg}")]
    Csv { path: PathBuf, line: u64, msg: String },
    #[error("plot: {0}")]
    Plot(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("expected-value table: {0}")]
    Expected(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] cwlab_core::Error),
}

impl XlabError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        use cwlab_core::Error as E;
        match self {
            XlabError::Core(
                E::Convergence { .. } | E::Starvation { .. } | E::StepSize { .. } | E::NoSurvivors { .. },
            ) => 3,
            XlabError::Core(E::Property(_) | E::Coupling(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, XlabError>;
