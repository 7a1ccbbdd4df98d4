use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::corpus::CorpusError;
use crate::encoder::ModelError;
use crate::evaluation::EvalError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status: 1 usage/config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 1,
            Error::Model(ModelError::Config(_)) => 1,
            Error::Corpus(CorpusError::Config(_)) => 1,
            Error::Corpus(_) | Error::Eval(_) | Error::Io(_) => 2,
            Error::Model(ModelError::Checkpoint(_) | ModelError::Io(_)) => 2,
            Error::Numerical(_) => 3,
            Error::Autodiff(AutodiffError::NonFinite { .. }) => 3,
            Error::Model(ModelError::Autodiff(AutodiffError::NonFinite { .. })) => 3,
            Error::Model(_) | Error::Autodiff(_) => 1,
        }
    }

    pub fn is_non_finite(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_)
                | Error::Autodiff(AutodiffError::NonFinite { .. })
                | Error::Model(ModelError::Autodiff(AutodiffError::NonFinite { .. }))
        )
    }
}
