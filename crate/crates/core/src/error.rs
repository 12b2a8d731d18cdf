use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The Gram matrix could not be factored without diagonal loading.
    #[error("Gram matrix is numerically singular; retry with ridge {suggested_ridge:e}")]
    SingularGram { suggested_ridge: f64 },

    #[error("search space of {size} candidates exceeds the brute-force guard of {limit}")]
    SearchSpaceTooLarge { size: f64, limit: u64 },

    #[error("numerical failure at iteration {iteration}: {reason}")]
    NumericalFailure { iteration: usize, reason: String },

    #[error("power constraint infeasible on sub-carrier {subcarrier} after {shrinks} step reductions")]
    Infeasible { subcarrier: usize, shrinks: usize },

    #[error("switch matrix rank violation on RF chains {chains:?}")]
    SwitchRank { chains: Vec<usize> },

    /// A solver failure attributed to one analog subproblem.
    #[error("antenna {antenna}: {source}")]
    Antenna {
        antenna: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Short snake-case tag used in result files.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::SingularGram { .. } => "singular_gram",
            Error::SearchSpaceTooLarge { .. } => "search_space_too_large",
            Error::NumericalFailure { .. } => "numerical_failure",
            Error::Infeasible { .. } => "infeasible",
            Error::SwitchRank { .. } => "switch_rank",
            Error::Antenna { source, .. } => source.kind(),
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    /// True for failures that originate in floating-point breakdown rather
    /// than in bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalFailure { .. } | Error::SingularGram { .. } | Error::Infeasible { .. } => {
                true
            }
            Error::Antenna { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
