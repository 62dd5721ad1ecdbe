use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("operands live on different spaces")]
    SpaceMismatch,
    #[error("singular configuration: {0}")]
    SingularConfiguration(String),
    #[error("no resonance: {0}")]
    NoResonance(String),
    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),
    #[error("steady state is not unique")]
    NonUniqueSteadyState,
    #[error("steady-state solve failed: {0}")]
    SteadyState(String),
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("integrator failure: {0}")]
    Integrator(String),
    #[error("unknown partition {0:?}")]
    UnknownPartition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
