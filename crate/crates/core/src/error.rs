use thiserror::Error;

/// Errors raised by model construction, simulation and the grid operators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("rate/velocity ratio is not integrable near x = {at}")]
    NonIntegrableRate { at: f64 },
    #[error("orbit reaches the boundary 0 after time {hit_time}")]
    DomainExit { hit_time: f64 },
    #[error("holding time is infinite")]
    InfiniteHolding,
    #[error("flow leaves every compact set after time {hit_time}")]
    FlowBlowUp { hit_time: f64 },
    #[error("kernel evaluated outside its domain: {0}")]
    KernelDomain(String),
    #[error("kernel has no density with respect to the reference measure")]
    NoDensity,
    #[error("requested time {t} lies beyond the simulated horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },
    #[error("initial condition is not a probability density (mass {mass})")]
    NotADensity { mass: f64 },
    #[error("numerical procedure did not converge: {0}")]
    NonConvergent(String),
    #[error("parameters lie outside every tabulated regime: {0}")]
    OutOfRegime(String),
    #[error("closed form not available: {0}")]
    NotEnabled(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
