use thiserror::Error;

/// Errors raised by the model, simulation and identification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoadModelError {
    /// A parameter or input is outside the domain of the model equations.
    #[error("domain error: {0}")]
    Domain(String),

    /// The motor cannot carry its mechanical torque at the given voltage.
    #[error(
        "infeasible steady state: a*|v|^2 = {available:.6} cannot balance 2*b*Tm = {required:.6}"
    )]
    InfeasibleSteadyState { available: f64, required: f64 },

    /// A simulated state left the admissible range.
    #[error("numeric divergence at sample {sample}: state magnitude {magnitude:e}")]
    Divergence { sample: usize, magnitude: f64 },

    /// The regression basis is numerically rank deficient.
    #[error("regression basis is rank deficient (condition number {condition:e})")]
    RankDeficient { condition: f64 },

    /// A measurement series violates its structural invariants.
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("signal channel '{0}' has zero energy")]
    DegenerateSignal(&'static str),

    #[error("noise series has zero energy")]
    ZeroNoiseEnergy,

    #[error("reference series has zero variance")]
    ZeroVariance,

    /// Rejection sampling could not find a feasible point.
    #[error("no feasible point found after {attempts} attempts")]
    SamplingFailed { attempts: usize },

    #[error("every optimization start ended at the penalty value")]
    AllStartsFailed,

    /// A validation scenario could not be simulated.
    #[error("{scenario} model failed: {source}")]
    Scenario {
        scenario: &'static str,
        source: Box<LoadModelError>,
    },
}

pub type Result<T> = std::result::Result<T, LoadModelError>;

impl LoadModelError {
    /// True for failures caused by the numbers rather than by malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            LoadModelError::InfeasibleSteadyState { .. }
                | LoadModelError::Divergence { .. }
                | LoadModelError::RankDeficient { .. }
                | LoadModelError::SamplingFailed { .. }
                | LoadModelError::AllStartsFailed
        ) || matches!(self, LoadModelError::Scenario { source, .. } if source.is_numeric())
    }
}
