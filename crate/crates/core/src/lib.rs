//! Identification of a composite ZIP plus induction-motor load from ambient
//! voltage and power measurements.
//!
//! The motor parameters are found by a box-constrained local search over
//! `[a, b, H2, Tm]`; for every candidate the static ZIP part follows in
//! closed form from a linear regression on the power the motor does not
//! explain.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod filter;
pub mod lower_stage;
pub mod model;
pub mod series;
pub mod signalgen;
pub mod simulator;
pub mod synth;
pub mod upper_stage;

pub use error::{LoadModelError, Result};
pub use lower_stage::{evaluate_candidate, regress_zip, ObjectiveWindow, WindowPolicy};
pub use model::{
    IMParamsPhysical, IMParamsTransformed, IMState, PhasorDQ, SystemConfig, ZIPParams,
};
pub use series::MeasurementSeries;
pub use simulator::{simulate_composite, CompositeLoad, MotorModel, SimOptions};
pub use upper_stage::{
    feasible_region_from_data, is_feasible, minimize, FeasibleRegion, IdentificationResult,
    SolverOptions,
};
