//! Upper stage: constrained minimization of the lower-stage objective over
//! the motor parameters `[a, b, H2, Tm]`.
//!
//! Each start runs a sequential quadratic scheme in box-normalized
//! coordinates. At every iterate the stacked regression residual is
//! differentiated by central differences, the Gauss-Newton model of the
//! objective with a Levenberg-Marquardt damping term is minimized exactly
//! over the box, and the step is shortened until it respects the stability
//! cut. Steps are accepted only when the objective decreases, so the iterate
//! sequence of a start is monotone and always feasible.

mod qp;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LoadModelError, Result};
use crate::lower_stage::{ObjectiveWindow, WindowPolicy};
use crate::model::{IMParamsTransformed, SystemConfig, ZIPParams};
use crate::series::MeasurementSeries;

pub use qp::solve_box_qp;

/// Box bounds on `[a, b, H2]` used when none are given.
pub const DEFAULT_LOWER: [f64; 3] = [10.0, 3.0, 0.5];
pub const DEFAULT_UPPER: [f64; 3] = [80.0, 30.0, 3.0];

/// Rejection-sampling budget of [`sample_feasible`].
pub const MAX_REJECTIONS: usize = 100_000;

/// How the motor stability cut couples `a`, `b` and `Tm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityForm {
    /// `a V_min^2 > 2 b Tm`: peak torque at the lowest voltage exceeds `Tm`.
    #[default]
    TorqueBalance,
    /// `a V_min^2 > 2 b`, without the torque.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRegion {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    /// Upper bound on `Tm`, the mean measured active power.
    pub tm_max: f64,
    /// Lowest voltage in the window.
    pub v_min: f64,
    #[serde(default)]
    pub stability: StabilityForm,
}

impl FeasibleRegion {
    pub fn validate(&self) -> Result<()> {
        if !(0..3).all(|j| self.lower[j] < self.upper[j]) {
            return Err(LoadModelError::Domain(
                "region lower bounds must be below upper bounds".into(),
            ));
        }
        if !(self.tm_max > 0.0 && self.v_min > 0.0) {
            return Err(LoadModelError::Domain(format!(
                "region needs tm_max > 0 and v_min > 0 (got {}, {})",
                self.tm_max, self.v_min
            )));
        }
        Ok(())
    }

    /// Bounds on the full decision vector, `Tm` included.
    pub fn bounds(&self) -> ([f64; 4], [f64; 4]) {
        (
            [self.lower[0], self.lower[1], self.lower[2], 0.0],
            [self.upper[0], self.upper[1], self.upper[2], self.tm_max],
        )
    }

    /// Maps a parameter vector onto `[0, 1]^4`.
    pub fn to_unit(&self, d: &IMParamsTransformed) -> [f64; 4] {
        let (lo, hi) = self.bounds();
        let x = d.to_array();
        std::array::from_fn(|j| (x[j] - lo[j]) / (hi[j] - lo[j]))
    }

    pub fn from_unit(&self, z: &[f64; 4]) -> IMParamsTransformed {
        let (lo, hi) = self.bounds();
        IMParamsTransformed::from_array(std::array::from_fn(|j| lo[j] + z[j] * (hi[j] - lo[j])))
    }

    /// Positive when the stability cut holds strictly.
    pub fn stability_margin(&self, d: &IMParamsTransformed) -> f64 {
        let drive = d.a * self.v_min * self.v_min;
        match self.stability {
            StabilityForm::TorqueBalance => drive - 2.0 * d.b * d.tm,
            StabilityForm::Literal => drive - 2.0 * d.b,
        }
    }
}

/// Default box with `Tm <= mean(P)` and `V_min = min(V)`.
pub fn feasible_region_from_data(data: &MeasurementSeries) -> FeasibleRegion {
    FeasibleRegion {
        lower: DEFAULT_LOWER,
        upper: DEFAULT_UPPER,
        tm_max: data.mean_p(),
        v_min: data.min_v(),
        stability: StabilityForm::TorqueBalance,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<String>,
}

pub fn is_feasible(d: &IMParamsTransformed, region: &FeasibleRegion) -> FeasibilityReport {
    const NAMES: [&str; 4] = ["a", "b", "h2", "tm"];
    let (lo, hi) = region.bounds();
    let x = d.to_array();
    let mut violations = Vec::new();
    for j in 0..4 {
        if !(x[j] >= lo[j]) {
            violations.push(format!(
                "{} = {} below lower bound {}",
                NAMES[j], x[j], lo[j]
            ));
        } else if !(x[j] <= hi[j]) {
            violations.push(format!(
                "{} = {} above upper bound {}",
                NAMES[j], x[j], hi[j]
            ));
        }
    }
    let margin = region.stability_margin(d);
    if !(margin > 0.0) {
        violations.push(format!("stability cut violated (margin {margin})"));
    }
    FeasibilityReport {
        feasible: violations.is_empty(),
        violations,
    }
}

fn feasible(d: &IMParamsTransformed, region: &FeasibleRegion) -> bool {
    let (lo, hi) = region.bounds();
    let x = d.to_array();
    (0..4).all(|j| x[j] >= lo[j] && x[j] <= hi[j]) && region.stability_margin(d) > 0.0
}

/// Uniform draw from the box intersected with the stability cut, using an
/// existing random stream.
pub fn sample_feasible_with<R: Rng>(
    region: &FeasibleRegion,
    rng: &mut R,
) -> Result<IMParamsTransformed> {
    let (lo, hi) = region.bounds();
    for _ in 0..MAX_REJECTIONS {
        let d = IMParamsTransformed::from_array(std::array::from_fn(|j| {
            rng.random_range(lo[j]..=hi[j])
        }));
        if feasible(&d, region) {
            return Ok(d);
        }
    }
    Err(LoadModelError::SamplingFailed {
        attempts: MAX_REJECTIONS,
    })
}

/// Uniform draw from the feasible region, deterministic per seed.
pub fn sample_feasible(region: &FeasibleRegion, seed: u64) -> Result<IMParamsTransformed> {
    region.validate()?;
    sample_feasible_with(region, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Independent seed for task `index` derived from a base seed (SplitMix64).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub n_starts: usize,
    pub max_iters: usize,
    /// Finite-difference step in box-normalized coordinates.
    pub gradient_step: f64,
    /// Convergence threshold on the L1 norm of the normalized step.
    pub tol_step: f64,
    /// Objective assigned to candidates that cannot be evaluated.
    pub penalty_value: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            n_starts: 3,
            max_iters: 200,
            gradient_step: 1e-4,
            tol_step: 1e-7,
            penalty_value: 1e3,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 || self.max_iters == 0 {
            return Err(LoadModelError::Domain(
                "n_starts and max_iters must be at least 1".into(),
            ));
        }
        if !(self.gradient_step > 0.0 && self.tol_step > 0.0 && self.penalty_value > 0.0) {
            return Err(LoadModelError::Domain(
                "gradient_step, tol_step and penalty_value must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartStatus {
    /// The normalized step fell below `tol_step`.
    Converged,
    /// No damping level produced a decrease.
    Stalled,
    MaxIters,
    /// The initial point could not be evaluated.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub index: usize,
    pub seed: u64,
    pub initial: IMParamsTransformed,
    pub final_point: IMParamsTransformed,
    pub final_of: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: StartStatus,
    /// Objective at every accepted iterate, initial point first.
    pub of_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMeta {
    pub policy: WindowPolicy,
    pub n_fit: usize,
    pub low_excitation: bool,
    pub snr_estimate_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub d_opt: IMParamsTransformed,
    pub os_opt: ZIPParams,
    pub of_opt: f64,
    pub starts: Vec<StartRecord>,
    pub window: WindowMeta,
}

impl IdentificationResult {
    /// Best objective after each start completes, in start order.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.starts
            .iter()
            .scan(f64::INFINITY, |best, s| {
                *best = best.min(s.final_of);
                Some(*best)
            })
            .collect()
    }

    pub fn total_iterations(&self) -> usize {
        self.starts.iter().map(|s| s.iterations).sum()
    }
}

/// Local solver state for one start.
struct LocalSolver<'a> {
    window: &'a ObjectiveWindow,
    region: &'a FeasibleRegion,
    opts: &'a SolverOptions,
    evaluations: usize,
}

impl LocalSolver<'_> {
    fn residuals(&mut self, z: &[f64; 4]) -> Option<Vec<f64>> {
        self.evaluations += 1;
        let d = self.region.from_unit(z);
        self.window.scaled_residuals(&d).ok()
    }

    fn jacobian(&mut self, z: &[f64; 4], r0: &[f64]) -> DMatrix<f64> {
        let h = self.opts.gradient_step;
        let m = r0.len();
        let mut jac = DMatrix::zeros(m, 4);
        for j in 0..4 {
            let probe = |zj: f64| {
                let mut zz = *z;
                zz[j] = zj;
                zz
            };
            let fwd = if z[j] + h <= 1.0 {
                self.residuals(&probe(z[j] + h))
            } else {
                None
            };
            let bwd = if z[j] - h >= 0.0 {
                self.residuals(&probe(z[j] - h))
            } else {
                None
            };
            let col: Vec<f64> = match (fwd, bwd) {
                (Some(f), Some(b)) => f.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect(),
                (Some(f), None) => f.iter().zip(r0).map(|(x, y)| (x - y) / h).collect(),
                (None, Some(b)) => r0.iter().zip(&b).map(|(x, y)| (x - y) / h).collect(),
                (None, None) => vec![0.0; m],
            };
            jac.set_column(j, &DVector::from_vec(col));
        }
        jac
    }

    fn run(&mut self, index: usize, seed: u64, initial: IMParamsTransformed) -> StartRecord {
        let penalty = self.opts.penalty_value;
        let mut z = self.region.to_unit(&initial);
        let mut record = StartRecord {
            index,
            seed,
            initial,
            final_point: initial,
            final_of: penalty,
            iterations: 0,
            evaluations: 0,
            status: StartStatus::Failed,
            of_history: Vec::new(),
        };
        let Some(mut r) = self.residuals(&z) else {
            record.evaluations = self.evaluations;
            return record;
        };
        let mut f: f64 = r.iter().map(|x| x * x).sum();
        record.of_history.push(f);
        let mut lambda = 1e-3;
        let mut status = StartStatus::MaxIters;

        'outer: for _ in 0..self.opts.max_iters {
            record.iterations += 1;
            let jac = self.jacobian(&z, &r);
            let rv = DVector::from_column_slice(&r);
            let g = jac.tr_mul(&rv);
            let h = jac.tr_mul(&jac);
            let dmax = (0..4).map(|j| h[(j, j)]).fold(0.0f64, f64::max).max(1e-300);
            let lo: Vec<f64> = z.iter().map(|zj| -zj).collect();
            let hi: Vec<f64> = z.iter().map(|zj| 1.0 - zj).collect();
            loop {
                let mut a = h.clone();
                for j in 0..4 {
                    a[(j, j)] += lambda * h[(j, j)].max(1e-9 * dmax);
                }
                let Some(mut step) = solve_box_qp(&a, &g, &lo, &hi) else {
                    lambda *= 4.0;
                    if lambda > 1e12 {
                        status = StartStatus::Stalled;
                        break 'outer;
                    }
                    continue;
                };
                let trial_z = |s: &[f64]| -> [f64; 4] {
                    std::array::from_fn(|j| (z[j] + s[j]).clamp(0.0, 1.0))
                };
                let mut halvings = 0;
                while !feasible(&self.region.from_unit(&trial_z(&step)), self.region)
                    && halvings < 40
                {
                    step.iter_mut().for_each(|s| *s *= 0.5);
                    halvings += 1;
                }
                let step_norm: f64 = step.iter().map(|s| s.abs()).sum();
                if step_norm < self.opts.tol_step {
                    status = StartStatus::Converged;
                    break 'outer;
                }
                let zt = trial_z(&step);
                let rt = if feasible(&self.region.from_unit(&zt), self.region) {
                    self.residuals(&zt)
                } else {
                    None
                };
                let ft = rt
                    .as_ref()
                    .map(|v| v.iter().map(|x| x * x).sum::<f64>())
                    .unwrap_or(penalty);
                if ft < f {
                    z = zt;
                    r = rt.expect("finite objective implies residuals");
                    f = ft;
                    record.of_history.push(f);
                    lambda = (lambda / 3.0).max(1e-12);
                    if f == 0.0 {
                        status = StartStatus::Converged;
                        break 'outer;
                    }
                    break;
                }
                lambda *= 4.0;
                if lambda > 1e12 {
                    status = StartStatus::Stalled;
                    break 'outer;
                }
            }
        }
        record.final_point = self.region.from_unit(&z);
        record.final_of = f.min(penalty);
        record.status = status;
        record.evaluations = self.evaluations;
        record
    }
}

/// Runs one local solve from `initial`.
pub fn local_solve(
    window: &ObjectiveWindow,
    region: &FeasibleRegion,
    opts: &SolverOptions,
    initial: IMParamsTransformed,
) -> StartRecord {
    LocalSolver {
        window,
        region,
        opts,
        evaluations: 0,
    }
    .run(0, 0, initial)
}

/// Redraws allowed for an initial point whose objective cannot be evaluated.
pub const MAX_INITIAL_REDRAWS: usize = 1000;

/// Feasible initial point for one start. Points where the prediction
/// diverges are redrawn from the same stream, so every start begins at a
/// finite objective when one can be found.
pub fn initial_point(
    window: &ObjectiveWindow,
    region: &FeasibleRegion,
    seed: u64,
) -> Result<IMParamsTransformed> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = sample_feasible_with(region, &mut rng)?;
    for _ in 0..MAX_INITIAL_REDRAWS {
        if window.objective(&d).is_ok() {
            break;
        }
        d = sample_feasible_with(region, &mut rng)?;
    }
    Ok(d)
}

/// Multi-start minimization over a prepared window.
pub fn minimize_window(
    window: &ObjectiveWindow,
    region: &FeasibleRegion,
    opts: &SolverOptions,
) -> Result<IdentificationResult> {
    region.validate()?;
    opts.validate()?;
    let starts: Vec<StartRecord> = (0..opts.n_starts)
        .into_par_iter()
        .map(|i| -> Result<StartRecord> {
            let seed = derive_seed(opts.seed, i as u64);
            let initial = initial_point(window, region, seed)?;
            let mut solver = LocalSolver {
                window,
                region,
                opts,
                evaluations: 0,
            };
            Ok(solver.run(i, seed, initial))
        })
        .collect::<Result<_>>()?;
    finish(window, opts, starts)
}

/// Builds the result from completed start records. Ties on the objective
/// go to the lowest start index.
pub(crate) fn finish(
    window: &ObjectiveWindow,
    opts: &SolverOptions,
    starts: Vec<StartRecord>,
) -> Result<IdentificationResult> {
    let best = starts
        .iter()
        .filter(|s| s.final_of < opts.penalty_value)
        .min_by(|x, y| {
            x.final_of
                .total_cmp(&y.final_of)
                .then(x.index.cmp(&y.index))
        })
        .ok_or(LoadModelError::AllStartsFailed)?;
    let d_opt = best.final_point;
    let ev = window.evaluate(&d_opt)?;
    Ok(IdentificationResult {
        d_opt,
        os_opt: ev.zip,
        of_opt: best.final_of,
        window: WindowMeta {
            policy: *window.policy(),
            n_fit: window.n_fit(),
            low_excitation: window.low_excitation(),
            snr_estimate_db: None,
        },
        starts,
    })
}

/// Identifies `[a, b, H2, Tm]` and the ZIP part from one data window.
pub fn minimize(
    data: &MeasurementSeries,
    region: &FeasibleRegion,
    opts: &SolverOptions,
    policy: &WindowPolicy,
    cfg: &SystemConfig,
) -> Result<IdentificationResult> {
    let window = ObjectiveWindow::new(data, policy, cfg)?;
    minimize_window(&window, region, opts)
}
