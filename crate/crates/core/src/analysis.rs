//! Empirical studies of the identification problem: midpoint quasi-convexity
//! sampling, multi-start reliability, 2-D objective slices, fitting degree
//! under a fault, and batch statistics of identified parameters.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LoadModelError, Result};
use crate::lower_stage::{ObjectiveWindow, WindowPolicy};
use crate::model::{IMParamsTransformed, SystemConfig};
use crate::series::{mean, MeasurementSeries};
use crate::signalgen::{generate_fault_voltage, AmbientSpec, FaultSpec};
use crate::simulator::{simulate_composite, CompositeLoad, SimOptions};
use crate::upper_stage::{
    derive_seed, is_feasible, minimize_window, sample_feasible_with, FeasibleRegion,
    IdentificationResult, SolverOptions,
};

/// Tolerance under which the midpoint counts as not exceeding the larger
/// endpoint value.
pub const MIDPOINT_TOLERANCE: f64 = 1e-12;

/// Value written into landscape cells outside the feasible region.
pub const LANDSCAPE_SENTINEL: f64 = 6.0;

/// Objective value for a candidate; errors mean the candidate cannot be
/// evaluated.
pub trait Objective: Sync {
    fn value(&self, d: &IMParamsTransformed) -> Result<f64>;
}

impl Objective for ObjectiveWindow {
    fn value(&self, d: &IMParamsTransformed) -> Result<f64> {
        self.objective(d)
    }
}

/// Adapts a plain function into an [`Objective`].
pub struct FnObjective<F>(pub F);

impl<F: Fn(&IMParamsTransformed) -> f64 + Sync> Objective for FnObjective<F> {
    fn value(&self, d: &IMParamsTransformed) -> Result<f64> {
        Ok((self.0)(d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub left: IMParamsTransformed,
    pub right: IMParamsTransformed,
    /// Objective at left, midpoint and right.
    pub of: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QConvexReport {
    pub n_pairs: usize,
    pub n_success: usize,
    pub sp: f64,
    /// Pairs redrawn because their midpoint was infeasible.
    pub n_resampled: usize,
    pub failures: Vec<PairFailure>,
}

fn midpoint(x: &IMParamsTransformed, y: &IMParamsTransformed) -> IMParamsTransformed {
    let (a, b) = (x.to_array(), y.to_array());
    IMParamsTransformed::from_array(std::array::from_fn(|j| 0.5 * (a[j] + b[j])))
}

/// Midpoint test on `n_pairs` random feasible pairs of an arbitrary
/// objective. Unevaluable points take `penalty`.
pub fn quasiconvexity_test_with<O: Objective + ?Sized>(
    objective: &O,
    region: &FeasibleRegion,
    n_pairs: usize,
    seed: u64,
    penalty: f64,
) -> Result<QConvexReport> {
    region.validate()?;
    let f = |d: &IMParamsTransformed| objective.value(d).unwrap_or(penalty);
    let outcomes: Vec<(usize, Option<PairFailure>)> = (0..n_pairs)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let mut resampled = 0;
            let (left, right, mid) = loop {
                let left = sample_feasible_with(region, &mut rng)?;
                let right = sample_feasible_with(region, &mut rng)?;
                let mid = midpoint(&left, &right);
                if is_feasible(&mid, region).feasible {
                    break (left, right, mid);
                }
                resampled += 1;
                if resampled >= crate::upper_stage::MAX_REJECTIONS {
                    return Err(LoadModelError::SamplingFailed {
                        attempts: resampled,
                    });
                }
            };
            let of = [f(&left), f(&mid), f(&right)];
            let ok = of[1] <= of[0].max(of[2]) + MIDPOINT_TOLERANCE;
            Ok((resampled, (!ok).then_some(PairFailure { left, right, of })))
        })
        .collect::<Result<_>>()?;
    let n_resampled = outcomes.iter().map(|(r, _)| r).sum();
    let failures: Vec<PairFailure> = outcomes.into_iter().filter_map(|(_, f)| f).collect();
    let n_success = n_pairs - failures.len();
    Ok(QConvexReport {
        n_pairs,
        n_success,
        sp: if n_pairs == 0 {
            0.0
        } else {
            100.0 * n_success as f64 / n_pairs as f64
        },
        n_resampled,
        failures,
    })
}

/// Midpoint test on the identification objective of `data`.
pub fn quasiconvexity_test(
    data: &MeasurementSeries,
    region: &FeasibleRegion,
    n_pairs: usize,
    seed: u64,
) -> Result<QConvexReport> {
    let window = ObjectiveWindow::new(data, &WindowPolicy::default(), &SystemConfig::default())?;
    quasiconvexity_test_with(
        &window,
        region,
        n_pairs,
        seed,
        SolverOptions::default().penalty_value,
    )
}

/// Sum of absolute relative deviations from a reference point.
pub fn normalized_distance(d: &IMParamsTransformed, reference: &IMParamsTransformed) -> f64 {
    d.to_array()
        .iter()
        .zip(reference.to_array())
        .map(|(x, r)| (x / r - 1.0).abs())
        .sum()
}

/// Sum of signed relative deviations; deviations of opposite sign cancel.
pub fn signed_distance(d: &IMParamsTransformed, reference: &IMParamsTransformed) -> f64 {
    d.to_array()
        .iter()
        .zip(reference.to_array())
        .map(|(x, r)| x / r - 1.0)
        .sum()
}

/// Distance below which a start counts as reaching the reference.
pub const RELIABILITY_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    /// Percentage of starts within [`RELIABILITY_RADIUS`] of the best point.
    pub sp: f64,
    /// Same with signed deviations.
    pub sp_signed: f64,
    pub distances: Vec<f64>,
    pub best: IdentificationResult,
}

/// Scores the starts of a finished multi-start run against its best point.
pub fn reliability_report(best: IdentificationResult) -> ReliabilityReport {
    let reference = best.d_opt;
    let n = best.starts.len() as f64;
    let distances: Vec<f64> = best
        .starts
        .iter()
        .map(|s| normalized_distance(&s.final_point, &reference))
        .collect();
    let hits = distances
        .iter()
        .filter(|&&x| x < RELIABILITY_RADIUS)
        .count();
    let hits_signed = best
        .starts
        .iter()
        .filter(|s| signed_distance(&s.final_point, &reference) < RELIABILITY_RADIUS)
        .count();
    ReliabilityReport {
        sp: 100.0 * hits as f64 / n,
        sp_signed: 100.0 * hits_signed as f64 / n,
        distances,
        best,
    }
}

/// Runs `opts.n_starts` independent starts on a prepared window and scores
/// each against the best final point.
pub fn reliability_test_window(
    window: &ObjectiveWindow,
    region: &FeasibleRegion,
    opts: &SolverOptions,
) -> Result<ReliabilityReport> {
    Ok(reliability_report(minimize_window(window, region, opts)?))
}

pub fn reliability_test(
    data: &MeasurementSeries,
    region: &FeasibleRegion,
    n_starts: usize,
    seed: u64,
) -> Result<ReliabilityReport> {
    let window = ObjectiveWindow::new(data, &WindowPolicy::default(), &SystemConfig::default())?;
    let opts = SolverOptions {
        n_starts,
        seed,
        ..SolverOptions::default()
    };
    reliability_test_window(&window, region, &opts)
}

/// Inclusive, evenly spaced grid of `n` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self.n {
            0 => Vec::new(),
            1 => vec![self.min],
            n => (0..n)
                .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub d_center: IMParamsTransformed,
    pub d1: IMParamsTransformed,
    pub d2: IMParamsTransformed,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    /// `values[i][j]` is `log10(OF)` at `(k1[i], k2[j])`.
    pub values: Vec<Vec<f64>>,
    /// Feasible cells `(i, j)` whose objective could not be evaluated. They
    /// hold `log10` of the solver's penalty value, which is what the solver
    /// sees there.
    pub failed: Vec<(usize, usize)>,
}

/// Point `center + k1 (d1 - center) + k2 (d2 - center)`.
pub fn slice_point(
    center: &IMParamsTransformed,
    d1: &IMParamsTransformed,
    d2: &IMParamsTransformed,
    k1: f64,
    k2: f64,
) -> IMParamsTransformed {
    let (c, x, y) = (center.to_array(), d1.to_array(), d2.to_array());
    IMParamsTransformed::from_array(std::array::from_fn(|j| {
        c[j] + k1 * (x[j] - c[j]) + k2 * (y[j] - c[j])
    }))
}

/// Evaluates `log10(OF)` over a plane through `d_center`. Infeasible cells
/// get [`LANDSCAPE_SENTINEL`]; feasible cells that cannot be evaluated get
/// `log10(penalty)`.
#[allow(clippy::too_many_arguments)]
pub fn landscape_slice_with<O: Objective + ?Sized>(
    objective: &O,
    d_center: &IMParamsTransformed,
    d1: &IMParamsTransformed,
    d2: &IMParamsTransformed,
    k1: &GridSpec,
    k2: &GridSpec,
    region: &FeasibleRegion,
    penalty: f64,
) -> Result<LandscapeGrid> {
    if d1 == d_center || d2 == d_center {
        return Err(LoadModelError::Domain(
            "slice anchors must differ from the center".into(),
        ));
    }
    let (k1v, k2v) = (k1.values(), k2.values());
    let cells: Vec<Vec<(f64, bool)>> = k1v
        .par_iter()
        .map(|&u| {
            k2v.iter()
                .map(|&w| {
                    let d = slice_point(d_center, d1, d2, u, w);
                    if !is_feasible(&d, region).feasible {
                        return (LANDSCAPE_SENTINEL, false);
                    }
                    match objective.value(&d) {
                        // an exact zero would map to -inf
                        Ok(of) if of.is_finite() => (of.max(f64::MIN_POSITIVE).log10(), false),
                        _ => (penalty.log10(), true),
                    }
                })
                .collect()
        })
        .collect();
    let failed = cells
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, c)| c.1)
                .map(move |(j, _)| (i, j))
        })
        .collect();
    Ok(LandscapeGrid {
        d_center: *d_center,
        d1: *d1,
        d2: *d2,
        k1: k1v,
        k2: k2v,
        values: cells
            .into_iter()
            .map(|row| row.into_iter().map(|c| c.0).collect())
            .collect(),
        failed,
    })
}

pub fn landscape_slice(
    data: &MeasurementSeries,
    d_center: &IMParamsTransformed,
    d1: &IMParamsTransformed,
    d2: &IMParamsTransformed,
    k1: &GridSpec,
    k2: &GridSpec,
    region: &FeasibleRegion,
) -> Result<LandscapeGrid> {
    let window = ObjectiveWindow::new(data, &WindowPolicy::default(), &SystemConfig::default())?;
    let penalty = SolverOptions::default().penalty_value;
    landscape_slice_with(&window, d_center, d1, d2, k1, k2, region, penalty)
}

impl LandscapeGrid {
    /// Writes the grid as a CSV matrix: one `#` line with the anchors and
    /// grid, then one row per `k1` value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let fmt = |d: &IMParamsTransformed| {
            let a = d.to_array();
            format!("{} {} {} {}", a[0], a[1], a[2], a[3])
        };
        let range = |k: &[f64]| match (k.first(), k.last()) {
            (Some(lo), Some(hi)) => format!("{lo}:{hi}:{}", k.len()),
            _ => "empty".to_string(),
        };
        writeln!(
            w,
            "# center={};d1={};d2={};k1={};k2={}",
            fmt(&self.d_center),
            fmt(&self.d1),
            fmt(&self.d2),
            range(&self.k1),
            range(&self.k2)
        )?;
        for row in &self.values {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Objective values along straight rays leaving a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayProfile {
    /// Unit-box direction of each ray.
    pub directions: Vec<[f64; 4]>,
    /// Objective at the start point followed by every feasible step.
    pub values: Vec<Vec<f64>>,
    /// Steps where the objective went down while moving away.
    pub n_decreasing: usize,
    pub n_steps: usize,
}

impl RayProfile {
    pub fn non_monotone_fraction(&self) -> f64 {
        if self.n_steps == 0 {
            0.0
        } else {
            self.n_decreasing as f64 / self.n_steps as f64
        }
    }
}

/// Walks `n_rays` random directions out of `center` in steps of `step`
/// (unit-box coordinates) until the first infeasible point, counting steps
/// on which the objective decreases. Unevaluable points take `penalty`.
pub fn ray_profile<O: Objective + ?Sized>(
    objective: &O,
    center: &IMParamsTransformed,
    region: &FeasibleRegion,
    n_rays: usize,
    step: f64,
    seed: u64,
    penalty: f64,
) -> Result<RayProfile> {
    region.validate()?;
    if !(step > 0.0) {
        return Err(LoadModelError::Domain(format!(
            "ray step must be positive, got {step}"
        )));
    }
    let f0 = objective.value(center)?;
    let z0 = region.to_unit(center);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut directions = Vec::with_capacity(n_rays);
    let mut values = Vec::with_capacity(n_rays);
    let (mut n_steps, mut n_decreasing) = (0, 0);
    for _ in 0..n_rays {
        let dir = loop {
            let g: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break g.map(|x| x / norm);
            }
        };
        let mut ray = vec![f0];
        for k in 1.. {
            let z: [f64; 4] = std::array::from_fn(|j| z0[j] + k as f64 * step * dir[j]);
            let d = region.from_unit(&z);
            if !is_feasible(&d, region).feasible {
                break;
            }
            let of = objective.value(&d).unwrap_or(penalty);
            if of < *ray.last().expect("ray starts at the center") {
                n_decreasing += 1;
            }
            n_steps += 1;
            ray.push(of);
        }
        directions.push(dir);
        values.push(ray);
    }
    Ok(RayProfile {
        directions,
        values,
        n_decreasing,
        n_steps,
    })
}

/// `1 - sum((test - ref)^2) / sum((ref - mean(ref))^2)`.
pub fn fitting_degree(y_reference: &[f64], y_test: &[f64]) -> Result<f64> {
    if y_reference.len() != y_test.len() || y_reference.is_empty() {
        return Err(LoadModelError::InvalidSeries(format!(
            "fitting degree needs equal nonempty series (got {} and {})",
            y_reference.len(),
            y_test.len()
        )));
    }
    let m = mean(y_reference);
    let den: f64 = y_reference.iter().map(|y| (y - m).powi(2)).sum();
    if den == 0.0 {
        return Err(LoadModelError::ZeroVariance);
    }
    let num: f64 = y_reference
        .iter()
        .zip(y_test)
        .map(|(a, b)| (b - a).powi(2))
        .sum();
    Ok(1.0 - num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub fd_p: f64,
    pub fd_q: f64,
    pub fd: f64,
    pub fault: FaultSpec,
}

/// Replays the same fault against the actual and the identified load and
/// compares their power responses.
pub fn validate_identified(
    actual: &CompositeLoad,
    identified: &CompositeLoad,
    fault: &FaultSpec,
    base: &AmbientSpec,
    cfg: &SystemConfig,
    opts: &SimOptions,
) -> Result<ValidationReport> {
    let traj = generate_fault_voltage(fault, base)?;
    let opts = SimOptions {
        dt: base.dt,
        ..*opts
    };
    let run = |load: &CompositeLoad, scenario: &'static str| {
        simulate_composite(load, &traj.v, &traj.theta, cfg, &opts).map_err(|e| {
            LoadModelError::Scenario {
                scenario,
                source: Box::new(e),
            }
        })
    };
    let reference = run(actual, "actual")?;
    let test = run(identified, "identified")?;
    let fd_p = fitting_degree(&reference.p, &test.p)?;
    let fd_q = fitting_degree(&reference.q, &test.q)?;
    Ok(ValidationReport {
        fd_p,
        fd_q,
        fd: 0.5 * (fd_p + fd_q),
        fault: *fault,
    })
}

/// Mean and sample standard deviation (`n - 1` denominator; zero for a
/// single value).
pub fn mean_and_std(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    if x.len() < 2 {
        return (m, 0.0);
    }
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    (m, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n: usize,
    /// Per-parameter mean of `identified / truth`, order `[a, b, h2, tm]`.
    pub mean: [f64; 4],
    pub std: [f64; 4],
    pub mean_snr_db: Option<f64>,
}

/// Statistics of parameters normalized by their generating values.
pub fn batch_statistics(
    results: &[(IdentificationResult, IMParamsTransformed)],
) -> Result<BatchSummary> {
    if results.is_empty() {
        return Err(LoadModelError::Domain(
            "batch statistics need at least one result".into(),
        ));
    }
    let normalized: Vec<[f64; 4]> = results
        .iter()
        .map(|(r, truth)| {
            let (x, t) = (r.d_opt.to_array(), truth.to_array());
            std::array::from_fn(|j| x[j] / t[j])
        })
        .collect();
    let mut out = BatchSummary {
        n: results.len(),
        mean: [0.0; 4],
        std: [0.0; 4],
        mean_snr_db: None,
    };
    for j in 0..4 {
        let col: Vec<f64> = normalized.iter().map(|v| v[j]).collect();
        (out.mean[j], out.std[j]) = mean_and_std(&col);
    }
    let snrs: Vec<f64> = results
        .iter()
        .filter_map(|(r, _)| r.window.snr_estimate_db)
        .collect();
    if !snrs.is_empty() {
        out.mean_snr_db = Some(mean(&snrs));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::upper_stage::{StabilityForm, DEFAULT_LOWER, DEFAULT_UPPER};

    fn region() -> FeasibleRegion {
        FeasibleRegion {
            lower: DEFAULT_LOWER,
            upper: DEFAULT_UPPER,
            tm_max: 1.0,
            v_min: 0.97,
            stability: StabilityForm::TorqueBalance,
        }
    }

    fn scaled(d: &IMParamsTransformed) -> [f64; 4] {
        region().to_unit(d)
    }

    #[test]
    fn convex_stub_always_passes() {
        let stub = FnObjective(|d: &IMParamsTransformed| {
            let z = scaled(d);
            (z[0] - 0.3).powi(2)
                + 2.0 * (z[1] - 0.6).powi(2)
                + (z[2] - 0.5).powi(2)
                + 0.5 * z[3].powi(2)
        });
        let rep = quasiconvexity_test_with(&stub, &region(), 500, 3, 1e3).unwrap();
        assert_eq!(rep.n_success, 500);
        assert_eq!(rep.sp, 100.0);
        assert!(rep.failures.is_empty());
    }

    #[test]
    fn bimodal_stub_fails_some_pairs() {
        let stub = FnObjective(|d: &IMParamsTransformed| {
            let z = scaled(d);
            let well = |c: f64| (z[0] - c).powi(2) + (z[1] - 0.5).powi(2);
            well(0.1).min(well(0.9))
        });
        let rep = quasiconvexity_test_with(&stub, &region(), 500, 3, 1e3).unwrap();
        assert!(rep.sp < 100.0);
        assert_eq!(rep.failures.len(), 500 - rep.n_success);
        for f in &rep.failures {
            assert!(f.of[1] > f.of[0].max(f.of[2]));
        }
    }

    #[test]
    fn quasiconvexity_is_seeded() {
        let stub = FnObjective(|d: &IMParamsTransformed| {
            (scaled(d)[0] - 0.5).abs().sqrt() * (scaled(d)[1] - 0.2).cos()
        });
        let a = quasiconvexity_test_with(&stub, &region(), 200, 9, 1e3).unwrap();
        let b = quasiconvexity_test_with(&stub, &region(), 200, 9, 1e3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distances() {
        let r = IMParamsTransformed::new(40.0, 10.0, 1.0, 0.5);
        assert_eq!(normalized_distance(&r, &r), 0.0);
        let d = IMParamsTransformed::new(44.0, 9.0, 1.0, 0.5);
        assert!((normalized_distance(&d, &r) - 0.2).abs() < 1e-12);
        assert!(signed_distance(&d, &r).abs() < 1e-12);
    }

    #[test]
    fn grid_values() {
        assert_eq!(
            GridSpec {
                min: -1.0,
                max: 1.0,
                n: 5
            }
            .values(),
            vec![-1.0, -0.5, 0.0, 0.5, 1.0]
        );
        assert_eq!(
            GridSpec {
                min: 2.0,
                max: 3.0,
                n: 1
            }
            .values(),
            vec![2.0]
        );
    }

    #[test]
    fn landscape_center_and_sentinels() {
        let stub = FnObjective(|d: &IMParamsTransformed| {
            1e-3 + (d.a - 40.0).powi(2) + (d.b - 10.0).powi(2)
        });
        let c = IMParamsTransformed::new(40.0, 10.0, 1.0, 0.5);
        let d1 = IMParamsTransformed::new(70.0, 10.0, 1.0, 0.5);
        let d2 = IMParamsTransformed::new(40.0, 25.0, 1.0, 0.5);
        let g = GridSpec {
            min: -1.0,
            max: 1.0,
            n: 11,
        };
        let reg = region();
        let grid = landscape_slice_with(&stub, &c, &d1, &d2, &g, &g, &reg, 1e3).unwrap();
        assert_eq!(grid.values.len(), 11);
        assert!(grid.values.iter().all(|r| r.len() == 11));
        assert!((grid.values[5][5] - 1e-3f64.log10()).abs() < 1e-12);
        for (i, row) in grid.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let p = slice_point(&c, &d1, &d2, grid.k1[i], grid.k2[j]);
                assert_eq!(v == LANDSCAPE_SENTINEL, !is_feasible(&p, &reg).feasible);
            }
        }
        // k1 = -1 puts a at 10 (on the bound); k2 = 1 pushes b to 25, where
        // a V_min^2 < 2 b Tm for small a
        assert!(grid
            .values
            .iter()
            .flatten()
            .any(|&v| v == LANDSCAPE_SENTINEL));
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# center=40 10 1 0.5;"));
        assert_eq!(text.lines().count(), 12);
    }

    #[test]
    fn anchors_must_differ() {
        let c = IMParamsTransformed::new(40.0, 10.0, 1.0, 0.5);
        let g = GridSpec {
            min: 0.0,
            max: 1.0,
            n: 2,
        };
        let stub = FnObjective(|_: &IMParamsTransformed| 1.0);
        assert!(landscape_slice_with(&stub, &c, &c, &c, &g, &g, &region(), 1e3).is_err());
    }

    #[test]
    fn fitting_degree_examples() {
        let y = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(fitting_degree(&y, &y).unwrap(), 1.0);
        assert_eq!(fitting_degree(&y, &[1.5; 4]).unwrap(), 0.0);
        assert!((fitting_degree(&y, &[0.0, 1.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(fitting_degree(&y, &[1.0, 2.0, 3.0, 4.0]).unwrap() < 1.0);
        assert_eq!(
            fitting_degree(&[2.0; 3], &[2.0; 3]),
            Err(LoadModelError::ZeroVariance)
        );
        assert!(fitting_degree(&y, &y[..3]).is_err());
    }

    #[test]
    fn sample_std_convention() {
        let (m, s) = mean_and_std(&[0.9, 1.1]);
        assert!((m - 1.0).abs() < 1e-15);
        assert!((s - 0.1 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_and_std(&[1.0, 1.0, 1.0]), (1.0, 0.0));
    }
}
