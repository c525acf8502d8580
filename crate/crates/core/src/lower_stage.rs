//! Lower stage: ZIP regression on the power left over by a candidate motor.
//!
//! For a candidate `D` the motor power is predicted along the measured
//! voltage, subtracted from the measured `P` and `Q`, and the remainders are
//! regressed on `[1, V, V^2]`. The objective is the summed squared residual
//! of both channels divided by the number of fitted samples.
//!
//! The basis does not depend on `D`, so its QR factorization is computed once
//! per window in [`ObjectiveWindow`] and reused for every candidate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LoadModelError, Result};
use crate::model::{IMParamsTransformed, PhasorDQ, SystemConfig, ZIPParams};
use crate::series::MeasurementSeries;
use crate::simulator::predict_into;

/// Largest accepted condition number of the regression basis.
pub const MAX_BASIS_CONDITION: f64 = 1e12;

/// Which part of a window feeds the prediction and the regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowPolicy {
    /// Prediction runs for this long before `fit_start` and is discarded (s).
    pub warmup_skip: f64,
    pub fit_start: f64,
    /// Exclusive end of the fitted range (s).
    pub fit_end: f64,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self {
            warmup_skip: 1.0,
            fit_start: 3.0,
            fit_end: 10.0,
        }
    }
}

impl WindowPolicy {
    pub fn prediction_start(&self) -> f64 {
        self.fit_start - self.warmup_skip
    }

    /// Sample indices `(prediction_start, fit_start, fit_end)` in `data`.
    pub fn indices(&self, data: &MeasurementSeries) -> Result<(usize, usize, usize)> {
        if !(self.warmup_skip >= 0.0) || !(self.fit_start < self.fit_end) {
            return Err(LoadModelError::Domain(format!(
                "window needs warmup_skip >= 0 and fit_start < fit_end (got {}, {}, {})",
                self.warmup_skip, self.fit_start, self.fit_end
            )));
        }
        let dt = data.dt();
        let t0 = data.t[0];
        let t_end = data.t[data.len() - 1] + dt;
        if self.prediction_start() < t0 - 1e-9 * dt || self.fit_end > t_end + 1e-9 * dt {
            return Err(LoadModelError::Domain(format!(
                "window [{}, {}) does not fit in data covering [{t0}, {t_end})",
                self.prediction_start(),
                self.fit_end
            )));
        }
        let start = data.index_at(self.prediction_start());
        let lo = data.index_at(self.fit_start);
        let hi = data.index_at(self.fit_end);
        if hi < lo + 3 {
            return Err(LoadModelError::Domain(format!(
                "fit range holds {} samples, need at least 3",
                hi.saturating_sub(lo)
            )));
        }
        Ok((start, lo, hi))
    }
}

/// Result of the two ZIP regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionOutcome {
    pub zip: ZIPParams,
    pub r_p: Vec<f64>,
    pub r_q: Vec<f64>,
    /// Number of samples in each regression.
    pub l: usize,
    /// Set when the quadratic basis was ill-conditioned and only the
    /// constant column was fitted.
    pub low_excitation: bool,
}

/// Thin QR factorization of the regression basis.
#[derive(Debug, Clone)]
pub struct ZipBasis {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    condition: f64,
}

impl ZipBasis {
    /// Columns `[1, V, V^2]`. Fails when the condition number exceeds
    /// [`MAX_BASIS_CONDITION`].
    pub fn quadratic(v: &[f64]) -> Result<Self> {
        if v.len() < 3 {
            return Err(LoadModelError::Domain(format!(
                "quadratic regression needs at least 3 samples, got {}",
                v.len()
            )));
        }
        let x = DMatrix::from_fn(v.len(), 3, |i, j| v[i].powi(j as i32));
        let basis = Self::factor(x);
        if !(basis.condition <= MAX_BASIS_CONDITION) {
            return Err(LoadModelError::RankDeficient {
                condition: basis.condition,
            });
        }
        Ok(basis)
    }

    /// A single all-ones column.
    pub fn constant(n: usize) -> Self {
        Self::factor(DMatrix::from_element(n, 1, 1.0))
    }

    fn factor(x: DMatrix<f64>) -> Self {
        let qr = x.qr();
        let r = qr.r();
        let sv = r.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let condition = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        Self {
            q: qr.q(),
            r,
            condition,
        }
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn n_columns(&self) -> usize {
        self.r.ncols()
    }

    /// Least-squares coefficients in column order and the residual written
    /// into `residual`.
    pub fn fit(&self, y: &[f64], residual: &mut [f64]) -> Vec<f64> {
        let y = DVector::from_column_slice(y);
        let qty = self.q.tr_mul(&y);
        let fitted = &self.q * &qty;
        for (k, r) in residual.iter_mut().enumerate() {
            *r = y[k] - fitted[k];
        }
        let coeffs = self
            .r
            .solve_upper_triangular(&qty)
            .unwrap_or_else(|| DVector::from_element(qty.len(), f64::NAN));
        coeffs.iter().copied().collect()
    }
}

fn coeffs_to_zip(cp: &[f64], cq: &[f64]) -> ZIPParams {
    let get = |c: &[f64], k: usize| c.get(k).copied().unwrap_or(0.0);
    ZIPParams {
        pp: get(cp, 0),
        pi: get(cp, 1),
        pz: get(cp, 2),
        qp: get(cq, 0),
        qi: get(cq, 1),
        qz: get(cq, 2),
    }
}

fn fit_both(basis: &ZipBasis, y_p: &[f64], y_q: &[f64], low_excitation: bool) -> RegressionOutcome {
    let l = y_p.len();
    let mut r_p = vec![0.0; l];
    let mut r_q = vec![0.0; l];
    let cp = basis.fit(y_p, &mut r_p);
    let cq = basis.fit(y_q, &mut r_q);
    RegressionOutcome {
        zip: coeffs_to_zip(&cp, &cq),
        r_p,
        r_q,
        l,
        low_excitation,
    }
}

/// Ordinary least squares of both residual power channels on `[1, V, V^2]`.
pub fn regress_zip(residual_p: &[f64], residual_q: &[f64], v: &[f64]) -> Result<RegressionOutcome> {
    if residual_p.len() != v.len() || residual_q.len() != v.len() {
        return Err(LoadModelError::InvalidSeries(
            "regression inputs have different lengths".into(),
        ));
    }
    let basis = ZipBasis::quadratic(v)?;
    Ok(fit_both(&basis, residual_p, residual_q, false))
}

/// Objective value, optimal ZIP coefficients and regression details for one
/// candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub of: f64,
    pub zip: ZIPParams,
    pub regression: RegressionOutcome,
}

/// One data window prepared for repeated objective evaluations.
#[derive(Debug, Clone)]
pub struct ObjectiveWindow {
    cfg: SystemConfig,
    policy: WindowPolicy,
    dq: Vec<PhasorDQ>,
    fit_offset: usize,
    p_meas: Vec<f64>,
    q_meas: Vec<f64>,
    basis: ZipBasis,
    low_excitation: bool,
}

impl ObjectiveWindow {
    pub fn new(
        data: &MeasurementSeries,
        policy: &WindowPolicy,
        cfg: &SystemConfig,
    ) -> Result<Self> {
        data.validate()?;
        cfg.validate()?;
        let (start, lo, hi) = policy.indices(data)?;
        let v_fit = &data.v[lo..hi];
        let (basis, low_excitation) = match ZipBasis::quadratic(v_fit) {
            Ok(b) => (b, false),
            Err(LoadModelError::RankDeficient { .. }) => (ZipBasis::constant(hi - lo), true),
            Err(e) => return Err(e),
        };
        let cfg = SystemConfig {
            dt: data.dt(),
            ..*cfg
        };
        Ok(Self {
            cfg,
            policy: *policy,
            dq: data.dq()[start..hi].to_vec(),
            fit_offset: lo - start,
            p_meas: data.p[lo..hi].to_vec(),
            q_meas: data.q[lo..hi].to_vec(),
            basis,
            low_excitation,
        })
    }

    /// Number of fitted samples `l`.
    pub fn n_fit(&self) -> usize {
        self.p_meas.len()
    }

    pub fn policy(&self) -> &WindowPolicy {
        &self.policy
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn low_excitation(&self) -> bool {
        self.low_excitation
    }

    fn remainders(&self, d: &IMParamsTransformed) -> Result<(Vec<f64>, Vec<f64>)> {
        d.validate()?;
        let n = self.dq.len();
        let mut p_im = vec![0.0; n];
        let mut q_im = vec![0.0; n];
        predict_into(d, &self.dq, &self.cfg, &mut p_im, &mut q_im)?;
        let off = self.fit_offset;
        let y_p = self
            .p_meas
            .iter()
            .zip(&p_im[off..])
            .map(|(m, p)| m - p)
            .collect();
        let y_q = self
            .q_meas
            .iter()
            .zip(&q_im[off..])
            .map(|(m, q)| m - q)
            .collect();
        Ok((y_p, y_q))
    }

    pub fn evaluate(&self, d: &IMParamsTransformed) -> Result<Evaluation> {
        let (y_p, y_q) = self.remainders(d)?;
        let regression = fit_both(&self.basis, &y_p, &y_q, self.low_excitation);
        let sse: f64 = regression
            .r_p
            .iter()
            .chain(&regression.r_q)
            .map(|r| r * r)
            .sum();
        Ok(Evaluation {
            of: sse / regression.l as f64,
            zip: regression.zip,
            regression,
        })
    }

    /// Objective value only.
    pub fn objective(&self, d: &IMParamsTransformed) -> Result<f64> {
        Ok(self.evaluate(d)?.of)
    }

    /// Stacked residual `[r_p; r_q] / sqrt(l)`, whose squared norm is the
    /// objective.
    pub fn scaled_residuals(&self, d: &IMParamsTransformed) -> Result<Vec<f64>> {
        let ev = self.evaluate(d)?;
        let scale = 1.0 / (ev.regression.l as f64).sqrt();
        Ok(ev
            .regression
            .r_p
            .iter()
            .chain(&ev.regression.r_q)
            .map(|r| r * scale)
            .collect())
    }
}

/// Objective, optimal static part and regression details for candidate `d`.
pub fn evaluate_candidate(
    d: &IMParamsTransformed,
    data: &MeasurementSeries,
    policy: &WindowPolicy,
    cfg: &SystemConfig,
) -> Result<Evaluation> {
    ObjectiveWindow::new(data, policy, cfg)?.evaluate(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn voltage(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| 1.0 + 0.03 * (k as f64 * 0.07).sin() + 0.01 * (k as f64 * 0.31).cos())
            .collect()
    }

    #[test]
    fn exact_quadratic_is_recovered() {
        let v = voltage(200);
        let y: Vec<f64> = v.iter().map(|x| 2.0 * x * x - 3.0 * x + 1.0).collect();
        let out = regress_zip(&y, &y, &v).unwrap();
        assert!((out.zip.pz - 2.0).abs() < 1e-9);
        assert!((out.zip.pi + 3.0).abs() < 1e-9);
        assert!((out.zip.pp - 1.0).abs() < 1e-9);
        assert!(out.r_p.iter().all(|r| r.abs() < 1e-9));
        assert_eq!(out.l, 200);
    }

    #[test]
    fn residual_is_orthogonal_to_basis() {
        let v = voltage(300);
        let y: Vec<f64> = (0..300)
            .map(|k| ((k * 7919) % 101) as f64 / 50.0 - 1.0)
            .collect();
        let out = regress_zip(&y, &y, &v).unwrap();
        for j in 0..3 {
            let dot: f64 = out.r_p.iter().zip(&v).map(|(r, x)| r * x.powi(j)).sum();
            assert!(dot.abs() < 1e-8, "column {j}: {dot}");
        }
        let m: f64 = out.r_p.iter().sum::<f64>() / 300.0;
        assert!(m.abs() < 1e-12);
    }

    #[test]
    fn flat_voltage_is_rank_deficient() {
        let v = vec![1.0; 50];
        let y = vec![0.5; 50];
        assert!(matches!(
            regress_zip(&y, &y, &v),
            Err(LoadModelError::RankDeficient { .. })
        ));
    }

    #[test]
    fn window_indices_follow_policy() {
        let t: Vec<f64> = (0..1001).map(|k| k as f64 * 0.01).collect();
        let s = MeasurementSeries::new(
            t,
            vec![1.0; 1001],
            vec![0.0; 1001],
            vec![1.0; 1001],
            vec![0.0; 1001],
        )
        .unwrap();
        let (start, lo, hi) = WindowPolicy::default().indices(&s).unwrap();
        assert_eq!((start, lo, hi), (200, 300, 1000));
        let bad = WindowPolicy {
            fit_end: 12.0,
            ..WindowPolicy::default()
        };
        assert!(bad.indices(&s).is_err());
    }

    #[test]
    fn flat_window_falls_back_to_constant_basis() {
        let t: Vec<f64> = (0..1001).map(|k| k as f64 * 0.01).collect();
        let s = MeasurementSeries::new(
            t,
            vec![1.0; 1001],
            vec![0.0; 1001],
            vec![1.3; 1001],
            vec![0.2; 1001],
        )
        .unwrap();
        let w =
            ObjectiveWindow::new(&s, &WindowPolicy::default(), &SystemConfig::default()).unwrap();
        assert!(w.low_excitation());
        let ev = w
            .evaluate(&IMParamsTransformed::new(30.0, 10.0, 1.0, 0.5))
            .unwrap();
        assert!(ev.regression.low_excitation);
        assert!(ev.of < 1e-20);
        assert!((ev.zip.pp - 0.8).abs() < 1e-9);
        assert_eq!(ev.zip.pz, 0.0);
    }
}
