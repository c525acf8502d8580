//! Time-domain simulation of the composite load against a voltage trajectory.
//!
//! The same stepping code produces synthetic measurements and the motor
//! power predictions used inside identification, so a candidate equal to
//! the generating parameters reproduces the data up to the initial-state
//! transient.

use serde::{Deserialize, Serialize};

use crate::error::{LoadModelError, Result};
use crate::model::{
    im_derivatives, im_original_model, im_output, polar_to_dq, transform_params, zip_power,
    IMParamsPhysical, IMParamsTransformed, IMState, IMStateOriginal, PhasorDQ, SystemConfig,
    ZIPParams,
};
use crate::series::MeasurementSeries;

/// States larger than this are treated as a diverged simulation.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Motor part of a composite load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MotorModel {
    Transformed(IMParamsTransformed),
    /// Original third-order form. Its output includes the `V^2/X'` term.
    Physical(IMParamsPhysical),
}

impl MotorModel {
    /// Reduced parameters of this motor.
    pub fn transformed(&self) -> Result<IMParamsTransformed> {
        match self {
            MotorModel::Transformed(d) => Ok(*d),
            MotorModel::Physical(p) => transform_params(p),
        }
    }
}

/// ZIP static part plus induction motor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeLoad {
    pub motor: MotorModel,
    pub zip: ZIPParams,
}

impl CompositeLoad {
    pub fn transformed(motor: IMParamsTransformed, zip: ZIPParams) -> Self {
        Self {
            motor: MotorModel::Transformed(motor),
            zip,
        }
    }

    /// The equivalent load in reduced form: `Qz` absorbs `1/X'`.
    pub fn to_transformed(&self) -> Result<CompositeLoad> {
        match self.motor {
            MotorModel::Transformed(_) => Ok(*self),
            MotorModel::Physical(p) => Ok(CompositeLoad {
                motor: MotorModel::Transformed(transform_params(&p)?),
                zip: ZIPParams {
                    qz: self.zip.qz + 1.0 / p.xp,
                    ..self.zip
                },
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    /// Classical four-stage scheme with the voltage held over each step.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub method: Integrator,
    /// Integration step, equal to the spacing of the voltage samples (s).
    pub dt: f64,
    /// Record every `record_stride`-th sample.
    pub record_stride: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            method: Integrator::Euler,
            dt: 0.01,
            record_stride: 1,
        }
    }
}

/// Equilibrium of the reduced motor at voltage `v0`.
///
/// The slip is the smaller root of
/// `Tm w0^2 s^2 - a |v0|^2 w0 s + Tm b^2 = 0`, i.e. the stable side of the
/// torque curve. Fails when the peak torque `a |v0|^2 / (2b)` is below `Tm`.
pub fn steady_state_init(
    d: &IMParamsTransformed,
    v0: &PhasorDQ,
    cfg: &SystemConfig,
) -> Result<IMState> {
    let v2 = v0.magnitude_sq();
    let drive = d.a * v2;
    let disc = drive * drive - 4.0 * (d.tm * d.b).powi(2);
    if disc < 0.0 {
        return Err(LoadModelError::InfeasibleSteadyState {
            available: drive,
            required: 2.0 * d.b * d.tm,
        });
    }
    // w = s * omega0; rationalized form of the smaller root
    let w = if d.tm == 0.0 {
        0.0
    } else {
        2.0 * d.tm * d.b * d.b / (drive + disc.sqrt())
    };
    let den = d.b * d.b + w * w;
    Ok(IMState {
        fd: d.a * (v0.vd * d.b + v0.vq * w) / den,
        fq: d.a * (v0.vq * d.b - v0.vd * w) / den,
        s: w / cfg.omega0,
    })
}

/// Equilibrium of the original motor, obtained through the reduced form.
pub fn steady_state_init_original(
    phys: &IMParamsPhysical,
    v0: &PhasorDQ,
    cfg: &SystemConfig,
) -> Result<IMStateOriginal> {
    let f = steady_state_init(&transform_params(phys)?, v0, cfg)?;
    Ok(IMStateOriginal::new(f.fd * phys.xp, f.fq * phys.xp, f.s))
}

fn check_state(sample: usize, x: &IMState) -> Result<()> {
    let m = x.max_abs();
    if !x.is_finite() || m > DIVERGENCE_BOUND {
        return Err(LoadModelError::Divergence {
            sample,
            magnitude: m,
        });
    }
    Ok(())
}

fn step_reduced(
    x: IMState,
    v: &PhasorDQ,
    d: &IMParamsTransformed,
    cfg: &SystemConfig,
    dt: f64,
    method: Integrator,
) -> IMState {
    match method {
        Integrator::Euler => x.axpy(dt, im_derivatives(&x, v, d, cfg)),
        Integrator::Rk4 => {
            let k1 = im_derivatives(&x, v, d, cfg);
            let k2 = im_derivatives(&x.axpy(0.5 * dt, k1), v, d, cfg);
            let k3 = im_derivatives(&x.axpy(0.5 * dt, k2), v, d, cfg);
            let k4 = im_derivatives(&x.axpy(dt, k3), v, d, cfg);
            IMState {
                fd: x.fd + dt / 6.0 * (k1.fd + 2.0 * k2.fd + 2.0 * k3.fd + k4.fd),
                fq: x.fq + dt / 6.0 * (k1.fq + 2.0 * k2.fq + 2.0 * k3.fq + k4.fq),
                s: x.s + dt / 6.0 * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s),
            }
        }
    }
}

/// Runs the reduced motor from its equilibrium at `dq[0]`, calling `emit`
/// with the state at every sample before it is advanced.
pub(crate) fn run_reduced(
    d: &IMParamsTransformed,
    dq: &[PhasorDQ],
    cfg: &SystemConfig,
    dt: f64,
    method: Integrator,
    mut emit: impl FnMut(usize, &IMState, &PhasorDQ),
) -> Result<IMState> {
    let Some(first) = dq.first() else {
        return Err(LoadModelError::InvalidSeries("empty voltage series".into()));
    };
    let mut x = steady_state_init(d, first, cfg)?;
    for (n, v) in dq.iter().enumerate() {
        emit(n, &x, v);
        x = step_reduced(x, v, d, cfg, dt, method);
        check_state(n, &x)?;
    }
    Ok(x)
}

/// Euler prediction of the reduced motor's `(P, Q)` written into the given
/// buffers. This is the hot path of every objective evaluation.
pub(crate) fn predict_into(
    d: &IMParamsTransformed,
    dq: &[PhasorDQ],
    cfg: &SystemConfig,
    p_out: &mut [f64],
    q_out: &mut [f64],
) -> Result<()> {
    run_reduced(d, dq, cfg, cfg.dt, Integrator::Euler, |n, x, v| {
        let (p, q) = im_output(x, v);
        p_out[n] = p;
        q_out[n] = q;
    })?;
    Ok(())
}

/// Reduced-motor power along a measured voltage trajectory, starting from
/// equilibrium at the first sample and advancing with explicit Euler.
pub fn predict_im_power(
    d: &IMParamsTransformed,
    v: &[f64],
    theta: &[f64],
    cfg: &SystemConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if v.len() != theta.len() {
        return Err(LoadModelError::InvalidSeries(
            "voltage magnitude and angle lengths differ".into(),
        ));
    }
    let dq: Vec<PhasorDQ> = v
        .iter()
        .zip(theta)
        .map(|(&m, &a)| polar_to_dq(m, a))
        .collect();
    let mut p = vec![0.0; dq.len()];
    let mut q = vec![0.0; dq.len()];
    predict_into(d, &dq, cfg, &mut p, &mut q)?;
    Ok((p, q))
}

/// Simulates the composite load, motor plus ZIP, against `(v, theta)`
/// sampled every `opts.dt` seconds from `t = 0`.
pub fn simulate_composite(
    load: &CompositeLoad,
    v: &[f64],
    theta: &[f64],
    cfg: &SystemConfig,
    opts: &SimOptions,
) -> Result<MeasurementSeries> {
    if v.len() != theta.len() {
        return Err(LoadModelError::InvalidSeries(
            "voltage magnitude and angle lengths differ".into(),
        ));
    }
    if !(opts.dt > 0.0) || opts.record_stride == 0 {
        return Err(LoadModelError::Domain(
            "simulation needs dt > 0 and record_stride >= 1".into(),
        ));
    }
    cfg.validate()?;
    let dq: Vec<PhasorDQ> = v
        .iter()
        .zip(theta)
        .map(|(&m, &a)| polar_to_dq(m, a))
        .collect();
    let n = dq.len();
    let mut p_motor = vec![0.0; n];
    let mut q_motor = vec![0.0; n];
    match &load.motor {
        MotorModel::Transformed(d) => {
            d.validate()?;
            run_reduced(d, &dq, cfg, opts.dt, opts.method, |k, x, vk| {
                let (p, q) = im_output(x, vk);
                p_motor[k] = p;
                q_motor[k] = q;
            })?;
        }
        MotorModel::Physical(phys) => {
            simulate_original(phys, &dq, cfg, opts, &mut p_motor, &mut q_motor)?;
        }
    }

    let mut out = MeasurementSeries::default();
    for k in (0..n).step_by(opts.record_stride) {
        let (ps, qs) = zip_power(&load.zip, v[k]);
        out.t.push(k as f64 * opts.dt);
        out.v.push(v[k]);
        out.theta.push(theta[k]);
        out.p.push(p_motor[k] + ps);
        out.q.push(q_motor[k] + qs);
    }
    Ok(out)
}

fn simulate_original(
    phys: &IMParamsPhysical,
    dq: &[PhasorDQ],
    cfg: &SystemConfig,
    opts: &SimOptions,
    p_out: &mut [f64],
    q_out: &mut [f64],
) -> Result<()> {
    let Some(first) = dq.first() else {
        return Err(LoadModelError::InvalidSeries("empty voltage series".into()));
    };
    let mut x = steady_state_init_original(phys, first, cfg)?;
    let dt = opts.dt;
    let rates = |x: &IMStateOriginal, v: &PhasorDQ| -> Result<IMStateOriginal> {
        Ok(im_original_model(x, v, phys, cfg)?.0)
    };
    let add = |x: &IMStateOriginal, h: f64, r: &IMStateOriginal| {
        IMStateOriginal::new(x.ed + h * r.ed, x.eq + h * r.eq, x.s + h * r.s)
    };
    for (n, v) in dq.iter().enumerate() {
        let (k1, p, q) = im_original_model(&x, v, phys, cfg)?;
        p_out[n] = p;
        q_out[n] = q;
        x = match opts.method {
            Integrator::Euler => add(&x, dt, &k1),
            Integrator::Rk4 => {
                let k2 = rates(&add(&x, 0.5 * dt, &k1), v)?;
                let k3 = rates(&add(&x, 0.5 * dt, &k2), v)?;
                let k4 = rates(&add(&x, dt, &k3), v)?;
                IMStateOriginal::new(
                    x.ed + dt / 6.0 * (k1.ed + 2.0 * k2.ed + 2.0 * k3.ed + k4.ed),
                    x.eq + dt / 6.0 * (k1.eq + 2.0 * k2.eq + 2.0 * k3.eq + k4.eq),
                    x.s + dt / 6.0 * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s),
                )
            }
        };
        check_state(n, &IMState::new(x.ed, x.eq, x.s))?;
    }
    Ok(())
}
