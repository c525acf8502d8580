//! Composite load model equations.
//!
//! The dynamic part is a third-order induction motor. It is available in its
//! original form (states `Ed`, `Eq`, slip; parameters `X`, `X'`, `Td0`, `H2`,
//! `Tm`) and in a reduced form with states `Fd = Ed/X'`, `Fq = Eq/X'` and
//! parameters
//!
//! ```text
//! a = (X/X' - 1) / (Td0 X')      b = X / (Td0 X')
//! ```
//!
//! In the reduced form the `V^2/X'` reactive term of the motor is carried by
//! the constant-impedance coefficient `Qz` of the ZIP part, so the reduced
//! motor output never contains it.
//!
//! All quantities are per-unit on the load's own base; angles are radians in
//! the network synchronous frame.

use serde::{Deserialize, Serialize};

use crate::error::{LoadModelError, Result};

/// Network-level constants shared by every simulation of one data window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// Synchronous angular speed (rad/s).
    pub omega0: f64,
    /// Sample period (s).
    pub dt: f64,
    /// System MVA base. Informational only.
    pub s_base: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            omega0: 2.0 * std::f64::consts::PI * 50.0,
            dt: 0.01,
            s_base: 100.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(LoadModelError::Domain(format!(
                "omega0 must be positive, got {}",
                self.omega0
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(LoadModelError::Domain(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Untransformed third-order motor parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IMParamsPhysical {
    /// Rotor open-circuit reactance.
    pub x: f64,
    /// Rotor transient reactance.
    pub xp: f64,
    /// Rotor open-circuit time constant (s).
    pub td0: f64,
    /// Inertia time constant (s).
    pub h2: f64,
    /// Mechanical torque, constant.
    pub tm: f64,
}

impl IMParamsPhysical {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.x, self.xp, self.td0, self.h2, self.tm]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(LoadModelError::Domain(
                "physical motor parameters must be finite".into(),
            ));
        }
        if self.xp <= 0.0 {
            return Err(LoadModelError::Domain(format!(
                "transient reactance must be positive, got {}",
                self.xp
            )));
        }
        if self.x <= self.xp {
            return Err(LoadModelError::Domain(format!(
                "open-circuit reactance {} must exceed transient reactance {}",
                self.x, self.xp
            )));
        }
        if self.td0 <= 0.0 || self.h2 <= 0.0 || self.tm < 0.0 {
            return Err(LoadModelError::Domain(format!(
                "require Td0 > 0, H2 > 0, Tm >= 0 (got {}, {}, {})",
                self.td0, self.h2, self.tm
            )));
        }
        Ok(())
    }
}

/// Reduced motor parameters `[a, b, H2, Tm]`; the upper-stage decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IMParamsTransformed {
    /// Input gain (1/s).
    pub a: f64,
    /// EMF decay rate (1/s).
    pub b: f64,
    /// Inertia time constant (s).
    pub h2: f64,
    /// Mechanical torque.
    pub tm: f64,
}

impl IMParamsTransformed {
    pub fn new(a: f64, b: f64, h2: f64, tm: f64) -> Self {
        Self { a, b, h2, tm }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.a, self.b, self.h2, self.tm]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(LoadModelError::Domain(
                "motor parameters must be finite".into(),
            ));
        }
        if self.a <= 0.0 || self.b <= 0.0 || self.h2 <= 0.0 || self.tm < 0.0 {
            return Err(LoadModelError::Domain(format!(
                "require a > 0, b > 0, H2 > 0, Tm >= 0 (got {}, {}, {}, {})",
                self.a, self.b, self.h2, self.tm
            )));
        }
        Ok(())
    }
}

/// Reduced-model state: scaled EMF components and slip.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IMState {
    pub fd: f64,
    pub fq: f64,
    pub s: f64,
}

impl IMState {
    pub fn new(fd: f64, fq: f64, s: f64) -> Self {
        Self { fd, fq, s }
    }

    pub(crate) fn axpy(self, h: f64, rate: IMState) -> IMState {
        IMState {
            fd: self.fd + h * rate.fd,
            fq: self.fq + h * rate.fq,
            s: self.s + h * rate.s,
        }
    }

    pub(crate) fn max_abs(&self) -> f64 {
        self.fd.abs().max(self.fq.abs()).max(self.s.abs())
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.fd.is_finite() && self.fq.is_finite() && self.s.is_finite()
    }
}

/// Original-model state: EMF components and slip.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IMStateOriginal {
    pub ed: f64,
    pub eq: f64,
    pub s: f64,
}

impl IMStateOriginal {
    pub fn new(ed: f64, eq: f64, s: f64) -> Self {
        Self { ed, eq, s }
    }
}

/// Voltage phasor in the synchronous d/q frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasorDQ {
    pub vd: f64,
    pub vq: f64,
}

impl PhasorDQ {
    pub fn new(vd: f64, vq: f64) -> Self {
        Self { vd, vq }
    }

    pub fn magnitude_sq(&self) -> f64 {
        self.vd * self.vd + self.vq * self.vq
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude_sq().sqrt()
    }
}

/// ZIP static load coefficients. No sign constraints.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ZIPParams {
    pub pz: f64,
    pub pi: f64,
    pub pp: f64,
    pub qz: f64,
    pub qi: f64,
    pub qp: f64,
}

impl ZIPParams {
    pub fn new(pz: f64, pi: f64, pp: f64, qz: f64, qi: f64, qp: f64) -> Self {
        Self {
            pz,
            pi,
            pp,
            qz,
            qi,
            qp,
        }
    }
}

/// Maps physical motor parameters onto the reduced `[a, b, H2, Tm]` form.
pub fn transform_params(phys: &IMParamsPhysical) -> Result<IMParamsTransformed> {
    phys.validate()?;
    let denom = phys.td0 * phys.xp;
    Ok(IMParamsTransformed {
        a: (phys.x / phys.xp - 1.0) / denom,
        b: phys.x / denom,
        h2: phys.h2,
        tm: phys.tm,
    })
}

/// One physical motor mapping onto `d`. The transform drops a degree of
/// freedom, so the transient reactance `xp` is chosen by the caller; it must
/// lie in `(0, b/a)`.
pub fn physical_preimage(d: &IMParamsTransformed, xp: f64) -> Result<IMParamsPhysical> {
    d.validate()?;
    if !(xp > 0.0 && xp * d.a < d.b) {
        return Err(LoadModelError::Domain(format!(
            "transient reactance must lie in (0, b/a) = (0, {}), got {xp}",
            d.b / d.a
        )));
    }
    // Td0 X' = 1 / (b/X' - a), X = b Td0 X'
    let k = 1.0 / (d.b / xp - d.a);
    let phys = IMParamsPhysical {
        x: d.b * k,
        xp,
        td0: k / xp,
        h2: d.h2,
        tm: d.tm,
    };
    phys.validate()?;
    Ok(phys)
}

/// `Vd + iVq = V e^{i theta}`.
pub fn polar_to_dq(v: f64, theta: f64) -> PhasorDQ {
    let (sin, cos) = theta.sin_cos();
    PhasorDQ {
        vd: v * cos,
        vq: v * sin,
    }
}

/// State rates of the reduced motor.
#[inline]
pub fn im_derivatives(
    state: &IMState,
    v: &PhasorDQ,
    d: &IMParamsTransformed,
    cfg: &SystemConfig,
) -> IMState {
    let sw = state.s * cfg.omega0;
    IMState {
        fd: -d.b * state.fd + sw * state.fq + d.a * v.vd,
        fq: -d.b * state.fq - sw * state.fd + d.a * v.vq,
        s: (d.tm - v.vq * state.fd + v.vd * state.fq) / d.h2,
    }
}

/// Active and reactive power drawn by the reduced motor, without the
/// `V^2/X'` term.
#[inline]
pub fn im_output(state: &IMState, v: &PhasorDQ) -> (f64, f64) {
    (
        state.fd * v.vq - state.fq * v.vd,
        -v.vd * state.fd - v.vq * state.fq,
    )
}

/// Rates and outputs of the original third-order motor.
///
/// Returns `(rates, P, Q)`. `Q` includes the `V^2/X'` term.
pub fn im_original_model(
    state: &IMStateOriginal,
    v: &PhasorDQ,
    phys: &IMParamsPhysical,
    cfg: &SystemConfig,
) -> Result<(IMStateOriginal, f64, f64)> {
    if phys.xp == 0.0 {
        return Err(LoadModelError::Domain(
            "transient reactance X' must be nonzero".into(),
        ));
    }
    let decay = phys.x / (phys.td0 * phys.xp);
    let gain = (phys.x / phys.xp - 1.0) / phys.td0;
    let sw = state.s * cfg.omega0;
    let te = (state.ed * v.vq - state.eq * v.vd) / phys.xp;
    let rates = IMStateOriginal {
        ed: -decay * state.ed + sw * state.eq + gain * v.vd,
        eq: -decay * state.eq - sw * state.ed + gain * v.vq,
        s: (phys.tm - te) / phys.h2,
    };
    let p = te;
    let q = v.magnitude_sq() / phys.xp + (-v.vd * state.ed - v.vq * state.eq) / phys.xp;
    Ok((rates, p, q))
}

/// `P = Pz V^2 + Pi V + Pp`, `Q = Qz V^2 + Qi V + Qp`.
#[inline]
pub fn zip_power(zip: &ZIPParams, v: f64) -> (f64, f64) {
    (
        (zip.pz * v + zip.pi) * v + zip.pp,
        (zip.qz * v + zip.qi) * v + zip.qp,
    )
}
