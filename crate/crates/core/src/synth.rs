//! Synthetic identification cases: random composite loads and the windows
//! they produce under ambient excitation.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{
    im_output, physical_preimage, polar_to_dq, IMParamsTransformed, SystemConfig, ZIPParams,
};
use crate::series::MeasurementSeries;
use crate::signalgen::{generate_ambient, inject_noise, window_snr_db, AmbientSpec, NoiseSpec};
use crate::simulator::{
    simulate_composite, steady_state_init, CompositeLoad, MotorModel, SimOptions,
};

/// Ranges of the random load generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadRanges {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub h2: [f64; 2],
    /// `Tm` as a fraction of the peak torque at `v_design`.
    pub torque_fraction: [f64; 2],
    /// Static active power as a multiple of `Tm`.
    pub static_ratio: [f64; 2],
    /// Lowest voltage the motor must ride through.
    pub v_design: f64,
}

impl Default for LoadRanges {
    fn default() -> Self {
        Self {
            a: [20.0, 70.0],
            b: [6.0, 25.0],
            h2: [0.7, 2.5],
            torque_fraction: [0.2, 0.6],
            static_ratio: [0.5, 1.5],
            v_design: 0.9,
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    rng.random_range(r[0]..=r[1])
}

fn split<R: Rng>(rng: &mut R, total: f64) -> [f64; 3] {
    let w: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..1.0));
    let s: f64 = w.iter().sum();
    w.map(|x| total * x / s)
}

/// Largest eigenvalue modulus of one explicit Euler step of the motor,
/// linearized at its equilibrium for voltage `v`. Values at or above one mean
/// the discrete simulation drifts away from equilibrium.
pub fn euler_step_radius(d: &IMParamsTransformed, v: f64, cfg: &SystemConfig) -> Result<f64> {
    let v0 = polar_to_dq(v, 0.0);
    let x = steady_state_init(d, &v0, cfg)?;
    let w = x.s * cfg.omega0;
    let jac = Matrix3::new(
        -d.b,
        w,
        cfg.omega0 * x.fq,
        -w,
        -d.b,
        -cfg.omega0 * x.fd,
        -v0.vq / d.h2,
        v0.vd / d.h2,
        0.0,
    );
    let step = Matrix3::identity() + jac * cfg.dt;
    Ok(step
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Margin kept below one for [`euler_step_radius`] of generated motors.
const MAX_STEP_RADIUS: f64 = 0.98;

fn random_motor<R: Rng>(
    rng: &mut R,
    ranges: &LoadRanges,
    cfg: &SystemConfig,
) -> Result<IMParamsTransformed> {
    loop {
        let a = uniform(rng, ranges.a);
        let b = uniform(rng, ranges.b);
        let h2 = uniform(rng, ranges.h2);
        let peak = a * ranges.v_design * ranges.v_design / (2.0 * b);
        let tm = uniform(rng, ranges.torque_fraction) * peak;
        let motor = IMParamsTransformed::new(a, b, h2, tm);
        let stable = [ranges.v_design, 1.0]
            .iter()
            .map(|&v| euler_step_radius(&motor, v, cfg))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .all(|&r| r < MAX_STEP_RADIUS);
        if stable {
            return Ok(motor);
        }
    }
}

/// Draws a transformed motor and a ZIP part with positive coefficients. The
/// static power keeps `Tm` well below the mean active power and the static
/// reactive power outweighs the motor's reactive draw. Motors whose Euler
/// simulation at `cfg.dt` is not contractive near equilibrium are redrawn.
pub fn random_load<R: Rng>(
    rng: &mut R,
    ranges: &LoadRanges,
    cfg: &SystemConfig,
) -> Result<CompositeLoad> {
    let motor = random_motor(rng, ranges, cfg)?;
    let tm = motor.tm;

    let v0 = polar_to_dq(1.0, 0.0);
    let (_, q_motor) = im_output(&steady_state_init(&motor, &v0, cfg)?, &v0);
    let p_static = tm * uniform(rng, ranges.static_ratio);
    let q_static = p_static * rng.random_range(0.2..0.6);
    let [pz, pi, pp] = split(rng, p_static);
    let [qz, qi, qp] = split(rng, q_static);
    // the motor's leakage term V^2/X' is constant-impedance, and at nominal
    // voltage it nearly cancels the reduced model's reactive draw
    let zip = ZIPParams::new(pz, pi, pp, qz - q_motor, qi, qp);
    Ok(CompositeLoad::transformed(motor, zip))
}

/// Like [`random_load`] but with the motor in its original form. The
/// transient reactance is drawn between 30% and 90% of its largest admissible
/// value and the ZIP part gives back the motor's `V^2/X'` draw, so the load
/// is equivalent to a reduced one drawn by [`random_load`].
pub fn random_physical_load<R: Rng>(
    rng: &mut R,
    ranges: &LoadRanges,
    cfg: &SystemConfig,
) -> Result<CompositeLoad> {
    let reduced = random_load(rng, ranges, cfg)?;
    let d = reduced.motor.transformed()?;
    let xp = rng.random_range(0.3..0.9) * d.b / d.a;
    let phys = physical_preimage(&d, xp)?;
    Ok(CompositeLoad {
        motor: MotorModel::Physical(phys),
        zip: ZIPParams {
            qz: reduced.zip.qz - 1.0 / xp,
            ..reduced.zip
        },
    })
}

/// Seeded version of [`random_physical_load`] with default ranges.
pub fn random_physical_load_seeded(seed: u64, cfg: &SystemConfig) -> Result<CompositeLoad> {
    random_physical_load(
        &mut ChaCha8Rng::seed_from_u64(seed),
        &LoadRanges::default(),
        cfg,
    )
}

/// Seeded version of [`random_load`] with default ranges.
pub fn random_load_seeded(seed: u64, cfg: &SystemConfig) -> Result<CompositeLoad> {
    random_load(
        &mut ChaCha8Rng::seed_from_u64(seed),
        &LoadRanges::default(),
        cfg,
    )
}

/// A generated window with and without measurement error.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCase {
    pub load: CompositeLoad,
    pub clean: MeasurementSeries,
    pub measured: MeasurementSeries,
    /// Realized SNR of `measured`, if noise was added.
    pub snr_db: Option<f64>,
}

impl SyntheticCase {
    pub fn truth(&self) -> Result<IMParamsTransformed> {
        self.load.motor.transformed()
    }
}

/// Simulates `load` under ambient voltage and optionally corrupts the result.
pub fn synthesize(
    load: &CompositeLoad,
    ambient: &AmbientSpec,
    noise: Option<&NoiseSpec>,
    cfg: &SystemConfig,
) -> Result<SyntheticCase> {
    let traj = generate_ambient(ambient)?;
    let opts = SimOptions {
        dt: ambient.dt,
        ..SimOptions::default()
    };
    let clean = simulate_composite(load, &traj.v, &traj.theta, cfg, &opts)?;
    let (measured, snr_db) = match noise {
        Some(spec) => {
            let noisy = inject_noise(&clean, spec)?;
            let snr = window_snr_db(&clean, &noisy)?;
            (noisy, Some(snr))
        }
        None => (clean.clone(), None),
    };
    Ok(SyntheticCase {
        load: *load,
        clean,
        measured,
        snr_db,
    })
}
