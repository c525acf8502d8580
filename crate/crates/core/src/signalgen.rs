//! Synthetic ambient excitation, measurement error and fault trajectories.
//!
//! Every generator is a pure function of its spec and seed. Random streams
//! come from ChaCha8 seeded per call; nothing global is touched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LoadModelError, Result};
use crate::filter::{zero_phase_lowpass, zero_phase_lowpass_joint};
use crate::series::{mean, MeasurementSeries};

/// Angle noise std relative to magnitude noise std (rad per p.u.).
pub const DEFAULT_ANGLE_RATIO: f64 = 0.5;

/// Ambient excitation: low-pass filtered white noise on `V` and `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmbientSpec {
    pub duration: f64,
    pub dt: f64,
    pub v_mean: f64,
    pub theta_mean: f64,
    /// Std of the white noise before filtering (p.u.).
    pub noise_std: f64,
    pub cutoff_hz: f64,
    /// Angle noise std as a multiple of `noise_std`.
    #[serde(default = "default_angle_ratio")]
    pub angle_ratio: f64,
    pub seed: u64,
}

fn default_angle_ratio() -> f64 {
    DEFAULT_ANGLE_RATIO
}

impl Default for AmbientSpec {
    fn default() -> Self {
        Self {
            duration: 10.0,
            dt: 0.01,
            v_mean: 1.0,
            theta_mean: 0.0,
            noise_std: 0.05,
            cutoff_hz: 2.0,
            angle_ratio: DEFAULT_ANGLE_RATIO,
            seed: 0,
        }
    }
}

impl AmbientSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(LoadModelError::Domain(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.cutoff_hz > 0.0 && self.dt > 0.0 && self.dt < 1.0 / (2.0 * self.cutoff_hz)) {
            return Err(LoadModelError::Domain(format!(
                "need 0 < dt < 1/(2*cutoff); got dt = {}, cutoff = {} Hz",
                self.dt, self.cutoff_hz
            )));
        }
        if !(self.noise_std >= 0.0) || !(self.angle_ratio >= 0.0) {
            return Err(LoadModelError::Domain(
                "noise_std and angle_ratio must be non-negative".into(),
            ));
        }
        if !(self.v_mean > 0.0) {
            return Err(LoadModelError::Domain("v_mean must be positive".into()));
        }
        Ok(())
    }

    /// Number of samples, both end points included.
    pub fn n_samples(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_samples()).map(|i| i as f64 * self.dt).collect()
    }
}

/// Ambient excitation tiers, realized as multipliers on `noise_std`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DisturbanceLevel {
    Dl1,
    Dl2,
    Dl3,
}

impl DisturbanceLevel {
    pub fn noise_multiplier(self) -> f64 {
        match self {
            DisturbanceLevel::Dl1 => 1.0,
            DisturbanceLevel::Dl2 => 2.4,
            DisturbanceLevel::Dl3 => 4.8,
        }
    }

    pub fn from_index(dl: u8) -> Option<Self> {
        match dl {
            1 => Some(DisturbanceLevel::Dl1),
            2 => Some(DisturbanceLevel::Dl2),
            3 => Some(DisturbanceLevel::Dl3),
            _ => None,
        }
    }
}

/// Measurement error: a constant offset plus white random error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub target_snr_db: f64,
    /// Offset magnitude as a fraction of each channel's mean.
    pub offset_fraction: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(target_snr_db: f64, seed: u64) -> Self {
        Self {
            target_snr_db,
            offset_fraction: 0.001,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.target_snr_db.is_finite() {
            return Err(LoadModelError::Domain("target SNR must be finite".into()));
        }
        if !(self.offset_fraction >= 0.0) {
            return Err(LoadModelError::Domain(
                "offset_fraction must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Stand-in for a nearby three-phase fault seen at the load bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultSpec {
    pub t_fault: f64,
    pub t_clear: f64,
    /// Voltage magnitude held during the fault.
    pub v_sag: f64,
    /// Exponential recovery time constant after clearing (s).
    pub recovery_tau: f64,
}

impl Default for FaultSpec {
    fn default() -> Self {
        Self {
            t_fault: 1.0,
            t_clear: 1.1,
            v_sag: 0.8,
            recovery_tau: 0.2,
        }
    }
}

impl FaultSpec {
    pub fn validate(&self, duration: f64) -> Result<()> {
        if !(0.0 <= self.t_fault && self.t_fault < self.t_clear && self.t_clear < duration) {
            return Err(LoadModelError::Domain(format!(
                "need 0 <= t_fault < t_clear < duration; got {}, {}, {}",
                self.t_fault, self.t_clear, duration
            )));
        }
        if !(self.v_sag > 0.0 && self.v_sag < 1.0) {
            return Err(LoadModelError::Domain(format!(
                "v_sag must lie in (0, 1), got {}",
                self.v_sag
            )));
        }
        if !(self.recovery_tau > 0.0) {
            return Err(LoadModelError::Domain(
                "recovery_tau must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Sampled voltage magnitude and angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageTrajectory {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

impl VoltageTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn white_noise(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect()
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Filtered white noise of length `n`. The noise is drawn over a longer span
/// and cropped, so the filter's end handling never reaches the returned
/// samples and the series is statistically the same at both ends.
fn band_limited_noise(
    rng: &mut ChaCha8Rng,
    n: usize,
    std: f64,
    cutoff_hz: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let margin = (10.0 / (cutoff_hz * dt)).ceil() as usize;
    let full = zero_phase_lowpass(&white_noise(rng, n + 2 * margin, std), cutoff_hz, dt)?;
    Ok(full[margin..margin + n].to_vec())
}

/// Low-pass filtered white noise around `(v_mean, theta_mean)`.
pub fn generate_ambient(spec: &AmbientSpec) -> Result<VoltageTrajectory> {
    spec.validate()?;
    let n = spec.n_samples();
    let t = spec.times();
    let mut v_rng = rng_for(spec.seed, 0);
    let mut th_rng = rng_for(spec.seed, 1);
    let dv = band_limited_noise(&mut v_rng, n, spec.noise_std, spec.cutoff_hz, spec.dt)?;
    let dth = band_limited_noise(
        &mut th_rng,
        n,
        spec.noise_std * spec.angle_ratio,
        spec.cutoff_hz,
        spec.dt,
    )?;
    Ok(VoltageTrajectory {
        t,
        v: dv.iter().map(|x| spec.v_mean + x).collect(),
        theta: dth.iter().map(|x| spec.theta_mean + x).collect(),
    })
}

/// Ambient trajectory with a forced sag on `[t_fault, t_clear]` followed by
/// exponential recovery towards `v_mean`.
pub fn generate_fault_voltage(fault: &FaultSpec, base: &AmbientSpec) -> Result<VoltageTrajectory> {
    fault.validate(base.duration)?;
    let mut traj = generate_ambient(base)?;
    let step = base.v_mean - fault.v_sag;
    for (t, v) in traj.t.iter().zip(traj.v.iter_mut()) {
        if *t >= fault.t_fault && *t <= fault.t_clear {
            *v = fault.v_sag;
        } else if *t > fault.t_clear {
            *v -= step * (-(t - fault.t_clear) / fault.recovery_tau).exp();
        }
    }
    Ok(traj)
}

/// `10 log10(sum y^2 / sum e^2)`.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> Result<f64> {
    if signal.len() != noise.len() {
        return Err(LoadModelError::Domain(format!(
            "signal and noise lengths differ ({} vs {})",
            signal.len(),
            noise.len()
        )));
    }
    let es: f64 = signal.iter().map(|y| y * y).sum();
    let en: f64 = noise.iter().map(|e| e * e).sum();
    if en == 0.0 {
        return Err(LoadModelError::ZeroNoiseEnergy);
    }
    Ok(10.0 * (es / en).log10())
}

/// The fluctuating part of a channel: samples minus their mean.
pub fn ambient_component(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    x.iter().map(|v| v - m).collect()
}

/// SNR of one window: mean of the P-channel and Q-channel SNRs, with the
/// ambient component of the clean channel as the signal.
pub fn window_snr_db(clean: &MeasurementSeries, noisy: &MeasurementSeries) -> Result<f64> {
    let channel = |c: &[f64], n: &[f64]| -> Result<f64> {
        let err: Vec<f64> = n.iter().zip(c).map(|(a, b)| a - b).collect();
        snr_db(&ambient_component(c), &err)
    };
    Ok(0.5 * (channel(&clean.p, &noisy.p)? + channel(&clean.q, &noisy.q)?))
}

/// Adds an offset and white error to all four measured channels.
///
/// The error energy of each channel is set so that its SNR against the
/// channel's ambient component equals `target_snr_db` exactly. The offset
/// is `offset_fraction * |mean|` with a seeded sign, capped at half of the
/// channel's error budget.
pub fn inject_noise(series: &MeasurementSeries, spec: &NoiseSpec) -> Result<MeasurementSeries> {
    spec.validate()?;
    series.validate()?;
    let n = series.len();
    let mut rng = rng_for(spec.seed, 2);
    let mut out = series.clone();
    let ratio = 10f64.powf(spec.target_snr_db / 10.0);

    let channels: [(&'static str, &mut Vec<f64>); 4] = [
        ("v", &mut out.v),
        ("theta", &mut out.theta),
        ("p", &mut out.p),
        ("q", &mut out.q),
    ];
    for (name, col) in channels {
        let signal_energy: f64 = ambient_component(col).iter().map(|y| y * y).sum();
        if signal_energy == 0.0 {
            return Err(LoadModelError::DegenerateSignal(name));
        }
        let budget = signal_energy / ratio;
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let max_offset = (0.5 * budget / n as f64).sqrt();
        let offset = sign * (spec.offset_fraction * mean(col).abs()).min(max_offset);
        let w = white_noise(&mut rng, n, 1.0);
        let w1: f64 = w.iter().sum();
        let w2: f64 = w.iter().map(|x| x * x).sum();
        // n o^2 + 2 c o w1 + c^2 w2 = budget
        let disc = (offset * w1).powi(2) - w2 * (n as f64 * offset * offset - budget);
        let scale = (-offset * w1 + disc.max(0.0).sqrt()) / w2;
        for (x, wi) in col.iter_mut().zip(&w) {
            *x += offset + scale * wi;
        }
    }
    Ok(out)
}

/// How the zero-phase low-pass extends a record past its last sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    /// Odd reflection of every channel on its own. The filter is linear.
    #[default]
    Reflect,
    /// A linear predictor fitted jointly on the four channels continues the
    /// record, so the tail the backward pass sees keeps the load's dynamic
    /// response to the voltage. Data-dependent, hence not linear.
    Predict,
}

/// Applies the zero-phase low-pass to `v`, `theta`, `p` and `q`, extending
/// each channel by odd reflection.
pub fn lowpass_filter(series: &MeasurementSeries, cutoff_hz: f64) -> Result<MeasurementSeries> {
    lowpass_filter_with(series, cutoff_hz, EdgeMode::Reflect)
}

/// [`lowpass_filter`] with a choice of end extension.
pub fn lowpass_filter_with(
    series: &MeasurementSeries,
    cutoff_hz: f64,
    edge: EdgeMode,
) -> Result<MeasurementSeries> {
    series.validate()?;
    let dt = series.dt();
    let [v, theta, p, q]: [Vec<f64>; 4] = match edge {
        EdgeMode::Reflect => [&series.v, &series.theta, &series.p, &series.q]
            .map(|c| zero_phase_lowpass(c, cutoff_hz, dt))
            .into_iter()
            .collect::<Result<Vec<_>>>()?,
        EdgeMode::Predict => {
            let channels = [&series.v, &series.theta, &series.p, &series.q].map(|c| c.clone());
            zero_phase_lowpass_joint(&channels, cutoff_hz, dt)?
        }
    }
    .try_into()
    .expect("one output per channel");
    Ok(MeasurementSeries {
        t: series.t.clone(),
        v,
        theta,
        p,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_dev(x: &[f64]) -> f64 {
        let m = mean(x);
        (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
    }

    fn clean_series(seed: u64) -> MeasurementSeries {
        let spec = AmbientSpec {
            seed,
            ..AmbientSpec::default()
        };
        let traj = generate_ambient(&spec).unwrap();
        let p: Vec<f64> = traj.v.iter().map(|v| 2.0 * v * v + 0.5).collect();
        let q: Vec<f64> = traj
            .v
            .iter()
            .zip(&traj.theta)
            .map(|(v, th)| v - 3.0 * th + 0.3)
            .collect();
        MeasurementSeries::new(traj.t, traj.v, traj.theta, p, q).unwrap()
    }

    #[test]
    fn zero_noise_gives_constant_series() {
        let spec = AmbientSpec {
            noise_std: 0.0,
            v_mean: 1.02,
            theta_mean: 0.3,
            ..AmbientSpec::default()
        };
        let traj = generate_ambient(&spec).unwrap();
        assert_eq!(traj.len(), 1001);
        assert!(traj.v.iter().all(|&v| v == 1.02));
        assert!(traj.theta.iter().all(|&th| th == 0.3));
    }

    #[test]
    fn ambient_is_deterministic() {
        let spec = AmbientSpec {
            seed: 42,
            ..AmbientSpec::default()
        };
        assert_eq!(
            generate_ambient(&spec).unwrap(),
            generate_ambient(&spec).unwrap()
        );
        let other = AmbientSpec { seed: 43, ..spec };
        assert_ne!(
            generate_ambient(&spec).unwrap().v,
            generate_ambient(&other).unwrap().v
        );
    }

    #[test]
    fn doubling_noise_doubles_spread() {
        let base = AmbientSpec {
            duration: 100.0,
            seed: 7,
            ..AmbientSpec::default()
        };
        let doubled = AmbientSpec {
            noise_std: 2.0 * base.noise_std,
            ..base
        };
        let a = generate_ambient(&base).unwrap();
        let b = generate_ambient(&doubled).unwrap();
        assert!(a.len() >= 10_000);
        let ratio = std_dev(&b.v) / std_dev(&a.v);
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn snr_examples() {
        let y = [1.0, -2.0, 0.5];
        assert!(snr_db(&y, &y).unwrap().abs() < 1e-12);
        let tenth: Vec<f64> = y.iter().map(|v| v / 10.0).collect();
        assert!((snr_db(&y, &tenth).unwrap() - 20.0).abs() < 1e-12);
        assert!((snr_db(&[3.0, 4.0], &[0.3, 0.4]).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(snr_db(&y, &[0.0; 3]), Err(LoadModelError::ZeroNoiseEnergy));
    }

    #[test]
    fn vanishing_noise_limit() {
        let clean = clean_series(1);
        let noisy = inject_noise(&clean, &NoiseSpec::new(300.0, 9)).unwrap();
        for (a, b) in clean.p.iter().zip(&noisy.p) {
            assert!(((a - b) / a).abs() < 1e-7);
        }
    }

    #[test]
    fn realized_snr_hits_target() {
        for seed in 0..100u64 {
            let clean = clean_series(seed);
            let noisy = inject_noise(&clean, &NoiseSpec::new(14.0, 1000 + seed)).unwrap();
            let err: Vec<f64> = noisy.p.iter().zip(&clean.p).map(|(a, b)| a - b).collect();
            let snr = snr_db(&ambient_component(&clean.p), &err).unwrap();
            assert!((snr - 14.0).abs() <= 0.5, "seed {seed}: {snr}");
            let w = window_snr_db(&clean, &noisy).unwrap();
            assert!((w - 14.0).abs() <= 0.5);
        }
    }

    #[test]
    fn zero_offset_errors_are_centered() {
        let clean = clean_series(3);
        let spec = NoiseSpec {
            target_snr_db: 10.0,
            offset_fraction: 0.0,
            seed: 5,
        };
        let noisy = inject_noise(&clean, &spec).unwrap();
        let err: Vec<f64> = noisy.p.iter().zip(&clean.p).map(|(a, b)| a - b).collect();
        let n = err.len() as f64;
        let m = mean(&err);
        assert!(m.abs() <= 3.0 * std_dev(&err) / n.sqrt());
    }

    #[test]
    fn degenerate_channel_is_rejected() {
        let mut s = clean_series(4);
        s.q = vec![1.0; s.len()];
        assert_eq!(
            inject_noise(&s, &NoiseSpec::new(20.0, 1)),
            Err(LoadModelError::DegenerateSignal("q"))
        );
    }

    #[test]
    fn filtered_ambient_is_band_limited() {
        let spec = AmbientSpec {
            duration: 40.0,
            seed: 11,
            ..AmbientSpec::default()
        };
        let traj = generate_ambient(&spec).unwrap();
        let x = ambient_component(&traj.v);
        let n = x.len();
        let fs = 1.0 / spec.dt;
        // mean power spectral density below and above the cutoff
        let (mut pass, mut n_pass, mut stop, mut n_stop) = (0.0, 0, 0.0, 0);
        for k in 1..n / 2 {
            let f = k as f64 * fs / n as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, xi) in x.iter().enumerate() {
                let ph = 2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                re += xi * ph.cos();
                im -= xi * ph.sin();
            }
            let pw = re * re + im * im;
            if f < spec.cutoff_hz {
                pass += pw;
                n_pass += 1;
            } else {
                stop += pw;
                n_stop += 1;
            }
        }
        let ratio_db = 10.0 * ((pass / n_pass as f64) / (stop / n_stop as f64)).log10();
        assert!(ratio_db >= 20.0, "{ratio_db}");
    }

    #[test]
    fn fault_trajectory_shape() {
        let base = AmbientSpec {
            duration: 5.0,
            noise_std: 0.01,
            seed: 2,
            ..AmbientSpec::default()
        };
        let fault = FaultSpec::default();
        let amb = generate_ambient(&base).unwrap();
        let tr = generate_fault_voltage(&fault, &base).unwrap();
        let in_window: Vec<f64> =
            tr.t.iter()
                .zip(&tr.v)
                .filter(|(t, _)| **t >= fault.t_fault && **t <= fault.t_clear)
                .map(|(_, v)| *v)
                .collect();
        assert!(!in_window.is_empty());
        assert_eq!(
            in_window.iter().copied().fold(f64::INFINITY, f64::min),
            fault.v_sag
        );
        for (i, &t) in tr.t.iter().enumerate() {
            if t < fault.t_fault {
                assert_eq!(tr.v[i], amb.v[i]);
            }
        }
        let probe = amb
            .t
            .iter()
            .position(|&t| t >= fault.t_clear + 5.0 * fault.recovery_tau)
            .unwrap();
        assert!((tr.v[probe] - base.v_mean).abs() / base.v_mean < 0.01);
        assert_eq!(tr.theta, amb.theta);
    }

    #[test]
    fn fault_without_sag_matches_ambient() {
        let base = AmbientSpec {
            duration: 3.0,
            noise_std: 0.0,
            v_mean: 0.95,
            seed: 2,
            ..AmbientSpec::default()
        };
        let fault = FaultSpec {
            v_sag: 0.95,
            ..FaultSpec::default()
        };
        assert_eq!(
            generate_fault_voltage(&fault, &base).unwrap(),
            generate_ambient(&base).unwrap()
        );
    }
}
