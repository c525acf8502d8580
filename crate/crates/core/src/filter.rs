//! Zero-phase second-order Butterworth low-pass.
//!
//! The biquad runs forward then backward over an extension of the input, with
//! its state initialised to the step steady state of the first extended
//! sample. The single-channel filter extends by odd reflection, which keeps it
//! linear with unit DC gain. The multi-channel filter predicts the tail
//! jointly instead.

use nalgebra::DMatrix;

use crate::error::{LoadModelError, Result};

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn butterworth_lowpass(cutoff_hz: f64, sample_rate: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff_hz / sample_rate).tan();
        let k2 = k * k;
        let sqrt2 = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + sqrt2 * k + k2);
        let b0 = k2 * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a1: 2.0 * (k2 - 1.0) * norm,
            a2: (1.0 - sqrt2 * k + k2) * norm,
        }
    }

    /// Transposed direct-form II state reached under a constant unit input.
    fn unit_step_state(&self) -> [f64; 2] {
        let z2 = self.b[2] - self.a2;
        let z1 = self.b[1] - self.a1 + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64]) {
        if x.is_empty() {
            return;
        }
        let zi = self.unit_step_state();
        let (mut z1, mut z2) = (zi[0] * x[0], zi[1] * x[0]);
        for xi in x.iter_mut() {
            let input = *xi;
            let y = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a1 * y + z2;
            z2 = self.b[2] * input - self.a2 * y;
            *xi = y;
        }
    }
}

fn check_band(cutoff_hz: f64, dt: f64) -> Result<()> {
    if !(cutoff_hz > 0.0 && dt > 0.0 && dt < 1.0 / (2.0 * cutoff_hz)) {
        return Err(LoadModelError::Domain(format!(
            "low-pass needs 0 < dt < 1/(2*cutoff); got dt = {dt}, cutoff = {cutoff_hz} Hz"
        )));
    }
    Ok(())
}

/// Extension length used on each side of a record of `n` samples.
pub fn padding_len(n: usize, cutoff_hz: f64, dt: f64) -> usize {
    // about three time constants of the filter
    ((3.0 / (cutoff_hz * dt)).ceil() as usize).min(n.saturating_sub(1))
}

/// Filters `front ++ x ++ back` forward then backward and returns the part
/// aligned with `x`. `front` is in time order, ending just before `x[0]`.
pub fn filtfilt_extended(
    x: &[f64],
    front: &[f64],
    back: &[f64],
    cutoff_hz: f64,
    dt: f64,
) -> Vec<f64> {
    let filt = Biquad::butterworth_lowpass(cutoff_hz, 1.0 / dt);
    let mut ext = Vec::with_capacity(front.len() + x.len() + back.len());
    ext.extend_from_slice(front);
    ext.extend_from_slice(x);
    ext.extend_from_slice(back);
    filt.run(&mut ext);
    ext.reverse();
    filt.run(&mut ext);
    ext.reverse();
    ext[front.len()..front.len() + x.len()].to_vec()
}

/// Applies the zero-phase low-pass to one channel sampled every `dt`
/// seconds, extending both ends by odd reflection.
pub fn zero_phase_lowpass(x: &[f64], cutoff_hz: f64, dt: f64) -> Result<Vec<f64>> {
    check_band(cutoff_hz, dt)?;
    let n = x.len();
    if n < 2 {
        return Ok(x.to_vec());
    }
    let pad = padding_len(n, cutoff_hz, dt);
    let front: Vec<f64> = (1..=pad).rev().map(|i| 2.0 * x[0] - x[i]).collect();
    let back: Vec<f64> = (1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]).collect();
    Ok(filtfilt_extended(x, &front, &back, cutoff_hz, dt))
}

const RIDGE_LADDER: [f64; 6] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

/// Lag count of the joint predictor used by [`zero_phase_lowpass_joint`].
pub const PREDICTOR_ORDER: usize = 8;

/// Least-squares vector autoregression `x_t = c + sum_i A_i x_{t-i}` fitted
/// on the channels, iterated forward for `steps` samples past the last one.
/// Returns `None` when the regression is singular or too short.
fn joint_extrapolation(
    channels: &[Vec<f64>],
    order: usize,
    steps: usize,
    ridge: f64,
) -> Option<Vec<Vec<f64>>> {
    let m = channels.len();
    let n = channels.first()?.len();
    let k = 1 + m * order;
    if n < order + 2 * k {
        return None;
    }
    // centre and scale so that the columns are comparable
    let stats: Vec<(f64, f64)> = channels
        .iter()
        .map(|c| {
            let mu = c.iter().sum::<f64>() / n as f64;
            let sd = (c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
            (mu, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect();
    let z: Vec<Vec<f64>> = channels
        .iter()
        .zip(&stats)
        .map(|(c, (mu, sd))| c.iter().map(|v| (v - mu) / sd).collect())
        .collect();
    let rows = n - order;
    // a small ridge keeps the fit well posed on noise-free, exactly
    // dependent channels
    let ridge = (ridge * rows as f64).sqrt();
    let regressors = DMatrix::from_fn(rows + k, k, |r, col| {
        if r >= rows {
            return if r - rows == col { ridge } else { 0.0 };
        }
        if col == 0 {
            return 1.0;
        }
        let lag = (col - 1) / m + 1;
        let ch = (col - 1) % m;
        z[ch][r + order - lag]
    });
    let targets = DMatrix::from_fn(
        rows + k,
        m,
        |r, ch| if r < rows { z[ch][r + order] } else { 0.0 },
    );
    let qr = regressors.qr();
    let coef = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * targets))?;
    if !coef.iter().all(|c| c.is_finite()) {
        return None;
    }

    let mut hist: Vec<Vec<f64>> = z.iter().map(|c| c[n - order..].to_vec()).collect();
    let mut out = vec![Vec::with_capacity(steps); m];
    for _ in 0..steps {
        let len = hist[0].len();
        let next: Vec<f64> = (0..m)
            .map(|ch| {
                let mut acc = coef[(0, ch)];
                for lag in 1..=order {
                    for src in 0..m {
                        acc += coef[(1 + (lag - 1) * m + src, ch)] * hist[src][len - lag];
                    }
                }
                acc
            })
            .collect();
        for ch in 0..m {
            hist[ch].push(next[ch]);
            out[ch].push(next[ch] * stats[ch].1 + stats[ch].0);
        }
    }
    out.iter().flatten().all(|v| v.is_finite()).then_some(out)
}

/// Zero-phase low-pass of several channels recorded together.
///
/// The start is extended by odd reflection. The end is extended by a joint
/// linear predictor fitted on the record, so the extension keeps the dynamic
/// relation between the channels and the backward pass does not see a
/// reflected tail that no causal system could have produced. Reflection is
/// used at the end as well when the predictor cannot be fitted or leaves
/// the range of the record.
pub fn zero_phase_lowpass_joint(
    channels: &[Vec<f64>],
    cutoff_hz: f64,
    dt: f64,
) -> Result<Vec<Vec<f64>>> {
    check_band(cutoff_hz, dt)?;
    let n = channels.first().map_or(0, Vec::len);
    if channels.iter().any(|c| c.len() != n) {
        return Err(LoadModelError::InvalidSeries(
            "channels differ in length".into(),
        ));
    }
    if n < 2 {
        return Ok(channels.to_vec());
    }
    let pad = padding_len(n, cutoff_hz, dt);
    let in_range = |ext: &Vec<Vec<f64>>| {
        ext.iter().zip(channels).all(|(e, c)| {
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let margin = hi - lo;
            e.iter().all(|v| *v >= lo - margin && *v <= hi + margin)
        })
    };
    // stronger shrinkage until the extension stays within the record's range
    let back = RIDGE_LADDER
        .iter()
        .filter_map(|&r| joint_extrapolation(channels, PREDICTOR_ORDER, pad, r))
        .find(|e| in_range(e));
    Ok(channels
        .iter()
        .enumerate()
        .map(|(ch, x)| {
            let front: Vec<f64> = (1..=pad).rev().map(|i| 2.0 * x[0] - x[i]).collect();
            let back: Vec<f64> = match &back {
                Some(b) => b[ch].clone(),
                None => (1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]).collect(),
            };
            filtfilt_extended(x, &front, &back, cutoff_hz, dt)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sinusoid(freq: f64, dt: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 * dt).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn constant_passes_unchanged() {
        let x = vec![1.2345; 700];
        let y = zero_phase_lowpass(&x, 2.0, 0.01).unwrap();
        assert!(y.iter().all(|v| (v - 1.2345).abs() < 1e-9));
    }

    #[test]
    fn stopband_sinusoid_attenuated() {
        let dt = 0.01;
        let x = sinusoid(20.0, dt, 2000);
        let y = zero_phase_lowpass(&x, 2.0, dt).unwrap();
        // ignore the edges
        let ratio = rms(&y[200..1800]) / rms(&x[200..1800]);
        assert!(20.0 * ratio.log10() <= -20.0, "{}", 20.0 * ratio.log10());
    }

    #[test]
    fn passband_sinusoid_preserved_without_lag() {
        let dt = 0.01;
        let n = 4000;
        let x = sinusoid(0.2, dt, n);
        let y = zero_phase_lowpass(&x, 2.0, dt).unwrap();
        let amp_x = x[500..3500].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let amp_y = y[500..3500].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((amp_y / amp_x - 1.0).abs() < 0.02);
        let peak = |s: &[f64]| {
            (1000..1500)
                .max_by(|&i, &j| s[i].partial_cmp(&s[j]).unwrap())
                .unwrap()
        };
        assert_eq!(peak(&x), peak(&y));
    }

    #[test]
    fn linear_in_input() {
        let dt = 0.01;
        let x: Vec<f64> = (0..500).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..500).map(|i| (i as f64 * 0.3).cos() + 0.2).collect();
        let (alpha, beta) = (1.7, -0.4);
        let mix: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let fx = zero_phase_lowpass(&x, 2.0, dt).unwrap();
        let fy = zero_phase_lowpass(&y, 2.0, dt).unwrap();
        let fm = zero_phase_lowpass(&mix, 2.0, dt).unwrap();
        for i in 0..500 {
            assert!((fm[i] - (alpha * fx[i] + beta * fy[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn joint_filter_keeps_constants() {
        let ch = vec![vec![1.0; 800], vec![-0.3; 800]];
        let out = zero_phase_lowpass_joint(&ch, 2.0, 0.01).unwrap();
        for (o, c) in out.iter().zip(&ch) {
            assert!(o.iter().zip(c).all(|(a, b)| (a - b).abs() < 1e-9));
        }
    }

    #[test]
    fn joint_filter_tracks_a_smooth_trend_to_the_end() {
        let dt = 0.01;
        let n = 1000;
        let x: Vec<f64> = (0..n).map(|i| (0.4 * i as f64 * dt).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| (0.4 * i as f64 * dt).cos()).collect();
        let out = zero_phase_lowpass_joint(&[x.clone(), y.clone()], 2.0, dt).unwrap();
        let joint_err = (out[0][n - 1] - x[n - 1]).abs();
        assert!(joint_err < 1e-3, "{joint_err}");
    }

    #[test]
    fn joint_filter_rejects_ragged_channels() {
        assert!(zero_phase_lowpass_joint(&[vec![0.0; 10], vec![0.0; 9]], 2.0, 0.01).is_err());
    }

    #[test]
    fn rejects_cutoff_above_nyquist() {
        assert!(zero_phase_lowpass(&[1.0, 2.0], 60.0, 0.01).is_err());
    }
}
