use loadid_core::model::{IMParamsTransformed, SystemConfig};
use loadid_core::signalgen::{generate_ambient, AmbientSpec};
use loadid_core::synth::{random_load_seeded, random_physical_load, LoadRanges};
use loadid_core::{
    evaluate_candidate, regress_zip, simulate_composite, CompositeLoad, MeasurementSeries,
    MotorModel, SimOptions, WindowPolicy,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Least squares on `[1, V, V^2]` through the normal equations, solved by
/// Gaussian elimination with partial pivoting. Centering `V` first keeps the
/// Gram matrix well conditioned; the coefficients are mapped back afterwards.
fn normal_equation_fit(y: &[f64], v: &[f64]) -> [f64; 3] {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let mut g = [[0.0f64; 4]; 3];
    for (&yi, &vi) in y.iter().zip(v) {
        let u = vi - m;
        let row = [1.0, u, u * u];
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += row[i] * row[j];
            }
            g[i][3] += row[i] * yi;
        }
    }
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| g[i][col].abs().total_cmp(&g[j][col].abs()))
            .unwrap();
        g.swap(col, piv);
        for r in col + 1..3 {
            let f = g[r][col] / g[col][col];
            let pivot_row = g[col];
            for (x, p) in g[r].iter_mut().zip(pivot_row).skip(col) {
                *x -= f * p;
            }
        }
    }
    let mut c = [0.0; 3];
    for i in (0..3).rev() {
        let tail: f64 = (i + 1..3).map(|j| g[i][j] * c[j]).sum();
        c[i] = (g[i][3] - tail) / g[i][i];
    }
    // c0 + c1 (V - m) + c2 (V - m)^2 back to the raw basis
    [c[0] - c[1] * m + c[2] * m * m, c[1] - 2.0 * c[2] * m, c[2]]
}

fn sse(y: &[f64], v: &[f64], k: [f64; 3]) -> f64 {
    y.iter()
        .zip(v)
        .map(|(yi, vi)| (yi - (k[0] + k[1] * vi + k[2] * vi * vi)).powi(2))
        .sum()
}

fn instance(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.9..1.1)).collect();
    let p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    (v, p, q)
}

#[test]
fn regression_matches_normal_equations() {
    for seed in 0..100 {
        let (v, p, q) = instance(seed, 50 + seed as usize * 7);
        let out = regress_zip(&p, &q, &v).unwrap();
        let zp = normal_equation_fit(&p, &v);
        let zq = normal_equation_fit(&q, &v);
        let got_p = [out.zip.pp, out.zip.pi, out.zip.pz];
        let got_q = [out.zip.qp, out.zip.qi, out.zip.qz];
        for j in 0..3 {
            let tol_p = 1e-8 * zp[j].abs().max(1.0);
            let tol_q = 1e-8 * zq[j].abs().max(1.0);
            assert!(
                (got_p[j] - zp[j]).abs() < tol_p,
                "seed {seed}: P coef {j}: {} vs {}",
                got_p[j],
                zp[j]
            );
            assert!(
                (got_q[j] - zq[j]).abs() < tol_q,
                "seed {seed}: Q coef {j}: {} vs {}",
                got_q[j],
                zq[j]
            );
        }
    }
}

/// Ambient voltage held at its 2 s value before 2 s, so that a prediction
/// started there from equilibrium sees the same motor state as the data.
fn settled_case(load: &CompositeLoad, seed: u64) -> MeasurementSeries {
    let cfg = SystemConfig::default();
    let mut traj = generate_ambient(&AmbientSpec {
        seed,
        ..AmbientSpec::default()
    })
    .unwrap();
    let start = WindowPolicy::default().prediction_start();
    let k0 = (start / cfg.dt).round() as usize;
    let (v0, th0) = (traj.v[k0], traj.theta[k0]);
    traj.v[..k0].fill(v0);
    traj.theta[..k0].fill(th0);
    simulate_composite(load, &traj.v, &traj.theta, &cfg, &SimOptions::default()).unwrap()
}

#[test]
fn candidate_at_the_generator_fits_the_data() {
    let cfg = SystemConfig::default();
    for seed in 0..10 {
        let load = random_load_seeded(seed, &cfg).unwrap();
        let data = settled_case(&load, seed);
        let d = load.motor.transformed().unwrap();
        let ev = evaluate_candidate(&d, &data, &WindowPolicy::default(), &cfg).unwrap();
        assert_eq!(ev.regression.l, 700);
        assert!(ev.of < 1e-8, "seed {seed}: OF = {:e}", ev.of);
        let z = load.zip;
        for (got, want) in [(ev.zip.pz, z.pz), (ev.zip.pi, z.pi), (ev.zip.pp, z.pp)] {
            assert!((got - want).abs() < 1e-4, "seed {seed}: {got} vs {want}");
        }

        let far = IMParamsTransformed::new(0.5 * d.a, 2.0 * d.b, 2.0 * d.h2, 0.5 * d.tm);
        let off = evaluate_candidate(&far, &data, &WindowPolicy::default(), &cfg).unwrap();
        assert!(
            off.of > 100.0 * ev.of.max(1e-12),
            "seed {seed}: {:e} vs {:e}",
            off.of,
            ev.of
        );
    }
}

#[test]
fn constant_active_power_offset_moves_only_the_constant_term() {
    let cfg = SystemConfig::default();
    let load = random_load_seeded(3, &cfg).unwrap();
    let mut data = settled_case(&load, 3);
    let d = IMParamsTransformed::new(30.0, 12.0, 1.2, 0.3);
    let before = evaluate_candidate(&d, &data, &WindowPolicy::default(), &cfg).unwrap();
    data.p.iter_mut().for_each(|p| *p += 0.25);
    let after = evaluate_candidate(&d, &data, &WindowPolicy::default(), &cfg).unwrap();
    assert!((after.zip.pp - before.zip.pp - 0.25).abs() < 1e-9);
    assert!((after.zip.pi - before.zip.pi).abs() < 1e-9);
    assert!((after.zip.pz - before.zip.pz).abs() < 1e-9);
    assert!((after.of - before.of).abs() < 1e-12 * before.of.max(1e-6));
}

#[test]
fn physical_mode_constant_impedance_absorbs_transient_reactance() {
    let cfg = SystemConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..5 {
        let load = random_physical_load(&mut rng, &LoadRanges::default(), &cfg).unwrap();
        let MotorModel::Physical(phys) = load.motor else {
            unreachable!()
        };
        let data = settled_case(&load, seed);
        let d = load.motor.transformed().unwrap();
        let ev = evaluate_candidate(&d, &data, &WindowPolicy::default(), &cfg).unwrap();
        let want = load.zip.qz + 1.0 / phys.xp;
        assert!(
            (ev.zip.qz - want).abs() < 1e-6 * want.abs().max(1.0),
            "{} vs {want}",
            ev.zip.qz
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_quadratics_are_recovered(
        k in prop::array::uniform3(-5.0f64..5.0),
        m in prop::array::uniform3(-5.0f64..5.0),
        seed in 0u64..1000,
    ) {
        let (v, _, _) = instance(seed, 60);
        let p: Vec<f64> = v.iter().map(|x| k[0] + k[1] * x + k[2] * x * x).collect();
        let q: Vec<f64> = v.iter().map(|x| m[0] + m[1] * x + m[2] * x * x).collect();
        let out = regress_zip(&p, &q, &v).unwrap();
        let got = [out.zip.pp, out.zip.pi, out.zip.pz, out.zip.qp, out.zip.qi, out.zip.qz];
        let want = [k[0], k[1], k[2], m[0], m[1], m[2]];
        for j in 0..6 {
            prop_assert!((got[j] - want[j]).abs() < 1e-9 * want[j].abs().max(1.0), "{j}: {} vs {}", got[j], want[j]);
        }
        prop_assert!(out.r_p.iter().chain(&out.r_q).all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn no_perturbed_coefficients_do_better(
        seed in 0u64..1000,
        dk in prop::array::uniform3(-0.1f64..0.1),
    ) {
        let (v, p, q) = instance(seed, 80);
        let out = regress_zip(&p, &q, &v).unwrap();
        let best = [out.zip.pp, out.zip.pi, out.zip.pz];
        let moved = [best[0] + dk[0], best[1] + dk[1], best[2] + dk[2]];
        let base = sse(&p, &v, best);
        prop_assert!(sse(&p, &v, moved) >= base - 1e-12 * base.max(1.0));
        let own: f64 = out.r_p.iter().map(|r| r * r).sum();
        prop_assert!((own - base).abs() < 1e-9 * base.max(1.0));
    }
}
