//! Exact solver for small box-constrained convex quadratic programs.
//!
//! minimize `g'x + x'Ax/2` subject to `lo <= x <= hi`, with `A` symmetric
//! positive definite. Every split of the variables into free, at-lower and
//! at-upper is tried; the best split whose free part is interior wins. With
//! four decision variables that is 81 tiny Cholesky solves.

use nalgebra::{DMatrix, DVector};

/// Returns the minimizer, or `None` if `A` is not positive definite on some
/// free subspace and no split was admissible.
pub fn solve_box_qp(
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    lo: &[f64],
    hi: &[f64],
) -> Option<Vec<f64>> {
    let n = g.len();
    debug_assert!(n <= 8, "enumeration is exponential in the dimension");
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(n as u32);
    let mut state = vec![0u8; n];
    for code in 0..total {
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let mut x = vec![0.0; n];
        let mut free = Vec::with_capacity(n);
        for j in 0..n {
            match state[j] {
                0 => free.push(j),
                1 => x[j] = lo[j],
                _ => x[j] = hi[j],
            }
        }
        if !free.is_empty() {
            let m = free.len();
            let a_ff = DMatrix::from_fn(m, m, |i, k| a[(free[i], free[k])]);
            let rhs = DVector::from_fn(m, |i, _| {
                let fi = free[i];
                let coupling: f64 = (0..n)
                    .filter(|j| state[*j] != 0)
                    .map(|j| a[(fi, j)] * x[j])
                    .sum();
                -(g[fi] + coupling)
            });
            let Some(chol) = a_ff.cholesky() else {
                continue;
            };
            let sol = chol.solve(&rhs);
            let mut inside = true;
            for (i, &fi) in free.iter().enumerate() {
                let v = sol[i];
                if !(v >= lo[fi] - 1e-14 && v <= hi[fi] + 1e-14) {
                    inside = false;
                    break;
                }
                x[fi] = v.clamp(lo[fi], hi[fi]);
            }
            if !inside {
                continue;
            }
        }
        let xv = DVector::from_column_slice(&x);
        let val = g.dot(&xv) + 0.5 * xv.dot(&(a * &xv));
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, x));
        }
    }
    best.map(|(_, x)| x)
}
