//! Least-squares and non-negative least-squares kernels.
//!
//! `solve_nnls` runs Lawson-Hanson active-set iteration per right-hand-side
//! column, with the pivoted-QR solver of [`crate::linalg`] for the inner
//! unconstrained solves. Optimality is certified against the KKT conditions
//! of `min 0.5 ||A x - b||^2 s.t. x >= 0`: the gradient `A^T (A x - b)` must
//! vanish on free coordinates and be non-negative on active ones, up to
//! `eps = 1e-8 * ||A||_F * ||b_j||`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{lstsq, LsSolution};

/// Relative KKT tolerance; scaled by `||design||_F * ||rhs_j||` per column.
pub const KKT_EPS_REL: f64 = 1e-8;

/// A dense least-squares problem with `t` independent right-hand sides.
#[derive(Debug, Clone)]
pub struct LsProblem {
    design: Array2<f64>,
    rhs: Array2<f64>,
}

impl LsProblem {
    pub fn new(design: Array2<f64>, rhs: Array2<f64>) -> Result<Self> {
        if design.nrows() == 0 || design.ncols() == 0 || rhs.ncols() == 0 {
            return Err(Error::Shape("least-squares problem must be non-empty".into()));
        }
        if rhs.nrows() != design.nrows() {
            return Err(Error::Shape(format!(
                "rhs has {} rows, design has {}",
                rhs.nrows(),
                design.nrows()
            )));
        }
        if let Some(v) = design.iter().chain(rhs.iter()).find(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("least-squares problem contains non-finite value {v}")));
        }
        Ok(Self { design, rhs })
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.design
    }

    pub fn rhs(&self) -> &Array2<f64> {
        &self.rhs
    }

    /// Number of unknowns per right-hand side.
    pub fn unknowns(&self) -> usize {
        self.design.ncols()
    }

    fn design_norm(&self) -> f64 {
        self.design.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Unconstrained least squares; rank-deficient designs yield the
/// minimum-norm solution, flagged in [`LsSolution::rank_deficient`].
pub fn solve_ls(p: &LsProblem) -> Result<LsSolution> {
    lstsq(p.design.view(), p.rhs.view())
}

/// Non-negative least squares, solved column-independently.
///
/// Columns are solved concurrently; each column's result is identical to a
/// sequential solve. If any column exceeds the active-set iteration cap of
/// `3 * n`, the error carries the best feasible iterate for every column and
/// names the lowest failing column.
pub fn solve_nnls(p: &LsProblem) -> Result<Array2<f64>> {
    let n = p.design.ncols();
    let t = p.rhs.ncols();
    let design_norm = p.design_norm();
    let cap = 3 * n;

    let columns: Vec<std::result::Result<Array1<f64>, Array1<f64>>> = (0..t)
        .into_par_iter()
        .map(|c| {
            let b = p.rhs.column(c);
            let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let eps = KKT_EPS_REL * design_norm * bnorm;
            nnls_column(p.design.view(), b, eps, cap)
        })
        .collect();

    let mut x = Array2::zeros((n, t));
    let mut failed: Option<usize> = None;
    for (c, col) in columns.iter().enumerate() {
        let values = match col {
            Ok(v) => v,
            Err(best) => {
                if failed.is_none() {
                    failed = Some(c);
                }
                best
            }
        };
        x.slice_mut(s![.., c]).assign(values);
    }
    match failed {
        Some(column) => Err(Error::NnlsIterationCap {
            column,
            best: Box::new(x),
        }),
        None => Ok(x),
    }
}

/// Maximum KKT violation of `x` over all columns and coordinates; zero at an
/// exact NNLS optimum.
pub fn kkt_residual(p: &LsProblem, x: &Array2<f64>) -> Result<f64> {
    if x.dim() != (p.design.ncols(), p.rhs.ncols()) {
        return Err(Error::Shape(format!(
            "solution is {:?}, expected {:?}",
            x.dim(),
            (p.design.ncols(), p.rhs.ncols())
        )));
    }
    let mut worst = 0.0f64;
    for c in 0..p.rhs.ncols() {
        let xc = x.column(c);
        let resid = &p.design.dot(&xc) - &p.rhs.column(c);
        let grad = p.design.t().dot(&resid);
        for (i, &g) in grad.iter().enumerate() {
            let viol = if xc[i] > 0.0 { g.abs() } else { (-g).max(0.0) };
            worst = worst.max(viol);
        }
    }
    Ok(worst)
}

/// Lawson-Hanson active-set iteration for a single right-hand side.
///
/// Returns `Err(best_feasible_iterate)` when the iteration cap is exceeded.
fn nnls_column(
    design: ArrayView2<f64>,
    b: ArrayView1<f64>,
    eps: f64,
    cap: usize,
) -> std::result::Result<Array1<f64>, Array1<f64>> {
    let n = design.ncols();
    let mut x = Array1::zeros(n);
    let mut passive = vec![false; n];
    let mut iters = 0usize;

    loop {
        let resid = &b - &design.dot(&x);
        let grad = design.t().dot(&resid);
        // Most negative-gradient coordinate among the active set; strict
        // comparison keeps the lowest index on ties.
        let mut best: Option<usize> = None;
        let mut best_w = eps;
        for j in 0..n {
            if !passive[j] && grad[j] > best_w {
                best = Some(j);
                best_w = grad[j];
            }
        }
        let Some(j) = best else {
            return Ok(x);
        };
        passive[j] = true;

        loop {
            if iters >= cap {
                return Err(x);
            }
            iters += 1;

            let z = solve_on_passive(design, b, &passive);
            let all_positive = passive
                .iter()
                .zip(z.iter())
                .all(|(&p, &v)| !p || v > 0.0);
            if all_positive {
                x = z;
                break;
            }

            // Step from x toward z until the first passive coordinate hits
            // zero, then retire every coordinate that reached the boundary.
            let mut alpha = f64::INFINITY;
            for i in 0..n {
                if passive[i] && z[i] <= 0.0 {
                    let step = if x[i] <= 0.0 { 0.0 } else { x[i] / (x[i] - z[i]) };
                    if step < alpha {
                        alpha = step;
                    }
                }
            }
            for i in 0..n {
                if passive[i] {
                    x[i] += alpha * (z[i] - x[i]);
                }
            }
            for i in 0..n {
                if passive[i] && (z[i] <= 0.0 && x[i] <= f64::EPSILON * x.iter().fold(0.0f64, |a, &v| a.max(v)).max(1.0)) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
}

/// Unconstrained least squares restricted to the passive columns, expanded
/// back to full length with zeros on the active set.
fn solve_on_passive(design: ArrayView2<f64>, b: ArrayView1<f64>, passive: &[bool]) -> Array1<f64> {
    let n = design.ncols();
    let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
    let mut sub = Array2::zeros((design.nrows(), idx.len()));
    for (c, &i) in idx.iter().enumerate() {
        sub.column_mut(c).assign(&design.column(i));
    }
    let rhs = b.insert_axis(ndarray::Axis(1));
    let sol = lstsq(sub.view(), rhs).expect("submatrix solve cannot fail on validated problem");
    let mut z = Array1::zeros(n);
    for (c, &i) in idx.iter().enumerate() {
        z[i] = sol.x[(c, 0)];
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};

    fn rng_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    /// Brute force over all active sets: solve the unconstrained problem on
    /// every subset of columns, keep the feasible minimizer.
    fn brute_force_objective(design: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let n = design.ncols();
        assert!(n <= 16);
        let mut best = f64::INFINITY;
        for mask in 0..(1u32 << n) {
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let x = if idx.is_empty() {
                Array1::zeros(n)
            } else {
                let mut sub = Array2::zeros((design.nrows(), idx.len()));
                for (c, &i) in idx.iter().enumerate() {
                    sub.column_mut(c).assign(&design.column(i));
                }
                let sol = lstsq(sub.view(), b.view()).unwrap();
                let mut z = Array1::zeros(n);
                for (c, &i) in idx.iter().enumerate() {
                    z[i] = sol.x[(c, 0)];
                }
                z
            };
            if x.iter().any(|&v| v < -1e-12) {
                continue;
            }
            let resid = &b.column(0) - &design.dot(&x);
            let obj: f64 = resid.iter().map(|v| v * v).sum();
            if obj < best {
                best = obj;
            }
        }
        best
    }

    fn objective(design: &Array2<f64>, b: &Array2<f64>, x: &Array2<f64>) -> f64 {
        let resid = b - &design.dot(x);
        resid.iter().map(|v| v * v).sum()
    }

    #[test]
    fn unconstrained_optimum_already_nonnegative() {
        let design = rng_matrix(8, 3, 1);
        let x_true = arr2(&[[0.5], [1.0], [2.0]]);
        let rhs = design.dot(&x_true);
        let p = LsProblem::new(design, rhs).unwrap();
        let ls = solve_ls(&p).unwrap();
        let nn = solve_nnls(&p).unwrap();
        for (a, b) in nn.iter().zip(ls.x.iter()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn negative_optimum_clamps_to_zero() {
        let design = arr2(&[[1.0], [1.0]]);
        let rhs = arr2(&[[-1.0], [-1.0]]);
        let p = LsProblem::new(design, rhs).unwrap();
        let x = solve_nnls(&p).unwrap();
        assert_eq!(x[(0, 0)], 0.0);
    }

    #[test]
    fn known_small_instance_matches_enumeration() {
        let design = arr2(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let rhs = arr2(&[[1.0], [-1.0], [0.0]]);
        let p = LsProblem::new(design.clone(), rhs.clone()).unwrap();
        let x = solve_nnls(&p).unwrap();
        let got = objective(&design, &rhs, &x);
        let want = brute_force_objective(&design, &rhs);
        assert!((got - want).abs() <= 1e-9 * want.max(1.0));
        assert!(x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn random_instances_match_enumeration() {
        for seed in 0..100u64 {
            let n = 2 + (seed % 3) as usize; // 2..=4 unknowns
            let m = n + 1 + (seed % 4) as usize;
            let design = rng_matrix(m, n, 1000 + seed);
            let rhs = rng_matrix(m, 1, 2000 + seed);
            let p = LsProblem::new(design.clone(), rhs.clone()).unwrap();
            let x = solve_nnls(&p).unwrap();
            assert!(x.iter().all(|&v| v >= 0.0), "seed {seed}");
            let got = objective(&design, &rhs, &x);
            let want = brute_force_objective(&design, &rhs);
            assert!(
                got <= want * (1.0 + 1e-9) + 1e-15,
                "seed {seed}: got {got}, brute force {want}"
            );
            // zero is always feasible, so the optimum cannot be worse
            let zero_obj: f64 = rhs.iter().map(|v| v * v).sum();
            assert!(got <= zero_obj * (1.0 + 1e-12));
        }
    }

    #[test]
    fn kkt_residual_small_at_optimum() {
        for seed in 0..20u64 {
            let design = rng_matrix(10, 4, 3000 + seed);
            let rhs = rng_matrix(10, 2, 4000 + seed);
            let p = LsProblem::new(design.clone(), rhs.clone()).unwrap();
            let x = solve_nnls(&p).unwrap();
            let eps = KKT_EPS_REL
                * p.design_norm()
                * rhs
                    .columns()
                    .into_iter()
                    .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
                    .fold(0.0f64, f64::max);
            assert!(kkt_residual(&p, &x).unwrap() <= eps.max(1e-12));
        }
    }

    #[test]
    fn kkt_residual_zero_for_zero_problem() {
        let design = rng_matrix(4, 2, 7);
        let rhs = Array2::zeros((4, 1));
        let p = LsProblem::new(design, rhs).unwrap();
        let x = Array2::zeros((2, 1));
        assert_eq!(kkt_residual(&p, &x).unwrap(), 0.0);
    }

    #[test]
    fn kkt_residual_grows_with_perturbation() {
        let design = rng_matrix(8, 3, 8);
        let x_true = arr2(&[[0.5], [1.0], [2.0]]);
        let rhs = design.dot(&x_true);
        let p = LsProblem::new(design.clone(), rhs).unwrap();
        let x = solve_nnls(&p).unwrap();
        let base = kkt_residual(&p, &x).unwrap();
        let mut prev = base;
        for &delta in &[1e-6, 1e-4, 1e-2] {
            let mut xp = x.clone();
            xp[(1, 0)] += delta; // free coordinate
            let r = kkt_residual(&p, &xp).unwrap();
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn iteration_cap_carries_best_iterate() {
        let design = arr2(&[[1.0], [1.0]]);
        let rhs = arr2(&[[1.0], [1.0]]);
        // cap = 0 forces the failure path immediately
        let err = nnls_column(design.view(), rhs.column(0), 0.0, 0).unwrap_err();
        assert!(err.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn multi_rhs_matches_sequential() {
        let design = rng_matrix(9, 4, 9);
        let rhs = rng_matrix(9, 6, 10);
        let p = LsProblem::new(design.clone(), rhs.clone()).unwrap();
        let joint = solve_nnls(&p).unwrap();
        for c in 0..6 {
            let single = LsProblem::new(design.clone(), rhs.slice(s![.., c..c + 1]).to_owned()).unwrap();
            let x = solve_nnls(&single).unwrap();
            for i in 0..4 {
                assert_eq!(joint[(i, c)], x[(i, 0)]);
            }
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        assert!(LsProblem::new(rng_matrix(3, 2, 11), rng_matrix(4, 1, 12)).is_err());
    }
}
