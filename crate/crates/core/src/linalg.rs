//! Dense least squares via Householder QR with column pivoting.
//!
//! Rank-deficient systems fall back to a complete orthogonal decomposition
//! so the returned solution is the minimum-norm one. QR is used rather than
//! normal equations: the proximal solver feeds ill-conditioned designs near
//! swamps and squaring the condition number there loses too much accuracy.

use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

/// Solution of a (possibly multi right-hand-side) least-squares problem.
#[derive(Debug, Clone)]
pub struct LsSolution {
    /// `n x t` solution matrix; column `j` minimizes `||design x - rhs_j||`.
    pub x: Array2<f64>,
    /// Numerical rank of the design matrix.
    pub rank: usize,
    /// True when the design was rank deficient and `x` is the minimum-norm
    /// pseudo-solution.
    pub rank_deficient: bool,
}

/// Solves `min_x ||design x - rhs||_F`, column by column.
pub fn lstsq(design: ArrayView2<f64>, rhs: ArrayView2<f64>) -> Result<LsSolution> {
    let (m, n) = design.dim();
    if m == 0 || n == 0 {
        return Err(Error::Shape("design matrix must be non-empty".into()));
    }
    if rhs.nrows() != m {
        return Err(Error::Shape(format!(
            "rhs has {} rows, design has {}",
            rhs.nrows(),
            m
        )));
    }
    let qr = PivotedQr::factor(design);
    Ok(qr.solve(rhs))
}

struct PivotedQr {
    qr: Array2<f64>,
    taus: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

fn tail_sumsq(m: &Array2<f64>, row0: usize, col: usize) -> f64 {
    m.slice(s![row0.., col]).iter().map(|v| v * v).sum()
}

/// Builds a Householder reflector for `col[k..]`, writing the reflector tail
/// into `col[k+1..]` and the resulting R diagonal into `col[k]`. Returns tau.
fn make_householder(qr: &mut Array2<f64>, k: usize) -> f64 {
    let m = qr.nrows();
    let alpha = qr[(k, k)];
    let xnorm = tail_sumsq(qr, k + 1, k).sqrt();
    if xnorm == 0.0 {
        return 0.0;
    }
    let norm = alpha.hypot(xnorm);
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for i in k + 1..m {
        qr[(i, k)] *= scale;
    }
    qr[(k, k)] = beta;
    tau
}

/// Applies the reflector stored in `v` (implicit 1 at row `k`, tail below) to
/// every column of `target`.
fn reflect_columns(v: ArrayView1<f64>, k: usize, tau: f64, mut target: ArrayViewMut2<f64>) {
    if tau == 0.0 {
        return;
    }
    let m = v.len();
    for mut col in target.columns_mut() {
        let mut w = col[k];
        for i in k + 1..m {
            w += v[i] * col[i];
        }
        let tw = tau * w;
        if tw != 0.0 {
            col[k] -= tw;
            for i in k + 1..m {
                col[i] -= tw * v[i];
            }
        }
    }
}

impl PivotedQr {
    fn factor(a: ArrayView2<f64>) -> Self {
        let (m, n) = a.dim();
        let kmax = m.min(n);
        let mut qr = a.to_owned();
        let mut taus = vec![0.0; kmax];
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..kmax {
            // Pivot on the largest trailing column norm; strict comparison
            // keeps the lowest index on ties, so the factorization is
            // deterministic.
            let mut best = k;
            let mut best_norm = tail_sumsq(&qr, k, k);
            for c in k + 1..n {
                let s = tail_sumsq(&qr, k, c);
                if s > best_norm {
                    best = c;
                    best_norm = s;
                }
            }
            if best_norm == 0.0 {
                break;
            }
            if best != k {
                for i in 0..m {
                    qr.swap((i, k), (i, best));
                }
                perm.swap(k, best);
            }
            taus[k] = make_householder(&mut qr, k);
            if k + 1 < n {
                let (left, right) = qr.view_mut().split_at(ndarray::Axis(1), k + 1);
                reflect_columns(left.column(k), k, taus[k], right);
            }
        }

        let rmax = qr[(0, 0)].abs();
        let tol = f64::EPSILON * (m.max(n) as f64) * rmax;
        let mut rank = 0;
        while rank < kmax && qr[(rank, rank)].abs() > tol {
            rank += 1;
        }
        Self { qr, taus, perm, rank }
    }

    fn solve(&self, rhs: ArrayView2<f64>) -> LsSolution {
        let (m, n) = self.qr.dim();
        let t = rhs.ncols();
        let kmax = m.min(n);
        let rank = self.rank;

        let mut qtb = rhs.to_owned();
        for k in 0..kmax {
            reflect_columns(self.qr.column(k), k, self.taus[k], qtb.view_mut());
        }

        let y = if rank == 0 {
            Array2::zeros((n, t))
        } else if rank == n {
            // Back substitution on the square upper-triangular R.
            let mut y = Array2::zeros((n, t));
            for i in (0..n).rev() {
                for c in 0..t {
                    let mut v = qtb[(i, c)];
                    for j in i + 1..n {
                        v -= self.qr[(i, j)] * y[(j, c)];
                    }
                    y[(i, c)] = v / self.qr[(i, i)];
                }
            }
            y
        } else {
            self.solve_min_norm(&qtb, rank)
        };

        let mut x = Array2::zeros((n, t));
        for (row, &p) in self.perm.iter().enumerate() {
            for c in 0..t {
                x[(p, c)] = y[(row, c)];
            }
        }
        LsSolution {
            x,
            rank,
            rank_deficient: rank < n.min(m),
        }
    }

    /// Complete orthogonal decomposition step: factor the transpose of the
    /// upper-trapezoidal `R` rows and back-map for the minimum-norm solution.
    fn solve_min_norm(&self, qtb: &Array2<f64>, rank: usize) -> Array2<f64> {
        let n = self.qr.ncols();
        let t = qtb.ncols();

        // w = R[0..rank, 0..n]^T, an n x rank full-column-rank matrix.
        let mut w = Array2::zeros((n, rank));
        for i in 0..rank {
            for j in i..n {
                w[(j, i)] = self.qr[(i, j)];
            }
        }
        let mut taus_z = vec![0.0; rank];
        for k in 0..rank {
            taus_z[k] = make_householder(&mut w, k);
            if k + 1 < rank {
                let (left, right) = w.view_mut().split_at(ndarray::Axis(1), k + 1);
                reflect_columns(left.column(k), k, taus_z[k], right);
            }
        }

        // Solve Rz^T u = qtb[0..rank, :] by forward substitution.
        let mut u = Array2::zeros((rank, t));
        for i in 0..rank {
            for c in 0..t {
                let mut v = qtb[(i, c)];
                for j in 0..i {
                    v -= w[(j, i)] * u[(j, c)];
                }
                u[(i, c)] = v / w[(i, i)];
            }
        }

        // y = Qz [u; 0]
        let mut y = Array2::zeros((n, t));
        y.slice_mut(s![0..rank, ..]).assign(&u);
        for k in (0..rank).rev() {
            reflect_columns(w.column(k), k, taus_z[k], y.view_mut());
        }
        y
    }
}
