//! Dense small-scale kernels for the projected problems: incremental thin QR
//! of the flexible basis, Tikhonov solves of the projected least-squares
//! problems, residual curves in the regularization parameter, and singular
//! value extraction from the `M_k R_k^{-1}` product.

use nalgebra::{DMatrix, DVector};

use crate::decomp::orthogonalize;

/// Rank tolerance for triangular factors, relative to the column scale.
pub const RANK_RTOL: f64 = 1e-14;

/// Condition-number threshold above which singular-value extraction flags
/// the triangular factor as untrustworthy.
pub const COND_LIMIT: f64 = 1e12;

/// Thin QR factorization grown one column at a time in `O(nk)` per append.
pub struct IncrementalQr {
    q: Vec<DVector<f64>>,
    /// Column `j` holds `r_{1..j+1, j}`.
    r_cols: Vec<Vec<f64>>,
    rank_deficient: bool,
}

impl Default for IncrementalQr {
    fn default() -> Self {
        Self::new()
    }
}

impl IncrementalQr {
    pub fn new() -> Self {
        Self {
            q: Vec::new(),
            r_cols: Vec::new(),
            rank_deficient: false,
        }
    }

    pub fn k(&self) -> usize {
        self.r_cols.len()
    }

    /// Appends a column; returns `false` (and flags the factorization) when
    /// the new column is numerically dependent on the existing ones.
    pub fn append(&mut self, z_new: &DVector<f64>) -> bool {
        let mut w = z_new.clone();
        let mut col = vec![0.0; self.q.len() + 1];
        orthogonalize(&mut w, &self.q, &mut col[..self.q.len()]);
        let diag = w.norm();
        col[self.q.len()] = diag;
        let full_rank = diag > RANK_RTOL * z_new.norm();
        if full_rank {
            self.q.push(w / diag);
        } else {
            // keep a unit placeholder so Q stays orthonormal and R square
            self.rank_deficient = true;
            let n = z_new.len();
            let mut e = DVector::zeros(n);
            // pick the coordinate least represented to stay deterministic
            let mut best = 0;
            let mut best_norm = f64::INFINITY;
            for i in 0..n.min(self.q.len() + 1) {
                let row_norm: f64 = self.q.iter().map(|q| q[i] * q[i]).sum();
                if row_norm < best_norm {
                    best_norm = row_norm;
                    best = i;
                }
            }
            e[best] = 1.0;
            let mut scratch = vec![0.0; self.q.len()];
            orthogonalize(&mut e, &self.q, &mut scratch);
            let nrm = e.norm();
            self.q.push(if nrm > 0.0 { e / nrm } else { e });
        }
        self.r_cols.push(col);
        full_rank
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    /// Upper triangular `R`, `k x k`.
    pub fn r_matrix(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut r = DMatrix::zeros(k, k);
        for (j, col) in self.r_cols.iter().enumerate() {
            for (i, &val) in col.iter().enumerate() {
                r[(i, j)] = val;
            }
        }
        r
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        let n = self.q.first().map_or(0, |c| c.len());
        let mut m = DMatrix::zeros(n, self.q.len());
        for (j, c) in self.q.iter().enumerate() {
            m.set_column(j, c);
        }
        m
    }
}

/// Regularization operator of the projected Tikhonov problem.
#[derive(Clone, Debug)]
pub enum Regularizer {
    Identity,
    /// Upper triangular `R_k` from the thin QR of `Z_k`.
    Triangular(DMatrix<f64>),
}

/// The small dense problem `min_y ||C y - beta e_1||^2 + lambda ||R y||^2`
/// with `C` upper Hessenberg (`M_k`, or `T_{k+1} M_k` for the LSMR family).
#[derive(Clone, Debug)]
pub struct ProjectedProblem {
    pub coefficient: DMatrix<f64>,
    pub beta: f64,
    pub regularizer: Regularizer,
}

impl ProjectedProblem {
    pub fn new(coefficient: DMatrix<f64>, beta: f64, regularizer: Regularizer) -> Self {
        Self {
            coefficient,
            beta,
            regularizer,
        }
    }

    pub fn k(&self) -> usize {
        self.coefficient.ncols()
    }

    fn rhs(&self) -> DVector<f64> {
        let mut rhs = DVector::zeros(self.coefficient.nrows());
        rhs[0] = self.beta;
        rhs
    }
}

/// Result of a projected Tikhonov solve.
#[derive(Clone, Debug)]
pub struct ProjectedSolution {
    pub y: DVector<f64>,
    /// `||C y - beta e_1||` for the problem's own coefficient matrix.
    pub residual_norm: f64,
    /// Set when the unregularized system was rank deficient and a
    /// minimum-norm solution was returned.
    pub rank_deficient: bool,
}

/// Least squares via dense QR; falls back to an SVD minimum-norm solve when
/// the triangular factor is numerically singular.
fn lstsq(g: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, bool) {
    let cols = g.ncols();
    let qr = g.clone().qr();
    let r = qr.r();
    let mut max_diag = 0.0f64;
    let mut min_diag = f64::INFINITY;
    for i in 0..cols {
        let d = r[(i, i)].abs();
        max_diag = max_diag.max(d);
        min_diag = min_diag.min(d);
    }
    if min_diag > RANK_RTOL * max_diag && max_diag > 0.0 {
        let qtb = qr.q().transpose() * rhs;
        let y = r
            .solve_upper_triangular(&qtb)
            .expect("diagonal checked nonzero");
        (y, false)
    } else {
        let svd = g.clone().svd(true, true);
        let y = svd
            .solve(rhs, RANK_RTOL * max_diag.max(f64::MIN_POSITIVE))
            .expect("svd solve");
        (y, true)
    }
}

/// Solves `min_y ||C y - beta e_1||^2 + lambda ||R y||^2` through the
/// augmented least-squares form `[C; sqrt(lambda) R]`.
pub fn tikhonov_projected(p: &ProjectedProblem, lambda: f64) -> ProjectedSolution {
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    let rows = p.coefficient.nrows();
    let k = p.k();
    let rhs = p.rhs();
    let (y, rank_deficient) = if lambda > 0.0 {
        let mut g = DMatrix::zeros(rows + k, k);
        g.view_mut((0, 0), (rows, k)).copy_from(&p.coefficient);
        let sl = lambda.sqrt();
        match &p.regularizer {
            Regularizer::Identity => {
                for i in 0..k {
                    g[(rows + i, i)] = sl;
                }
            }
            Regularizer::Triangular(r) => {
                g.view_mut((rows, 0), (k, k)).copy_from(&(r * sl));
            }
        }
        let mut aug_rhs = DVector::zeros(rows + k);
        aug_rhs.rows_mut(0, rows).copy_from(&rhs);
        lstsq(&g, &aug_rhs)
    } else {
        lstsq(&p.coefficient, &rhs)
    };
    let residual_norm = (&p.coefficient * &y - rhs).norm();
    ProjectedSolution {
        y,
        residual_norm,
        rank_deficient,
    }
}

/// Residual norms `||C y(lambda) - beta e_1||` over a list of parameters;
/// nondecreasing in `lambda`.
pub fn projected_residual_curve(p: &ProjectedProblem, lambdas: &[f64]) -> Vec<f64> {
    lambdas
        .iter()
        .map(|&l| tikhonov_projected(p, l).residual_norm)
        .collect()
}

/// Singular values of `M R^{-1}`, descending, with an ill-conditioning flag
/// when `cond(R) > 1e12`.
pub struct SingularValueApprox {
    pub values: Vec<f64>,
    pub ill_conditioned: bool,
}

/// Approximates the singular values of the underlying operator restricted to
/// the current subspace: the singular values of `M_k R_k^{-1}` equal those
/// of `A Q_k` when `Z_k = Q_k R_k`.
pub fn approx_singular_values(m: &DMatrix<f64>, r: &DMatrix<f64>) -> SingularValueApprox {
    let k = r.nrows();
    assert_eq!(r.ncols(), k, "R must be square");
    assert_eq!(m.ncols(), k, "M and R must have matching columns");
    let r_svd = r.clone().svd(false, false);
    let (smax, smin) = r_svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(mx, mn), &s| (mx.max(s), mn.min(s)));
    let ill_conditioned = !(smin > 0.0) || smax / smin > COND_LIMIT;
    // X = M R^{-1}  <=>  X R = M  <=>  R' X' = M'
    let xt = r
        .transpose()
        .solve_lower_triangular(&m.transpose())
        .expect("R invertible by construction");
    let mut values: Vec<f64> = xt
        .transpose()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    SingularValueApprox {
        values,
        ill_conditioned,
    }
}
