//! Regularization-parameter selection for the projected problems: fixed
//! values, the discrepancy principle enforced exactly at each iteration, its
//! secant-update variant, and an oracle grid search against the true
//! solution.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::projsolve::{tikhonov_projected, ProjectedProblem};

/// Clamp bounds for iteratively updated parameters.
pub const LAMBDA_MIN: f64 = 1e-12;
pub const LAMBDA_MAX: f64 = 1e12;

/// Relative tolerance on the discrepancy equation `residual = eta * eps`.
pub const DP_RTOL: f64 = 1e-8;

/// Per-iteration parameter selection policy.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamPolicy {
    Fixed { lambda: f64 },
    /// Discrepancy principle solved exactly at each iteration.
    DpExact { eps: f64, eta: f64 },
    /// One secant-style multiplicative update per iteration.
    DpSecant {
        eps: f64,
        eta: f64,
        /// Starting value; defaults to `(eta * eps / beta_1)^2`.
        lambda0: Option<f64>,
    },
    /// Error-optimal parameter over a log grid (requires the true solution).
    Optimal { grid: LambdaGrid },
}

impl ParamPolicy {
    pub fn fixed(lambda: f64) -> Self {
        ParamPolicy::Fixed { lambda }
    }

    pub fn zero() -> Self {
        ParamPolicy::Fixed { lambda: 0.0 }
    }
}

/// Logarithmically spaced candidate grid.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            min: LAMBDA_MIN,
            max: LAMBDA_MAX,
            points: 40,
        }
    }
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.min];
        }
        let (l0, l1) = (self.min.ln(), self.max.ln());
        (0..self.points)
            .map(|i| (l0 + (l1 - l0) * i as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

/// Seed heuristic for iteratively updated parameters.
pub fn lambda0_heuristic(eta: f64, eps: f64, beta1: f64) -> f64 {
    ((eta * eps / beta1) * (eta * eps / beta1)).clamp(LAMBDA_MIN, LAMBDA_MAX)
}

/// Finds `lambda` such that the projected residual equals `eta * eps` to
/// relative tolerance [`DP_RTOL`], by log-space bisection with a secant
/// polish on the monotone residual curve.
///
/// Clamps: when the target is below the unregularized residual the principle
/// is not yet reachable and `0` is returned; when it exceeds the saturation
/// residual `beta`, [`LAMBDA_MAX`] is returned.
pub fn select_dp_exact(p: &ProjectedProblem, eps: f64, eta: f64) -> f64 {
    let target = eta * eps;
    let r0 = tikhonov_projected(p, 0.0).residual_norm;
    if target <= r0 {
        return 0.0;
    }
    if target >= p.beta {
        return LAMBDA_MAX;
    }
    let res_at = |lambda: f64| tikhonov_projected(p, lambda).residual_norm;
    let tol = DP_RTOL * target;

    let (mut lo, mut hi) = (1e-16f64, 1e16f64);
    let (mut r_lo, mut r_hi) = (res_at(lo), res_at(hi));
    if r_lo >= target - tol {
        return lo; // residual already at target for vanishing lambda
    }
    if r_hi <= target {
        return LAMBDA_MAX;
    }
    let mut best = (lo, (r_lo - target).abs());
    for _ in 0..200 {
        // secant step in log-lambda, safeguarded by the bracket midpoint
        let (llo, lhi) = (lo.ln(), hi.ln());
        let frac = (target - r_lo) / (r_hi - r_lo);
        let mut lmid = llo + frac.clamp(0.05, 0.95) * (lhi - llo);
        if !lmid.is_finite() {
            lmid = 0.5 * (llo + lhi);
        }
        let mid = lmid.exp();
        let r_mid = res_at(mid);
        let gap = (r_mid - target).abs();
        if gap < best.1 {
            best = (mid, gap);
        }
        if gap <= tol {
            return mid;
        }
        if r_mid < target {
            lo = mid;
            r_lo = r_mid;
        } else {
            hi = mid;
            r_hi = r_mid;
        }
    }
    best.0
}

/// Secant-update discrepancy rule:
/// `lambda_next = lambda * |eta eps - r_zero| / |r_reg - r_zero|`,
/// clamped to `[LAMBDA_MIN, LAMBDA_MAX]`. Fixed points satisfy
/// `r_reg = eta * eps`.
pub fn select_dp_secant(prev_lambda: f64, r_reg: f64, r_zero: f64, eps: f64, eta: f64) -> f64 {
    let denom = (r_reg - r_zero).abs();
    if denom < 1e-15 {
        return prev_lambda;
    }
    let next = prev_lambda * (eta * eps - r_zero).abs() / denom;
    next.clamp(LAMBDA_MIN, LAMBDA_MAX)
}

/// Grid argmin of `||x(lambda) - x_true||`.
pub fn select_optimal<F>(candidate_lambdas: &[f64], solve: F, x_true: &DVector<f64>) -> f64
where
    F: Fn(f64) -> DVector<f64>,
{
    assert!(!candidate_lambdas.is_empty(), "empty candidate grid");
    let mut best = (candidate_lambdas[0], f64::INFINITY);
    for &lambda in candidate_lambdas {
        let err = (solve(lambda) - x_true).norm();
        if err < best.1 {
            best = (lambda, err);
        }
    }
    best.0
}
