//! Comparison solvers: IRN (outer reweighting with inner CGLS), its
//! standard-form preconditioned variant PIRN, and FISTA with
//! soft-thresholding.
//!
//! The inner solver is CGLS on the augmented system `[A; sqrt(lambda) L]`,
//! never on explicitly formed normal equations. Traces record one row per
//! inner iteration so cross-method comparisons can be made at equal
//! matrix-vector budgets; the `matvecs` column counts only products consumed
//! by the algorithm itself (residual diagnostics are computed against the
//! raw operator and excluded, as is FISTA's one-off stepsize estimation).

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::{
    compose, estimate_spectral_norm, CountingOperator, DiagonalOperator, LinearOperator, OpRef,
    VStackOperator,
};
use crate::solvers::{IterRecord, Method, SolverRun, StopReason};
use crate::weights::{build_weights, WeightPolicy};

/// Configuration for the IRN and PIRN baselines.
#[derive(Clone)]
pub struct IrnConfig {
    pub lambda: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// Inner CGLS also stops when the augmented gradient norm falls below
    /// `inner_tol` times its initial value (0 disables the test).
    pub inner_tol: f64,
    pub weights: WeightPolicy,
    pub x_true: Option<DVector<f64>>,
}

impl IrnConfig {
    pub fn new(lambda: f64, outer_iters: usize) -> Self {
        Self {
            lambda,
            outer_iters,
            inner_iters: 20,
            inner_tol: 0.0,
            weights: WeightPolicy::l1(),
            x_true: None,
        }
    }
}

/// Configuration for FISTA on `min 1/2 ||A x - b||^2 + lambda ||x||_1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FistaConfig {
    pub lambda: f64,
    /// Gradient stepsize; `None` estimates `1/sigma_1^2` by 30 power
    /// iterations (a setup cost excluded from the matvec accounting).
    pub step: Option<f64>,
    pub max_iters: usize,
    #[serde(skip)]
    pub x_true: Option<DVector<f64>>,
}

impl FistaConfig {
    pub fn new(lambda: f64, max_iters: usize) -> Self {
        Self {
            lambda,
            step: None,
            max_iters,
            x_true: None,
        }
    }
}

/// Soft-thresholding prox of the one-norm: `sign(t) max(|t| - gamma, 0)`.
pub fn soft_threshold(t: f64, gamma: f64) -> f64 {
    t.signum() * (t.abs() - gamma).max(0.0)
}

struct CglsOutcome {
    x: DVector<f64>,
    converged: bool,
}

/// CGLS on `min ||G x - rhs||` warm-started at `x0`; `on_iterate` observes
/// every inner iterate together with `||b - A x||`, the norm of the first
/// `m_top` entries of the augmented residual.
///
/// The gradient tolerance is measured against the gradient scale at `x = 0`
/// (not the warm start, which may already be near-optimal), and iteration
/// halts once the gradient norm stops decreasing — past its numerical floor
/// CG recurrences amplify rounding noise instead of converging.
fn cgls(
    g: &dyn LinearOperator,
    rhs: &DVector<f64>,
    x0: &DVector<f64>,
    iters: usize,
    tol: f64,
    m_top: usize,
    mut on_iterate: impl FnMut(&DVector<f64>, f64),
) -> CglsOutcome {
    let gamma_ref = g.apply_adjoint(rhs).norm_squared();
    let mut x = x0.clone();
    let mut r = rhs - g.apply(&x);
    let mut s = g.apply_adjoint(&r);
    let mut p = s.clone();
    let mut gamma = s.norm_squared();
    let mut converged = gamma == 0.0;
    let mut best = (gamma, x.clone());
    for _ in 0..iters {
        if converged {
            break;
        }
        let q = g.apply(&p);
        let qn = q.norm_squared();
        if qn == 0.0 {
            converged = true;
            break;
        }
        let alpha = gamma / qn;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &q, 1.0);
        s = g.apply_adjoint(&r);
        let gamma_new = s.norm_squared();
        on_iterate(&x, r.rows(0, m_top).norm());
        if gamma_new < best.0 {
            best = (gamma_new, x.clone());
        }
        if tol > 0.0 && gamma_new <= tol * tol * gamma_ref {
            converged = true;
            break;
        }
        // past its numerical floor CG amplifies rounding noise instead of
        // converging; a gradient far above the best seen means we are there
        if gamma_new > 1e6 * best.0 {
            converged = true;
            break;
        }
        p = &s + &p * (gamma_new / gamma);
        gamma = gamma_new;
    }
    // hand back the best-gradient iterate of the sweep
    CglsOutcome {
        x: best.1,
        converged,
    }
}

fn scaled_diag(l: &DiagonalOperator, factor: f64) -> DiagonalOperator {
    DiagonalOperator::new(l.diag() * factor).expect("positive scaling of positive diagonal")
}

/// Per-iteration trace shared by the baselines. Residual diagnostics use the
/// raw (uncounted) operator.
struct Trace<'a> {
    raw: &'a dyn LinearOperator,
    b: &'a DVector<f64>,
    x_true: Option<&'a DVector<f64>>,
    x_true_norm: f64,
    records: Vec<IterRecord>,
    started: Instant,
    lambda: f64,
}

impl<'a> Trace<'a> {
    fn new(
        raw: &'a dyn LinearOperator,
        b: &'a DVector<f64>,
        x_true: Option<&'a DVector<f64>>,
        lambda: f64,
    ) -> Self {
        Self {
            raw,
            b,
            x_true,
            x_true_norm: x_true.map_or(1.0, |t| t.norm()),
            records: Vec::new(),
            started: Instant::now(),
            lambda,
        }
    }

    fn push(&mut self, x: &DVector<f64>, res_norm: Option<f64>, matvecs: usize) {
        let r = self.raw.apply(x) - self.b;
        let res = res_norm.unwrap_or_else(|| r.norm());
        let ne = self.raw.apply_adjoint(&r).norm();
        let rel_err = self.x_true.map(|t| (x - t).norm() / self.x_true_norm);
        self.records.push(IterRecord {
            k: self.records.len() + 1,
            lambda: self.lambda,
            res_norm: res,
            ne_res_norm: ne,
            rel_err,
            matvecs,
            wall_ms: self.started.elapsed().as_secs_f64() * 1e3,
        });
    }
}

/// IRN: each outer step rebuilds `L_k = L(x_{k-1})` (identity on the first,
/// where `x_0 = 0`) and runs CGLS on `[A; sqrt(lambda) L_k] x = [b; 0]`
/// warm-started at the previous outer iterate.
pub fn run_irn(a: OpRef, b: &DVector<f64>, cfg: &IrnConfig) -> Result<SolverRun> {
    run_irn_impl(a, b, cfg, false)
}

/// PIRN: the standard-form variant, CGLS on `[A L_k^{-1}; sqrt(lambda) I]`
/// in `xhat = L_k x`, mapped back through `L_k^{-1}`.
pub fn run_pirn(a: OpRef, b: &DVector<f64>, cfg: &IrnConfig) -> Result<SolverRun> {
    run_irn_impl(a, b, cfg, true)
}

fn run_irn_impl(
    a: OpRef,
    b: &DVector<f64>,
    cfg: &IrnConfig,
    preconditioned: bool,
) -> Result<SolverRun> {
    if cfg.lambda < 0.0 || cfg.outer_iters == 0 || cfg.inner_iters == 0 {
        return Err(Error::Config(
            "IRN requires lambda >= 0 and positive iteration counts".into(),
        ));
    }
    if !cfg.weights.is_valid() {
        return Err(Error::Config("invalid weight policy".into()));
    }
    let n = a.ncols();
    let m = a.nrows();
    assert_eq!(b.len(), m, "rhs length must match operator rows");
    let counted = Arc::new(CountingOperator::new(a.clone()));
    let mut trace = Trace::new(a.as_ref(), b, cfg.x_true.as_ref(), cfg.lambda);
    let mut x = DVector::<f64>::zeros(n);
    let mut inner_budget_hit = false;

    let mut rhs = DVector::zeros(m + n);
    rhs.rows_mut(0, m).copy_from(b);
    let sqrt_l = cfg.lambda.sqrt().max(f64::MIN_POSITIVE);

    for outer in 0..cfg.outer_iters {
        let (l, l_inv) = if outer == 0 {
            (DiagonalOperator::identity(n), DiagonalOperator::identity(n))
        } else {
            build_weights(&x, &cfg.weights)
        };
        let out = if preconditioned {
            let ali: OpRef = Arc::new(compose(vec![
                counted.clone() as OpRef,
                Arc::new(l_inv.clone()) as OpRef,
            ])?);
            let reg: OpRef = Arc::new(scaled_diag(&DiagonalOperator::identity(n), sqrt_l));
            let g = VStackOperator::new(ali, reg)?;
            let xhat0 = l.apply_vec(&x);
            let out = cgls(
                &g,
                &rhs,
                &xhat0,
                cfg.inner_iters,
                cfg.inner_tol,
                m,
                |xhat, res_top| {
                    let xk = l_inv.apply_vec(xhat);
                    trace.push(&xk, Some(res_top), counted.total());
                },
            );
            CglsOutcome {
                x: l_inv.apply_vec(&out.x),
                converged: out.converged,
            }
        } else {
            let reg: OpRef = Arc::new(scaled_diag(&l, sqrt_l));
            let g = VStackOperator::new(counted.clone() as OpRef, reg)?;
            cgls(
                &g,
                &rhs,
                &x,
                cfg.inner_iters,
                cfg.inner_tol,
                m,
                |xk, res_top| {
                    trace.push(xk, Some(res_top), counted.total());
                },
            )
        };
        x = out.x;
        inner_budget_hit |= !out.converged && cfg.inner_tol > 0.0;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "IRN iterate",
                iteration: trace.records.len(),
            });
        }
    }

    Ok(SolverRun {
        method: if preconditioned { Method::Pirn } else { Method::Irn },
        records: trace.records,
        solution: x,
        stop: StopReason::MaxIters,
        final_lambda: cfg.lambda,
        iterates: None,
        warning: inner_budget_hit
            .then(|| "inner CGLS exhausted its budget before the requested tolerance".to_string()),
    })
}

/// FISTA with soft-thresholding on `min 1/2 ||A x - b||^2 + lambda ||x||_1`;
/// momentum `t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2`, prox threshold
/// `lambda * step`.
pub fn run_fista(a: OpRef, b: &DVector<f64>, cfg: &FistaConfig) -> Result<SolverRun> {
    let n = a.ncols();
    assert_eq!(b.len(), a.nrows(), "rhs length must match operator rows");
    let step = match cfg.step {
        Some(s) => {
            if !(s > 0.0) {
                return Err(Error::Config("FISTA stepsize must be positive".into()));
            }
            s
        }
        None => {
            let sigma = estimate_spectral_norm(a.as_ref(), 30, 0x57e9);
            if sigma == 0.0 {
                return Err(Error::Config("operator appears to be zero".into()));
            }
            1.0 / (sigma * sigma)
        }
    };
    let threshold = cfg.lambda * step;
    let counted = Arc::new(CountingOperator::new(a.clone()));
    let mut trace = Trace::new(a.as_ref(), b, cfg.x_true.as_ref(), cfg.lambda);

    let objective = |x: &DVector<f64>| -> f64 {
        let r = a.apply(x) - b;
        0.5 * r.norm_squared() + cfg.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    };
    let f0 = objective(&DVector::zeros(n)).max(f64::MIN_POSITIVE);

    let mut x = DVector::<f64>::zeros(n);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for k in 1..=cfg.max_iters {
        let grad = counted.apply_adjoint(&(counted.apply(&y) - b));
        let mut x_new = &y - &grad * step;
        x_new.apply(|v| *v = soft_threshold(*v, threshold));
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
        x = x_new;
        t = t_new;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "FISTA iterate",
                iteration: k,
            });
        }
        trace.push(&x, None, counted.total());
        if objective(&x) > 10.0 * f0 {
            return Err(Error::Diverged { iteration: k });
        }
    }
    Ok(SolverRun {
        method: Method::Fista,
        records: trace.records,
        solution: x,
        stop: StopReason::MaxIters,
        final_lambda: cfg.lambda,
        iterates: None,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::IdentityOperator;

    #[test]
    fn soft_threshold_formula() {
        assert!((soft_threshold(1.0, 0.3) - 0.7).abs() <= 1e-15);
        assert_eq!(soft_threshold(-0.2, 0.3), 0.0);
        assert!((soft_threshold(-1.0, 0.25) + 0.75).abs() <= 1e-15);
    }

    #[test]
    fn irn_identity_p2_closed_form() {
        // A = I, p = 2: one outer step converges to x = b / (1 + lambda)
        let n = 6;
        let a: OpRef = Arc::new(IdentityOperator::new(n));
        let b = crate::rng::standard_normal(&mut crate::rng::from_seed(3), n);
        let mut cfg = IrnConfig::new(0.5, 1);
        cfg.inner_iters = 50;
        cfg.inner_tol = 1e-14;
        cfg.weights = WeightPolicy::identity();
        let run = run_irn(a, &b, &cfg).unwrap();
        let expect = &b / 1.5;
        assert!((run.solution - expect).norm() <= 1e-10 * b.norm());
    }

    #[test]
    fn irn_identity_p1_shrinks_small_entry() {
        // large entry barely shrunk, small entry crushed toward zero
        let a: OpRef = Arc::new(IdentityOperator::new(2));
        let b = DVector::from_row_slice(&[1.0, 0.001]);
        let mut cfg = IrnConfig::new(1e-3, 8);
        cfg.inner_iters = 100;
        cfg.inner_tol = 1e-15;
        cfg.weights.tau1 = crate::weights::Threshold::Absolute(0.01);
        cfg.weights.tau2 = crate::weights::Tau2::Absolute(1e-10);
        let run = run_irn(a, &b, &cfg).unwrap();
        let x = &run.solution;
        assert!(x[0] > 0.99, "large entry shrunk too much: {}", x[0]);
        assert!(x[1].abs() < 2e-4, "small entry not crushed: {}", x[1]);
    }

    #[test]
    fn fista_identity_fixed_point() {
        let a: OpRef = Arc::new(IdentityOperator::new(3));
        let b = DVector::from_row_slice(&[1.0, -0.2, 0.5]);
        let mut cfg = FistaConfig::new(0.3, 30);
        cfg.step = Some(1.0);
        let run = run_fista(a, &b, &cfg).unwrap();
        let expect = DVector::from_row_slice(&[0.7, 0.0, 0.2]);
        assert!((run.solution - expect).norm() <= 1e-12);
    }

    #[test]
    fn fista_objective_not_increased() {
        let mut r = crate::rng::from_seed(12);
        let a_mat =
            nalgebra::DMatrix::from_fn(10, 6, |_, _| crate::rng::standard_normal(&mut r, 1)[0]);
        let b = crate::rng::standard_normal(&mut r, 10);
        let a: OpRef = Arc::new(crate::linop::DenseOperator::new(a_mat.clone()));
        let run = run_fista(a, &b, &FistaConfig::new(0.1, 100)).unwrap();
        let f = |x: &DVector<f64>| {
            0.5 * (&a_mat * x - &b).norm_squared() + 0.1 * x.iter().map(|v| v.abs()).sum::<f64>()
        };
        assert!(f(&run.solution) <= f(&DVector::zeros(6)) + 1e-12);
    }

    #[test]
    fn fista_rejects_bad_step() {
        let a: OpRef = Arc::new(IdentityOperator::new(2));
        let mut cfg = FistaConfig::new(0.1, 5);
        cfg.step = Some(-1.0);
        assert!(run_fista(a, &DVector::zeros(2), &cfg).is_err());
    }

    #[test]
    fn matvec_column_counts_algorithm_work_only() {
        let a: OpRef = Arc::new(IdentityOperator::new(4));
        let b = DVector::from_element(4, 1.0);
        let run = run_fista(a, &b, &FistaConfig::new(0.01, 7)).unwrap();
        // 2 products per FISTA iteration, diagnostics excluded
        for (i, rec) in run.records.iter().enumerate() {
            assert_eq!(rec.matvecs, 2 * (i + 1));
        }
    }
}
