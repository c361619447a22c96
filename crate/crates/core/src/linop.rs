//! Dimension-checked linear operators with forward and adjoint application.
//!
//! Solvers in this crate are matrix-free: they only ever touch an operator
//! through [`LinearOperator::apply`] and [`LinearOperator::apply_adjoint`].
//! This module provides the trait plus the combinators the solvers and test
//! problems are assembled from (dense, diagonal, composition, adjoint,
//! vertical stacking, transform conjugation, instrumentation).

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng;

/// A real linear map with forward and adjoint matrix-vector products.
///
/// Implementations must be deterministic for a fixed input, must not mutate
/// the input vector, and must satisfy the adjoint-pair identity
/// `<A v, u> == <v, A' u>` for all `u`, `v` (see
/// [`adjoint_consistency_defect`] for the randomized check used in tests).
pub trait LinearOperator: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// Computes `A * x`. Panics if `x.len() != self.ncols()`.
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Computes `A' * y`. Panics if `y.len() != self.nrows()`.
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64>;
}

/// Shared handle to an operator; operators are immutable after construction
/// and safe for concurrent read-only application.
pub type OpRef = Arc<dyn LinearOperator>;

/// An orthonormal change of basis: the adjoint is also the inverse
/// (`P' P = P P' = I`). Implementors promise `apply_adjoint` undoes `apply`.
pub trait OrthonormalTransform: LinearOperator {}

fn check_apply(op: &dyn LinearOperator, x: &DVector<f64>) {
    assert_eq!(
        x.len(),
        op.ncols(),
        "operator is {}x{} but input has length {}",
        op.nrows(),
        op.ncols(),
        x.len()
    );
}

fn check_adjoint(op: &dyn LinearOperator, y: &DVector<f64>) {
    assert_eq!(
        y.len(),
        op.nrows(),
        "operator adjoint is {}x{} but input has length {}",
        op.ncols(),
        op.nrows(),
        y.len()
    );
}

/// Dense matrix operator.
pub struct DenseOperator {
    mat: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(mat: DMatrix<f64>) -> Self {
        Self { mat }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }
}

impl LinearOperator for DenseOperator {
    fn nrows(&self) -> usize {
        self.mat.nrows()
    }

    fn ncols(&self) -> usize {
        self.mat.ncols()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        check_apply(self, x);
        &self.mat * x
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        check_adjoint(self, y);
        self.mat.transpose() * y
    }
}

/// Identity on `R^n`.
pub struct IdentityOperator {
    n: usize,
}

impl IdentityOperator {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl LinearOperator for IdentityOperator {
    fn nrows(&self) -> usize {
        self.n
    }

    fn ncols(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        check_apply(self, x);
        x.clone()
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        check_adjoint(self, y);
        y.clone()
    }
}

/// Diagonal operator with strictly positive entries, invertible by
/// construction. Used for the iteratively reweighted preconditioners.
#[derive(Clone, Debug)]
pub struct DiagonalOperator {
    diag: DVector<f64>,
}

impl DiagonalOperator {
    pub fn new(diag: DVector<f64>) -> Result<Self> {
        for (index, &value) in diag.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveDiagonal { index, value });
            }
        }
        Ok(Self { diag })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            diag: DVector::from_element(n, 1.0),
        }
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.len() == 0
    }

    /// Elementwise reciprocal; `apply ∘ inverse().apply` is the identity.
    pub fn inverse(&self) -> DiagonalOperator {
        DiagonalOperator {
            diag: self.diag.map(|d| 1.0 / d),
        }
    }

    pub fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        self.diag.component_mul(x)
    }
}

impl LinearOperator for DiagonalOperator {
    fn nrows(&self) -> usize {
        self.diag.len()
    }

    fn ncols(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        check_apply(self, x);
        self.apply_vec(x)
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        check_adjoint(self, y);
        self.apply_vec(y)
    }
}

/// Formal adjoint of an operator (swaps `apply` and `apply_adjoint`).
pub struct AdjointOperator {
    inner: OpRef,
}

impl AdjointOperator {
    pub fn new(inner: OpRef) -> Self {
        Self { inner }
    }
}

impl LinearOperator for AdjointOperator {
    fn nrows(&self) -> usize {
        self.inner.ncols()
    }

    fn ncols(&self) -> usize {
        self.inner.nrows()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.apply_adjoint(x)
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.inner.apply(y)
    }
}

/// Right-to-left composition: `compose([A, B]).apply(x) == A (B x)`.
pub struct ComposedOperator {
    ops: Vec<OpRef>,
}

/// Composes operators applied right-to-left, checking adjacent dimensions.
pub fn compose(ops: Vec<OpRef>) -> Result<ComposedOperator> {
    if ops.is_empty() {
        return Err(Error::Config("compose requires at least one operator".into()));
    }
    for i in 0..ops.len() - 1 {
        let left = &ops[i];
        let right = &ops[i + 1];
        if left.ncols() != right.nrows() {
            return Err(Error::ComposeDims {
                left_index: i,
                left_rows: left.nrows(),
                left_cols: left.ncols(),
                right_index: i + 1,
                right_rows: right.nrows(),
                right_cols: right.ncols(),
            });
        }
    }
    Ok(ComposedOperator { ops })
}

impl LinearOperator for ComposedOperator {
    fn nrows(&self) -> usize {
        self.ops.first().unwrap().nrows()
    }

    fn ncols(&self) -> usize {
        self.ops.last().unwrap().ncols()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        check_apply(self, x);
        let mut v = x.clone();
        for op in self.ops.iter().rev() {
            v = op.apply(&v);
        }
        v
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        check_adjoint(self, y);
        let mut v = y.clone();
        for op in self.ops.iter() {
            v = op.apply_adjoint(&v);
        }
        v
    }
}

/// Vertical stack `[top; bottom]`; the adjoint sums the two blocks.
pub struct VStackOperator {
    top: OpRef,
    bottom: OpRef,
}

impl VStackOperator {
    pub fn new(top: OpRef, bottom: OpRef) -> Result<Self> {
        if top.ncols() != bottom.ncols() {
            return Err(Error::Config(format!(
                "vstack column mismatch: {} vs {}",
                top.ncols(),
                bottom.ncols()
            )));
        }
        Ok(Self { top, bottom })
    }
}

impl LinearOperator for VStackOperator {
    fn nrows(&self) -> usize {
        self.top.nrows() + self.bottom.nrows()
    }

    fn ncols(&self) -> usize {
        self.top.ncols()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        check_apply(self, x);
        let a = self.top.apply(x);
        let b = self.bottom.apply(x);
        let mut out = DVector::zeros(a.len() + b.len());
        out.rows_mut(0, a.len()).copy_from(&a);
        out.rows_mut(a.len(), b.len()).copy_from(&b);
        out
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        check_adjoint(self, y);
        let mt = self.top.nrows();
        let top = DVector::from(y.rows(0, mt).clone_owned());
        let bot = DVector::from(y.rows(mt, self.bottom.nrows()).clone_owned());
        self.top.apply_adjoint(&top) + self.bottom.apply_adjoint(&bot)
    }
}

/// `H = Psi_tilde A Psi'`, the operator of the transformed problem.
///
/// With `psi_tilde = None` the data-side transform is the identity, which is
/// the natural choice for Golub-Kahan solvers since `H'H = Psi A'A Psi'` and
/// `H'd = Psi A'b` do not depend on it.
pub struct TransformedOperator {
    a: OpRef,
    psi: Arc<dyn OrthonormalTransform>,
    psi_tilde: Option<Arc<dyn OrthonormalTransform>>,
}

/// Builds `H = Psi_tilde A Psi'` with `Psi` acting on solution space.
pub fn conjugate_by_transform(
    a: OpRef,
    psi: Arc<dyn OrthonormalTransform>,
    psi_tilde: Option<Arc<dyn OrthonormalTransform>>,
) -> Result<TransformedOperator> {
    if psi.ncols() != a.ncols() {
        return Err(Error::TransformDims {
            transform_len: psi.ncols(),
            operator_dim: a.ncols(),
        });
    }
    if let Some(pt) = &psi_tilde {
        if pt.ncols() != a.nrows() {
            return Err(Error::TransformDims {
                transform_len: pt.ncols(),
                operator_dim: a.nrows(),
            });
        }
    }
    Ok(TransformedOperator { a, psi, psi_tilde })
}

impl LinearOperator for TransformedOperator {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }

    fn ncols(&self) -> usize {
        self.a.ncols()
    }

    fn apply(&self, s: &DVector<f64>) -> DVector<f64> {
        check_apply(self, s);
        let x = self.psi.apply_adjoint(s);
        let ax = self.a.apply(&x);
        match &self.psi_tilde {
            Some(pt) => pt.apply(&ax),
            None => ax,
        }
    }

    fn apply_adjoint(&self, d: &DVector<f64>) -> DVector<f64> {
        check_adjoint(self, d);
        let y = match &self.psi_tilde {
            Some(pt) => pt.apply_adjoint(d),
            None => d.clone(),
        };
        let aty = self.a.apply_adjoint(&y);
        self.psi.apply(&aty)
    }
}

/// Wrapper counting forward and adjoint applications, for cost accounting.
pub struct CountingOperator {
    inner: OpRef,
    applies: AtomicUsize,
    adjoint_applies: AtomicUsize,
}

impl CountingOperator {
    pub fn new(inner: OpRef) -> Self {
        Self {
            inner,
            applies: AtomicUsize::new(0),
            adjoint_applies: AtomicUsize::new(0),
        }
    }

    pub fn applies(&self) -> usize {
        self.applies.load(Ordering::Relaxed)
    }

    pub fn adjoint_applies(&self) -> usize {
        self.adjoint_applies.load(Ordering::Relaxed)
    }

    /// Forward plus adjoint applications.
    pub fn total(&self) -> usize {
        self.applies() + self.adjoint_applies()
    }
}

impl LinearOperator for CountingOperator {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.applies.fetch_add(1, Ordering::Relaxed);
        self.inner.apply(x)
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.adjoint_applies.fetch_add(1, Ordering::Relaxed);
        self.inner.apply_adjoint(y)
    }
}

/// Estimates the spectral norm by power iteration on `A'A` from a seeded
/// random start; 30 iterations is plenty for the stepsize and tolerance uses
/// in this crate.
pub fn estimate_spectral_norm(op: &dyn LinearOperator, iters: usize, seed: u64) -> f64 {
    let mut v = rng::standard_normal(&mut rng::from_seed(seed), op.ncols());
    let mut nrm = v.norm();
    if nrm == 0.0 {
        return 0.0;
    }
    v /= nrm;
    let mut sigma_sq = 0.0;
    for _ in 0..iters {
        let w = op.apply_adjoint(&op.apply(&v));
        nrm = w.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        sigma_sq = nrm;
        v = w / nrm;
    }
    sigma_sq.sqrt()
}

/// Max over `trials` random pairs of `|<Av,u> - <v,A'u>| / (|u||v| sigma)`,
/// with `sigma` a power-iteration estimate of the operator norm.
pub fn adjoint_consistency_defect(op: &dyn LinearOperator, trials: usize, seed: u64) -> f64 {
    let sigma = estimate_spectral_norm(op, 30, seed ^ 0x5eed).max(f64::MIN_POSITIVE);
    let mut r = rng::from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let v = rng::standard_normal(&mut r, op.ncols());
        let u = rng::standard_normal(&mut r, op.nrows());
        let lhs = op.apply(&v).dot(&u);
        let rhs = v.dot(&op.apply_adjoint(&u));
        worst = worst.max((lhs - rhs).abs() / (u.norm() * v.norm() * sigma));
    }
    worst
}

/// Materializes a small operator column by column. Test and debug helper.
pub fn to_dense(op: &dyn LinearOperator) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(op.nrows(), op.ncols());
    for j in 0..op.ncols() {
        let mut e = DVector::zeros(op.ncols());
        e[j] = 1.0;
        out.set_column(j, &op.apply(&e));
    }
    out
}
