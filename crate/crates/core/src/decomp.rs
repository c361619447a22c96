//! Flexible Golub-Kahan and flexible Arnoldi processes.
//!
//! Both grow one column per call with a caller-supplied, iteration-dependent
//! diagonal preconditioner. The flexible Golub-Kahan (FGK) process maintains
//!
//! ```text
//! A Z_k = U_{k+1} M_k        A' U_{k+1} = V_{k+1} T_{k+1}
//! ```
//!
//! with `U`, `V` orthonormal, `M_k` upper Hessenberg, `T_{k+1}` upper
//! triangular, and `Z_k = [L_1^{-1} v_1, ..., L_k^{-1} v_k]` the flexible
//! solution basis. Orthogonalization is modified Gram-Schmidt with one full
//! reorthogonalization pass, which is what keeps the 1e-10 orthonormality
//! contract in floating point.
//!
//! Expanding costs exactly one product with `A` and one with `A'`. The
//! triangular factor's column `k+1` belongs to the first half of iteration
//! `k+1`; [`FgkState::peek_t_column`] computes it eagerly (one extra adjoint
//! product, reused by the next expansion) so that normal-equation residuals
//! `||A'(A Z_k y - b)|| = ||T_{k+1} (M_k y - beta_1 e_1)||` are available at
//! step `k`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linop::{DiagonalOperator, LinearOperator};

/// Relative breakdown tolerance: a new diagonal entry below
/// `BREAKDOWN_RTOL * scale` is treated as zero, where `scale` tracks the
/// largest coefficient produced so far (a running operator-norm proxy).
pub const BREAKDOWN_RTOL: f64 = 1e-14;

/// Outcome of one expansion step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expansion {
    /// A new basis column was added and the process can continue.
    Advanced,
    /// `A' u_k` lies in the span of the existing `v` columns (`t_kk ~ 0`);
    /// no new direction exists and the state is unchanged.
    StalledAdjoint,
    /// `A z_k` lies in the span of the existing `u` columns
    /// (`m_{k+1,k} ~ 0`); the new column was added and the current subspace
    /// contains the least-squares solution.
    HappyBreakdown,
}

impl Expansion {
    pub fn is_breakdown(&self) -> bool {
        !matches!(self, Expansion::Advanced)
    }
}

/// Modified Gram-Schmidt with one full reorthogonalization pass.
/// Accumulates projection coefficients onto `basis` into `coeffs`.
pub(crate) fn orthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>], coeffs: &mut [f64]) {
    for _ in 0..2 {
        for (j, q) in basis.iter().enumerate() {
            let c = q.dot(w);
            w.axpy(-c, q, 1.0);
            coeffs[j] += c;
        }
    }
}

/// Growing flexible Golub-Kahan factorization.
pub struct FgkState {
    u: Vec<DVector<f64>>,
    v: Vec<DVector<f64>>,
    z: Vec<DVector<f64>>,
    /// Column `i` holds `m_{1..i+1, i}` (i+1 entries including the subdiagonal).
    m_cols: Vec<Vec<f64>>,
    /// Column `j` holds `t_{1..j, j}` (j entries; upper triangular).
    t_cols: Vec<Vec<f64>>,
    pending_v: Option<DVector<f64>>,
    beta1: f64,
    scale: f64,
    k: usize,
}

/// Initializes the process with `u_1 = b / ||b||`.
pub fn fgk_init(a: &dyn LinearOperator, b: &DVector<f64>) -> Result<FgkState> {
    assert_eq!(b.len(), a.nrows(), "rhs length must match operator rows");
    let beta1 = b.norm();
    if beta1 == 0.0 {
        return Err(Error::ZeroRhs);
    }
    Ok(FgkState {
        u: vec![b / beta1],
        v: Vec::new(),
        z: Vec::new(),
        m_cols: Vec::new(),
        t_cols: Vec::new(),
        pending_v: None,
        beta1,
        scale: 0.0,
        k: 0,
    })
}

impl FgkState {
    /// Number of completed expansions (columns of `Z`).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    /// First diagonal entry of `T` (available after the first expansion).
    pub fn t11(&self) -> f64 {
        self.t_cols[0][0]
    }

    fn tol(&self) -> f64 {
        BREAKDOWN_RTOL * self.scale
    }

    /// Computes the next column of `T` (the first half of iteration `k+1`)
    /// if it is not already available. One adjoint product, cached for the
    /// next expansion.
    pub fn peek_t_column(&mut self, a: &dyn LinearOperator) {
        if self.t_cols.len() > self.k {
            return; // already peeked for this k
        }
        debug_assert_eq!(self.t_cols.len(), self.k);
        if self.u.len() <= self.k {
            return; // happy breakdown: u_{k+1} does not exist
        }
        let mut w = a.apply_adjoint(&self.u[self.k]);
        let mut col = vec![0.0; self.v.len() + 1];
        orthogonalize(&mut w, &self.v, &mut col[..self.v.len()]);
        let tkk = w.norm();
        col[self.v.len()] = tkk;
        for &c in &col {
            self.scale = self.scale.max(c.abs());
        }
        self.pending_v = if tkk > self.tol() { Some(w / tkk) } else { None };
        self.t_cols.push(col);
    }

    /// Appends `v_{k+1}`, `z_{k+1} = L^{-1} v_{k+1}`, `u_{k+2}` and the
    /// corresponding columns of `T` and `M`.
    pub fn expand(
        &mut self,
        a: &dyn LinearOperator,
        l_inverse: &DiagonalOperator,
    ) -> Result<Expansion> {
        assert_eq!(
            l_inverse.len(),
            a.ncols(),
            "preconditioner must act on solution space"
        );
        self.peek_t_column(a);
        let v_new = match self.pending_v.take() {
            Some(v) => v,
            None => return Ok(Expansion::StalledAdjoint),
        };
        let z_new = l_inverse.apply_vec(&v_new);
        self.v.push(v_new);
        self.z.push(z_new);

        let mut w = a.apply(self.z.last().unwrap());
        let mut col = vec![0.0; self.u.len() + 1];
        orthogonalize(&mut w, &self.u, &mut col[..self.u.len()]);
        let m_next = w.norm();
        col[self.u.len()] = m_next;
        for &c in &col {
            self.scale = self.scale.max(c.abs());
        }
        if !m_next.is_finite() {
            return Err(Error::NonFinite {
                context: "flexible Golub-Kahan expansion",
                iteration: self.k + 1,
            });
        }
        self.m_cols.push(col);
        self.k += 1;
        if m_next > self.tol() {
            self.u.push(w / m_next);
            Ok(Expansion::Advanced)
        } else {
            Ok(Expansion::HappyBreakdown)
        }
    }

    /// The upper Hessenberg factor `M_k`, sized `(k+1) x k` (last row zero
    /// after a happy breakdown).
    pub fn m_matrix(&self) -> DMatrix<f64> {
        let k = self.k;
        let mut m = DMatrix::zeros(k + 1, k);
        for (i, col) in self.m_cols.iter().enumerate() {
            for (r, &val) in col.iter().enumerate() {
                m[(r, i)] = val;
            }
        }
        m
    }

    /// The upper triangular factor with every column computed so far
    /// (`(k+1) x (k+1)` after [`Self::peek_t_column`], `k x k` otherwise).
    pub fn t_matrix(&self) -> DMatrix<f64> {
        let r = self.t_cols.len();
        let mut t = DMatrix::zeros(r, r);
        for (j, col) in self.t_cols.iter().enumerate() {
            for (i, &val) in col.iter().enumerate() {
                t[(i, j)] = val;
            }
        }
        t
    }

    pub fn z_columns(&self) -> &[DVector<f64>] {
        &self.z
    }

    /// `x = Z_k y`.
    pub fn solution(&self, y: &DVector<f64>) -> DVector<f64> {
        assert_eq!(y.len(), self.k);
        let n = self.z[0].len();
        let mut x = DVector::zeros(n);
        for (zi, &yi) in self.z.iter().zip(y.iter()) {
            x.axpy(yi, zi, 1.0);
        }
        x
    }

    pub fn u_matrix(&self) -> DMatrix<f64> {
        columns_to_matrix(&self.u)
    }

    /// All `v` columns computed so far, including a peeked one.
    pub fn v_matrix(&self) -> DMatrix<f64> {
        let mut cols: Vec<DVector<f64>> = self.v.clone();
        if let Some(p) = &self.pending_v {
            cols.push(p.clone());
        }
        columns_to_matrix(&cols)
    }

    pub fn z_matrix(&self) -> DMatrix<f64> {
        columns_to_matrix(&self.z)
    }
}

fn columns_to_matrix(cols: &[DVector<f64>]) -> DMatrix<f64> {
    let n = cols.first().map_or(0, |c| c.len());
    let mut m = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Growing flexible Arnoldi factorization `A Z_k = V_{k+1} H_k` for square
/// operators, with `Z_k = [L_1^{-1} v_1, ..., L_k^{-1} v_k]`.
pub struct ArnoldiState {
    v: Vec<DVector<f64>>,
    z: Vec<DVector<f64>>,
    /// Column `i` holds `h_{1..i+1, i}`.
    h_cols: Vec<Vec<f64>>,
    r0_norm: f64,
    scale: f64,
    k: usize,
}

/// Initializes with `v_1 = b / ||b||` (zero initial guess).
pub fn flex_arnoldi_init(a: &dyn LinearOperator, b: &DVector<f64>) -> Result<ArnoldiState> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            method: "flexible Arnoldi",
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    assert_eq!(b.len(), a.nrows(), "rhs length must match operator rows");
    let r0_norm = b.norm();
    if r0_norm == 0.0 {
        return Err(Error::ZeroRhs);
    }
    Ok(ArnoldiState {
        v: vec![b / r0_norm],
        z: Vec::new(),
        h_cols: Vec::new(),
        r0_norm,
        scale: 0.0,
        k: 0,
    })
}

impl ArnoldiState {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r0_norm(&self) -> f64 {
        self.r0_norm
    }

    /// One flexible Arnoldi step: `z_k = L_k^{-1} v_k`, then `A z_k` is
    /// orthogonalized against `v_1..v_k`. One product with `A`.
    pub fn expand(
        &mut self,
        a: &dyn LinearOperator,
        l_inverse: &DiagonalOperator,
    ) -> Result<Expansion> {
        assert_eq!(
            l_inverse.len(),
            a.ncols(),
            "preconditioner must act on solution space"
        );
        let z_new = l_inverse.apply_vec(&self.v[self.k]);
        let mut w = a.apply(&z_new);
        self.z.push(z_new);
        let mut col = vec![0.0; self.v.len() + 1];
        orthogonalize(&mut w, &self.v, &mut col[..self.v.len()]);
        let h_next = w.norm();
        col[self.v.len()] = h_next;
        for &c in &col {
            self.scale = self.scale.max(c.abs());
        }
        if !h_next.is_finite() {
            return Err(Error::NonFinite {
                context: "flexible Arnoldi expansion",
                iteration: self.k + 1,
            });
        }
        self.h_cols.push(col);
        self.k += 1;
        if h_next > BREAKDOWN_RTOL * self.scale {
            self.v.push(w / h_next);
            Ok(Expansion::Advanced)
        } else {
            Ok(Expansion::HappyBreakdown)
        }
    }

    /// The upper Hessenberg factor `H_k`, sized `(k+1) x k`.
    pub fn h_matrix(&self) -> DMatrix<f64> {
        let k = self.k;
        let mut h = DMatrix::zeros(k + 1, k);
        for (i, col) in self.h_cols.iter().enumerate() {
            for (r, &val) in col.iter().enumerate() {
                h[(r, i)] = val;
            }
        }
        h
    }

    pub fn z_columns(&self) -> &[DVector<f64>] {
        &self.z
    }

    pub fn solution(&self, y: &DVector<f64>) -> DVector<f64> {
        assert_eq!(y.len(), self.k);
        let n = self.z[0].len();
        let mut x = DVector::zeros(n);
        for (zi, &yi) in self.z.iter().zip(y.iter()) {
            x.axpy(yi, zi, 1.0);
        }
        x
    }

    pub fn v_matrix(&self) -> DMatrix<f64> {
        columns_to_matrix(&self.v)
    }

    pub fn z_matrix(&self) -> DMatrix<f64> {
        columns_to_matrix(&self.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::IdentityOperator;

    #[test]
    fn init_normalizes() {
        let a = IdentityOperator::new(2);
        let st = fgk_init(&a, &DVector::from_row_slice(&[3.0, 4.0])).unwrap();
        assert!((st.beta1() - 5.0).abs() <= 1e-15);
        assert!((st.u[0][0] - 0.6).abs() <= 1e-15);
        assert!((st.u[0][1] - 0.8).abs() <= 1e-15);
    }

    #[test]
    fn init_rejects_zero_rhs() {
        let a = IdentityOperator::new(3);
        assert!(matches!(
            fgk_init(&a, &DVector::zeros(3)),
            Err(Error::ZeroRhs)
        ));
    }

    #[test]
    fn init_unit_norm_random() {
        let a = IdentityOperator::new(100);
        let b = crate::rng::standard_normal(&mut crate::rng::from_seed(5), 100);
        let st = fgk_init(&a, &b).unwrap();
        assert!((st.u[0].norm() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn identity_system_happy_breakdown() {
        // A = I_2, b = e_1: v_1 = e_1, z_1 = e_1, m_11 = 1, m_21 = 0.
        let a = IdentityOperator::new(2);
        let b = DVector::from_row_slice(&[1.0, 0.0]);
        let mut st = fgk_init(&a, &b).unwrap();
        let li = DiagonalOperator::identity(2);
        let out = st.expand(&a, &li).unwrap();
        assert_eq!(out, Expansion::HappyBreakdown);
        assert_eq!(st.k(), 1);
        let m = st.m_matrix();
        assert!((m[(0, 0)] - 1.0).abs() <= 1e-15);
        assert!(m[(1, 0)].abs() <= 1e-15);
        // exact solution in span{z_1}
        assert!((st.z_columns()[0][0] - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn arnoldi_identity_happy_breakdown() {
        let a = IdentityOperator::new(4);
        let b = crate::rng::standard_normal(&mut crate::rng::from_seed(2), 4);
        let mut st = flex_arnoldi_init(&a, &b).unwrap();
        let li = DiagonalOperator::identity(4);
        let out = st.expand(&a, &li).unwrap();
        assert_eq!(out, Expansion::HappyBreakdown);
        let h = st.h_matrix();
        assert!((h[(0, 0)] - 1.0).abs() <= 1e-14);
        assert!(h[(1, 0)].abs() <= 1e-14);
    }

    #[test]
    fn arnoldi_rejects_rectangular() {
        let a = crate::linop::DenseOperator::new(DMatrix::zeros(3, 2));
        assert!(flex_arnoldi_init(&a, &DVector::zeros(3)).is_err());
    }
}
