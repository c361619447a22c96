//! Dense textbook reference implementations used as independent oracles in
//! the test suites: Golub-Kahan bidiagonalization, LSQR/LSMR/GMRES defined
//! straight from their minimization characterizations, a plain Arnoldi
//! process, ISTA, and seeded random data helpers.
//!
//! Everything here works on explicit `nalgebra` matrices and never calls
//! into the production solver paths.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via Box-Muller.
pub fn randn(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    let mut out = DVector::zeros(len);
    let mut i = 0;
    while i < len {
        let u1 = loop {
            let u = unit_f64(rng);
            if u > 0.0 {
                break u;
            }
        };
        let u2 = unit_f64(rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let a = 2.0 * std::f64::consts::PI * u2;
        out[i] = r * a.cos();
        i += 1;
        if i < len {
            out[i] = r * a.sin();
            i += 1;
        }
    }
    out
}

pub fn randn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let data = randn(rng, rows * cols);
    DMatrix::from_column_slice(rows, cols, data.as_slice())
}

/// Uniform positive diagonal in `[lo, hi]`.
pub fn random_positive_diag(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| lo + (hi - lo) * unit_f64(rng))
}

/// Minimum-norm least squares via SVD.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-14)
        .expect("svd solve")
}

fn reorthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (j, q) in basis.iter().enumerate() {
            let c = q.dot(w);
            w.axpy(-c, q, 1.0);
            coeffs[j] += c;
        }
    }
    coeffs
}

/// Textbook Golub-Kahan bidiagonalization with full reorthogonalization.
pub struct Gkb {
    /// m x (k+1)
    pub u: Vec<DVector<f64>>,
    /// n x k
    pub v: Vec<DVector<f64>>,
    /// diagonal entries alpha_1..alpha_k
    pub alphas: Vec<f64>,
    /// subdiagonal entries beta_2..beta_{k+1} (beta_1 = ||b|| separate)
    pub betas: Vec<f64>,
    pub beta1: f64,
}

pub fn gkb(a: &DMatrix<f64>, b: &DVector<f64>, k: usize) -> Gkb {
    let beta1 = b.norm();
    let mut u = vec![b / beta1];
    let mut v: Vec<DVector<f64>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    for i in 0..k {
        let mut w = a.transpose() * &u[i];
        reorthogonalize(&mut w, &v);
        let alpha = w.norm();
        if alpha == 0.0 {
            break;
        }
        v.push(w / alpha);
        alphas.push(alpha);
        let mut w = a * &v[i];
        reorthogonalize(&mut w, &u);
        let beta = w.norm();
        if beta == 0.0 {
            betas.push(0.0);
            break;
        }
        u.push(w / beta);
        betas.push(beta);
    }
    Gkb {
        u,
        v,
        alphas,
        betas,
        beta1,
    }
}

impl Gkb {
    /// Lower bidiagonal `(k+1) x k` factor.
    pub fn bidiagonal(&self) -> DMatrix<f64> {
        let k = self.alphas.len();
        let mut m = DMatrix::zeros(k + 1, k);
        for i in 0..k {
            m[(i, i)] = self.alphas[i];
            if i < self.betas.len() {
                m[(i + 1, i)] = self.betas[i];
            }
        }
        m
    }

    pub fn v_matrix(&self) -> DMatrix<f64> {
        columns(&self.v)
    }
}

fn columns(cols: &[DVector<f64>]) -> DMatrix<f64> {
    let n = cols.first().map_or(0, |c| c.len());
    let mut m = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// LSQR iterates from the definition: `x_j` minimizes `||A x - b||` over the
/// Krylov subspace spanned by the GKB `v` columns.
pub fn lsqr_iterates(a: &DMatrix<f64>, b: &DVector<f64>, k: usize) -> Vec<DVector<f64>> {
    let dec = gkb(a, b, k);
    let bd = dec.bidiagonal();
    let mut out = Vec::new();
    for j in 1..=dec.alphas.len() {
        let mj = bd.view((0, 0), (j + 1, j)).clone_owned();
        let mut rhs = DVector::zeros(j + 1);
        rhs[0] = dec.beta1;
        let y = lstsq(&mj, &rhs);
        let vj = columns(&dec.v[..j]);
        out.push(vj * y);
    }
    out
}

/// LSMR iterates from the definition: `x_j` minimizes `||A'(A x - b)||` over
/// the same Krylov subspace.
pub fn lsmr_iterates(a: &DMatrix<f64>, b: &DVector<f64>, k: usize) -> Vec<DVector<f64>> {
    let dec = gkb(a, b, k);
    let ata = a.transpose() * a;
    let atb = a.transpose() * b;
    let mut out = Vec::new();
    for j in 1..=dec.alphas.len() {
        let vj = columns(&dec.v[..j]);
        let g = &ata * &vj;
        let y = lstsq(&g, &atb);
        out.push(vj * y);
    }
    out
}

/// Textbook Arnoldi with full reorthogonalization: `A V_k = V_{k+1} H_k`.
pub struct Arnoldi {
    pub v: Vec<DVector<f64>>,
    /// (k+1) x k upper Hessenberg
    pub h: DMatrix<f64>,
    pub beta: f64,
}

pub fn arnoldi(a: &DMatrix<f64>, b: &DVector<f64>, k: usize) -> Arnoldi {
    let beta = b.norm();
    let mut v = vec![b / beta];
    let mut h = DMatrix::zeros(k + 1, k);
    let mut cols = 0;
    for j in 0..k {
        let mut w = a * &v[j];
        let coeffs = reorthogonalize(&mut w, &v);
        for (i, c) in coeffs.iter().enumerate() {
            h[(i, j)] = *c;
        }
        let nrm = w.norm();
        h[(j + 1, j)] = nrm;
        cols = j + 1;
        if nrm < 1e-14 {
            break;
        }
        v.push(w / nrm);
    }
    Arnoldi {
        v,
        h: h.view((0, 0), (cols + 1, cols)).clone_owned(),
        beta,
    }
}

/// GMRES iterates from the definition: `x_j` minimizes `||A x - b||` over
/// the Krylov subspace spanned by the Arnoldi `v` columns.
pub fn gmres_iterates(a: &DMatrix<f64>, b: &DVector<f64>, k: usize) -> Vec<DVector<f64>> {
    let dec = arnoldi(a, b, k);
    let mut out = Vec::new();
    for j in 1..=dec.h.ncols() {
        let hj = dec.h.view((0, 0), (j + 1, j)).clone_owned();
        let mut rhs = DVector::zeros(j + 1);
        rhs[0] = dec.beta;
        let y = lstsq(&hj, &rhs);
        let vj = columns(&dec.v[..j]);
        out.push(vj * y);
    }
    out
}

/// Plain ISTA on `min 1/2 ||A x - b||^2 + lambda ||x||_1`; the long-run
/// reference for FISTA's objective.
pub fn ista(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda: f64,
    step: f64,
    iters: usize,
) -> DVector<f64> {
    let mut x = DVector::zeros(a.ncols());
    for _ in 0..iters {
        let grad = a.transpose() * (a * &x - b);
        x = &x - &grad * step;
        x.apply(|v| {
            let t = lambda * step;
            *v = v.signum() * (v.abs() - t).max(0.0)
        });
    }
    x
}

/// Orthonormal basis of the column space (thin QR with column filtering).
pub fn column_space_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..m.ncols() {
        let mut w = m.column(j).clone_owned();
        let scale = w.norm();
        reorthogonalize(&mut w, &basis);
        if w.norm() > 1e-12 * scale.max(1.0) {
            let n = w.norm();
            basis.push(w / n);
        }
    }
    columns(&basis)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gkb_factorization_holds() {
        let mut r = seeded(1);
        let a = randn_matrix(&mut r, 12, 8);
        let b = randn(&mut r, 12);
        let dec = gkb(&a, &b, 6);
        let u = columns(&dec.u);
        let v = dec.v_matrix();
        let bd = dec.bidiagonal();
        assert!((&a * &v - &u * &bd).norm() <= 1e-12 * a.norm());
        assert!((u.transpose() * &u - DMatrix::identity(7, 7)).norm() <= 1e-12);
    }

    #[test]
    fn gmres_solves_small_system() {
        let mut r = seeded(2);
        let a = randn_matrix(&mut r, 6, 6) + DMatrix::identity(6, 6) * 6.0;
        let b = randn(&mut r, 6);
        let xs = gmres_iterates(&a, &b, 6);
        let x = xs.last().unwrap();
        assert!((a * x - &b).norm() <= 1e-9 * b.norm());
    }

    #[test]
    fn lsqr_final_iterate_solves_least_squares() {
        let mut r = seeded(3);
        let a = randn_matrix(&mut r, 10, 4);
        let b = randn(&mut r, 10);
        let xs = lsqr_iterates(&a, &b, 4);
        let direct = lstsq(&a, &b);
        assert!((xs.last().unwrap() - &direct).norm() <= 1e-9 * direct.norm());
    }
}
