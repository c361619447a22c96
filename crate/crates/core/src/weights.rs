//! Iteratively reweighted diagonal operators.
//!
//! For the penalty `||x||_p^p` the reweighting uses
//! `L(x) = diag(f_tau(|x_i|)^{(p-2)/2})`, where `f_tau(t) = t` when
//! `t >= tau1` and `tau2` otherwise. With `p = 1` this approximates the
//! one-norm by a weighted two-norm; choosing `tau2 < tau1` pushes
//! below-threshold entries further toward zero.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::linop::DiagonalOperator;

/// How the main threshold `tau1` is resolved for a given vector.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Absolute(f64),
    /// `tau1 = max(factor * ||x||_inf, floor)`.
    RelativeToMax { factor: f64, floor: f64 },
}

/// How `tau2` is resolved; it is clamped to `tau1` so that `tau2 <= tau1`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tau2 {
    Absolute(f64),
    RelativeToTau1(f64),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WeightPolicy {
    pub p: f64,
    pub tau1: Threshold,
    pub tau2: Tau2,
}

impl WeightPolicy {
    /// Sparsity-promoting defaults for `p = 1`.
    pub fn l1() -> Self {
        Self {
            p: 1.0,
            tau1: Threshold::RelativeToMax {
                factor: 1e-4,
                floor: 1e-10,
            },
            tau2: Tau2::Absolute(1e-10),
        }
    }

    /// `p = 2` produces identity weights.
    pub fn identity() -> Self {
        Self {
            p: 2.0,
            ..Self::l1()
        }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn is_valid(&self) -> bool {
        let t1_ok = match self.tau1 {
            Threshold::Absolute(v) => v > 0.0,
            Threshold::RelativeToMax { factor, floor } => factor > 0.0 && floor > 0.0,
        };
        let t2_ok = match self.tau2 {
            Tau2::Absolute(v) => v > 0.0,
            Tau2::RelativeToTau1(r) => r > 0.0,
        };
        self.p >= 1.0 && t1_ok && t2_ok
    }

    fn resolve(&self, x: &DVector<f64>) -> (f64, f64) {
        let tau1 = match self.tau1 {
            Threshold::Absolute(v) => v,
            Threshold::RelativeToMax { factor, floor } => {
                let max_abs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                (factor * max_abs).max(floor)
            }
        };
        let tau2 = match self.tau2 {
            Tau2::Absolute(v) => v,
            Tau2::RelativeToTau1(r) => r * tau1,
        };
        (tau1, tau2.min(tau1))
    }
}

/// Builds the weight operator `L` and its inverse from the current iterate.
///
/// Thresholding keeps every diagonal entry finite and strictly positive, so
/// both operators always exist.
pub fn build_weights(x: &DVector<f64>, policy: &WeightPolicy) -> (DiagonalOperator, DiagonalOperator) {
    let (tau1, tau2) = policy.resolve(x);
    let expo = (policy.p - 2.0) / 2.0;
    let diag = x.map(|v| {
        let t = v.abs();
        let ft = if t >= tau1 { t } else { tau2 };
        if expo == 0.0 {
            1.0
        } else {
            ft.powf(expo)
        }
    });
    let l = DiagonalOperator::new(diag).expect("thresholded weights are positive");
    let l_inv = l.inverse();
    (l, l_inv)
}
