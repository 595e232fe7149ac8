//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Incremental Levinson-Durbin recursion for a symmetric Toeplitz matrix
/// with first column `[r0, r(1), r(2), ...]`.
///
/// After `m` steps, `error()` is the order-`m` one-step prediction error and
/// `coeffs()` are the predictor taps for lags `1..=m`.
#[derive(Debug, Clone)]
pub struct Durbin {
    r0: f64,
    lags: Vec<f64>,
    phi: Vec<f64>,
    scratch: Vec<f64>,
    error: f64,
    reduction: f64,
}

impl Durbin {
    pub fn new(r0: f64) -> Self {
        Self {
            r0,
            lags: Vec::new(),
            phi: Vec::new(),
            scratch: Vec::new(),
            error: r0,
            reduction: 0.0,
        }
    }

    pub fn order(&self) -> usize {
        self.phi.len()
    }

    pub fn error(&self) -> f64 {
        self.error
    }

    /// Accumulated `Σ κ_j² E_{j-1}`, equal to `r0 - error()` without the
    /// cancellation of the direct difference.
    pub fn reduction(&self) -> f64 {
        self.reduction
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.phi
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// Extends the order by one with the next autocovariance `r(m)` and
    /// returns the reflection coefficient.
    pub fn push(&mut self, r_m: f64) -> f64 {
        let m = self.phi.len();
        self.lags.push(r_m);
        let mut acc = r_m;
        for j in 0..m {
            acc -= self.phi[j] * self.lags[m - 1 - j];
        }
        let kappa = acc / self.error;
        self.scratch.clear();
        self.scratch.extend_from_slice(&self.phi);
        for j in 0..m {
            self.phi[j] = self.scratch[j] - kappa * self.scratch[m - 1 - j];
        }
        self.phi.push(kappa);
        self.reduction += kappa * kappa * self.error;
        self.error *= 1.0 - kappa * kappa;
        kappa
    }
}

/// Cholesky factorisation of a symmetric matrix, retrying once with a
/// `1e-12` diagonal jitter when rounding breaks positive definiteness.
pub fn cholesky_with_jitter(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Some(ch);
    }
    let n = m.nrows();
    let mut jittered = m;
    for i in 0..n {
        jittered[(i, i)] += 1e-12;
    }
    Cholesky::new(jittered)
}

/// `v† A⁻¹ v` through a Cholesky solve.
pub fn quad_form_inv(ch: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> f64 {
    let x = ch.solve(v);
    v.dot(&x)
}
