//! Gaussian quadrature rules and the expectations over Rayleigh/Rician
//! fading variables used by the bounds.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of an n-point Gaussian rule.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Family {
    Legendre,
    Laguerre,
    Hermite,
}

impl Family {
    fn alpha(self, k: usize) -> f64 {
        match self {
            Family::Legendre | Family::Hermite => 0.0,
            Family::Laguerre => (2 * k + 1) as f64,
        }
    }

    // beta_k for k >= 1
    fn beta(self, k: usize) -> f64 {
        let kf = k as f64;
        match self {
            Family::Legendre => kf * kf / (4.0 * kf * kf - 1.0),
            Family::Laguerre => kf * kf,
            Family::Hermite => 0.5 * kf,
        }
    }

    fn mu0(self) -> f64 {
        match self {
            Family::Legendre => 2.0,
            Family::Laguerre => 1.0,
            Family::Hermite => PI.sqrt(),
        }
    }
}

// Golub-Welsch nodes; weights from the Christoffel function of the
// orthonormal recurrence, which keeps small tail weights accurate.
fn build(family: Family, n: usize) -> GaussRule {
    assert!(n >= 1);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        jac[(k, k)] = family.alpha(k);
        if k + 1 < n {
            let b = family.beta(k + 1).sqrt();
            jac[(k, k + 1)] = b;
            jac[(k + 1, k)] = b;
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let weights = nodes
        .iter()
        .map(|&x| {
            let mut p_prev = 0.0;
            let mut p = 1.0 / family.mu0().sqrt();
            let mut sum = p * p;
            for k in 0..n - 1 {
                let b_next = family.beta(k + 1).sqrt();
                let b_cur = if k == 0 { 0.0 } else { family.beta(k).sqrt() };
                let p_next = ((x - family.alpha(k)) * p - b_cur * p_prev) / b_next;
                p_prev = p;
                p = p_next;
                sum += p * p;
            }
            1.0 / sum
        })
        .collect();
    GaussRule { nodes, weights }
}

fn cached(family: Family, n: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<(Family, usize), Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry((family, n))
        .or_insert_with(|| Arc::new(build(family, n)))
        .clone()
}

/// Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Arc<GaussRule> {
    cached(Family::Legendre, n)
}

/// Gauss-Laguerre rule for the weight `e^{-x}` on `[0, ∞)`.
pub fn gauss_laguerre(n: usize) -> Arc<GaussRule> {
    cached(Family::Laguerre, n)
}

/// Gauss-Hermite rule for the weight `e^{-x²}` on the real line.
pub fn gauss_hermite(n: usize) -> Arc<GaussRule> {
    cached(Family::Hermite, n)
}

/// Integration settings for the QPSK mutual-information integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss-Hermite order, at least 16.
    pub order: usize,
    /// Disagreement between the full and half-order rules that triggers
    /// the adaptive fallback.
    pub abs_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            order: 128,
            abs_tol: 1e-9,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), crate::Error> {
        if self.order < 16 {
            return Err(crate::Error::InvalidParameter(format!(
                "quadrature order must be >= 16, got {}",
                self.order
            )));
        }
        if !(self.abs_tol > 0.0) {
            return Err(crate::Error::InvalidParameter(
                "quadrature abs_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Adaptive Simpson integration of `f` over `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// `∫_0^∞ f(x) e^{-x} dx` for `f` whose variation is concentrated near
/// `x ≈ knee` (use `knee = 1/a` for functions of `a·x`).
///
/// Geometric Gauss-Legendre panels cover `[0, 1]` and a shifted
/// Gauss-Laguerre rule covers the tail. A slowly varying `f` (`knee ≥ 1/4`)
/// gets fixed Legendre panels instead.
pub fn expect_exp<F: Fn(f64) -> f64>(f: F, knee: f64) -> f64 {
    let leg = gauss_legendre(20);
    let panel = |a: f64, b: f64| -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        leg.nodes
            .iter()
            .zip(&leg.weights)
            .map(|(&t, &w)| {
                let x = mid + half * t;
                half * w * f(x) * (-x).exp()
            })
            .sum()
    };
    if knee >= 0.25 {
        // f varies on the same scale as the weight: panels out to e^{-60}
        const EDGES: [f64; 12] = [0.0, 0.25, 0.5, 1.0, 2.0, 3.5, 6.0, 10.0, 16.0, 26.0, 40.0, 60.0];
        return EDGES.windows(2).map(|w| panel(w[0], w[1])).sum();
    }
    let tail_rule = gauss_laguerre(64);
    let mut edges = vec![0.0];
    let mut e = knee.max(1e-300) / 64.0;
    while e < 1.0 {
        edges.push(e);
        e *= 4.0;
    }
    edges.push(1.0);
    let total: f64 = edges.windows(2).map(|w| panel(w[0], w[1])).sum();
    let tail: f64 = tail_rule
        .nodes
        .iter()
        .zip(&tail_rule.weights)
        .map(|(&t, &w)| w * f(1.0 + t))
        .sum();
    total + (-1f64).exp() * tail
}

/// `E[f(|m + σu|²)]` for `u ~ CN(0,1)` and real `m ≥ 0`.
///
/// The modulus `|u|²` is integrated with [`expect_exp`] and the phase
/// with the periodic trapezoid rule.
pub fn rician_expect<F: Fn(f64) -> f64>(f: F, m: f64, sigma: f64, knee: f64) -> f64 {
    let s2 = sigma * sigma;
    if m == 0.0 {
        return expect_exp(|s| f(s2 * s), knee);
    }
    if sigma == 0.0 {
        return f(m * m);
    }
    const PHASES: usize = 48;
    expect_exp(
        |s| {
            let base = m * m + s2 * s;
            let cross = 2.0 * m * sigma * s.sqrt();
            let mut acc = 0.5 * (f(base + cross) + f(base - cross));
            for j in 1..PHASES {
                let phi = PI * j as f64 / PHASES as f64;
                acc += f(base + cross * phi.cos());
            }
            acc / PHASES as f64
        },
        knee,
    )
}

/// `E[log(1 + k|m + σu|²)]` for `u ~ CN(0,1)`, with the phase average in
/// closed form.
pub fn rician_expect_log1p(k: f64, m: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    if m == 0.0 || k == 0.0 {
        return crate::special::expected_log1p_exp(k * s2);
    }
    if sigma == 0.0 {
        return (k * m * m).ln_1p();
    }
    let knee = if k * s2 > 0.0 { (1.0 / (k * s2)).min(1.0) } else { 1.0 };
    expect_exp(
        |s| {
            let r = sigma * s.sqrt();
            let c_minus = 1.0 + k * (m - r) * (m - r);
            let c_plus = 1.0 + k * (m + r) * (m + r);
            let c = 1.0 + k * (m * m + r * r);
            ((c + (c_minus * c_plus).sqrt()) / 2.0).ln()
        },
        knee,
    )
}
