//! Upper and lower capacity bounds and their outer optimisation.
//!
//! Every rate is in nats per channel sample. `p_x = 0` is accepted and
//! yields zero for all bounds.

use crate::channel::{ChannelSpec, ConstraintKind, PowerConstraint};
use crate::coherence::CoherenceTime;
use crate::error::{Error, Result};
use crate::estimation::{nu_pk, nu_qd, TruncGaussParams};
use crate::quadrature::{gauss_hermite, gauss_legendre, rician_expect, rician_expect_log1p, QuadratureSpec};
use crate::special::expected_log1p_exp;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

const LN_4: f64 = 2.0 * LN_2;

// log(1 + e^z) - log 2, accurate near z = 0.
fn softplus_minus_ln2(z: f64) -> f64 {
    if z.abs() < 1.0 {
        (z.exp_m1() / 2.0).ln_1p()
    } else if z > 0.0 {
        z + (-z).exp().ln_1p() - LN_2
    } else {
        z.exp().ln_1p() - LN_2
    }
}

fn qpsk_hermite(rho: f64, order: usize) -> f64 {
    let rule = gauss_hermite(order);
    let s = (2.0 * rho).sqrt();
    let sum: f64 = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&t, &w)| w * softplus_minus_ln2(-2.0 * (rho + s * t)))
        .sum();
    -2.0 / PI.sqrt() * sum
}

/// QPSK mutual information over an AWGN channel at SNR `rho`.
pub fn c_qpsk(rho: f64, q: &QuadratureSpec) -> f64 {
    assert!(
        rho >= 0.0 && rho.is_finite(),
        "c_qpsk requires finite rho >= 0, got {rho}"
    );
    if rho == 0.0 {
        return 0.0;
    }
    if rho > 700.0 {
        return LN_4;
    }
    let full = qpsk_hermite(rho, q.order);
    let half = qpsk_hermite(rho, q.order / 2);
    let value = if (full - half).abs() <= q.abs_tol {
        full
    } else {
        qpsk_panels(rho, q.abs_tol)
    };
    value.clamp(0.0, LN_4)
}

// Composite Gauss-Legendre on [-12, 12], doubling the panel count until
// two successive sums agree.
fn qpsk_panels(rho: f64, tol: f64) -> f64 {
    let s = (2.0 * rho).sqrt();
    let f = |t: f64| (-t * t).exp() * softplus_minus_ln2(-2.0 * (rho + s * t));
    let leg = gauss_legendre(20);
    let sum = |panels: usize| -> f64 {
        let h = 24.0 / panels as f64;
        (0..panels)
            .map(|i| {
                let mid = -12.0 + (i as f64 + 0.5) * h;
                leg.nodes
                    .iter()
                    .zip(&leg.weights)
                    .map(|(&x, &w)| w * f(mid + 0.5 * h * x))
                    .sum::<f64>()
                    * 0.5
                    * h
            })
            .sum()
    };
    let mut panels = 32;
    let mut prev = sum(panels);
    loop {
        panels *= 2;
        let cur = sum(panels);
        if (cur - prev).abs() <= 0.1 * tol || panels >= 4096 {
            return -2.0 / PI.sqrt() * cur;
        }
        prev = cur;
    }
}

fn check_p(p_x: f64) -> Result<()> {
    if !(p_x >= 0.0) || !p_x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "p_x must be finite and >= 0, got {p_x}"
        )));
    }
    Ok(())
}

fn check_r(spec: &ChannelSpec, r: usize) -> Result<()> {
    if r == 0 || r > spec.n_bins {
        return Err(Error::InvalidParameter(format!(
            "r must lie in 1..={}, got {r}",
            spec.n_bins
        )));
    }
    Ok(())
}

/// `E[log(1 + N p |h|²)]` for a bin gain `h ~ CN(m, v)` with `|m|² = mean_power`.
pub fn coherent_rate(p_x: f64, n_bins: usize, mean_power: f64, variance: f64) -> f64 {
    let n = n_bins as f64;
    rician_expect_log1p(n * p_x, mean_power.sqrt(), variance.sqrt())
}

/// Coherent-receiver upper bound `E[log(1 + N p |h̃_{0,0}|²)]`.
pub fn ub_coherent(spec: &ChannelSpec, p_x: f64) -> Result<f64> {
    check_p(p_x)?;
    let n = spec.n_bins as f64;
    Ok(coherent_rate(p_x, spec.n_bins, spec.taps.los_power() / n, 1.0 / n))
}

/// Noncoherent upper bound under the peak constraint.
pub fn ub_low_peak(spec: &ChannelSpec, p_x: f64, tc: &dyn CoherenceTime) -> Result<f64> {
    check_p(p_x)?;
    if p_x == 0.0 {
        return Ok(0.0);
    }
    let n = spec.n_bins as f64;
    let t = tc.tc(p_x)?;
    let est = n * p_x / (1.0 + 0.5 * p_x * (t - n));
    Ok(p_x * spec.taps.los_power() + p_x - est.ln_1p() / n)
}

/// Noncoherent upper bound under the quadratic constraint.
pub fn ub_low_quad(spec: &ChannelSpec, p_x: f64, alpha: f64, tc: &dyn CoherenceTime) -> Result<f64> {
    check_p(p_x)?;
    if !(alpha >= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 1, got {alpha}")));
    }
    if p_x == 0.0 {
        return Ok(0.0);
    }
    let n = spec.n_bins as f64;
    let g = p_x * (tc.tc(p_x)? - n);
    Ok(p_x * spec.taps.los_power() + alpha * p_x * g / (2.0 + g) + 0.5 * alpha * n * p_x * p_x)
}

/// `min(UB_coh, UB_low)` for the given constraint.
pub fn upper_bound(spec: &ChannelSpec, constraint: &PowerConstraint, tc: &dyn CoherenceTime) -> Result<(f64, f64)> {
    let p = constraint.p_x();
    let coh = ub_coherent(spec, p)?;
    let low = match *constraint {
        PowerConstraint::Peak { p_x } => ub_low_peak(spec, p_x, tc)?,
        PowerConstraint::Quadratic { p_x, alpha } => ub_low_quad(spec, p_x, alpha, tc)?,
    };
    Ok((coh, low))
}

/// SNR where the coherent and low-SNR upper bounds meet, by bisection on
/// `ln p` inside `[p_lo, p_hi]`. Returns `None` without a sign change.
pub fn upper_bound_crossing(
    spec: &ChannelSpec,
    constraint: &PowerConstraint,
    tc: &dyn CoherenceTime,
    p_lo: f64,
    p_hi: f64,
) -> Result<Option<f64>> {
    let gap = |p: f64| -> Result<f64> {
        let (coh, low) = upper_bound(spec, &constraint.with_p_x(p), tc)?;
        Ok(coh - low)
    };
    let (mut a, mut b) = (p_lo.ln(), p_hi.ln());
    let (ga, gb) = (gap(p_lo)?, gap(p_hi)?);
    if ga == 0.0 {
        return Ok(Some(p_lo));
    }
    if ga.signum() == gb.signum() {
        return Ok(None);
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a < 1e-13 {
            break;
        }
        if gap(m.exp())?.signum() == ga.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(Some((0.5 * (a + b)).exp()))
}

fn check_beta_range(beta: f64, max: f64) -> Result<()> {
    if !(beta >= 1.0 - 1e-12 && beta <= max * (1.0 + 1e-12)) {
        return Err(Error::InvalidBeta { beta, max });
    }
    Ok(())
}

fn qpsk_beta_max(constraint: &PowerConstraint) -> f64 {
    constraint.alpha().unwrap_or(1.0)
}

/// Lower bound with QPSK on `r` of the `N` bins and duty cycle `1/β`.
///
/// Only the kind and `α` of `constraint` are used; the SNR is `p_x`.
pub fn lb_qpsk(
    spec: &ChannelSpec,
    p_x: f64,
    r: usize,
    beta: f64,
    constraint: &PowerConstraint,
    tc: &dyn CoherenceTime,
    q: &QuadratureSpec,
) -> Result<f64> {
    check_p(p_x)?;
    check_r(spec, r)?;
    check_beta_range(beta, qpsk_beta_max(constraint))?;
    if p_x == 0.0 {
        return Ok(0.0);
    }
    let n = spec.n_bins as f64;
    let (pref, gain, inv_x) = if r == spec.n_bins {
        let l = spec.n_taps() as f64;
        let bp = beta * p_x;
        (1.0 / beta, beta / l * 0.5 * p_x * (tc.tc(bp)? - n), 1.0 / bp)
    } else {
        let rf = r as f64;
        let arg = beta * p_x / rf;
        (
            rf / (n * beta),
            beta / rf * 0.5 * p_x * (tc.tc(arg)? - n),
            rf / (n * beta * p_x),
        )
    };
    let e = 1.0 / (1.0 + gain);
    let k = 1.0 / (inv_x + e);
    let m = spec.taps.los_power().sqrt();
    let sigma = (1.0 - e).max(0.0).sqrt();
    let spread = k * sigma * sigma;
    let knee = if spread > 0.0 { 1.0 / spread } else { 1.0 };
    Ok(pref * rician_expect(|s| c_qpsk(k * s, q), m, sigma, knee))
}

/// Largest duty-cycle parameter allowed for truncated-Gaussian signalling
/// under the quadratic constraint.
pub fn tg_beta_max(alpha: f64, r: usize, eta: f64) -> f64 {
    let g = r as f64 * (1.0 + eta) * (1.0 + eta);
    alpha * g / (1.0 + g)
}

fn tg_snr(x: f64, a: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        x * a / (a + 1.0 + x)
    }
}

// (ζ/2L)(T̂c(ζ) - N) for r = N, (ζ/2r)(T̂c(ζ/r) - N) otherwise.
fn estimation_gain(spec: &ChannelSpec, zeta: f64, r: usize, tc: &dyn CoherenceTime) -> Result<f64> {
    let n = spec.n_bins as f64;
    if r == spec.n_bins {
        let l = spec.n_taps() as f64;
        Ok(zeta / (2.0 * l) * (tc.tc(zeta)? - n))
    } else {
        let rf = r as f64;
        Ok(zeta / (2.0 * rf) * (tc.tc(zeta / rf)? - n))
    }
}

fn require_zero_mean(spec: &ChannelSpec) -> Result<()> {
    if !spec.taps.is_zero_mean() {
        return Err(Error::NonZeroMean);
    }
    Ok(())
}

/// Truncated-Gaussian lower bound, quadratic constraint, including the
/// `-(r/Nβ)η` penalty. Zero-mean channels only.
#[allow(clippy::too_many_arguments)]
pub fn lb_tg_quad(
    spec: &ChannelSpec,
    p_x: f64,
    r: usize,
    beta: f64,
    eta: f64,
    alpha: f64,
    tc: &dyn CoherenceTime,
) -> Result<f64> {
    require_zero_mean(spec)?;
    check_p(p_x)?;
    check_r(spec, r)?;
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidThreshold(format!(
            "eta must be positive and finite, got {eta}"
        )));
    }
    check_beta_range(beta, tg_beta_max(alpha, r, eta))?;
    let n = spec.n_bins as f64;
    let rf = r as f64;
    let penalty = rf / (n * beta) * eta;
    if p_x == 0.0 {
        return Ok(-penalty);
    }
    let zeta = beta * p_x / nu_qd(eta);
    let a = estimation_gain(spec, zeta, r, tc)?;
    let (pref, x) = if r == spec.n_bins {
        (1.0 / beta, beta * p_x)
    } else {
        (rf / (n * beta), n / rf * beta * p_x)
    };
    Ok(pref * expected_log1p_exp(tg_snr(x, a)) - penalty)
}

/// Truncated-Gaussian lower bound, peak constraint, including the
/// `(r/N) log θ` penalty. Zero-mean channels only.
pub fn lb_tg_peak(spec: &ChannelSpec, p_x: f64, r: usize, eta: f64, xi: f64, tc: &dyn CoherenceTime) -> Result<f64> {
    require_zero_mean(spec)?;
    check_p(p_x)?;
    check_r(spec, r)?;
    if !(eta > 0.0) || !xi.is_finite() {
        return Err(Error::InvalidThreshold(format!(
            "peak constraint needs eta > 0 and finite xi, got eta = {eta}, xi = {xi}"
        )));
    }
    let tg = TruncGaussParams::new(eta, xi)?;
    let n = spec.n_bins as f64;
    let rf = r as f64;
    let penalty = rf / n * tg.theta.ln();
    if p_x == 0.0 {
        return Ok(penalty);
    }
    let zeta = p_x / nu_pk(eta, xi);
    let a = estimation_gain(spec, zeta, r, tc)?;
    let x = n / rf * p_x / xi * tg.p_z;
    Ok(rf / n * expected_log1p_exp(tg_snr(x, a)) + penalty)
}

/// Truncated-Gaussian lower bound through the minimum-power estimation
/// shortcut; valid for any channel mean.
///
/// `beta` must be 1 under the peak constraint; `xi` is ignored under the
/// quadratic constraint.
#[allow(clippy::too_many_arguments)]
pub fn lb_tg_alternative(
    spec: &ChannelSpec,
    p_x: f64,
    r: usize,
    beta: f64,
    eta: f64,
    xi: f64,
    constraint: &PowerConstraint,
    tc: &dyn CoherenceTime,
) -> Result<f64> {
    check_p(p_x)?;
    check_r(spec, r)?;
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidThreshold(format!(
            "eta must be positive and finite, got {eta}"
        )));
    }
    let n = spec.n_bins as f64;
    let rf = r as f64;
    let scale = if r == spec.n_bins { 1.0 } else { n / rf };
    let (pref, penalty, x, zeta) = match *constraint {
        PowerConstraint::Quadratic { alpha, .. } => {
            check_beta_range(beta, tg_beta_max(alpha, r, eta))?;
            let pref = if r == spec.n_bins { 1.0 / beta } else { rf / (n * beta) };
            let zeta = beta * p_x * eta / (1.0 + eta);
            (pref, -rf / (n * beta) * eta, scale * beta * p_x, zeta)
        }
        PowerConstraint::Peak { .. } => {
            check_beta_range(beta, 1.0)?;
            if !xi.is_finite() {
                return Err(Error::InvalidThreshold("peak constraint needs a finite xi".into()));
            }
            let tg = TruncGaussParams::new(eta, xi)?;
            (
                rf / n,
                rf / n * tg.theta.ln(),
                scale * p_x / xi * tg.p_z,
                p_x * eta / xi,
            )
        }
    };
    if p_x == 0.0 {
        return Ok(penalty);
    }
    let a = estimation_gain(spec, zeta, r, tc)?;
    let e = 1.0 / (1.0 + a);
    let k = x / (1.0 + x * e);
    let m = spec.taps.los_power().sqrt();
    let sigma = (1.0 - e).max(0.0).sqrt();
    Ok(pref * rician_expect_log1p(k, m, sigma) + penalty)
}

/// High-SNR rate loss of peak-constrained truncated-Gaussian signalling
/// relative to the coherent capacity, as a function of `ξ`.
pub fn peak_high_snr_loss(xi: f64) -> f64 {
    let em = (-xi).exp();
    let one_minus = -(-xi).exp_m1();
    ((1.0 - xi * em / one_minus) / xi).ln() + one_minus.ln()
}

/// Golden-section maximiser of a unimodal function on `[a, b]`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `(ξ*, loss(ξ*))` maximising [`peak_high_snr_loss`].
pub fn optimize_peak_loss() -> (f64, f64) {
    golden_section_max(peak_high_snr_loss, 0.1, 20.0, 1e-10)
}

/// Which lower bound attains the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerBoundKind {
    Qpsk,
    TruncGauss,
    TruncGaussAlt,
}

/// Parameters of the best lower bound. `eta` is absent for QPSK; `xi` is
/// absent when unbounded or not applicable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArgMax {
    pub kind: LowerBoundKind,
    pub r: usize,
    pub beta: f64,
    pub eta: Option<f64>,
    pub xi: Option<f64>,
}

/// Grids of the outer lower-bound search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpec {
    /// Explicit bin counts; default is `1..=N` for `N ≤ 64`, otherwise a
    /// log-spaced subset containing `1`, `L` and `N`.
    pub r_values: Option<Vec<usize>>,
    pub n_beta: usize,
    pub eta_min: f64,
    pub eta_max: f64,
    pub n_eta: usize,
    pub xi_min: f64,
    pub xi_max: f64,
    pub n_xi: usize,
    /// Golden-section pass on the continuous parameters of each winner.
    pub refine: bool,
    pub quadrature: QuadratureSpec,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            r_values: None,
            n_beta: 16,
            eta_min: 1e-4,
            eta_max: 1.0,
            n_eta: 13,
            xi_min: 0.5,
            xi_max: 20.0,
            n_xi: 12,
            refine: true,
            quadrature: QuadratureSpec::default(),
        }
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        self.quadrature.validate()?;
        let ok = self.n_beta >= 1
            && self.n_eta >= 1
            && self.n_xi >= 1
            && self.eta_min > 0.0
            && self.eta_max >= self.eta_min
            && self.xi_min > 0.0
            && self.xi_max >= self.xi_min;
        if !ok {
            return Err(Error::InvalidParameter("invalid search grid".into()));
        }
        Ok(())
    }

    fn r_set(&self, spec: &ChannelSpec) -> Result<Vec<usize>> {
        let n = spec.n_bins;
        let mut rs = match &self.r_values {
            Some(v) => {
                for &r in v {
                    check_r(spec, r)?;
                }
                v.clone()
            }
            None if n <= 64 => (1..=n).collect(),
            None => {
                let mut v: Vec<usize> = log_grid(1.0, n as f64, 24).iter().map(|x| x.round() as usize).collect();
                v.extend([1, spec.n_taps(), n]);
                v
            }
        };
        rs.sort_unstable();
        rs.dedup();
        Ok(rs)
    }

    fn eta_grid(&self, tc_p: f64) -> Vec<f64> {
        let mut v = log_grid(self.eta_min, self.eta_max, self.n_eta);
        let sched = 1.0 / tc_p.sqrt().exp_m1();
        if sched > 0.0 && sched.is_finite() {
            v.push(sched);
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

/// Result of the lower-bound search at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundSearch {
    pub value: f64,
    pub argmax: ArgMax,
    /// Best QPSK bound over all `r`.
    pub qpsk: f64,
    /// Best truncated-Gaussian bound (either form) over all `r`.
    pub tg: f64,
    /// QPSK on a single bin.
    pub qpsk_nw: f64,
    /// QPSK on all bins.
    pub qpsk_wd: f64,
    /// Truncated Gaussian on all bins.
    pub tg_wd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Candidate {
    Qpsk { r: usize, beta: f64 },
    TgQuad { r: usize, beta: f64, eta: f64 },
    TgPeak { r: usize, eta: f64, xi: f64 },
    AltQuad { r: usize, beta: f64, eta: f64 },
    AltPeak { r: usize, eta: f64, xi: f64 },
}

impl Candidate {
    fn r(&self) -> usize {
        match *self {
            Candidate::Qpsk { r, .. }
            | Candidate::TgQuad { r, .. }
            | Candidate::TgPeak { r, .. }
            | Candidate::AltQuad { r, .. }
            | Candidate::AltPeak { r, .. } => r,
        }
    }

    fn is_qpsk(&self) -> bool {
        matches!(self, Candidate::Qpsk { .. })
    }

    fn argmax(&self) -> ArgMax {
        match *self {
            Candidate::Qpsk { r, beta } => ArgMax {
                kind: LowerBoundKind::Qpsk,
                r,
                beta,
                eta: None,
                xi: None,
            },
            Candidate::TgQuad { r, beta, eta } => ArgMax {
                kind: LowerBoundKind::TruncGauss,
                r,
                beta,
                eta: Some(eta),
                xi: None,
            },
            Candidate::TgPeak { r, eta, xi } => ArgMax {
                kind: LowerBoundKind::TruncGauss,
                r,
                beta: 1.0,
                eta: Some(eta),
                xi: Some(xi),
            },
            Candidate::AltQuad { r, beta, eta } => ArgMax {
                kind: LowerBoundKind::TruncGaussAlt,
                r,
                beta,
                eta: Some(eta),
                xi: None,
            },
            Candidate::AltPeak { r, eta, xi } => ArgMax {
                kind: LowerBoundKind::TruncGaussAlt,
                r,
                beta: 1.0,
                eta: Some(eta),
                xi: Some(xi),
            },
        }
    }

    // Continuous coordinates in log space, and rebuilding from them.
    fn coords(&self) -> Vec<f64> {
        match *self {
            Candidate::Qpsk { beta, .. } => vec![beta.ln()],
            Candidate::TgQuad { beta, eta, .. } | Candidate::AltQuad { beta, eta, .. } => vec![beta.ln(), eta.ln()],
            Candidate::TgPeak { eta, xi, .. } | Candidate::AltPeak { eta, xi, .. } => vec![eta.ln(), xi.ln()],
        }
    }

    fn with_coords(&self, c: &[f64]) -> Candidate {
        match *self {
            Candidate::Qpsk { r, .. } => Candidate::Qpsk { r, beta: c[0].exp() },
            Candidate::TgQuad { r, .. } => Candidate::TgQuad {
                r,
                beta: c[0].exp(),
                eta: c[1].exp(),
            },
            Candidate::AltQuad { r, .. } => Candidate::AltQuad {
                r,
                beta: c[0].exp(),
                eta: c[1].exp(),
            },
            Candidate::TgPeak { r, .. } => Candidate::TgPeak {
                r,
                eta: c[0].exp(),
                xi: c[1].exp(),
            },
            Candidate::AltPeak { r, .. } => Candidate::AltPeak {
                r,
                eta: c[0].exp(),
                xi: c[1].exp(),
            },
        }
    }
}

struct Evaluator<'a> {
    spec: &'a ChannelSpec,
    constraint: PowerConstraint,
    tc: &'a dyn CoherenceTime,
    q: QuadratureSpec,
}

impl Evaluator<'_> {
    fn p(&self) -> f64 {
        self.constraint.p_x()
    }

    fn eval(&self, c: &Candidate) -> f64 {
        let alpha = self.constraint.alpha().unwrap_or(1.0);
        let p = self.p();
        let v = match *c {
            Candidate::Qpsk { r, beta } => lb_qpsk(self.spec, p, r, beta, &self.constraint, self.tc, &self.q),
            Candidate::TgQuad { r, beta, eta } => lb_tg_quad(self.spec, p, r, beta, eta, alpha, self.tc),
            Candidate::TgPeak { r, eta, xi } => {
                if xi <= eta {
                    return f64::NEG_INFINITY;
                }
                lb_tg_peak(self.spec, p, r, eta, xi, self.tc)
            }
            Candidate::AltQuad { r, beta, eta } => {
                lb_tg_alternative(self.spec, p, r, beta, eta, f64::INFINITY, &self.constraint, self.tc)
            }
            Candidate::AltPeak { r, eta, xi } => {
                if xi <= eta {
                    return f64::NEG_INFINITY;
                }
                lb_tg_alternative(self.spec, p, r, 1.0, eta, xi, &self.constraint, self.tc)
            }
        };
        match v {
            Ok(x) if x.is_finite() => x,
            _ => f64::NEG_INFINITY,
        }
    }

    // Coordinate-wise golden-section search inside the grid cell of the
    // winner, clipped to the feasible box.
    fn refine(&self, best: (Candidate, f64), steps: &[f64], bounds: &[(f64, f64)]) -> (Candidate, f64) {
        let (mut cand, mut val) = best;
        let mut coords = cand.coords();
        for i in 0..coords.len() {
            let lo = (coords[i] - steps[i]).max(bounds[i].0);
            let hi = (coords[i] + steps[i]).min(bounds[i].1);
            if !(hi > lo) {
                continue;
            }
            let base = coords.clone();
            let (x, fx) = golden_section_max(
                |t| {
                    let mut c = base.clone();
                    c[i] = t;
                    self.eval(&cand.with_coords(&c))
                },
                lo,
                hi,
                1e-4,
            );
            if fx > val {
                coords[i] = x;
                val = fx;
                cand = cand.with_coords(&coords);
            }
        }
        (cand, val)
    }
}

fn best_of(items: impl Iterator<Item = (Candidate, f64)>) -> Option<(Candidate, f64)> {
    items.fold(None, |acc, item| match acc {
        Some(a) if a.1 >= item.1 => Some(a),
        _ => Some(item),
    })
}

/// Maximises the QPSK and truncated-Gaussian bounds over `(r, β, η, ξ)`.
///
/// The Theorem-style truncated-Gaussian bound is used for zero-mean
/// channels; the alternative form is evaluated for every channel. Values
/// are floored at 0 (silence achieves rate 0).
pub fn optimize_lower_bound(
    spec: &ChannelSpec,
    constraint: &PowerConstraint,
    tc: &dyn CoherenceTime,
    search: &SearchSpec,
) -> Result<LowerBoundSearch> {
    spec.validate()?;
    search.validate()?;
    let p = constraint.p_x();
    check_p(p)?;
    let kind = constraint.kind();
    let alpha = constraint.alpha().unwrap_or(1.0);
    let zero = ArgMax {
        kind: LowerBoundKind::Qpsk,
        r: 1,
        beta: 1.0,
        eta: None,
        xi: None,
    };
    if p == 0.0 {
        return Ok(LowerBoundSearch {
            value: 0.0,
            argmax: zero,
            qpsk: 0.0,
            tg: 0.0,
            qpsk_nw: 0.0,
            qpsk_wd: 0.0,
            tg_wd: 0.0,
        });
    }
    let ev = Evaluator {
        spec,
        constraint: *constraint,
        tc,
        q: search.quadrature,
    };
    let rs = search.r_set(spec)?;
    let n = spec.n_bins;
    let betas = match kind {
        ConstraintKind::Peak => vec![1.0],
        ConstraintKind::Quadratic => log_grid(1.0, alpha, search.n_beta),
    };
    let etas = search.eta_grid(tc.tc(p)?);
    let xis = log_grid(search.xi_min, search.xi_max, search.n_xi);
    let zero_mean = spec.taps.is_zero_mean();

    let mut cands = Vec::new();
    for &r in &rs {
        for &beta in &betas {
            cands.push(Candidate::Qpsk { r, beta });
        }
        for &eta in &etas {
            match kind {
                ConstraintKind::Quadratic => {
                    let bmax = tg_beta_max(alpha, r, eta);
                    if bmax < 1.0 {
                        continue;
                    }
                    for beta in log_grid(1.0, bmax, search.n_beta) {
                        if zero_mean {
                            cands.push(Candidate::TgQuad { r, beta, eta });
                        }
                        cands.push(Candidate::AltQuad { r, beta, eta });
                    }
                }
                ConstraintKind::Peak => {
                    for &xi in xis.iter().filter(|&&x| x > eta) {
                        if zero_mean {
                            cands.push(Candidate::TgPeak { r, eta, xi });
                        }
                        cands.push(Candidate::AltPeak { r, eta, xi });
                    }
                }
            }
        }
    }
    let scored: Vec<(Candidate, f64)> = cands.into_par_iter().map(|c| (c, ev.eval(&c))).collect();

    let beta_step = if betas.len() > 1 {
        (alpha.ln()) / (betas.len() - 1) as f64
    } else {
        0.0
    };
    let eta_step = ((search.eta_max / search.eta_min).ln() / (search.n_eta.max(2) - 1) as f64).max(1e-3);
    let xi_step = ((search.xi_max / search.xi_min).ln() / (search.n_xi.max(2) - 1) as f64).max(1e-3);
    let refine = |best: Option<(Candidate, f64)>| -> Option<(Candidate, f64)> {
        let best = best?;
        if !search.refine || !best.1.is_finite() {
            return Some(best);
        }
        let (steps, bounds): (Vec<f64>, Vec<(f64, f64)>) = match best.0 {
            Candidate::Qpsk { .. } => (vec![beta_step], vec![(0.0, alpha.ln())]),
            Candidate::TgQuad { .. } | Candidate::AltQuad { .. } => (
                vec![beta_step.max(0.1), eta_step],
                vec![(0.0, alpha.ln()), (f64::MIN, 10f64.ln())],
            ),
            Candidate::TgPeak { .. } | Candidate::AltPeak { .. } => (
                vec![eta_step, xi_step],
                vec![(f64::MIN, 10f64.ln()), (f64::MIN, 100f64.ln())],
            ),
        };
        Some(ev.refine(best, &steps, &bounds))
    };

    let pick = |f: &dyn Fn(&Candidate) -> bool| refine(best_of(scored.iter().copied().filter(|(c, _)| f(c))));
    let qpsk_nw = pick(&|c| c.is_qpsk() && c.r() == 1);
    let qpsk_wd = pick(&|c| c.is_qpsk() && c.r() == n);
    let tg_wd = pick(&|c| !c.is_qpsk() && c.r() == n);
    let qpsk = pick(&|c| c.is_qpsk());
    let tg = pick(&|c| !c.is_qpsk());
    let overall = best_of([qpsk_nw, qpsk_wd, tg_wd, qpsk, tg].into_iter().flatten());

    let val = |o: Option<(Candidate, f64)>| o.map_or(0.0, |(_, v)| v.max(0.0));
    let (value, argmax) = match overall {
        Some((c, v)) if v > 0.0 => (v, c.argmax()),
        _ => (0.0, zero),
    };
    Ok(LowerBoundSearch {
        value,
        argmax,
        qpsk: val(qpsk).max(val(qpsk_nw)).max(val(qpsk_wd)),
        tg: val(tg).max(val(tg_wd)),
        qpsk_nw: val(qpsk_nw),
        qpsk_wd: val(qpsk_wd),
        tg_wd: val(tg_wd),
    })
}

/// Bounds at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub p_x: f64,
    pub ub_coh: f64,
    pub ub_low: f64,
    pub ub: f64,
    pub lb_qpsk: f64,
    pub lb_tg: f64,
    pub lb_qpsk_nw: f64,
    pub lb_qpsk_wd: f64,
    pub lb_tg_wd: f64,
    pub lb: f64,
    pub argmax: ArgMax,
}

/// All bounds at a single SNR.
pub fn bound_point(
    spec: &ChannelSpec,
    constraint: &PowerConstraint,
    tc: &dyn CoherenceTime,
    search: &SearchSpec,
) -> Result<BoundPoint> {
    let (ub_coh, ub_low) = upper_bound(spec, constraint, tc)?;
    let lb = optimize_lower_bound(spec, constraint, tc, search)?;
    Ok(BoundPoint {
        p_x: constraint.p_x(),
        ub_coh,
        ub_low,
        ub: ub_coh.min(ub_low),
        lb_qpsk: lb.qpsk,
        lb_tg: lb.tg,
        lb_qpsk_nw: lb.qpsk_nw,
        lb_qpsk_wd: lb.qpsk_wd,
        lb_tg_wd: lb.tg_wd,
        lb: lb.value,
        argmax: lb.argmax,
    })
}

/// Bounds over an SNR grid (linear `p_x` values), in grid order; each point
/// succeeds or fails independently.
pub fn bound_curve(
    spec: &ChannelSpec,
    constraint: &PowerConstraint,
    snr_grid: &[f64],
    tc: &dyn CoherenceTime,
    search: &SearchSpec,
) -> Vec<Result<BoundPoint>> {
    snr_grid
        .par_iter()
        .map(|&p| bound_point(spec, &constraint.with_p_x(p), tc, search))
        .collect()
}
