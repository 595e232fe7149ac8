//! Effective coherence time `T̂c(p)`.
//!
//! `T̂c(p) = 2N lim_k D†(Np[Δ - DD†] + I)⁻¹ D + N`, evaluated on growing
//! history lengths until the value settles.

use crate::channel::TemporalCorrelation;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, quad_form_inv, Durbin};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Mutex;

/// Truncation policy for the history-length limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EctOptions {
    pub k_max: usize,
    pub rel_tol: f64,
    pub k_step: usize,
}

impl Default for EctOptions {
    fn default() -> Self {
        Self {
            k_max: 4096,
            rel_tol: 1e-6,
            k_step: 2,
        }
    }
}

impl EctOptions {
    pub fn with_k_max(k_max: usize) -> Self {
        Self {
            k_max,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max < 2 {
            return Err(Error::InvalidParameter("k_max must be >= 2".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidParameter("rel_tol must lie in (0, 1)".into()));
        }
        if self.k_step < 2 {
            return Err(Error::InvalidParameter("k_step must be >= 2".into()));
        }
        Ok(())
    }

    fn probes(&self, cap: Option<usize>) -> Vec<usize> {
        let top = cap.map_or(self.k_max, |c| c.min(self.k_max)).max(1);
        let mut sizes = Vec::new();
        let mut k = 64usize;
        while k < top {
            sizes.push(k);
            k = k.saturating_mul(self.k_step);
        }
        sizes.push(top);
        sizes
    }
}

/// Value of `T̂c` at the last probed history length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EctResult {
    pub value: f64,
    pub k_used: usize,
    pub converged: bool,
    pub last_rel_change: f64,
}

const MONOTONE_SLACK: f64 = 1e-9;

fn run_probes<F>(opts: &EctOptions, cap: Option<usize>, mut eval: F) -> Result<EctResult>
where
    F: FnMut(usize) -> Result<f64>,
{
    opts.validate()?;
    let mut prev: Option<f64> = None;
    let mut last = EctResult {
        value: f64::NAN,
        k_used: 0,
        converged: false,
        last_rel_change: f64::INFINITY,
    };
    for k in opts.probes(cap) {
        let value = eval(k)?;
        if let Some(p) = prev {
            if value < p - MONOTONE_SLACK * p.abs() {
                return Err(Error::NonMonotone { k });
            }
            let change = (value - p).abs() / value.abs();
            last = EctResult {
                value,
                k_used: k,
                converged: change < opts.rel_tol,
                last_rel_change: change,
            };
            if last.converged {
                return Ok(last);
            }
        } else {
            last = EctResult {
                value,
                k_used: k,
                converged: false,
                last_rel_change: f64::INFINITY,
            };
        }
        prev = Some(value);
    }
    Err(Error::NotConverged { partial: last })
}

fn check_snr(p_x: f64) -> Result<()> {
    if !(p_x > 0.0) || !p_x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "p_x must be positive and finite, got {p_x}"
        )));
    }
    Ok(())
}

fn exact(value: f64, k: usize) -> EctResult {
    EctResult {
        value,
        k_used: k,
        converged: true,
        last_rel_change: 0.0,
    }
}

// Block fading: fixed history of d symbols. Even block lengths average the
// two middle symbols; the value is affine in d so this gives N·B exactly.
fn block_fading<F>(block_symbols: usize, mut at_depth: F) -> Result<EctResult>
where
    F: FnMut(usize) -> Result<f64>,
{
    if block_symbols % 2 == 1 {
        let d = (block_symbols - 1) / 2;
        Ok(exact(at_depth(d)?, d))
    } else {
        let d_hi = block_symbols / 2;
        let lo = at_depth(d_hi - 1)?;
        let hi = at_depth(d_hi)?;
        Ok(exact(0.5 * (lo + hi), d_hi))
    }
}

fn direct_at(rho: &[f64], k: usize, n: f64, p_x: f64) -> Result<f64> {
    if k == 0 {
        return Ok(n);
    }
    let d = DVector::from_fn(k, |i, _| rho[k - i]);
    let a = n * p_x;
    let m = DMatrix::from_fn(k, k, |i, j| {
        let v = a * (rho[i.abs_diff(j)] - d[i] * d[j]);
        if i == j {
            v + 1.0
        } else {
            v
        }
    });
    let ch = cholesky_with_jitter(m)
        .ok_or_else(|| Error::Factorization(format!("Np[Δ - DD†] + I not positive definite at k = {k}")))?;
    Ok(2.0 * n * quad_form_inv(&ch, &d) + n)
}

fn rho_table(corr: &TemporalCorrelation, upto: usize) -> Result<Vec<f64>> {
    (0..=upto).map(|lag| corr.rho(lag)).collect()
}

/// `T̂c(p_x)` through Cholesky solves of `Np[Δ - DD†] + I` at growing `k`.
pub fn effective_coherence_time(
    corr: &TemporalCorrelation,
    n_bins: usize,
    p_x: f64,
    opts: &EctOptions,
) -> Result<EctResult> {
    corr.validate()?;
    check_snr(p_x)?;
    let n = n_bins as f64;
    if let TemporalCorrelation::BlockFadingMiddle { block_symbols } = *corr {
        return block_fading(block_symbols, |d| direct_at(&vec![1.0; d + 1], d, n, p_x));
    }
    let cap = corr.max_lag();
    let top = opts.probes(cap).last().copied().unwrap_or(1);
    let rho = rho_table(corr, top)?;
    run_probes(opts, cap, |k| direct_at(&rho, k, n, p_x))
}

// Levinson-Durbin on Δ + I/(Np): q = Σκ²E is the explained variance of the
// one-step predictor and 1 - q its error.
struct AltState {
    durbin: Durbin,
    sigma2: f64,
    n: f64,
    p_x: f64,
}

impl AltState {
    fn new(n: f64, p_x: f64) -> Self {
        let sigma2 = 1.0 / (n * p_x);
        Self {
            durbin: Durbin::new(1.0 + sigma2),
            sigma2,
            n,
            p_x,
        }
    }

    fn advance_to(&mut self, k: usize, rho: impl Fn(usize) -> Result<f64>) -> Result<()> {
        while self.durbin.order() < k {
            let lag = self.durbin.order() + 1;
            self.durbin.push(rho(lag)?);
        }
        Ok(())
    }

    fn value(&self) -> Result<f64> {
        let q = self.durbin.reduction();
        let one_minus_q = if q <= 0.5 {
            1.0 - q
        } else {
            self.durbin.error() - self.sigma2
        };
        if one_minus_q <= 1e-14 {
            return Err(Error::DegenerateEstimation { one_minus_q });
        }
        Ok(self.n + 2.0 / self.p_x * q / one_minus_q)
    }
}

/// `T̂c(p_x)` through the matrix-inversion-lemma form
/// `N + (2/p)·q/(1 - q)`, `q = Np·D†(I + NpΔ)⁻¹D`, solved by Levinson-Durbin.
pub fn effective_coherence_time_alt(
    corr: &TemporalCorrelation,
    n_bins: usize,
    p_x: f64,
    opts: &EctOptions,
) -> Result<EctResult> {
    corr.validate()?;
    check_snr(p_x)?;
    let n = n_bins as f64;
    if let TemporalCorrelation::BlockFadingMiddle { block_symbols } = *corr {
        return block_fading(block_symbols, |d| {
            let mut st = AltState::new(n, p_x);
            st.advance_to(d, |_| Ok(1.0))?;
            st.value()
        });
    }
    let mut st = AltState::new(n, p_x);
    run_probes(opts, corr.max_lag(), |k| {
        st.advance_to(k, |lag| corr.rho(lag))?;
        st.value()
    })
}

/// Low-SNR limit `T̂c₀ = 2N Σ_{lag≥1} ρ(lag)² + N`.
pub fn tc0_low_snr(corr: &TemporalCorrelation, n_bins: usize, opts: &EctOptions) -> Result<EctResult> {
    corr.validate()?;
    let n = n_bins as f64;
    if let TemporalCorrelation::BlockFadingMiddle { block_symbols } = *corr {
        return block_fading(block_symbols, |d| Ok(2.0 * n * d as f64 + n));
    }
    let mut sum = 0.0;
    let mut upto = 0usize;
    run_probes(opts, corr.max_lag(), |k| {
        while upto < k {
            upto += 1;
            let r = corr.rho(upto)?;
            sum += r * r;
        }
        Ok(2.0 * n * sum + n)
    })
}

/// `T̂c` on a grid of per-sample SNRs (linear), in grid order; failures
/// are reported per point.
pub fn tc_sweep(
    corr: &TemporalCorrelation,
    n_bins: usize,
    snr_grid: &[f64],
    opts: &EctOptions,
) -> Vec<(f64, Result<EctResult>)> {
    snr_grid
        .par_iter()
        .map(|&p| (p, effective_coherence_time(corr, n_bins, p, opts)))
        .collect()
}

/// Same as [`tc_sweep`] using the Levinson-Durbin form, which scales to
/// long histories.
pub fn tc_sweep_alt(
    corr: &TemporalCorrelation,
    n_bins: usize,
    snr_grid: &[f64],
    opts: &EctOptions,
) -> Vec<(f64, Result<EctResult>)> {
    snr_grid
        .par_iter()
        .map(|&p| (p, effective_coherence_time_alt(corr, n_bins, p, opts)))
        .collect()
}

/// Source of `T̂c(p)` values for the bound formulas.
pub trait CoherenceTime: Send + Sync {
    fn n_bins(&self) -> usize;
    fn tc(&self, p_x: f64) -> Result<f64>;
}

/// Exact evaluation through the Levinson-Durbin form, memoised.
#[derive(Debug)]
pub struct ExactCoherence {
    corr: TemporalCorrelation,
    n_bins: usize,
    opts: EctOptions,
    cache: Mutex<HashMap<u64, f64>>,
}

impl ExactCoherence {
    pub fn new(corr: TemporalCorrelation, n_bins: usize, opts: EctOptions) -> Result<Self> {
        corr.validate()?;
        opts.validate()?;
        Ok(Self {
            corr,
            n_bins,
            opts,
            cache: Mutex::new(HashMap::new()),
        })
    }
}

impl CoherenceTime for ExactCoherence {
    fn n_bins(&self) -> usize {
        self.n_bins
    }

    fn tc(&self, p_x: f64) -> Result<f64> {
        if let Some(v) = self.cache.lock().expect("cache poisoned").get(&p_x.to_bits()) {
            return Ok(*v);
        }
        let v = effective_coherence_time_alt(&self.corr, self.n_bins, p_x, &self.opts)?.value;
        self.cache.lock().expect("cache poisoned").insert(p_x.to_bits(), v);
        Ok(v)
    }
}

/// A constant `T̂c`, for idealised channels and tests.
#[derive(Debug, Clone, Copy)]
pub struct FixedCoherence {
    pub n_bins: usize,
    pub value: f64,
}

impl CoherenceTime for FixedCoherence {
    fn n_bins(&self) -> usize {
        self.n_bins
    }

    fn tc(&self, _p_x: f64) -> Result<f64> {
        Ok(self.value)
    }
}

/// `T̂c` tabulated on a log-spaced SNR grid and interpolated with a
/// monotone cubic in `(ln p, ln(T̂c - N))`; exact outside the table.
///
/// The bounds consume `T̂c - N`, so the excess is what is interpolated.
/// Channels whose excess vanishes somewhere in the range (memoryless
/// channels) are always evaluated exactly. Below the table, the value is
/// linear in `p` between `T̂c₀` and the first entry when `T̂c₀` converges.
#[derive(Debug)]
pub struct TabulatedCoherence {
    log_p: Vec<f64>,
    log_excess: Vec<f64>,
    slopes: Vec<f64>,
    tc0: Option<f64>,
    exact: ExactCoherence,
}

impl TabulatedCoherence {
    /// Default table: `1e-12 ≤ p ≤ 1e8`, 24 points per decade.
    pub fn new(corr: TemporalCorrelation, n_bins: usize, opts: EctOptions) -> Result<Self> {
        Self::with_range(corr, n_bins, opts, 1e-12, 1e8, 24)
    }

    pub fn with_range(
        corr: TemporalCorrelation,
        n_bins: usize,
        opts: EctOptions,
        p_lo: f64,
        p_hi: f64,
        per_decade: usize,
    ) -> Result<Self> {
        if !(p_lo > 0.0 && p_hi > p_lo) || per_decade == 0 {
            return Err(Error::InvalidParameter("invalid coherence table range".into()));
        }
        let exact = ExactCoherence::new(corr, n_bins, opts)?;
        let decades = (p_hi / p_lo).log10();
        let count = (decades * per_decade as f64).ceil() as usize + 1;
        let (l0, l1) = (p_lo.ln(), p_hi.ln());
        let log_p: Vec<f64> = (0..count)
            .map(|i| l0 + (l1 - l0) * i as f64 / (count - 1) as f64)
            .collect();
        let values: Vec<Result<f64>> = log_p
            .par_iter()
            .map(|&lp| effective_coherence_time_alt(&exact.corr, n_bins, lp.exp(), &exact.opts).map(|r| r.value))
            .collect();
        let n = n_bins as f64;
        let excess = values.into_iter().collect::<Result<Vec<_>>>()?;
        if excess.iter().any(|&v| !(v - n > 1e-9 * n)) {
            return Ok(Self {
                log_p: Vec::new(),
                log_excess: Vec::new(),
                slopes: Vec::new(),
                tc0: None,
                exact,
            });
        }
        let tc0 = tc0_low_snr(&exact.corr, n_bins, &exact.opts).ok().map(|r| r.value);
        let log_excess: Vec<f64> = excess.iter().map(|&v| (v - n).ln()).collect();
        let slopes = pchip_slopes(&log_p, &log_excess);
        Ok(Self {
            log_p,
            log_excess,
            slopes,
            tc0,
            exact,
        })
    }
}

impl CoherenceTime for TabulatedCoherence {
    fn n_bins(&self) -> usize {
        self.exact.n_bins
    }

    fn tc(&self, p_x: f64) -> Result<f64> {
        check_snr(p_x)?;
        let x = p_x.ln();
        let n = self.log_p.len();
        if n >= 2 && x < self.log_p[0] {
            if let Some(t0) = self.tc0 {
                let p_lo = self.log_p[0].exp();
                let t_lo = self.exact.n_bins as f64 + self.log_excess[0].exp();
                return Ok(t0 + (t_lo - t0) * (p_x / p_lo));
            }
        }
        if n < 2 || x < self.log_p[0] || x > self.log_p[n - 1] {
            return self.exact.tc(p_x);
        }
        let i = match self.log_p.partition_point(|&v| v <= x) {
            0 => 0,
            j if j >= n => n - 2,
            j => j - 1,
        };
        let h = self.log_p[i + 1] - self.log_p[i];
        let t = (x - self.log_p[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let y = (2.0 * t3 - 3.0 * t2 + 1.0) * self.log_excess[i]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * self.log_excess[i + 1]
            + (t3 - t2) * h * self.slopes[i + 1];
        Ok(self.exact.n_bins as f64 + y.exp())
    }
}

// Fritsch-Carlson derivatives for a shape-preserving Hermite cubic.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}
