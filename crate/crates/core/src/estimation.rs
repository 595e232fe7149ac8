//! Conditional distribution of the current channel given past symbols, and
//! the closed-form error variances that feed the capacity bounds.

use crate::channel::{
    build_d_vector, build_delta, freq_tap_covariance, tap_to_bin, ChannelSpec, ConstraintKind, TemporalCorrelation,
};
use crate::coherence::CoherenceTime;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, quad_form_inv, Durbin};
use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

type CVec = DVector<Complex64>;
type CMat = DMatrix<Complex64>;

/// Gaussian posterior `(μ̃_k, Λ̃_k)` of the current frequency-domain channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalState {
    pub mu: CVec,
    pub cov: CMat,
    pub history_len: usize,
}

impl ConditionalState {
    pub fn prior(spec: &ChannelSpec) -> Self {
        Self {
            mu: spec.bin_mean(),
            cov: freq_tap_covariance(spec),
            history_len: 0,
        }
    }

    /// Diagonal of `Λ̃_k`, the per-bin error variances.
    pub fn bin_variances(&self) -> Vec<f64> {
        (0..self.cov.nrows()).map(|m| self.cov[(m, m)].re).collect()
    }
}

/// Truncated complex Gaussian on `η ≤ |z|² ≤ ξ` with its moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncGaussParams {
    pub eta: f64,
    pub xi: f64,
    pub theta: f64,
    pub p_z: f64,
    pub m4: f64,
}

impl TruncGaussParams {
    /// `xi = f64::INFINITY` removes the upper threshold.
    pub fn new(eta: f64, xi: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::InvalidThreshold(format!(
                "eta must be finite and >= 0, got {eta}"
            )));
        }
        if !(xi > eta) {
            return Err(Error::InvalidThreshold(format!("xi = {xi} must exceed eta = {eta}")));
        }
        let e_eta = (-eta).exp();
        let (theta, p_z, m4) = if xi.is_infinite() {
            (e_eta, 1.0 + eta, 2.0 + eta * eta + 2.0 * eta)
        } else {
            let e_xi = (-xi).exp();
            let theta = -e_eta * (eta - xi).exp_m1();
            let p_z = 1.0 + (eta * e_eta - xi * e_xi) / theta;
            let m4 = 2.0 + ((eta * eta + 2.0 * eta) * e_eta - (xi * xi + 2.0 * xi) * e_xi) / theta;
            (theta, p_z, m4)
        };
        Ok(Self {
            eta,
            xi,
            theta,
            p_z,
            m4,
        })
    }
}

/// `ν_qd(η) = (1 + η) log(1 + 1/η)`.
pub fn nu_qd(eta: f64) -> f64 {
    (1.0 + eta) * (1.0 / eta).ln_1p()
}

/// `ν_pk(η, ξ) = ξ log(1 + 1/η) / (1 - e^{η-ξ})`.
pub fn nu_pk(eta: f64, xi: f64) -> f64 {
    xi * (1.0 / eta).ln_1p() / -(eta - xi).exp_m1()
}

fn check_dims(spec: &ChannelSpec, vs: &[CVec], what: &str) -> Result<()> {
    if let Some((i, v)) = vs.iter().enumerate().find(|(_, v)| v.len() != spec.n_bins) {
        return Err(Error::DimensionMismatch(format!(
            "{what}[{i}] has length {}, expected {}",
            v.len(),
            spec.n_bins
        )));
    }
    Ok(())
}

/// Exact joint-Gaussian conditioning of `H̃_k` on `(X̃_i, Ỹ_i)`, `i < k`,
/// with `Ỹ_i = √N diag(X̃_i) H̃_i + Z̃_i`.
pub fn conditional_distribution(
    spec: &ChannelSpec,
    past_inputs: &[CVec],
    past_outputs: &[CVec],
) -> Result<ConditionalState> {
    spec.validate()?;
    if past_inputs.len() != past_outputs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} inputs vs {} outputs",
            past_inputs.len(),
            past_outputs.len()
        )));
    }
    check_dims(spec, past_inputs, "past_inputs")?;
    check_dims(spec, past_outputs, "past_outputs")?;
    let k = past_inputs.len();
    if k == 0 {
        return Ok(ConditionalState::prior(spec));
    }
    let n = spec.n_bins;
    let sqrt_n = (n as f64).sqrt();
    let c = freq_tap_covariance(spec);
    let rho = (0..=k).map(|lag| spec.corr.rho(lag)).collect::<Result<Vec<_>>>()?;
    let mean = spec.bin_mean();

    let dim = k * n;
    let mut s = CMat::zeros(dim, dim);
    for bi in 0..k {
        for bj in 0..k {
            let r = rho[bi.abs_diff(bj)];
            if r == 0.0 {
                continue;
            }
            for m in 0..n {
                let xm = past_inputs[bi][m];
                for mm in 0..n {
                    s[(bi * n + m, bj * n + mm)] = xm * c[(m, mm)] * past_inputs[bj][mm].conj() * (n as f64 * r);
                }
            }
        }
    }
    for i in 0..dim {
        s[(i, i)] += Complex64::new(1.0, 0.0);
    }
    let mut g = CMat::zeros(dim, n);
    let mut resid = CVec::zeros(dim);
    for bi in 0..k {
        let r = rho[k - bi];
        for m in 0..n {
            let xm = past_inputs[bi][m];
            for mm in 0..n {
                g[(bi * n + m, mm)] = xm * c[(m, mm)] * (sqrt_n * r);
            }
            resid[bi * n + m] = past_outputs[bi][m] - xm * mean[m] * sqrt_n;
        }
    }
    let ch = Cholesky::new(s).ok_or_else(|| Error::Factorization("output covariance not positive definite".into()))?;
    let s_inv_g = ch.solve(&g);
    let s_inv_r = ch.solve(&resid);
    let gh = g.adjoint();
    let mu = mean + &gh * s_inv_r;
    let mut cov = c - &gh * s_inv_g;
    hermitize(&mut cov);
    Ok(ConditionalState {
        mu,
        cov,
        history_len: k,
    })
}

fn hermitize(m: &mut CMat) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in i + 1..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// Settings of the sequential estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterOptions {
    /// Largest autoregressive order of the state model.
    pub max_order: usize,
    /// Partial autocorrelations below this are treated as zero.
    pub pacf_tol: f64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            max_order: 32,
            pacf_tol: 1e-6,
        }
    }
}

/// Autoregressive model `h_k = Σ φ_i h_{k-i} + w_k` matching `ρ(0..=p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub phi: Vec<f64>,
    /// Innovation variance relative to the tap power.
    pub innovation: f64,
}

/// Yule-Walker fit with the order set by the last partial autocorrelation
/// above `pacf_tol` (up to `max_order`).
pub fn fit_ar(corr: &TemporalCorrelation, opts: &FilterOptions) -> Result<ArModel> {
    if let TemporalCorrelation::BlockFadingMiddle { .. } = corr {
        return Err(Error::InvalidParameter(
            "block fading is not stationary and has no sequential model".into(),
        ));
    }
    let cap = corr.max_lag().map_or(opts.max_order, |m| m.min(opts.max_order)).max(1);
    let mut probe = Durbin::new(1.0);
    let mut order = 0;
    for lag in 1..=cap {
        let kappa = probe.push(corr.rho(lag)?);
        if kappa.abs() > opts.pacf_tol {
            order = lag;
        }
        if probe.error() <= 1e-12 {
            break;
        }
    }
    let mut d = Durbin::new(1.0);
    for lag in 1..=order {
        d.push(corr.rho(lag)?);
    }
    Ok(ArModel {
        phi: d.coeffs().to_vec(),
        innovation: d.error().max(0.0),
    })
}

/// State of the sequential (Kalman) estimator: the joint posterior of the
/// last `p` tap vectors, predicted one symbol ahead.
#[derive(Debug, Clone)]
pub struct FilterState {
    model: ArModel,
    n_bins: usize,
    n_taps: usize,
    phi_map: CMat,
    tap_mean: CVec,
    powers: Vec<f64>,
    mean: CVec,
    cov: CMat,
    history_len: usize,
}

impl FilterState {
    /// Prior state before any symbol has been observed.
    pub fn new(spec: &ChannelSpec, opts: &FilterOptions) -> Result<Self> {
        spec.validate()?;
        let model = fit_ar(&spec.corr, opts)?;
        Self::from_model(spec, model)
    }

    /// Prior state of a channel that stays fixed over all observed symbols
    /// (one block of a block-fading channel).
    pub fn constant_channel(spec: &ChannelSpec) -> Result<Self> {
        spec.validate()?;
        Self::from_model(
            spec,
            ArModel {
                phi: vec![1.0],
                innovation: 0.0,
            },
        )
    }

    fn from_model(spec: &ChannelSpec, model: ArModel) -> Result<Self> {
        let p = model.phi.len().max(1);
        let l = spec.n_taps();
        let rho = if p == 1 {
            vec![1.0]
        } else {
            (0..p).map(|lag| spec.corr.rho(lag)).collect::<Result<Vec<_>>>()?
        };
        let tap_mean = spec.tap_mean();
        let mut mean = CVec::zeros(p * l);
        let mut cov = CMat::zeros(p * l, p * l);
        for i in 0..p {
            mean.rows_mut(i * l, l).copy_from(&tap_mean);
            for j in 0..p {
                let r = rho[i.abs_diff(j)];
                for (t, &c) in spec.taps.powers.iter().enumerate() {
                    cov[(i * l + t, j * l + t)] = Complex64::new(r * c, 0.0);
                }
            }
        }
        Ok(Self {
            model,
            n_bins: spec.n_bins,
            n_taps: l,
            phi_map: tap_to_bin(spec.n_bins, l),
            tap_mean,
            powers: spec.taps.powers.clone(),
            mean,
            cov,
            history_len: 0,
        })
    }

    pub fn model(&self) -> &ArModel {
        &self.model
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    fn order(&self) -> usize {
        self.model.phi.len().max(1)
    }

    /// Predictive tap-domain covariance of the current symbol.
    pub fn tap_covariance(&self) -> CMat {
        let l = self.n_taps;
        self.cov.view((0, 0), (l, l)).into_owned()
    }

    /// Predictive distribution of the current frequency-domain channel.
    pub fn conditional_state(&self) -> ConditionalState {
        let l = self.n_taps;
        let top = self.mean.rows(0, l);
        let mu = &self.phi_map * top;
        let mut cov = &self.phi_map * self.tap_covariance() * self.phi_map.adjoint();
        hermitize(&mut cov);
        ConditionalState {
            mu,
            cov,
            history_len: self.history_len,
        }
    }

    /// Diagonal of the predictive bin covariance.
    pub fn bin_variances(&self) -> Vec<f64> {
        let l = self.n_taps;
        (0..self.n_bins)
            .map(|m| {
                let mut acc = 0.0;
                for a in 0..l {
                    let fa = self.phi_map[(m, a)];
                    for b in 0..l {
                        acc += (fa * self.cov[(a, b)] * self.phi_map[(m, b)].conj()).re;
                    }
                }
                acc
            })
            .collect()
    }

    // M = G†G with G = √N diag(x) Φ; Toeplitz in the tap index.
    fn information(&self, x: &CVec) -> CMat {
        let (n, l) = (self.n_bins, self.n_taps);
        let pw: Vec<f64> = x.iter().map(|v| v.norm_sqr()).collect();
        let mut diag_sum = vec![Complex64::new(0.0, 0.0); 2 * l - 1];
        for (s, slot) in diag_sum.iter_mut().enumerate() {
            let shift = s as isize - (l as isize - 1);
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, &w) in pw.iter().enumerate() {
                if w != 0.0 {
                    let ang =
                        2.0 * std::f64::consts::PI * ((m as isize * shift).rem_euclid(n as isize)) as f64 / n as f64;
                    acc += Complex64::from_polar(w, ang);
                }
            }
            *slot = acc;
        }
        CMat::from_fn(l, l, |a, b| diag_sum[b + l - 1 - a])
    }

    fn measure(&mut self, x: &CVec, y: Option<&CVec>) -> Result<()> {
        if x.len() != self.n_bins || y.is_some_and(|y| y.len() != self.n_bins) {
            return Err(Error::DimensionMismatch(format!(
                "symbol length must be {}",
                self.n_bins
            )));
        }
        let l = self.n_taps;
        let m_info = self.information(x);
        if m_info.iter().all(|v| v.norm_sqr() == 0.0) {
            return Ok(());
        }
        let dim = self.cov.nrows();
        let p_col = self.cov.columns(0, l).into_owned();
        let p_top = p_col.rows(0, l).into_owned();
        let system = CMat::identity(l, l) + &m_info * &p_top;
        let lu = system.lu();
        let rhs = &m_info * p_col.adjoint();
        let x_gain = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Factorization("I + M P singular".into()))?;
        if let Some(y) = y {
            let sqrt_n = (self.n_bins as f64).sqrt();
            let top = self.mean.rows(0, l).into_owned();
            let pred = (&self.phi_map * top).component_mul(x) * Complex64::new(sqrt_n, 0.0);
            let innov = y - pred;
            let g_h_innov =
                self.phi_map.adjoint() * x.map(|v| v.conj()).component_mul(&innov) * Complex64::new(sqrt_n, 0.0);
            let w = lu
                .solve(&g_h_innov)
                .ok_or_else(|| Error::Factorization("I + M P singular".into()))?;
            self.mean += &p_col * w;
        }
        self.cov -= &p_col * x_gain;
        debug_assert_eq!(self.cov.nrows(), dim);
        hermitize(&mut self.cov);
        Ok(())
    }

    fn predict(&mut self) {
        let l = self.n_taps;
        let p = self.order();
        let dim = p * l;
        let phi = if self.model.phi.is_empty() {
            vec![0.0]
        } else {
            self.model.phi.clone()
        };
        // Transition A: top block Σ φ_i s_i, lower blocks shift down.
        let apply = |v: &CMat| -> CMat {
            let cols = v.ncols();
            let mut out = CMat::zeros(dim, cols);
            for (i, &f) in phi.iter().enumerate() {
                let blk = v.rows(i * l, l) * Complex64::new(f, 0.0);
                let mut top = out.rows_mut(0, l);
                top += blk;
            }
            for i in 1..p {
                out.rows_mut(i * l, l).copy_from(&v.rows((i - 1) * l, l));
            }
            out
        };
        let ap = apply(&self.cov);
        let mut new_cov = apply(&ap.adjoint()).adjoint();
        for (t, &c) in self.powers.iter().enumerate() {
            new_cov[(t, t)] += Complex64::new(self.model.innovation * c, 0.0);
        }
        hermitize(&mut new_cov);
        let mut dev = self.mean.clone();
        for i in 0..p {
            let mut blk = dev.rows_mut(i * l, l);
            blk -= &self.tap_mean;
        }
        let dev_next = apply(&CMat::from_column_slice(dim, 1, dev.as_slice()));
        let mut mean = CVec::from_column_slice(dev_next.as_slice());
        for i in 0..p {
            let mut blk = mean.rows_mut(i * l, l);
            blk += &self.tap_mean;
        }
        self.mean = mean;
        self.cov = new_cov;
        self.history_len += 1;
    }

    /// Covariance-only step with input `x` (the error covariance does not
    /// depend on the received values).
    pub fn step_covariance(&mut self, x: &CVec) -> Result<()> {
        self.measure(x, None)?;
        self.predict();
        Ok(())
    }

    /// Full step with input `x` and output `y`.
    pub fn step(&mut self, x: &CVec, y: &CVec) -> Result<()> {
        self.measure(x, Some(y))?;
        self.predict();
        Ok(())
    }
}

/// Conditions on one more symbol `(x_k, y_k)` and predicts the next one.
pub fn recursive_update(state: &FilterState, spec: &ChannelSpec, x_k: &CVec, y_k: &CVec) -> Result<FilterState> {
    if spec.n_bins != state.n_bins || spec.n_taps() != state.n_taps {
        return Err(Error::DimensionMismatch("state does not match channel spec".into()));
    }
    let mut next = state.clone();
    next.step(x_k, y_k)?;
    Ok(next)
}

/// Smallest lag `W` with `Σ_{l>W} ρ(l)² < 1e-6`, capped at 4096.
pub fn default_window(corr: &TemporalCorrelation) -> Result<usize> {
    const CAP: usize = 4096;
    if let Some(d) = corr.block_depth() {
        return d;
    }
    let upto = corr.max_lag().map_or(CAP + 1, |m| m.min(CAP + 1));
    let sq: Vec<f64> = (1..=upto).map(|l| corr.rho(l).map(|r| r * r)).collect::<Result<_>>()?;
    let mut tail: f64 = sq.iter().sum();
    for (w, s) in sq.iter().enumerate() {
        if tail < 1e-6 {
            return Ok(w);
        }
        tail -= s;
    }
    Ok(upto.min(CAP))
}

/// Per-tap and per-bin error variances under wideband constant-amplitude
/// signalling.
#[derive(Debug, Clone, PartialEq)]
pub struct CaError {
    pub per_tap: Vec<f64>,
    pub per_bin: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

/// `Λ_ll = 1 / (1/c_l + (βp/2)(T̂c(βp c_l) - N))`, zero for empty taps;
/// per bin `(1/N) Σ_l Λ_ll`.
pub fn wideband_ca_error(spec: &ChannelSpec, p: f64, beta: f64, tc: &dyn CoherenceTime) -> Result<CaError> {
    check_positive("p", p)?;
    check_positive("beta", beta)?;
    let n = spec.n_bins as f64;
    let per_tap = spec
        .taps
        .powers
        .iter()
        .map(|&c| {
            if c == 0.0 {
                return Ok(0.0);
            }
            let t = tc.tc(beta * p * c)?;
            Ok(1.0 / (1.0 / c + 0.5 * beta * p * (t - n)))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_bin = per_tap.iter().sum::<f64>() / n;
    Ok(CaError { per_tap, per_bin })
}

/// Per-tap error after `k` past symbols of constant amplitude
/// `|x_m|² = βp`: `c_l - Nβp c_l² D†(Nβp c_l Δ + I)⁻¹ D`.
pub fn wideband_ca_error_finite(spec: &ChannelSpec, p: f64, beta: f64, k: usize) -> Result<Vec<f64>> {
    check_positive("p", p)?;
    check_positive("beta", beta)?;
    if k == 0 {
        return Ok(spec.taps.powers.clone());
    }
    let delta = build_delta(&spec.corr, k)?;
    let d = build_d_vector(&spec.corr, k)?;
    let s = spec.n_bins as f64 * beta * p;
    spec.taps
        .powers
        .iter()
        .map(|&c| {
            if c == 0.0 {
                return Ok(0.0);
            }
            let mut m = &delta * (s * c);
            for i in 0..m.nrows() {
                m[(i, i)] += 1.0;
            }
            let ch = cholesky_with_jitter(m).ok_or_else(|| Error::Factorization("N βp c Δ + I".into()))?;
            Ok(c - s * c * c * quad_form_inv(&ch, &d))
        })
        .collect()
}

/// Equal-power upper bound on the wideband per-bin error,
/// `(1/N) / (1 + (βp/2L)(T̂c(βp) - N))`.
pub fn wideband_ca_bound(spec: &ChannelSpec, p: f64, beta: f64, tc: &dyn CoherenceTime) -> Result<f64> {
    check_positive("p", p)?;
    check_positive("beta", beta)?;
    let n = spec.n_bins as f64;
    let l = spec.n_taps() as f64;
    let t = tc.tc(beta * p)?;
    Ok(1.0 / n / (1.0 + beta * p / (2.0 * l) * (t - n)))
}

/// Error variance of a single active bin, `(1/N) / (1 + (p/2)(T̂c(p) - N))`.
pub fn narrowband_ca_error(spec: &ChannelSpec, p: f64, tc: &dyn CoherenceTime) -> Result<f64> {
    check_positive("p", p)?;
    let n = spec.n_bins as f64;
    let t = tc.tc(p)?;
    Ok(1.0 / n / (1.0 + 0.5 * p * (t - n)))
}

/// Lower bound on the conditional bin variance under the peak constraint.
pub fn peak_error_floor(spec: &ChannelSpec, p_x: f64, tc: &dyn CoherenceTime) -> Result<f64> {
    narrowband_ca_error(spec, p_x, tc)
}

/// `α (1 - 1/(1 + (p/2)(T̂c(p) - N)))²`.
pub fn quad_moment_bound(spec: &ChannelSpec, p_x: f64, alpha: f64, tc: &dyn CoherenceTime) -> Result<f64> {
    check_positive("p_x", p_x)?;
    if !(alpha >= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 1, got {alpha}")));
    }
    let n = spec.n_bins as f64;
    let g = 0.5 * p_x * (tc.tc(p_x)? - n);
    let frac = g / (1.0 + g);
    Ok(alpha * frac * frac)
}

/// Bound on the per-bin error variance under truncated-Gaussian signalling
/// on `r` bins with duty cycle `1/β`.
///
/// The quadratic branch uses `ν_qd(η)` (upper threshold removed); the peak
/// branch uses `ν_pk(η, ξ)` with `β = 1`.
pub fn tg_error_bound(
    spec: &ChannelSpec,
    p_x: f64,
    r: usize,
    beta: f64,
    tg: &TruncGaussParams,
    kind: ConstraintKind,
    tc: &dyn CoherenceTime,
) -> Result<f64> {
    check_positive("p_x", p_x)?;
    check_positive("beta", beta)?;
    let n_bins = spec.n_bins;
    if r == 0 || r > n_bins {
        return Err(Error::InvalidParameter(format!("r must lie in 1..={n_bins}, got {r}")));
    }
    if !(tg.eta > 0.0) {
        return Err(Error::InvalidThreshold(format!("eta must be > 0, got {}", tg.eta)));
    }
    let (scaled, nu) = match kind {
        ConstraintKind::Quadratic => (beta * p_x, nu_qd(tg.eta)),
        ConstraintKind::Peak => {
            if !tg.xi.is_finite() {
                return Err(Error::InvalidThreshold("peak constraint needs a finite xi".into()));
            }
            (p_x, nu_pk(tg.eta, tg.xi))
        }
    };
    let n = n_bins as f64;
    let zeta = scaled / nu;
    let gain = if r == n_bins {
        let l = spec.n_taps() as f64;
        zeta / (2.0 * l) * (tc.tc(zeta)? - n)
    } else {
        let rf = r as f64;
        zeta / (2.0 * rf) * (tc.tc(zeta / rf)? - n)
    };
    Ok(1.0 / n / (1.0 + gain))
}
