//! Achievable rate of Gaussian signalling with exact sequential MMSE
//! estimation, by simulation and by the constant-amplitude approximation.

use crate::channel::ChannelSpec;
use crate::coherence::CoherenceTime;
use crate::error::{Error, Result};
use crate::estimation::{default_window, wideband_ca_error, FilterOptions, FilterState};
use crate::special::expected_log1p_exp;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    /// Symbols per trial, burn-in included.
    pub n_symbols: usize,
    pub n_trials: usize,
    pub seed: u64,
    /// Burn-in length; defaults to the estimation window of the channel.
    pub window: Option<usize>,
    pub filter: FilterOptions,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_symbols: 4000,
            n_trials: 64,
            seed: 0,
            window: None,
            filter: FilterOptions::default(),
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_symbols == 0 || self.n_trials < 2 {
            return Err(Error::InvalidParameter(
                "Monte Carlo needs n_symbols >= 1 and n_trials >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Simulated rate with its jackknife standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub rate: f64,
    pub std_err: f64,
    /// Average conditional variance per bin.
    pub mean_bin_error: Vec<f64>,
    pub burn_in: usize,
}

/// `(1/N) Σ_m E[log(1 + a_m |u|²)]` with
/// `a_m = p(1 - NΛ_mm) / (1 + NpΛ_mm)`.
pub fn rate_from_bin_errors(p_x: f64, bin_errors: &[f64]) -> f64 {
    let n = bin_errors.len() as f64;
    bin_errors
        .iter()
        .map(|&lam| {
            let a = (p_x * (1.0 - n * lam) / (1.0 + n * p_x * lam)).max(0.0);
            expected_log1p_exp(a)
        })
        .sum::<f64>()
        / n
}

fn draw_symbol(rng: &mut ChaCha8Rng, n: usize, p_x: f64) -> DVector<Complex64> {
    let s = (0.5 * p_x).sqrt();
    DVector::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

// Sum of the predictive bin variances over the counted symbols of one trial.
fn run_trial(spec: &ChannelSpec, p_x: f64, cfg: &McConfig, burn_in: usize, trial: usize) -> Result<Vec<f64>> {
    let n = spec.n_bins;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial as u64);
    let mut acc = vec![0.0; n];
    if let Some(depth) = spec.corr.block_depth() {
        let d = depth?;
        let prior = FilterState::constant_channel(spec)?;
        for _ in 0..cfg.n_symbols {
            let mut st = prior.clone();
            for _ in 0..d {
                st.step_covariance(&draw_symbol(&mut rng, n, p_x))?;
            }
            for (a, v) in acc.iter_mut().zip(st.bin_variances()) {
                *a += v;
            }
        }
        return Ok(acc);
    }
    let mut st = FilterState::new(spec, &cfg.filter)?;
    for k in 0..cfg.n_symbols {
        if k >= burn_in {
            for (a, v) in acc.iter_mut().zip(st.bin_variances()) {
                *a += v;
            }
        }
        st.step_covariance(&draw_symbol(&mut rng, n, p_x))?;
    }
    Ok(acc)
}

/// Rate of i.i.d. `CN(0, p_x)` signalling on all bins with the exact
/// conditional covariance of each symbol given its past.
///
/// Each trial uses its own stream of a seeded ChaCha generator, so the
/// result does not depend on thread scheduling.
pub fn gaussian_rate_simulation(spec: &ChannelSpec, p_x: f64, cfg: &McConfig) -> Result<McEstimate> {
    spec.validate()?;
    cfg.validate()?;
    if !spec.taps.is_zero_mean() {
        return Err(Error::NonZeroMean);
    }
    if !(p_x > 0.0) || !p_x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "p_x must be positive and finite, got {p_x}"
        )));
    }
    let burn_in = match spec.corr.block_depth() {
        Some(_) => 0,
        None => match cfg.window {
            Some(w) => w,
            None => default_window(&spec.corr)?,
        },
    };
    if burn_in >= cfg.n_symbols {
        return Err(Error::InvalidParameter(format!(
            "burn-in of {burn_in} symbols leaves nothing of n_symbols = {}",
            cfg.n_symbols
        )));
    }
    let counted = (cfg.n_symbols - burn_in) as f64;
    let sums = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| run_trial(spec, p_x, cfg, burn_in, t))
        .collect::<Result<Vec<_>>>()?;
    let n = spec.n_bins;
    let t = cfg.n_trials as f64;
    let mut total = vec![0.0; n];
    for s in &sums {
        for (a, v) in total.iter_mut().zip(s) {
            *a += v;
        }
    }
    let mean: Vec<f64> = total.iter().map(|v| v / (t * counted)).collect();
    let rate = rate_from_bin_errors(p_x, &mean);
    let loo: Vec<f64> = sums
        .iter()
        .map(|s| {
            let m: Vec<f64> = total
                .iter()
                .zip(s)
                .map(|(a, v)| (a - v) / ((t - 1.0) * counted))
                .collect();
            rate_from_bin_errors(p_x, &m)
        })
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / t;
    let var = (t - 1.0) / t * loo.iter().map(|r| (r - loo_mean).powi(2)).sum::<f64>();
    Ok(McEstimate {
        rate,
        std_err: var.sqrt(),
        mean_bin_error: mean,
        burn_in,
    })
}

/// Same rate with every bin variance replaced by the constant-amplitude
/// per-bin error of the channel.
pub fn gaussian_rate_approximation(spec: &ChannelSpec, p_x: f64, tc: &dyn CoherenceTime) -> Result<f64> {
    spec.validate()?;
    if !spec.taps.is_zero_mean() {
        return Err(Error::NonZeroMean);
    }
    let lam = wideband_ca_error(spec, p_x, 1.0, tc)?.per_bin;
    Ok(rate_from_bin_errors(p_x, &vec![lam; spec.n_bins]))
}
