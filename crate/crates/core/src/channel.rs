//! Channel descriptions and the covariance structures derived from them.
//!
//! Frequency-domain channel vectors are `H̃ = Φ h` with
//! `Φ[m, l] = e^{2jπml/N} / √N`, so the bin covariance is `Φ C Φ†`.

use crate::error::{Error, Result};
use crate::linalg::Durbin;
use crate::special::clarke_rho;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Symbol-lag autocorrelation shared by every tap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalCorrelation {
    /// `ρ(lag) = γ^lag`.
    Ar1 { gamma: f64 },
    /// `ρ(lag) = J0(2π f_d T_s lag)`.
    Clarke { normalized_doppler: f64 },
    /// Middle symbol of a block of `block_symbols` symbols: all `d` past
    /// symbols of the block are fully correlated with the current one.
    BlockFadingMiddle { block_symbols: usize },
    /// Explicit sequence indexed by lag, starting with `ρ(0) = 1`.
    Custom { rho: Vec<f64> },
}

impl TemporalCorrelation {
    pub fn validate(&self) -> Result<()> {
        match self {
            TemporalCorrelation::Ar1 { gamma } => {
                if !(0.0..1.0).contains(gamma) {
                    return Err(Error::InvalidParameter(format!(
                        "AR1 gamma must lie in [0, 1), got {gamma}"
                    )));
                }
            }
            TemporalCorrelation::Clarke { normalized_doppler } => {
                if !(*normalized_doppler >= 0.0 && normalized_doppler.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "Clarke normalized Doppler must be finite and >= 0, got {normalized_doppler}"
                    )));
                }
            }
            TemporalCorrelation::BlockFadingMiddle { block_symbols } => {
                if *block_symbols == 0 {
                    return Err(Error::InvalidParameter("block length must be positive".into()));
                }
            }
            TemporalCorrelation::Custom { rho } => {
                if rho.is_empty() || (rho[0] - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter("custom rho must start with rho(0) = 1".into()));
                }
                if let Some(bad) = rho.iter().find(|r| !r.is_finite() || r.abs() > 1.0 + 1e-12) {
                    return Err(Error::InvalidParameter(format!(
                        "custom rho entries must be finite with |rho| <= 1, found {bad}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Correlation at a symbol lag. Block fading reports the middle-symbol
    /// view: 1 up to `floor((B-1)/2)` and 0 beyond.
    pub fn rho(&self, lag: usize) -> Result<f64> {
        Ok(match self {
            TemporalCorrelation::Ar1 { gamma } => {
                if lag == 0 {
                    1.0
                } else {
                    gamma.powi(lag.min(i32::MAX as usize) as i32)
                }
            }
            TemporalCorrelation::Clarke { normalized_doppler } => clarke_rho(*normalized_doppler, lag),
            TemporalCorrelation::BlockFadingMiddle { block_symbols } => {
                if lag <= (block_symbols - 1) / 2 {
                    1.0
                } else {
                    0.0
                }
            }
            TemporalCorrelation::Custom { rho } => *rho.get(lag).ok_or(Error::CorrelationTooShort {
                requested: lag,
                available: rho.len(),
            })?,
        })
    }

    /// Largest lag available, `None` when unbounded.
    pub fn max_lag(&self) -> Option<usize> {
        match self {
            TemporalCorrelation::Custom { rho } => Some(rho.len() - 1),
            _ => None,
        }
    }

    /// `d = (B - 1)/2` for an odd block fading length; errors on even lengths.
    pub fn block_depth(&self) -> Option<Result<usize>> {
        match self {
            TemporalCorrelation::BlockFadingMiddle { block_symbols } => Some(if block_symbols % 2 == 1 {
                Ok((block_symbols - 1) / 2)
            } else {
                Err(Error::InvalidParameter(format!(
                    "block fading middle symbol needs an odd block length, got {block_symbols}"
                )))
            }),
            _ => None,
        }
    }
}

/// Tap powers (diagonal of the tap covariance) and the optional
/// line-of-sight mean carried by tap 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapProfile {
    pub powers: Vec<f64>,
    #[serde(default)]
    pub los_mean: Option<Complex64>,
}

impl TapProfile {
    pub fn equal(l: usize) -> Self {
        Self {
            powers: vec![1.0 / l as f64; l],
            los_mean: None,
        }
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.powers.is_empty() {
            return Err(Error::InvalidParameter("tap profile needs at least one tap".into()));
        }
        if self.powers.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter(
                "tap powers must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = self.powers.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "tap powers must sum to 1, got {total}"
            )));
        }
        if let Some(m) = self.los_mean {
            if !(m.re.is_finite() && m.im.is_finite()) {
                return Err(Error::InvalidParameter("LOS mean must be finite".into()));
            }
        }
        Ok(())
    }

    /// `|E[h_0]|²`.
    pub fn los_power(&self) -> f64 {
        self.los_mean.map_or(0.0, |m| m.norm_sqr())
    }

    pub fn is_zero_mean(&self) -> bool {
        self.los_power() == 0.0
    }
}

/// Full WSSUS channel description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub n_bins: usize,
    pub taps: TapProfile,
    pub corr: TemporalCorrelation,
}

impl ChannelSpec {
    pub fn new(n_bins: usize, taps: TapProfile, corr: TemporalCorrelation) -> Result<Self> {
        let spec = Self { n_bins, taps, corr };
        spec.validate()?;
        Ok(spec)
    }

    /// `n_bins` bins, `n_taps` equal-power zero-mean taps.
    pub fn equal_taps(n_bins: usize, n_taps: usize, corr: TemporalCorrelation) -> Result<Self> {
        Self::new(n_bins, TapProfile::equal(n_taps), corr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins == 0 {
            return Err(Error::InvalidParameter("n_bins must be positive".into()));
        }
        self.taps.validate()?;
        if self.taps.len() > self.n_bins {
            return Err(Error::InvalidParameter(format!(
                "L = {} taps exceed N = {} bins",
                self.taps.len(),
                self.n_bins
            )));
        }
        self.corr.validate()
    }

    pub fn n_taps(&self) -> usize {
        self.taps.len()
    }

    /// Mean of each frequency bin, `E[h_0] / √N`.
    pub fn bin_mean(&self) -> DVector<Complex64> {
        let m = self.taps.los_mean.unwrap_or_default() / (self.n_bins as f64).sqrt();
        DVector::from_element(self.n_bins, m)
    }

    /// Mean of the tap vector.
    pub fn tap_mean(&self) -> DVector<Complex64> {
        let mut v = DVector::zeros(self.n_taps());
        v[0] = self.taps.los_mean.unwrap_or_default();
        v
    }
}

/// Power constraint on the transmitted OFDM symbols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerConstraint {
    Peak { p_x: f64 },
    Quadratic { p_x: f64, alpha: f64 },
}

impl PowerConstraint {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PowerConstraint::Peak { p_x } => check_snr(p_x),
            PowerConstraint::Quadratic { p_x, alpha } => {
                check_snr(p_x)?;
                if !(alpha >= 1.0) || !alpha.is_finite() {
                    return Err(Error::InvalidParameter(format!("alpha must be >= 1, got {alpha}")));
                }
                Ok(())
            }
        }
    }

    pub fn p_x(&self) -> f64 {
        match *self {
            PowerConstraint::Peak { p_x } | PowerConstraint::Quadratic { p_x, .. } => p_x,
        }
    }

    /// Same constraint at a different SNR.
    pub fn with_p_x(&self, p_x: f64) -> Self {
        match *self {
            PowerConstraint::Peak { .. } => PowerConstraint::Peak { p_x },
            PowerConstraint::Quadratic { alpha, .. } => PowerConstraint::Quadratic { p_x, alpha },
        }
    }

    pub fn kind(&self) -> ConstraintKind {
        match self {
            PowerConstraint::Peak { .. } => ConstraintKind::Peak,
            PowerConstraint::Quadratic { .. } => ConstraintKind::Quadratic,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            PowerConstraint::Peak { .. } => None,
            PowerConstraint::Quadratic { alpha, .. } => Some(alpha),
        }
    }
}

/// Which power constraint a bound is evaluated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Peak,
    Quadratic,
}

fn check_snr(p_x: f64) -> Result<()> {
    if !(p_x > 0.0) || !p_x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "p_x must be positive and finite, got {p_x}"
        )));
    }
    Ok(())
}

/// Toeplitz matrix `Δ[i, j] = ρ(|i - j|)` of size `k` (block fading:
/// all-ones of size `min(k, d)`).
pub fn build_delta(corr: &TemporalCorrelation, k: usize) -> Result<DMatrix<f64>> {
    corr.validate()?;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if let Some(depth) = corr.block_depth() {
        let d = depth?.min(k);
        return Ok(DMatrix::from_element(d, d, 1.0));
    }
    let rho = (0..k).map(|lag| corr.rho(lag)).collect::<Result<Vec<_>>>()?;
    check_psd(&rho)?;
    Ok(DMatrix::from_fn(k, k, |i, j| rho[i.abs_diff(j)]))
}

/// Correlations `ρ(k - i)`, `i = 0..k-1`, of the current symbol with the
/// `k` past symbols (block fading: `min(k, d)` ones).
pub fn build_d_vector(corr: &TemporalCorrelation, k: usize) -> Result<DVector<f64>> {
    corr.validate()?;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if let Some(depth) = corr.block_depth() {
        return Ok(DVector::from_element(depth?.min(k), 1.0));
    }
    let mut v = DVector::zeros(k);
    for i in 0..k {
        v[i] = corr.rho(k - i)?;
    }
    Ok(v)
}

const PSD_TOL: f64 = 1e-10;

// Eigenvalues for moderate sizes; above that, Levinson-Durbin on Δ + tol·I,
// which stays positive definite exactly when no eigenvalue is below -tol.
fn check_psd(rho: &[f64]) -> Result<()> {
    let k = rho.len();
    if k <= 512 {
        let m = DMatrix::from_fn(k, k, |i, j| rho[i.abs_diff(j)]);
        let min = SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::NonPsd { min_eigenvalue: min });
        }
        return Ok(());
    }
    let mut d = Durbin::new(rho[0] + PSD_TOL);
    for &r in &rho[1..] {
        d.push(r);
        if !(d.error() > 0.0) {
            return Err(Error::NonPsd {
                min_eigenvalue: -PSD_TOL,
            });
        }
    }
    Ok(())
}

/// The `N × L` map from taps to frequency bins.
pub fn tap_to_bin(n_bins: usize, n_taps: usize) -> DMatrix<Complex64> {
    let scale = 1.0 / (n_bins as f64).sqrt();
    DMatrix::from_fn(n_bins, n_taps, |m, l| {
        let ang = 2.0 * PI * ((m * l) % n_bins) as f64 / n_bins as f64;
        Complex64::from_polar(scale, ang)
    })
}

/// Frequency-domain covariance `Φ diag(powers) Φ†` of one OFDM symbol.
pub fn freq_tap_covariance(spec: &ChannelSpec) -> DMatrix<Complex64> {
    let n = spec.n_bins;
    let phi = tap_to_bin(n, spec.n_taps());
    let mut out = DMatrix::<Complex64>::zeros(n, n);
    for (l, &c) in spec.taps.powers.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let col = phi.column(l);
        for j in 0..n {
            let cj = col[j].conj() * c;
            for i in 0..n {
                out[(i, j)] += col[i] * cj;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn custom_too_short_is_an_error() {
        let c = TemporalCorrelation::Custom { rho: vec![1.0, 0.5] };
        assert!(matches!(c.rho(2), Err(Error::CorrelationTooShort { .. })));
        assert!(build_delta(&c, 3).is_err());
    }

    #[test]
    fn even_block_rejected() {
        let c = TemporalCorrelation::BlockFadingMiddle { block_symbols: 10 };
        assert!(build_delta(&c, 4).is_err());
    }

    #[test]
    fn non_psd_custom_detected() {
        let c = TemporalCorrelation::Custom {
            rho: vec![1.0, 0.9, -0.9],
        };
        assert!(matches!(build_delta(&c, 3), Err(Error::NonPsd { .. })));
    }

    #[test]
    fn tap_count_bounded_by_bins() {
        assert!(ChannelSpec::equal_taps(2, 3, TemporalCorrelation::Ar1 { gamma: 0.5 }).is_err());
    }
}
