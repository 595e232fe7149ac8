//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use fadecap::{ChannelSpec, TapProfile, TemporalCorrelation};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn cn(rng: &mut ChaCha8Rng, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    Complex64::new(
        s * rng.sample::<f64, _>(StandardNormal),
        s * rng.sample::<f64, _>(StandardNormal),
    )
}

pub fn cvec(rng: &mut ChaCha8Rng, n: usize, var: f64) -> CVec {
    DVector::from_fn(n, |_, _| cn(rng, var))
}

pub fn ar1(gamma: f64) -> TemporalCorrelation {
    TemporalCorrelation::Ar1 { gamma }
}

pub fn random_spec(rng: &mut ChaCha8Rng, n: usize, l: usize, gamma: f64, los: bool) -> ChannelSpec {
    let raw: Vec<f64> = (0..l).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let powers = raw.iter().map(|p| p / total).collect();
    let los_mean = los.then(|| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    ChannelSpec::new(n, TapProfile { powers, los_mean }, ar1(gamma)).unwrap()
}

/// Brute-force conditioning in the tap domain: stack h_0..h_k with
/// covariance Δ_{k+1} ⊗ C, observe y_i = √N diag(x_i) Φ h_i + z_i and
/// condition Φ h_k on all outputs.
pub fn tap_domain_oracle(spec: &ChannelSpec, xs: &[CVec], ys: &[CVec]) -> (CVec, CMat) {
    let n = spec.n_bins;
    let l = spec.n_taps();
    let k = xs.len();
    let nf = n as f64;
    let phi = CMat::from_fn(n, l, |m, t| {
        Complex64::from_polar(1.0 / nf.sqrt(), 2.0 * std::f64::consts::PI * (m * t) as f64 / nf)
    });
    let dim = (k + 1) * l;
    let rho = |lag: usize| spec.corr.rho(lag).unwrap();
    let s = CMat::from_fn(dim, dim, |a, b| {
        let (i, ta) = (a / l, a % l);
        let (j, tb) = (b / l, b % l);
        if ta == tb {
            c(rho(i.abs_diff(j)) * spec.taps.powers[ta])
        } else {
            c(0.0)
        }
    });
    let mut mean = CVec::zeros(dim);
    for i in 0..=k {
        mean[i * l] = spec.taps.los_mean.unwrap_or_default();
    }
    let mut b = CMat::zeros(k * n, dim);
    for (i, x) in xs.iter().enumerate() {
        for m in 0..n {
            for t in 0..l {
                b[(i * n + m, i * l + t)] = x[m] * phi[(m, t)] * c(nf.sqrt());
            }
        }
    }
    let mut target = CMat::zeros(n, dim);
    target.view_mut((0, k * l), (n, l)).copy_from(&phi);
    if k == 0 {
        return (&target * &mean, &target * &s * target.adjoint());
    }
    let y = CVec::from_iterator(k * n, ys.iter().flat_map(|v| v.iter().copied()));
    let cov_y = &b * &s * b.adjoint() + CMat::identity(k * n, k * n);
    let cross = &target * &s * b.adjoint();
    let lu = cov_y.lu();
    let gain = lu.solve(&cross.adjoint()).unwrap().adjoint();
    let mu = &target * &mean + &gain * (y - &b * &mean);
    let cov = &target * &s * target.adjoint() - &gain * cross.adjoint();
    (mu, cov)
}

pub fn max_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn vmax_diff(a: &CVec, b: &CVec) -> f64 {
    (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn hermitian_min_eig(m: &CMat) -> f64 {
    let n = m.nrows();
    let re = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let v = m[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    });
    SymmetricEigen::new(re).eigenvalues.min()
}

/// Dense posterior covariance of the tap vector after `k` constant-amplitude
/// symbols with random phases.
pub fn dense_tap_error(spec: &ChannelSpec, p: f64, beta: f64, k: usize, rng: &mut ChaCha8Rng) -> CMat {
    let n = spec.n_bins;
    let amp = (beta * p).sqrt();
    let xs: Vec<CVec> = (0..k)
        .map(|_| DVector::from_fn(n, |_, _| Complex64::from_polar(amp, rng.random_range(0.0..6.3))))
        .collect();
    let ys: Vec<CVec> = (0..k).map(|_| CVec::zeros(n)).collect();
    let (_, cov) = tap_domain_oracle(spec, &xs, &ys);
    // back to taps: h = Φ† H̃ since Φ†Φ = I
    let nf = n as f64;
    let l = spec.n_taps();
    let phi = CMat::from_fn(n, l, |m, t| {
        Complex64::from_polar(1.0 / nf.sqrt(), 2.0 * std::f64::consts::PI * (m * t) as f64 / nf)
    });
    phi.adjoint() * cov * phi
}
