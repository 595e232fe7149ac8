use fadecap::estimation::{
    narrowband_ca_error, nu_qd, peak_error_floor, quad_moment_bound, tg_error_bound, wideband_ca_bound,
    wideband_ca_error, wideband_ca_error_finite,
};
use fadecap::special::exp1;
use fadecap::{
    conditional_distribution, recursive_update, ChannelSpec, ConditionalState, ConstraintKind, EctOptions, Error,
    ExactCoherence, FilterOptions, FilterState, FixedCoherence, TapProfile, TemporalCorrelation, TruncGaussParams,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

mod common;

use common::*;

#[test]
fn prior_at_zero_history() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = random_spec(&mut rng, 4, 2, 0.7, true);
    let st = conditional_distribution(&spec, &[], &[]).unwrap();
    assert_eq!(st, ConditionalState::prior(&spec));
    assert_eq!(st.history_len, 0);
}

#[test]
fn scalar_wiener_example() {
    for (g, p) in [(0.5, 1.0), (0.9, 3.0), (0.99, 0.01)] {
        let spec = ChannelSpec::equal_taps(1, 1, ar1(g)).unwrap();
        let x = DVector::from_element(1, c(f64::sqrt(p)));
        let y = DVector::from_element(1, c(0.3));
        let st = conditional_distribution(&spec, &[x], &[y]).unwrap();
        let want = 1.0 - g * g * p / (p + 1.0);
        assert!((st.cov[(0, 0)].re - want).abs() < 1e-14);
    }
}

#[test]
fn batch_matches_tap_domain_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..50 {
        let n = rng.random_range(1..=4);
        let l = rng.random_range(1..=n.min(3));
        let k = rng.random_range(0..=8);
        let g = rng.random_range(0.0..0.99);
        let spec = random_spec(&mut rng, n, l, g, case % 2 == 0);
        let p = 10f64.powf(rng.random_range(-1.0..1.0));
        let xs: Vec<CVec> = (0..k).map(|_| cvec(&mut rng, n, p)).collect();
        let ys: Vec<CVec> = (0..k).map(|_| cvec(&mut rng, n, 2.0)).collect();
        let st = conditional_distribution(&spec, &xs, &ys).unwrap();
        let (mu, cov) = tap_domain_oracle(&spec, &xs, &ys);
        assert!(max_diff(&st.cov, &cov) < 1e-9, "case {case}");
        assert!(vmax_diff(&st.mu, &mu) < 1e-9, "case {case}");
    }
}

#[test]
fn dimension_errors() {
    let spec = ChannelSpec::equal_taps(3, 1, ar1(0.5)).unwrap();
    let x = CVec::zeros(3);
    let short = CVec::zeros(2);
    assert!(matches!(
        conditional_distribution(&spec, std::slice::from_ref(&x), &[]),
        Err(Error::DimensionMismatch(_))
    ));
    assert!(matches!(
        conditional_distribution(&spec, std::slice::from_ref(&x), std::slice::from_ref(&short)),
        Err(Error::DimensionMismatch(_))
    ));
    let st = FilterState::new(&spec, &FilterOptions::default()).unwrap();
    assert!(recursive_update(&st, &spec, &short, &x).is_err());
}

#[test]
fn kalman_matches_batch_for_ar1() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (n, l, steps) in [(2, 2, 1), (2, 2, 3), (4, 3, 6), (3, 1, 5)] {
        let spec = random_spec(&mut rng, n, l, 0.85, true);
        let xs: Vec<CVec> = (0..steps).map(|_| cvec(&mut rng, n, 1.5)).collect();
        let ys: Vec<CVec> = (0..steps).map(|_| cvec(&mut rng, n, 2.0)).collect();
        let mut st = FilterState::new(&spec, &FilterOptions::default()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            st = recursive_update(&st, &spec, x, y).unwrap();
        }
        let batch = conditional_distribution(&spec, &xs, &ys).unwrap();
        let seq = st.conditional_state();
        assert_eq!(seq.history_len, steps);
        assert!(max_diff(&seq.cov, &batch.cov) < 1e-10);
        assert!(vmax_diff(&seq.mu, &batch.mu) < 1e-10);
    }
}

#[test]
fn zero_power_input_only_decorrelates() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = random_spec(&mut rng, 3, 2, 0.8, false);
    let x0 = cvec(&mut rng, 3, 2.0);
    let y0 = cvec(&mut rng, 3, 1.0);
    let zero = CVec::zeros(3);
    let y1 = cvec(&mut rng, 3, 1.0);
    let mut st = FilterState::new(&spec, &FilterOptions::default()).unwrap();
    st.step(&x0, &y0).unwrap();
    let before = st.conditional_state();
    st.step(&zero, &y1).unwrap();
    let after = st.conditional_state();
    let batch = conditional_distribution(&spec, &[x0, zero], &[y0, y1]).unwrap();
    assert!(max_diff(&after.cov, &batch.cov) < 1e-12);
    // one AR1 step: μ ← γμ, Λ ← γ²Λ + (1 - γ²)C
    let prior = ConditionalState::prior(&spec);
    let want = &before.cov * c(0.64) + &prior.cov * c(0.36);
    assert!(max_diff(&after.cov, &want) < 1e-12);
    assert!(vmax_diff(&after.mu, &(&before.mu * c(0.8))) < 1e-12);
}

#[test]
fn more_history_never_hurts() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.random_range(1..=5);
        let l = rng.random_range(1..=n.min(3));
        let g = rng.random_range(0.0..0.99);
        let spec = random_spec(&mut rng, n, l, g, false);
        let k = rng.random_range(1..6);
        let xs: Vec<CVec> = (0..=k).map(|_| cvec(&mut rng, n, 3.0)).collect();
        let ys: Vec<CVec> = (0..=k).map(|_| cvec(&mut rng, n, 1.0)).collect();
        let short = conditional_distribution(&spec, &xs[1..], &ys[1..]).unwrap();
        let long = conditional_distribution(&spec, &xs, &ys).unwrap();
        for (a, b) in long.bin_variances().iter().zip(short.bin_variances()) {
            assert!(*a <= b + 1e-10);
        }
        for st in [&short, &long] {
            assert!(hermitian_min_eig(&st.cov) > -1e-10);
            assert!(st.bin_variances().iter().all(|&v| v <= 1.0 / n as f64 + 1e-12));
        }
    }
}

#[test]
fn tap_errors_decouple_under_constant_amplitude() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..20 {
        let n = rng.random_range(1..=8);
        let l = rng.random_range(1..=n.min(4));
        let k = [1, 2, 5, 13, 32, 64][case % 6];
        let g = rng.random_range(0.3..0.99);
        let spec = random_spec(&mut rng, n, l, g, false);
        let p = 10f64.powf(rng.random_range(-2.0..1.0));
        let beta = rng.random_range(1.0..3.0);
        let dense = dense_tap_error(&spec, p, beta, k, &mut rng);
        let per_tap = wideband_ca_error_finite(&spec, p, beta, k).unwrap();
        for a in 0..l {
            for b in 0..l {
                let want = if a == b { per_tap[a] } else { 0.0 };
                assert!((dense[(a, b)] - c(want)).norm() < 1e-9, "case {case} ({a},{b})");
            }
        }
    }
}

#[test]
fn property1_matches_long_history() {
    let spec = ChannelSpec::equal_taps(30, 5, ar1(0.9672)).unwrap();
    let tc = ExactCoherence::new(spec.corr.clone(), 30, EctOptions::with_k_max(1 << 15)).unwrap();
    for p in [1e-3, 1e-1] {
        let limit = wideband_ca_error(&spec, p, 1.0, &tc).unwrap();
        let finite = wideband_ca_error_finite(&spec, p, 1.0, 2000).unwrap();
        for (a, b) in limit.per_tap.iter().zip(&finite) {
            assert!((a / b - 1.0).abs() < 0.01, "p={p}: {a} vs {b}");
        }
        let x = DVector::from_element(30, c(p.sqrt()));
        let mut st = FilterState::new(&spec, &FilterOptions::default()).unwrap();
        for _ in 0..2000 {
            st.step_covariance(&x).unwrap();
        }
        let kal = st.bin_variances();
        let mean = kal.iter().sum::<f64>() / 30.0;
        assert!(
            (mean / limit.per_bin - 1.0).abs() < 0.01,
            "p={p}: {mean} vs {}",
            limit.per_bin
        );
        // strict for L > 1
        assert!(limit.per_bin < wideband_ca_bound(&spec, p, 1.0, &tc).unwrap());
    }
}

#[test]
fn wideband_error_below_equal_power_bound() {
    let spec = ChannelSpec::new(
        16,
        TapProfile {
            powers: vec![0.6, 0.25, 0.1, 0.05, 0.0],
            los_mean: None,
        },
        ar1(0.95),
    )
    .unwrap();
    let tc = ExactCoherence::new(spec.corr.clone(), 16, EctOptions::with_k_max(1 << 15)).unwrap();
    for p in [1e-3, 0.1, 10.0] {
        let e = wideband_ca_error(&spec, p, 1.5, &tc).unwrap();
        assert_eq!(e.per_tap[4], 0.0);
        assert!(e.per_bin <= wideband_ca_bound(&spec, p, 1.5, &tc).unwrap() * (1.0 + 1e-12));
    }
    let one = ChannelSpec::equal_taps(16, 1, ar1(0.95)).unwrap();
    let e = wideband_ca_error(&one, 0.2, 1.0, &tc).unwrap();
    assert!((e.per_bin / wideband_ca_bound(&one, 0.2, 1.0, &tc).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn block_fading_closed_forms() {
    let n = 30.0;
    let tc = FixedCoherence {
        n_bins: 30,
        value: 900.0,
    };
    let spec = ChannelSpec::equal_taps(30, 1, TemporalCorrelation::BlockFadingMiddle { block_symbols: 31 }).unwrap();
    for p in [1e-4, 0.01, 1.0] {
        let want = 1.0 / n / (1.0 + 0.5 * p * (900.0 - n));
        assert!((wideband_ca_error(&spec, p, 1.0, &tc).unwrap().per_bin - want).abs() < 1e-15);
        assert!((narrowband_ca_error(&spec, p, &tc).unwrap() - want).abs() < 1e-15);
        assert_eq!(
            peak_error_floor(&spec, p, &tc).unwrap(),
            narrowband_ca_error(&spec, p, &tc).unwrap()
        );
        let g = 0.5 * p * (900.0 - n);
        let q = quad_moment_bound(&spec, p, 10.0, &tc).unwrap();
        assert!((q - 10.0 * (g / (1.0 + g)).powi(2)).abs() < 1e-14);
        assert!((0.0..=10.0).contains(&q));
    }
    let memoryless = FixedCoherence {
        n_bins: 30,
        value: 30.0,
    };
    assert_eq!(quad_moment_bound(&spec, 1.0, 4.0, &memoryless).unwrap(), 0.0);
    assert!(quad_moment_bound(&spec, 1e-12, 4.0, &tc).unwrap() < 1e-17);
    // γ = 0: no estimation gain
    let iid = ChannelSpec::equal_taps(30, 5, ar1(0.0)).unwrap();
    let e = wideband_ca_error(&iid, 2.0, 1.0, &memoryless).unwrap();
    assert!(e.per_tap.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    assert!((narrowband_ca_error(&iid, 2.0, &memoryless).unwrap() - 1.0 / 30.0).abs() < 1e-15);
}

// Scalar single-bin history of length k: (1/N)(1 - q) with
// q = s D†(sΔ + I)⁻¹D and s = N p, solved densely.
fn narrowband_oracle(gamma: f64, n: usize, p: f64, k: usize) -> f64 {
    let s = n as f64 * p;
    let d = DVector::from_fn(k, |i, _| gamma.powi((k - i) as i32));
    let delta = DMatrix::from_fn(k, k, |i, j| gamma.powi((i as i32 - j as i32).abs()));
    let a = delta * s + DMatrix::identity(k, k);
    let q = s * d.dot(&a.lu().solve(&d).unwrap());
    (1.0 - q) / n as f64
}

#[test]
fn narrowband_matches_single_bin_pilots() {
    let spec = ChannelSpec::equal_taps(30, 5, ar1(0.9672)).unwrap();
    let tc = ExactCoherence::new(spec.corr.clone(), 30, EctOptions::with_k_max(1 << 15)).unwrap();
    let p = 1e-2;
    let got = narrowband_ca_error(&spec, p, &tc).unwrap();
    let dense = narrowband_oracle(0.9672, 30, p, 1000);
    assert!((got / dense - 1.0).abs() < 1e-8, "{got} vs {dense}");
    // same thing through the filter: all power on bin 0
    let mut x = CVec::zeros(30);
    x[0] = c((30.0 * p).sqrt());
    let mut st = FilterState::new(&spec, &FilterOptions::default()).unwrap();
    for _ in 0..1000 {
        st.step_covariance(&x).unwrap();
    }
    let v = st.bin_variances()[0];
    assert!((v / dense - 1.0).abs() < 1e-8, "{v} vs {dense}");
}

#[test]
fn tg_bound_examples() {
    assert!((nu_qd(1.0) - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    let n = 30.0;
    let spec = ChannelSpec::equal_taps(30, 1, TemporalCorrelation::BlockFadingMiddle { block_symbols: 31 }).unwrap();
    let tc = FixedCoherence {
        n_bins: 30,
        value: 900.0,
    };
    let tg = TruncGaussParams::new(0.01, f64::INFINITY).unwrap();
    let (p, beta) = (0.3, 2.0);
    let got = tg_error_bound(&spec, p, 30, beta, &tg, ConstraintKind::Quadratic, &tc).unwrap();
    let want = 1.0 / n / (1.0 + beta * p / nu_qd(0.01) * 0.5 * (900.0 - n));
    assert!((got - want).abs() < 1e-15);
    let bad = TruncGaussParams::new(0.0, f64::INFINITY).unwrap();
    assert!(matches!(
        tg_error_bound(&spec, p, 30, 1.0, &bad, ConstraintKind::Quadratic, &tc),
        Err(Error::InvalidThreshold(_))
    ));
    assert!(matches!(
        tg_error_bound(&spec, p, 30, 1.0, &tg, ConstraintKind::Peak, &tc),
        Err(Error::InvalidThreshold(_))
    ));
    assert!(TruncGaussParams::new(2.0, 1.0).is_err());
}

#[test]
fn tg_moments_match_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (eta, xi) = (0.3, 2.5);
    let tg = TruncGaussParams::new(eta, xi).unwrap();
    assert!(((-eta).exp() - (-xi).exp() - tg.theta).abs() < 1e-15);
    let (mut s2, mut s4, mut cnt) = (0.0, 0.0, 0usize);
    while cnt < 400_000 {
        let v: f64 = rng.sample(Exp1);
        if (eta..=xi).contains(&v) {
            s2 += v;
            s4 += v * v;
            cnt += 1;
        }
    }
    let (m2, m4) = (s2 / cnt as f64, s4 / cnt as f64);
    assert!((m2 - tg.p_z).abs() < 4e-3, "{m2} vs {}", tg.p_z);
    assert!((m4 - tg.m4).abs() < 1e-2, "{m4} vs {}", tg.m4);
}

#[test]
fn tg_bound_dominates_pilot_simulation() {
    let spec = ChannelSpec::equal_taps(30, 5, ar1(0.9672)).unwrap();
    let tc = ExactCoherence::new(spec.corr.clone(), 30, EctOptions::with_k_max(1 << 15)).unwrap();
    let (p, eta) = (1.0, 0.005);
    let tg = TruncGaussParams::new(eta, f64::INFINITY).unwrap();
    let bound = tg_error_bound(&spec, p, 30, 1.0, &tg, ConstraintKind::Quadratic, &tc).unwrap();
    let scale = (p / tg.p_z).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut st = FilterState::new(&spec, &FilterOptions::default()).unwrap();
    let (burn, count) = (300, 3000);
    let mut acc = 0.0;
    for k in 0..burn + count {
        if k >= burn {
            acc += st.bin_variances().iter().sum::<f64>() / 30.0;
        }
        // |z|² = η + Exp(1), uniform phase
        let x = DVector::from_fn(30, |_, _| {
            let mag2 = eta + rng.sample::<f64, _>(Exp1);
            Complex64::from_polar(scale * mag2.sqrt(), rng.random_range(0.0..std::f64::consts::TAU))
        });
        st.step_covariance(&x).unwrap();
    }
    let mc = acc / count as f64;
    assert!(mc <= bound, "simulated {mc} above bound {bound}");
    assert!(mc > 0.2 * bound);
}

#[test]
fn exponential_integral_bound() {
    for i in 0..=40 {
        let a = 10f64.powf(-3.0 + 4.0 * i as f64 / 40.0);
        assert!(exp1(a) < (-a).exp() * (1.0 / a).ln_1p(), "a = {a}");
    }
}

#[test]
fn exponential_integral_against_quadrature() {
    // E1(a) = ∫_0^1 exp(-a/t)/t dt, substituted so that the integrand is smooth
    for a in [1e-2, 0.3, 1.0, 4.0, 20.0] {
        let m = 200_000;
        let h = 1.0 / m as f64;
        let f = |u: f64| if u <= 0.0 { 0.0 } else { (-a / u).exp() / u };
        let mut s = f(0.0) + f(1.0);
        for i in 1..m {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let q = s * h / 3.0;
        assert!((exp1(a) / q - 1.0).abs() < 1e-6, "a={a}: {} vs {q}", exp1(a));
    }
}

fn psd(size: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, size * size).prop_map(move |v| {
        let a = DMatrix::from_vec(size, size, v);
        &a * a.transpose()
    })
}

fn triple() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    (1usize..=6).prop_flat_map(|n| (psd(n), psd(n), psd(n)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, rng_seed: proptest::test_runner::RngSeed::Fixed(13), ..ProptestConfig::default() })]

    // (D+E)(F(D+E)+I)⁻¹ ⪯ D(FD+I)⁻¹ + (DF+I)⁻¹E(FD+I)⁻¹
    #[test]
    fn appendix_b_matrix_inequality((d, e, f) in triple()) {
        let n = d.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let de = &d + &e;
        let lhs = &de * (&f * &de + &id).try_inverse().unwrap();
        let left = (&d * &f + &id).try_inverse().unwrap();
        let right = (&f * &d + &id).try_inverse().unwrap();
        let rhs = &d * &right + &left * &e * &right;
        let gap = rhs - lhs;
        let sym = (&gap + gap.transpose()) * 0.5;
        prop_assert!((&gap - &sym).amax() < 1e-8);
        let min = SymmetricEigen::new(sym).eigenvalues.min();
        prop_assert!(min > -1e-9, "min eigenvalue {}", min);
    }
}
