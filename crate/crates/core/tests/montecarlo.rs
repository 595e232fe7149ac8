use fadecap::montecarlo::rate_from_bin_errors;
use fadecap::{
    conditional_distribution, gaussian_rate_approximation, gaussian_rate_simulation, ub_coherent, ChannelSpec,
    EctOptions, Error, ExactCoherence, FixedCoherence, McConfig, TapProfile, TemporalCorrelation,
};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn ar1(gamma: f64) -> TemporalCorrelation {
    TemporalCorrelation::Ar1 { gamma }
}

fn cfg(n_symbols: usize, n_trials: usize, seed: u64) -> McConfig {
    McConfig {
        n_symbols,
        n_trials,
        seed,
        ..McConfig::default()
    }
}

// E[log(1 + a w)], w ~ Exp(1), by composite 5-point Gauss-Legendre.
fn log_expect(a: f64) -> f64 {
    const GL5: [(f64, f64); 5] = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.0, 0.568_888_888_888_888_9),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let panels = 3000;
    let h = 60.0 / panels as f64;
    let mut s = 0.0;
    for i in 0..panels {
        let mid = (i as f64 + 0.5) * h;
        for (t, w) in GL5 {
            let x = mid + 0.5 * h * t;
            s += w * (a * x).ln_1p() * (-x).exp();
        }
    }
    0.5 * h * s
}

#[test]
fn memoryless_channel_gives_zero_rate() {
    let spec = ChannelSpec::equal_taps(8, 2, ar1(0.0)).unwrap();
    let est = gaussian_rate_simulation(&spec, 1.0, &cfg(50, 4, 1)).unwrap();
    assert!(est.rate.abs() < 1e-12, "{}", est.rate);
    let tc = FixedCoherence { n_bins: 8, value: 8.0 };
    assert!(gaussian_rate_approximation(&spec, 1.0, &tc).unwrap().abs() < 1e-12);
}

#[test]
fn block_fading_approaches_coherent_bound() {
    let spec = ChannelSpec::equal_taps(30, 5, TemporalCorrelation::BlockFadingMiddle { block_symbols: 201 }).unwrap();
    let est = gaussian_rate_simulation(&spec, 1.0, &cfg(40, 8, 3)).unwrap();
    let ub = ub_coherent(&spec, 1.0).unwrap();
    assert!(est.rate <= ub + 3.0 * est.std_err);
    assert!((est.rate / ub - 1.0).abs() < 0.02, "{} vs {ub}", est.rate);
}

#[test]
fn block_fading_single_tap_approximation_closed_form() {
    let spec = ChannelSpec::equal_taps(30, 1, TemporalCorrelation::BlockFadingMiddle { block_symbols: 31 }).unwrap();
    let tc = FixedCoherence {
        n_bins: 30,
        value: 900.0,
    };
    for p in [0.01, 0.3, 2.0] {
        let lam = 1.0 / 30.0 / (1.0 + 0.5 * p * (900.0 - 30.0));
        let a = p * (1.0 - 30.0 * lam) / (1.0 + 30.0 * p * lam);
        let got = gaussian_rate_approximation(&spec, p, &tc).unwrap();
        assert!((got - log_expect(a)).abs() < 1e-9, "p={p}: {got} vs {}", log_expect(a));
    }
}

#[test]
fn simulated_bin_errors_match_batch_sampling() {
    // For a fast-decaying AR1 channel a 24-symbol history is as good as the
    // whole past, so batch conditioning on sampled inputs is an independent
    // estimate of the mean predictive variance.
    let spec = ChannelSpec::new(
        4,
        TapProfile {
            powers: vec![0.7, 0.3],
            los_mean: None,
        },
        ar1(0.5),
    )
    .unwrap();
    let p = 1.0;
    let est = gaussian_rate_simulation(&spec, p, &cfg(4000, 8, 5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 1500;
    let mut samples = Vec::with_capacity(draws);
    for _ in 0..draws {
        let xs: Vec<DVector<Complex64>> = (0..24)
            .map(|_| {
                DVector::from_fn(4, |_, _| {
                    Complex64::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    ) * (0.5 * p).sqrt()
                })
            })
            .collect();
        let ys = vec![DVector::zeros(4); 24];
        let st = conditional_distribution(&spec, &xs, &ys).unwrap();
        samples.push(st.bin_variances().iter().sum::<f64>() / 4.0);
    }
    let m = samples.iter().sum::<f64>() / draws as f64;
    let sd = (samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
    let se = sd / (draws as f64).sqrt();
    let sim = est.mean_bin_error.iter().sum::<f64>() / 4.0;
    assert!((sim - m).abs() < 4.0 * se + 1e-4 * m, "{sim} vs {m} ± {se}");
}

#[test]
fn rate_is_deterministic_for_a_seed() {
    let spec = ChannelSpec::equal_taps(6, 2, ar1(0.9)).unwrap();
    let a = gaussian_rate_simulation(&spec, 0.5, &cfg(300, 4, 11)).unwrap();
    let b = gaussian_rate_simulation(&spec, 0.5, &cfg(300, 4, 11)).unwrap();
    assert_eq!(a.rate.to_bits(), b.rate.to_bits());
    assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
    let c = gaussian_rate_simulation(&spec, 0.5, &cfg(300, 4, 12)).unwrap();
    assert_ne!(a.rate, c.rate);
}

#[test]
fn rate_between_zero_and_coherent_bound() {
    let spec = ChannelSpec::equal_taps(30, 5, ar1(0.9672)).unwrap();
    let tc = ExactCoherence::new(spec.corr.clone(), 30, EctOptions::with_k_max(1 << 15)).unwrap();
    for p in [0.01, 1.0] {
        let est = gaussian_rate_simulation(&spec, p, &cfg(600, 4, 2)).unwrap();
        let ub = ub_coherent(&spec, p).unwrap();
        assert!(est.rate >= 0.0 && est.rate <= ub + 3.0 * est.std_err);
        let approx = gaussian_rate_approximation(&spec, p, &tc).unwrap();
        assert!(approx >= 0.0 && approx <= ub);
    }
}

#[test]
fn rate_formula_edges() {
    assert_eq!(rate_from_bin_errors(2.0, &[0.25; 4]), 0.0);
    let lam = [0.0, 0.1, 0.2];
    let want = (log_expect(1.5) + log_expect(1.5 * 0.7 / 1.45) + log_expect(1.5 * 0.4 / 1.9)) / 3.0;
    assert!((rate_from_bin_errors(1.5, &lam) - want).abs() < 1e-9);
}

#[test]
fn invalid_inputs() {
    let los = ChannelSpec::new(
        4,
        TapProfile {
            powers: vec![1.0],
            los_mean: Some(Complex64::new(0.3, 0.0)),
        },
        ar1(0.5),
    )
    .unwrap();
    assert!(matches!(
        gaussian_rate_simulation(&los, 1.0, &cfg(10, 2, 0)),
        Err(Error::NonZeroMean)
    ));
    let spec = ChannelSpec::equal_taps(4, 1, ar1(0.5)).unwrap();
    assert!(gaussian_rate_simulation(&spec, 0.0, &cfg(10, 2, 0)).is_err());
    assert!(gaussian_rate_simulation(&spec, 1.0, &cfg(10, 1, 0)).is_err());
    let long = McConfig {
        window: Some(10),
        ..cfg(10, 2, 0)
    };
    assert!(gaussian_rate_simulation(&spec, 1.0, &long).is_err());
}
