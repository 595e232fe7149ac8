//! Effective coherence time, conditional channel estimation and capacity
//! bounds for noncoherent underspread OFDM fading channels.
//!
//! Rates are in nats per channel sample; SNRs are linear per-sample values
//! `p_x` unless a name says `_db`.

pub mod bounds;
pub mod channel;
pub mod coherence;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod montecarlo;
pub mod quadrature;
pub mod special;

pub use bounds::{
    bound_curve, bound_point, c_qpsk, lb_qpsk, lb_tg_alternative, lb_tg_peak, lb_tg_quad, optimize_lower_bound,
    ub_coherent, ub_low_peak, ub_low_quad, upper_bound, upper_bound_crossing, ArgMax, BoundPoint, LowerBoundKind,
    LowerBoundSearch, SearchSpec,
};
pub use channel::{
    build_d_vector, build_delta, freq_tap_covariance, ChannelSpec, ConstraintKind, PowerConstraint, TapProfile,
    TemporalCorrelation,
};
pub use coherence::{
    effective_coherence_time, effective_coherence_time_alt, tc0_low_snr, tc_sweep, CoherenceTime, EctOptions,
    EctResult, ExactCoherence, FixedCoherence, TabulatedCoherence,
};
pub use error::{Error, Result};
pub use estimation::{
    conditional_distribution, recursive_update, ConditionalState, FilterOptions, FilterState, TruncGaussParams,
};
pub use montecarlo::{gaussian_rate_approximation, gaussian_rate_simulation, McConfig, McEstimate};
pub use quadrature::QuadratureSpec;

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to decibels.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
