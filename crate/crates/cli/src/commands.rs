use anyhow::Result;
use fadecap::coherence::tc_sweep_alt;
use fadecap::{
    bound_point, gaussian_rate_approximation, gaussian_rate_simulation, linear_to_db, upper_bound_crossing, ArgMax,
    BoundPoint, ChannelSpec, CoherenceTime, EctOptions, Error, ExactCoherence, LowerBoundKind, McConfig, SearchSpec,
    TabulatedCoherence, TapProfile, TemporalCorrelation,
};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::LN_2;

use crate::config::{ConstraintConfig, SnrGrid};
use crate::output::{Cell, Table};

/// A grid point that did not produce a value.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub snr_db: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub message: String,
}

/// Rate unit applied to every rate column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Nats,
    Bits,
}

impl Unit {
    pub fn from_bits_flag(bits: bool) -> Self {
        if bits {
            Unit::Bits
        } else {
            Unit::Nats
        }
    }

    fn scale(self, v: f64) -> f64 {
        match self {
            Unit::Nats => v,
            Unit::Bits => v / LN_2,
        }
    }
}

pub const ECT_COLUMNS: [&str; 5] = ["snr_db", "tc", "converged", "k_used", "error"];

/// `T̂c` over the grid. A non-converged point keeps its partial value.
pub fn ect_rows(spec: &ChannelSpec, grid: &SnrGrid, opts: &EctOptions) -> Vec<(Vec<Cell>, Option<String>)> {
    let db = grid.db_values();
    let sweep = tc_sweep_alt(&spec.corr, spec.n_bins, &grid.linear_values(), opts);
    db.iter()
        .zip(sweep)
        .map(|(&d, (_, res))| match res {
            Ok(r) => (
                vec![
                    Cell::Num(d),
                    Cell::Num(r.value),
                    Cell::Bool(r.converged),
                    Cell::Int(r.k_used as u64),
                    Cell::Empty,
                ],
                None,
            ),
            Err(e) => {
                let msg = e.to_string();
                let row = match e {
                    Error::NotConverged { partial } => vec![
                        Cell::Num(d),
                        Cell::Num(partial.value),
                        Cell::Bool(false),
                        Cell::Int(partial.k_used as u64),
                        Cell::Text(msg.clone()),
                    ],
                    _ => vec![
                        Cell::Num(d),
                        Cell::Empty,
                        Cell::Empty,
                        Cell::Empty,
                        Cell::Text(msg.clone()),
                    ],
                };
                (row, Some(msg))
            }
        })
        .collect()
}

pub fn ect_table(spec: &ChannelSpec, grid: &SnrGrid, opts: &EctOptions) -> (Table, Vec<Failure>) {
    let mut table = Table::new(ECT_COLUMNS.to_vec());
    let mut failures = Vec::new();
    for (row, err) in ect_rows(spec, grid, opts) {
        if let (Some(message), Cell::Num(snr_db)) = (err, &row[0]) {
            failures.push(Failure {
                snr_db: *snr_db,
                gamma: None,
                message,
            });
        }
        table.push(row);
    }
    (table, failures)
}

pub const BOUNDS_COLUMNS: [&str; 16] = [
    "snr_db",
    "ub_coh",
    "ub_low",
    "lb_qpsk_nw",
    "lb_qpsk_wd",
    "lb_tg_wd",
    "lb",
    "ub",
    "lb_qpsk",
    "lb_tg",
    "argmax_kind",
    "argmax_r",
    "argmax_beta",
    "argmax_eta",
    "argmax_xi",
    "error",
];

fn kind_name(k: LowerBoundKind) -> &'static str {
    match k {
        LowerBoundKind::Qpsk => "qpsk",
        LowerBoundKind::TruncGauss => "trunc_gauss",
        LowerBoundKind::TruncGaussAlt => "trunc_gauss_alt",
    }
}

fn bound_cells(snr_db: f64, b: &BoundPoint, unit: Unit) -> Vec<Cell> {
    let r = |v: f64| Cell::Num(unit.scale(v));
    let ArgMax {
        kind,
        r: bins,
        beta,
        eta,
        xi,
    } = b.argmax;
    vec![
        Cell::Num(snr_db),
        r(b.ub_coh),
        r(b.ub_low),
        r(b.lb_qpsk_nw),
        r(b.lb_qpsk_wd),
        r(b.lb_tg_wd),
        r(b.lb),
        r(b.ub),
        r(b.lb_qpsk),
        r(b.lb_tg),
        Cell::Text(kind_name(kind).into()),
        Cell::Int(bins as u64),
        Cell::Num(beta),
        Cell::opt(eta),
        Cell::opt(xi),
        Cell::Empty,
    ]
}

fn error_cells(snr_db: f64, width: usize, msg: &str) -> Vec<Cell> {
    let mut row = vec![Cell::Empty; width];
    row[0] = Cell::Num(snr_db);
    row[width - 1] = Cell::Text(msg.to_string());
    row
}

/// Coherence-time source for a bound sweep: a table spanning every argument
/// the optimizer can request, or exact evaluation when the table fails.
pub fn coherence_for(spec: &ChannelSpec, grid: &SnrGrid, alpha: f64, opts: &EctOptions) -> Box<dyn CoherenceTime> {
    let lin = grid.linear_values();
    let lo = lin[0] * 1e-3;
    let hi = lin[lin.len() - 1] * alpha.max(1.0) * 1e3;
    match TabulatedCoherence::with_range(spec.corr.clone(), spec.n_bins, *opts, lo, hi, 16) {
        Ok(t) => Box::new(t),
        Err(_) => Box::new(
            ExactCoherence::new(spec.corr.clone(), spec.n_bins, *opts).expect("options validated by the config"),
        ),
    }
}

/// Bounds at each grid point, in grid order.
pub fn bound_points(
    spec: &ChannelSpec,
    constraint: &ConstraintConfig,
    grid: &SnrGrid,
    tc: &dyn CoherenceTime,
    search: &SearchSpec,
) -> Vec<(f64, fadecap::Result<BoundPoint>)> {
    grid.db_values()
        .into_par_iter()
        .map(|d| {
            (
                d,
                bound_point(spec, &constraint.at(fadecap::db_to_linear(d)), tc, search),
            )
        })
        .collect()
}

pub fn bounds_table(points: &[(f64, fadecap::Result<BoundPoint>)], unit: Unit) -> (Table, Vec<Failure>) {
    let mut table = Table::new(BOUNDS_COLUMNS.to_vec());
    let mut failures = Vec::new();
    for (d, res) in points {
        match res {
            Ok(b) => table.push(bound_cells(*d, b, unit)),
            Err(e) => {
                table.push(error_cells(*d, BOUNDS_COLUMNS.len(), &e.to_string()));
                failures.push(Failure {
                    snr_db: *d,
                    gamma: None,
                    message: e.to_string(),
                });
            }
        }
    }
    (table, failures)
}

/// Where the two upper bounds meet and how the best lower bound compares.
#[derive(Debug, Clone, Serialize)]
pub struct Crossing {
    pub snr_db: f64,
    pub ub: f64,
    pub lb: f64,
    pub ub_over_lb: f64,
    pub lb_over_ub: f64,
}

pub fn crossing(
    spec: &ChannelSpec,
    constraint: &ConstraintConfig,
    grid: &SnrGrid,
    tc: &dyn CoherenceTime,
    search: &SearchSpec,
) -> Result<Option<Crossing>> {
    let lin = grid.linear_values();
    let Some(p) = upper_bound_crossing(spec, &constraint.at(lin[0]), tc, lin[0], lin[lin.len() - 1])? else {
        return Ok(None);
    };
    let b = bound_point(spec, &constraint.at(p), tc, search)?;
    Ok(Some(Crossing {
        snr_db: linear_to_db(p),
        ub: b.ub,
        lb: b.lb,
        ub_over_lb: b.ub / b.lb,
        lb_over_ub: b.lb / b.ub,
    }))
}

pub const SIMULATE_COLUMNS: [&str; 5] = ["snr_db", "mc_rate", "mc_stderr", "approx_rate", "error"];

/// Simulated Gaussian-input rate next to its constant-amplitude
/// approximation. Points run in sequence; each simulation is parallel over
/// trials.
pub fn simulate_table(
    spec: &ChannelSpec,
    snr_db: &[f64],
    mc: &McConfig,
    opts: &EctOptions,
    unit: Unit,
) -> Result<(Table, Vec<Failure>)> {
    let tc = ExactCoherence::new(spec.corr.clone(), spec.n_bins, *opts)?;
    let mut table = Table::new(SIMULATE_COLUMNS.to_vec());
    let mut failures = Vec::new();
    for &d in snr_db {
        let p = fadecap::db_to_linear(d);
        let sim = gaussian_rate_simulation(spec, p, mc);
        let approx = gaussian_rate_approximation(spec, p, &tc);
        let msg: Vec<String> = [sim.as_ref().err(), approx.as_ref().err()]
            .into_iter()
            .flatten()
            .map(|e| e.to_string())
            .collect();
        let (rate, se) = match &sim {
            Ok(s) => (Cell::Num(unit.scale(s.rate)), Cell::Num(unit.scale(s.std_err))),
            Err(_) => (Cell::Empty, Cell::Empty),
        };
        let approx = approx.map_or(Cell::Empty, |a| Cell::Num(unit.scale(a)));
        let err = if msg.is_empty() {
            Cell::Empty
        } else {
            Cell::Text(msg.join("; "))
        };
        if !msg.is_empty() {
            failures.push(Failure {
                snr_db: d,
                gamma: None,
                message: msg.join("; "),
            });
        }
        table.push(vec![Cell::Num(d), rate, se, approx, err]);
    }
    Ok((table, failures))
}

/// Parameters shared by the figure presets.
pub const PRESET_BINS: usize = 30;
pub const PRESET_TAPS: usize = 5;
pub const FIGURE1_GAMMAS: [f64; 4] = [0.9672, 0.9851, 0.997, 0.9994];
pub const FIGURE2_GAMMA: f64 = 0.9672;
pub const FIGURE2_ALPHA: f64 = 10.0;
pub const FIGURE3_GAMMAS: [f64; 3] = [0.9851, 0.997, 0.9994];
pub const FIGURE3_ALPHA: f64 = 2.0;
pub const FIGURE2_MC_SNR_DB: [f64; 5] = [-30.0, -20.0, -10.0, 0.0, 10.0];

pub fn preset_channel(gamma: f64) -> ChannelSpec {
    ChannelSpec {
        n_bins: PRESET_BINS,
        taps: TapProfile::equal(PRESET_TAPS),
        corr: TemporalCorrelation::Ar1 { gamma },
    }
}

/// Prepends a gamma column to a table.
pub fn with_gamma(gamma: f64, table: &Table, into: &mut Table) {
    for row in &table.rows {
        let mut r = Vec::with_capacity(row.len() + 1);
        r.push(Cell::Num(gamma));
        r.extend(row.iter().cloned());
        into.push(r);
    }
}
