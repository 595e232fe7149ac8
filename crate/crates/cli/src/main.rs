//! `fadecap` command-line front end: coherence-time sweeps, bound curves,
//! Monte Carlo rates and figure presets.

mod commands;
mod config;
mod output;
mod svg;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fadecap::{ChannelSpec, McConfig};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use commands::*;
use config::{ConstraintChoice, ConstraintConfig, Format, PlotKind, RunConfig, SnrGrid};
use output::{emit, sibling, write_atomic, Table};
use svg::{Plot, Series, Style};

#[derive(Parser, Debug)]
#[command(
    name = "fadecap",
    version,
    about = "Capacity bounds for noncoherent OFDM fading channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Effective coherence time over the SNR grid.
    Ect,
    /// Upper and lower capacity bounds over the SNR grid.
    Bounds,
    /// Monte Carlo Gaussian-input rate and its approximation.
    Simulate,
    /// Reproduce a preset figure into the output directory.
    Figure {
        name: FigureName,
        /// Skip the Monte Carlo overlay of figure2.
        #[arg(long)]
        no_mc: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FigureName {
    Figure1,
    Figure2,
    Figure3,
}

impl FigureName {
    fn as_str(self) -> &'static str {
        match self {
            FigureName::Figure1 => "figure1",
            FigureName::Figure2 => "figure2",
            FigureName::Figure3 => "figure3",
        }
    }
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    snr_start: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    snr_stop: Option<f64>,
    #[arg(long, global = true)]
    snr_points: Option<usize>,
    #[arg(long, global = true)]
    constraint: Option<ConstraintChoice>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Seed of the Monte Carlo streams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fail with a nonzero exit if any grid point fails.
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true)]
    format: Option<Format>,
    #[arg(long, global = true)]
    plot: Option<PlotKind>,
    /// Output file (directory for `figure`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Rates in bits instead of nats.
    #[arg(long, global = true)]
    bits: bool,
}

impl Flags {
    fn grid_overridden(&self) -> bool {
        self.snr_start.is_some() || self.snr_stop.is_some() || self.snr_points.is_some()
    }

    fn apply_grid(&self, grid: &mut SnrGrid) {
        if let Some(v) = self.snr_start {
            grid.start_db = v;
        }
        if let Some(v) = self.snr_stop {
            grid.stop_db = v;
        }
        if let Some(v) = self.snr_points {
            grid.points = v;
        }
    }

    fn apply(&self, cfg: &mut RunConfig) {
        self.apply_grid(&mut cfg.snr_grid);
        if let Some(kind) = self.constraint {
            cfg.constraint.kind = kind;
            if kind == ConstraintChoice::Peak {
                cfg.constraint.alpha = None;
            }
        }
        if let Some(a) = self.alpha {
            cfg.constraint.alpha = Some(a);
        }
        if let Some(seed) = self.seed {
            cfg.mc.get_or_insert_with(McConfig::default).seed = seed;
        }
        if let Some(f) = self.format {
            cfg.output.format = f;
        }
        if let Some(p) = self.plot {
            cfg.output.plot = p;
        }
        if let Some(o) = &self.out {
            cfg.output.path = Some(o.clone());
        }
        if self.bits {
            cfg.output.bits = true;
        }
    }
}

/// Failing grid points under `--strict`: a JSON record on stderr, exit
/// code 1, nothing written.
fn check_strict(strict: bool, command: &str, failures: &[Failure]) -> Result<()> {
    if strict && !failures.is_empty() {
        let record = json!({ "status": "error", "command": command, "failures": failures });
        eprintln!("{record}");
        return Err(anyhow::Error::msg(format!("{} grid point(s) failed", failures.len()))).context(StrictMarker);
    }
    Ok(())
}

#[derive(Debug)]
struct StrictMarker;

impl std::fmt::Display for StrictMarker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("strict mode")
    }
}

fn rate_label(unit: Unit) -> &'static str {
    match unit {
        Unit::Nats => "rate [nats/sample]",
        Unit::Bits => "rate [bits/sample]",
    }
}

fn series(table: &Table, x: &str, y: &str, label: &str, style: Style) -> Series {
    let xs = table.numbers(x);
    let ys = table.numbers(y);
    let points = xs
        .iter()
        .zip(&ys)
        .map(|(a, b)| (a.unwrap_or(f64::NAN), b.unwrap_or(f64::NAN)))
        .collect();
    Series {
        label: label.into(),
        points,
        style,
    }
}

fn bounds_plot(title: String, table: &Table, unit: Unit) -> Plot {
    Plot {
        title,
        x_label: "SNR [dB]".into(),
        y_label: rate_label(unit).into(),
        y_log: true,
        series: vec![
            series(table, "snr_db", "ub_coh", "UB coherent", Style::Solid),
            series(table, "snr_db", "ub_low", "UB low SNR", Style::Dashed),
            series(table, "snr_db", "lb_qpsk_nw", "LB QPSK nw", Style::Solid),
            series(table, "snr_db", "lb_qpsk_wd", "LB QPSK wd", Style::Solid),
            series(table, "snr_db", "lb_tg_wd", "LB TG wd", Style::Solid),
        ],
    }
}

fn ect_plot(title: String, series: Vec<Series>) -> Plot {
    Plot {
        title,
        x_label: "SNR [dB]".into(),
        y_label: "effective coherence time".into(),
        y_log: true,
        series,
    }
}

fn write_plot(plot: &Plot, path: &Path) -> Result<()> {
    write_atomic(path, plot.render().as_bytes())
}

fn plot_path(cfg: &RunConfig) -> Result<Option<PathBuf>> {
    match (cfg.output.plot, &cfg.output.path) {
        (PlotKind::None, _) => Ok(None),
        (PlotKind::Svg, Some(p)) => Ok(Some(sibling(p, ".svg"))),
        (PlotKind::Svg, None) => bail!("--plot svg needs --out"),
    }
}

fn params(command: &str, cfg: &RunConfig, channel: &ChannelSpec) -> serde_json::Value {
    json!({
        "command": command,
        "channel": channel,
        "constraint": cfg.constraint,
        "snr_grid": cfg.snr_grid,
        "ect": cfg.ect,
        "quadrature": cfg.quadrature,
        "search": cfg.search,
        "mc": cfg.mc,
        "unit": Unit::from_bits_flag(cfg.output.bits),
    })
}

fn run_single(command: &Command, flags: &Flags) -> Result<()> {
    let (mut cfg, base) = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => (RunConfig::default(), None),
    };
    flags.apply(&mut cfg);
    cfg.validate()?;
    let spec = cfg.channel.resolve(base.as_deref())?;
    let unit = Unit::from_bits_flag(cfg.output.bits);
    let plot = plot_path(&cfg)?;
    let out = cfg.output.path.as_deref();
    match command {
        Command::Ect => {
            let (table, failures) = ect_table(&spec, &cfg.snr_grid, &cfg.ect);
            check_strict(flags.strict, "ect", &failures)?;
            emit(&table, &params("ect", &cfg, &spec), cfg.output.format, out)?;
            if let Some(p) = plot {
                let s = series(&table, "snr_db", "tc", "T_c", Style::Solid);
                write_plot(&ect_plot("Effective coherence time".into(), vec![s]), &p)?;
            }
        }
        Command::Bounds => {
            let tc = coherence_for(&spec, &cfg.snr_grid, cfg.constraint.alpha_or_one(), &cfg.ect);
            let search = cfg.search_spec();
            let points = bound_points(&spec, &cfg.constraint, &cfg.snr_grid, tc.as_ref(), &search);
            let (table, failures) = bounds_table(&points, unit);
            check_strict(flags.strict, "bounds", &failures)?;
            emit(&table, &params("bounds", &cfg, &spec), cfg.output.format, out)?;
            if let Some(p) = plot {
                write_plot(&bounds_plot("Capacity bounds".into(), &table, unit), &p)?;
            }
        }
        Command::Simulate => {
            let mc = cfg.mc.clone().unwrap_or_default();
            let (table, failures) = simulate_table(&spec, &cfg.snr_grid.db_values(), &mc, &cfg.ect, unit)?;
            check_strict(flags.strict, "simulate", &failures)?;
            let mut echo = params("simulate", &cfg, &spec);
            echo["mc"] = serde_json::to_value(&mc)?;
            emit(&table, &echo, cfg.output.format, out)?;
            if let Some(p) = plot {
                let plot = Plot {
                    title: "Gaussian-input rate".into(),
                    x_label: "SNR [dB]".into(),
                    y_label: rate_label(unit).into(),
                    y_log: true,
                    series: vec![
                        series(&table, "snr_db", "mc_rate", "simulation", Style::Markers),
                        series(&table, "snr_db", "approx_rate", "approximation", Style::Dashed),
                    ],
                };
                write_plot(&plot, &p)?;
            }
        }
        Command::Figure { .. } => unreachable!("handled by run_figure"),
    }
    Ok(())
}

fn data_name(stem: &str, format: Format) -> String {
    match format {
        Format::Csv => format!("{stem}.csv"),
        Format::Json => format!("{stem}.json"),
    }
}

fn run_figure(name: FigureName, no_mc: bool, flags: &Flags) -> Result<()> {
    if flags.config.is_some() || flags.constraint.is_some() || flags.alpha.is_some() {
        bail!("figure presets fix the channel and constraint; only grid, seed and output flags apply");
    }
    let base = RunConfig::default();
    let format = flags.format.unwrap_or(Format::Csv);
    let unit = Unit::from_bits_flag(flags.bits);
    let dir = flags.out.clone().unwrap_or_else(|| PathBuf::from(name.as_str()));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut grid = match name {
        FigureName::Figure1 => SnrGrid {
            start_db: -40.0,
            stop_db: 40.0,
            points: 41,
        },
        _ => SnrGrid {
            start_db: -50.0,
            stop_db: 20.0,
            points: 36,
        },
    };
    if flags.grid_overridden() {
        flags.apply_grid(&mut grid);
    }
    grid.validate()?;
    let ect = base.ect;
    let search = base.search_spec();
    let preset = |gammas: &[f64], alpha: Option<f64>| {
        json!({
            "figure": name.as_str(),
            "n_bins": PRESET_BINS,
            "n_taps": PRESET_TAPS,
            "tap_powers": vec![1.0 / PRESET_TAPS as f64; PRESET_TAPS],
            "los_mean": 0.0,
            "correlation": "ar1",
            "gammas": gammas,
            "constraint": alpha.map(|a| json!({"kind": "quad", "alpha": a})),
            "snr_grid": grid,
            "ect": ect,
            "unit": unit,
        })
    };
    let mut failures = Vec::new();
    match name {
        FigureName::Figure1 => {
            let mut columns = vec!["gamma"];
            columns.extend(ECT_COLUMNS);
            let mut all = Table::new(columns);
            let mut lines = Vec::new();
            for g in FIGURE1_GAMMAS {
                let (t, f) = ect_table(&preset_channel(g), &grid, &ect);
                failures.extend(f.into_iter().map(|x| Failure { gamma: Some(g), ..x }));
                lines.push(series(&t, "snr_db", "tc", &format!("gamma = {g}"), Style::Solid));
                with_gamma(g, &t, &mut all);
            }
            check_strict(flags.strict, "figure1", &failures)?;
            let echo = preset(&FIGURE1_GAMMAS, None);
            emit(&all, &echo, format, Some(&dir.join(data_name("ect", format))))?;
            write_plot(
                &ect_plot("Effective coherence time, AR1".into(), lines),
                &dir.join("figure1.svg"),
            )?;
        }
        FigureName::Figure2 => {
            let spec = preset_channel(FIGURE2_GAMMA);
            let constraint = ConstraintConfig {
                kind: ConstraintChoice::Quad,
                alpha: Some(FIGURE2_ALPHA),
            };
            let tc = coherence_for(&spec, &grid, FIGURE2_ALPHA, &ect);
            let points = bound_points(&spec, &constraint, &grid, tc.as_ref(), &search);
            let (table, f) = bounds_table(&points, unit);
            failures.extend(f);
            let cross = crossing(&spec, &constraint, &grid, tc.as_ref(), &search)?;
            let mut sim = None;
            if !no_mc {
                let mut mc = McConfig::default();
                if let Some(s) = flags.seed {
                    mc.seed = s;
                }
                let (t, f) = simulate_table(&spec, &FIGURE2_MC_SNR_DB, &mc, &ect, unit)?;
                failures.extend(f);
                sim = Some((t, mc));
            }
            check_strict(flags.strict, "figure2", &failures)?;
            let echo = preset(&[FIGURE2_GAMMA], Some(FIGURE2_ALPHA));
            emit(&table, &echo, format, Some(&dir.join(data_name("bounds", format))))?;
            let mut plot = bounds_plot("Bounds, AR1 gamma = 0.9672, alpha = 10".into(), &table, unit);
            if let Some((t, mc)) = &sim {
                let mut e = echo.clone();
                e["mc"] = serde_json::to_value(mc)?;
                emit(t, &e, format, Some(&dir.join(data_name("simulate", format))))?;
                plot.series
                    .push(series(t, "snr_db", "mc_rate", "Gaussian MC", Style::Markers));
                plot.series
                    .push(series(t, "snr_db", "approx_rate", "Gaussian approx", Style::Dashed));
            }
            let summary = json!({ "params": echo, "crossing": cross });
            write_atomic(&dir.join("summary.json"), &serde_json::to_vec_pretty(&summary)?)?;
            write_plot(&plot, &dir.join("figure2.svg"))?;
        }
        FigureName::Figure3 => {
            let constraint = ConstraintConfig {
                kind: ConstraintChoice::Quad,
                alpha: Some(FIGURE3_ALPHA),
            };
            let mut columns = vec!["gamma"];
            columns.extend(BOUNDS_COLUMNS);
            let mut all = Table::new(columns);
            let mut crossings = Vec::new();
            let mut lines = Vec::new();
            for g in FIGURE3_GAMMAS {
                let spec = preset_channel(g);
                let tc = coherence_for(&spec, &grid, FIGURE3_ALPHA, &ect);
                let points = bound_points(&spec, &constraint, &grid, tc.as_ref(), &search);
                let (t, f) = bounds_table(&points, unit);
                failures.extend(f.into_iter().map(|x| Failure { gamma: Some(g), ..x }));
                let cross = crossing(&spec, &constraint, &grid, tc.as_ref(), &search)?;
                crossings.push(json!({ "gamma": g, "crossing": cross }));
                lines.push(series(&t, "snr_db", "ub", &format!("UB, gamma = {g}"), Style::Dashed));
                lines.push(series(&t, "snr_db", "lb", &format!("LB, gamma = {g}"), Style::Solid));
                with_gamma(g, &t, &mut all);
            }
            check_strict(flags.strict, "figure3", &failures)?;
            let echo = preset(&FIGURE3_GAMMAS, Some(FIGURE3_ALPHA));
            emit(&all, &echo, format, Some(&dir.join(data_name("bounds", format))))?;
            let summary = json!({ "params": echo, "crossings": crossings });
            write_atomic(&dir.join("summary.json"), &serde_json::to_vec_pretty(&summary)?)?;
            let plot = Plot {
                title: "Bounds, alpha = 2".into(),
                x_label: "SNR [dB]".into(),
                y_label: rate_label(unit).into(),
                y_log: true,
                series: lines,
            };
            write_plot(&plot, &dir.join("figure3.svg"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Figure { name, no_mc } => run_figure(*name, *no_mc, &cli.flags),
        other => run_single(other, &cli.flags),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<StrictMarker>().is_some() => {
            eprintln!("error: {:#}", e.root_cause());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
