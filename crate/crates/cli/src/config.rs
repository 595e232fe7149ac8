use anyhow::{bail, Context, Result};
use fadecap::{
    db_to_linear, ChannelSpec, EctOptions, McConfig, PowerConstraint, QuadratureSpec, SearchSpec, TapProfile,
    TemporalCorrelation,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Where the channel description comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSource {
    File { file: PathBuf },
    Inline(ChannelSpec),
}

impl ChannelSource {
    pub fn resolve(&self, base: Option<&Path>) -> Result<ChannelSpec> {
        let spec = match self {
            ChannelSource::Inline(spec) => spec.clone(),
            ChannelSource::File { file } => {
                let path = match base {
                    Some(dir) if file.is_relative() => dir.join(file),
                    _ => file.clone(),
                };
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading channel file {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing channel file {}", path.display()))?
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintChoice {
    Peak,
    #[serde(alias = "quadratic")]
    #[value(alias = "quadratic")]
    Quad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub kind: ConstraintChoice,
    /// Peakiness bound of the quadratic constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl ConstraintConfig {
    pub fn at(&self, p_x: f64) -> PowerConstraint {
        match self.kind {
            ConstraintChoice::Peak => PowerConstraint::Peak { p_x },
            ConstraintChoice::Quad => PowerConstraint::Quadratic {
                p_x,
                alpha: self.alpha.unwrap_or(1.0),
            },
        }
    }

    pub fn alpha_or_one(&self) -> f64 {
        match self.kind {
            ConstraintChoice::Peak => 1.0,
            ConstraintChoice::Quad => self.alpha.unwrap_or(1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        match (self.kind, self.alpha) {
            (ConstraintChoice::Quad, None) => bail!("the quadratic constraint needs alpha"),
            (ConstraintChoice::Quad, Some(a)) if !(a >= 1.0 && a.is_finite()) => {
                bail!("alpha must be >= 1, got {a}")
            }
            _ => {}
        }
        if self.kind == ConstraintChoice::Peak && self.alpha.is_some() {
            bail!("alpha only applies to the quadratic constraint");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrGrid {
    pub start_db: f64,
    pub stop_db: f64,
    pub points: usize,
}

impl SnrGrid {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            bail!("SNR grid needs at least 2 points, got {}", self.points);
        }
        if !(self.start_db.is_finite() && self.stop_db.is_finite() && self.start_db < self.stop_db) {
            bail!(
                "SNR grid needs finite start < stop, got {} .. {}",
                self.start_db,
                self.stop_db
            );
        }
        Ok(())
    }

    /// Evenly spaced dB values, endpoints included.
    pub fn db_values(&self) -> Vec<f64> {
        let step = (self.stop_db - self.start_db) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i + 1 == self.points {
                    self.stop_db
                } else {
                    self.start_db + step * i as f64
                }
            })
            .collect()
    }

    pub fn linear_values(&self) -> Vec<f64> {
        self.db_values().into_iter().map(db_to_linear).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    None,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: Format,
    pub plot: PlotKind,
    /// Data file, or directory for `figure`. Standard output when absent.
    pub path: Option<PathBuf>,
    /// Report rates in bits instead of nats.
    pub bits: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            format: Format::Csv,
            plot: PlotKind::None,
            path: None,
            bits: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub channel: ChannelSource,
    pub constraint: ConstraintConfig,
    pub snr_grid: SnrGrid,
    pub ect: EctOptions,
    pub quadrature: QuadratureSpec,
    pub search: SearchSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            channel: ChannelSource::Inline(ChannelSpec {
                n_bins: 30,
                taps: TapProfile::equal(5),
                corr: TemporalCorrelation::Ar1 { gamma: 0.9672 },
            }),
            constraint: ConstraintConfig {
                kind: ConstraintChoice::Quad,
                alpha: Some(10.0),
            },
            snr_grid: SnrGrid {
                start_db: -50.0,
                stop_db: 20.0,
                points: 36,
            },
            ect: EctOptions::with_k_max(1 << 16),
            quadrature: QuadratureSpec::default(),
            search: SearchSpec::default(),
            mc: None,
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, Option<PathBuf>)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok((cfg, path.parent().map(Path::to_path_buf)))
    }

    pub fn validate(&self) -> Result<()> {
        self.snr_grid.validate()?;
        self.constraint.validate()?;
        self.ect.validate()?;
        self.quadrature.validate()?;
        self.search.validate()?;
        if let Some(mc) = &self.mc {
            mc.validate()?;
        }
        Ok(())
    }

    /// Search settings with the top-level quadrature applied.
    pub fn search_spec(&self) -> SearchSpec {
        SearchSpec {
            quadrature: self.quadrature,
            ..self.search.clone()
        }
    }
}
