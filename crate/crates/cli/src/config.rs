//! Run and sweep configuration files (TOML).
//!
//! Every section is optional and unknown keys are rejected. A minimal run
//! file is just `mode = "full"`, which is the default single spot on a
//! 60×60 grid.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tearfilm::{Evaporation, EvaporationPeak, IntegratorConfig, ModelParams, PodRanks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    Pod,
    Radial1d,
    Streak1d,
    GridStudy,
    PodErrorStudy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSource {
    Full2d,
    Radial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { nx: 60, ny: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PodConfig {
    /// In `full` mode, also export a basis built from `[0, τ]`.
    pub enabled: bool,
    pub tau: f64,
    /// Snapshot count; the standard count for `tau` when absent.
    pub snapshots: Option<usize>,
    /// Basis ranks; the standard ranks for `tau` when absent.
    pub ranks: Option<PodRanks>,
    pub basis: BasisSource,
    /// Window of the radial solves behind a radial basis.
    pub radial_window: f64,
    pub radial_snapshots: usize,
    /// Spacing of the comparison times in `pod_error_study`.
    pub compare_interval: f64,
    /// Windows compared by `pod_error_study`; `[tau]` when empty.
    pub tau_values: Vec<f64>,
    /// Basis sources compared by `pod_error_study`; `[basis]` when empty.
    pub sources: Vec<BasisSource>,
}

impl Default for PodConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            tau: 0.5,
            snapshots: None,
            ranks: None,
            basis: BasisSource::Full2d,
            radial_window: 3.0,
            radial_snapshots: 100,
            compare_interval: 0.1,
            tau_values: Vec::new(),
            sources: Vec::new(),
        }
    }
}

impl PodConfig {
    pub fn ranks_for(&self, tau: f64) -> Result<PodRanks> {
        match self.ranks.or_else(|| PodRanks::for_window(tau)) {
            Some(r) => Ok(r),
            None => bail!("pod.ranks must be given for the non-standard window τ = {tau}"),
        }
    }

    pub fn snapshots_for(&self, tau: f64) -> usize {
        self.snapshots.or_else(|| PodRanks::snapshot_count(tau)).unwrap_or(50)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Snapshot cadence; no field snapshots when absent.
    pub snapshot_interval: Option<f64>,
    /// Probe points; all peak centers plus the origin when absent.
    pub probes: Option<Vec<[f64; 2]>>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), snapshot_interval: Some(0.5), probes: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadialConfig {
    pub nodes: usize,
    pub r0: f64,
}

impl Default for RadialConfig {
    fn default() -> Self {
        Self { nodes: 48, r0: PI }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreakConfig {
    pub nodes: usize,
}

impl Default for StreakConfig {
    fn default() -> Self {
        Self { nodes: tearfilm::streak::DEFAULT_NODES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridStudyConfig {
    pub sizes: Vec<usize>,
    pub reference: usize,
    pub time: f64,
}

impl Default for GridStudyConfig {
    fn default() -> Self {
        Self { sizes: vec![20, 30, 40, 50, 60, 80], reference: 100, time: 2.4 }
    }
}

fn default_evaporation() -> Evaporation {
    Evaporation::single_spot(1.0, 0.1, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_evaporation")]
    pub evaporation: Evaporation,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub pod: PodConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub radial: RadialConfig,
    #[serde(default)]
    pub streak: StreakConfig,
    #[serde(default)]
    pub grid_study: GridStudyConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.evaporation.validate()?;
        self.integrator.validate()?;
        tearfilm::PeriodicGrid::new(self.grid.nx, self.grid.ny)?;
        let pod = &self.pod;
        if matches!(self.mode, Mode::Pod | Mode::PodErrorStudy) || pod.enabled {
            for &tau in pod.tau_values.iter().chain(std::iter::once(&pod.tau)) {
                if !(tau > 0.0) {
                    bail!("pod window τ must be positive, got {tau}");
                }
                pod.ranks_for(tau)?;
            }
        }
        if let Some(s) = self.output.snapshot_interval {
            if !(s > 0.0) {
                bail!("output.snapshot_interval must be positive, got {s}");
            }
        }
        if self.mode == Mode::Streak1d {
            self.streak_peak()?;
        }
        if self.mode == Mode::Radial1d {
            self.radial_peak()?;
        }
        if self.mode == Mode::GridStudy && self.grid_study.sizes.is_empty() {
            bail!("grid_study.sizes must not be empty");
        }
        Ok(())
    }

    pub fn probes(&self) -> Vec<[f64; 2]> {
        if let Some(p) = &self.output.probes {
            return p.clone();
        }
        let mut out: Vec<[f64; 2]> = Vec::new();
        for p in &self.evaporation.peaks {
            if !out.contains(&p.center) {
                out.push(p.center);
            }
        }
        if !out.contains(&[0.0, 0.0]) {
            out.push([0.0, 0.0]);
        }
        out
    }

    fn single_peak(&self, what: &str) -> Result<&EvaporationPeak> {
        match self.evaporation.peaks.as_slice() {
            [p] => Ok(p),
            _ => bail!("{what} mode needs exactly one evaporation peak, got {}", self.evaporation.peaks.len()),
        }
    }

    pub fn streak_peak(&self) -> Result<tearfilm::StreakPeak> {
        let p = self.single_peak("streak1d")?;
        Ok(tearfilm::StreakPeak { amplitude: p.amplitude, width: p.widths[0], baseline: self.evaporation.baseline })
    }

    pub fn radial_peak(&self) -> Result<tearfilm::RadialPeak> {
        let p = self.single_peak("radial1d")?;
        if !p.is_circular() {
            bail!("radial1d mode needs a circular peak, got widths {:?}", p.widths);
        }
        Ok(tearfilm::RadialPeak { amplitude: p.amplitude, width: p.widths[0], baseline: self.evaporation.baseline })
    }
}

/// Which evaporation parameter a sweep varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepAxis {
    /// `x_w` takes each value and `y_w = product / x_w`.
    FixedProduct { product: f64, values: Vec<f64> },
    /// `y_w` takes each value; `x_w` stays as in the base peak.
    FixedWidth { values: Vec<f64> },
    /// Two copies of the base peak at `(±x_k, 0)`.
    Separation { values: Vec<f64> },
}

impl SweepAxis {
    pub fn values(&self) -> &[f64] {
        match self {
            Self::FixedProduct { values, .. } | Self::FixedWidth { values } | Self::Separation { values } => values,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::FixedProduct { .. } => "x_w",
            Self::FixedWidth { .. } => "y_w",
            Self::Separation { .. } => "x_k",
        }
    }

    /// Evaporation map of the case with axis value `v`.
    pub fn apply(&self, base: &Evaporation, v: f64) -> Result<Evaporation> {
        let peak = match base.peaks.as_slice() {
            [p] => *p,
            _ => bail!("sweep base needs exactly one evaporation peak"),
        };
        let peaks = match self {
            Self::FixedProduct { product, .. } => {
                vec![EvaporationPeak { widths: [v, product / v], ..peak }]
            }
            Self::FixedWidth { .. } => vec![EvaporationPeak { widths: [peak.widths[0], v], ..peak }],
            Self::Separation { .. } => vec![
                EvaporationPeak { center: [-v, peak.center[1]], ..peak },
                EvaporationPeak { center: [v, peak.center[1]], ..peak },
            ],
        };
        let e = Evaporation { peaks, ..base.clone() };
        e.validate()?;
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Run config for every case, relative to the sweep file. Defaults
    /// apply when absent.
    pub base: Option<PathBuf>,
    pub axis: SweepAxis,
}

impl SweepConfig {
    /// The sweep and its resolved base config.
    pub fn load(path: &Path) -> Result<(Self, RunConfig)> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let sweep: Self = toml::from_str(&text).map_err(|e| anyhow::anyhow!("invalid sweep file {}: {e}", path.display()))?;
        let base = match &sweep.base {
            Some(b) => RunConfig::load(&path.parent().unwrap_or(Path::new(".")).join(b))?,
            None => RunConfig::parse("mode = \"full\"")?,
        };
        if base.mode != Mode::Full {
            bail!("sweep base must use mode = \"full\"");
        }
        if sweep.axis.values().is_empty() {
            bail!("sweep axis has no values");
        }
        for &v in sweep.axis.values() {
            sweep.axis.apply(&base.evaporation, v)?;
        }
        Ok((sweep, base))
    }
}
