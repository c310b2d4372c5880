//! Stiff time integration of the film model and breakup detection.

mod film;
pub mod linear;
pub mod ndf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use film::{integrate, solve_f_stage, solve_f_stage_reduced, FStageSystem, FilmObserver, FilmSystem, History, Lifting};
pub(crate) use film::run_lifted;
pub use linear::Gmres;
pub use ndf::{Halt, LinearSolver, NdfOptions, NdfOutput, Observer, OdeSystem, Segment, SolverStats};

use crate::model::{FieldState, ModelError};
use crate::spectral::PeriodicGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("solution record holds no dense history; rerun with keep_history enabled")]
    MissingHistory,
    #[error("relative error undefined: reference field has zero norm")]
    ZeroReference,
    #[error("fields have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<ndf::NdfError> for IntegratorError {
    fn from(e: ndf::NdfError) -> Self {
        match e {
            ndf::NdfError::InvalidOptions(m) => Self::InvalidConfig(m),
            ndf::NdfError::InitialState(m) => Self::Model(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolverKind {
    /// Dense for small systems, Krylov otherwise.
    #[default]
    Auto,
    Dense,
    Krylov,
}

/// Unknown count at or below which `Auto` picks the dense solver.
pub const DENSE_LIMIT: usize = 640;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_order: usize,
    pub initial_dt: Option<f64>,
    pub max_dt: Option<f64>,
    pub max_steps: usize,
    /// Breakup thickness; `1 µm / d` by default.
    pub tbu_threshold: f64,
    pub stop_at_breakup: bool,
    pub t_end: f64,
    /// Explicit snapshot times.
    pub snapshot_times: Vec<f64>,
    /// Snapshot cadence, merged with `snapshot_times`.
    pub snapshot_interval: Option<f64>,
    /// Cadence of probe traces.
    pub trace_interval: f64,
    pub linear_solver: LinearSolverKind,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    /// Keep the dense history needed by the fluorescein stage.
    pub keep_history: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-8,
            max_order: 5,
            initial_dt: None,
            max_dt: None,
            max_steps: 200_000,
            tbu_threshold: 1.0 / 4.5,
            stop_at_breakup: true,
            t_end: 10.0,
            snapshot_times: Vec::new(),
            snapshot_interval: None,
            trace_interval: 0.02,
            linear_solver: LinearSolverKind::Auto,
            gmres_tol: 1e-3,
            gmres_restart: 40,
            keep_history: false,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        let bad = |m: String| Err(IntegratorError::InvalidConfig(m));
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return bad(format!("rtol {} and atol {} must be positive", self.rtol, self.atol));
        }
        if !(1..=5).contains(&self.max_order) {
            return bad(format!("max_order must be in 1..=5, got {}", self.max_order));
        }
        if !(self.tbu_threshold > 0.0 && self.tbu_threshold < 1.0) {
            return bad(format!("tbu_threshold must lie in (0, 1), got {}", self.tbu_threshold));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.trace_interval > 0.0) {
            return bad(format!("trace_interval must be positive, got {}", self.trace_interval));
        }
        if let Some(s) = self.snapshot_interval {
            if !(s > 0.0) {
                return bad(format!("snapshot_interval must be positive, got {s}"));
            }
        }
        if self.snapshot_times.iter().any(|t| !(*t >= 0.0)) {
            return bad("snapshot_times must be non-negative".into());
        }
        if !(self.gmres_tol > 0.0) || self.gmres_restart == 0 {
            return bad("gmres_tol and gmres_restart must be positive".into());
        }
        Ok(())
    }

    /// Sorted, deduplicated snapshot times within `[0, t_end]`.
    pub fn snapshot_schedule(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self.snapshot_times.iter().copied().filter(|t| *t <= self.t_end).collect();
        if let Some(dt) = self.snapshot_interval {
            times.extend(uniform_times(0.0, self.t_end, dt));
        }
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        times
    }

    pub fn ndf_options(&self, unknowns: usize) -> NdfOptions {
        let dense = match self.linear_solver {
            LinearSolverKind::Dense => true,
            LinearSolverKind::Krylov => false,
            LinearSolverKind::Auto => unknowns <= DENSE_LIMIT,
        };
        let linear = if dense {
            LinearSolver::Dense
        } else {
            LinearSolver::Krylov(Gmres {
                restart: self.gmres_restart,
                max_iters: 4 * self.gmres_restart,
                tol: self.gmres_tol,
            })
        };
        NdfOptions {
            rtol: self.rtol,
            atol: self.atol,
            max_order: self.max_order,
            initial_step: self.initial_dt,
            max_step: self.max_dt,
            max_steps: self.max_steps,
            linear,
            event_threshold: self.stop_at_breakup.then_some(self.tbu_threshold),
        }
    }
}

/// `t0, t0 + dt, …` up to and including `t1` (within rounding).
pub fn uniform_times(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let n = ((t1 - t0) / dt + 1e-9).floor() as usize;
    (0..=n).map(|i| t0 + i as f64 * dt).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "message")]
pub enum HaltReason {
    Event,
    TEnd,
    Failure(String),
}

/// Time series at one probe point.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ProbeTrace {
    pub point: [f64; 2],
    pub node: usize,
    pub t: Vec<f64>,
    pub h: Vec<f64>,
    pub p: Vec<f64>,
    pub c: Vec<f64>,
    /// Filled by the fluorescein stage.
    pub f: Vec<f64>,
    pub intensity: Vec<f64>,
    pub advection: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub evaporation: Vec<f64>,
    pub osmosis: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolutionRecord {
    pub grid: PeriodicGrid,
    /// Snapshot times, strictly increasing.
    pub times: Vec<f64>,
    pub snapshots: Vec<FieldState>,
    pub traces: Vec<ProbeTrace>,
    /// Global maximum of `c` at each trace time.
    pub max_c: Vec<f64>,
    pub tbut: Option<f64>,
    pub halted: HaltReason,
    pub final_state: FieldState,
    pub stats: SolverStats,
    pub history: Option<History>,
    /// Wall-clock seconds per accepted step end time, `(t, seconds)`.
    pub wall_clock: Vec<(f64, f64)>,
}

impl SolutionRecord {
    /// Wall-clock seconds spent integrating beyond `t`.
    pub fn wall_after(&self, t: f64) -> f64 {
        let total = self.wall_clock.last().map_or(0.0, |w| w.1);
        let before = self
            .wall_clock
            .iter()
            .take_while(|w| w.0 <= t)
            .last()
            .map_or(0.0, |w| w.1);
        total - before
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&FieldState> {
        self.snapshots.iter().find(|s| (s.t - t).abs() <= 1e-12)
    }
}

/// `‖a − b‖₂ / ‖b‖₂` over all nodes.
pub fn relative_error(a: &[f64], b: &[f64]) -> Result<f64, IntegratorError> {
    if a.len() != b.len() {
        return Err(IntegratorError::LengthMismatch(a.len(), b.len()));
    }
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        return Err(IntegratorError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_examples() {
        let b = [1.0, -2.0, 3.0];
        assert_eq!(relative_error(&b, &b).unwrap(), 0.0);
        let a: Vec<f64> = b.iter().map(|v| 1.01 * v).collect();
        assert!((relative_error(&a, &b).unwrap() - 0.01).abs() < 1e-14);
        assert_eq!(relative_error(&b, &[0.0; 3]), Err(IntegratorError::ZeroReference));
        assert!(relative_error(&b, &[1.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        let c = IntegratorConfig { tbu_threshold: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        let c = IntegratorConfig { max_order: 6, ..Default::default() };
        assert!(c.validate().is_err());
        assert!((IntegratorConfig::default().tbu_threshold - 0.22222).abs() < 1e-5);
    }

    #[test]
    fn schedule_merges_and_sorts() {
        let c = IntegratorConfig {
            t_end: 1.0,
            snapshot_times: vec![0.75, 0.5, 3.0],
            snapshot_interval: Some(0.5),
            ..Default::default()
        };
        assert_eq!(c.snapshot_schedule(), vec![0.0, 0.5, 0.75, 1.0]);
    }
}
