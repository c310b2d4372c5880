//! Convergence and reduced-model error studies built on the solvers.

use serde::Serialize;

use crate::dae::{integrate, relative_error, IntegratorConfig, IntegratorError, SolutionRecord};
use crate::model::{Evaporation, FieldState, ModelError, ModelParams, TearFilmModel};
use crate::spectral::{fourier_interpolate, PeriodicGrid};

/// Relative errors of one field triple against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldErrors {
    pub t: f64,
    pub h: f64,
    pub p: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridStudyRow {
    pub n: usize,
    pub errors: FieldErrors,
}

/// State at `t` on an `n × n` grid, integrated with the breakup event off.
pub fn state_at(
    evaporation: &Evaporation,
    params: &ModelParams,
    n: usize,
    t: f64,
    config: &IntegratorConfig,
) -> Result<FieldState, IntegratorError> {
    let grid = PeriodicGrid::square(n).map_err(ModelError::from)?;
    let model = TearFilmModel::new(grid, *params, evaporation.clone())?;
    let cfg = IntegratorConfig {
        t_end: t,
        stop_at_breakup: false,
        snapshot_times: vec![t],
        snapshot_interval: None,
        trace_interval: t,
        ..config.clone()
    };
    let rec = integrate(&model, &FieldState::uniform(&grid, params.f0), &cfg, &[])?;
    rec.snapshot_at(t)
        .cloned()
        .ok_or_else(|| IntegratorError::InvalidConfig(format!("integration stopped at t = {}", rec.final_state.t)))
}

/// Errors of `state` against `reference`, after spectral interpolation onto
/// the reference grid.
pub fn errors_against(
    state: &FieldState,
    grid: &PeriodicGrid,
    reference: &FieldState,
    reference_grid: &PeriodicGrid,
) -> Result<FieldErrors, IntegratorError> {
    let up = |v: &[f64]| fourier_interpolate(v, grid, reference_grid).map_err(ModelError::from);
    Ok(FieldErrors {
        t: state.t,
        h: relative_error(&up(&state.h)?, &reference.h)?,
        p: relative_error(&up(&state.p)?, &reference.p)?,
        c: relative_error(&up(&state.c)?, &reference.c)?,
    })
}

/// Errors at time `t` for each grid size in `sizes` against an
/// `reference × reference` solution.
pub fn grid_study(
    evaporation: &Evaporation,
    params: &ModelParams,
    sizes: &[usize],
    reference: usize,
    t: f64,
    config: &IntegratorConfig,
) -> Result<Vec<GridStudyRow>, IntegratorError> {
    let ref_grid = PeriodicGrid::square(reference).map_err(ModelError::from)?;
    let ref_state = state_at(evaporation, params, reference, t, config)?;
    sizes
        .iter()
        .map(|&n| {
            let grid = PeriodicGrid::square(n).map_err(ModelError::from)?;
            let s = state_at(evaporation, params, n, t, config)?;
            Ok(GridStudyRow { n, errors: errors_against(&s, &grid, &ref_state, &ref_grid)? })
        })
        .collect()
}

/// Snapshot-by-snapshot errors of `approx` against `reference` at the
/// times both records hold, skipping `t = 0`, where the pressure vanishes.
pub fn snapshot_errors(approx: &SolutionRecord, reference: &SolutionRecord) -> Result<Vec<FieldErrors>, IntegratorError> {
    reference
        .snapshots
        .iter()
        .filter(|s| s.t > 0.0)
        .filter_map(|r| approx.snapshot_at(r.t).map(|a| (a, r)))
        .map(|(a, r)| {
            Ok(FieldErrors {
                t: r.t,
                h: relative_error(&a.h, &r.h)?,
                p: relative_error(&a.p, &r.p)?,
                c: relative_error(&a.c, &r.c)?,
            })
        })
        .collect()
}

/// `max |a − b| / max |b|` over the samples where the time stamps agree.
pub fn trace_discrepancy(ta: &[f64], a: &[f64], tb: &[f64], b: &[f64]) -> f64 {
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for ((&t1, &x), (&t2, &y)) in ta.iter().zip(a).zip(tb.iter().zip(b)) {
        if (t1 - t2).abs() > 1e-9 {
            continue;
        }
        diff = diff.max((x - y).abs());
        scale = scale.max(y.abs());
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
