//! One-dimensional periodic streak: the film model on a line grid with an
//! evaporation peak that is uniform in `y`.

use serde::{Deserialize, Serialize};

use crate::dae::{integrate, solve_f_stage, IntegratorConfig, IntegratorError, SolutionRecord};
use crate::model::{Evaporation, EvaporationPeak, FieldState, ModelError, ModelParams, TearFilmModel};
use crate::spectral::PeriodicGrid;

/// Default number of nodes on `(−π, π]`.
pub const DEFAULT_NODES: usize = 128;

/// `J(x) = v_b + (a − v_b) exp(−(x/x_w)²/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreakPeak {
    pub amplitude: f64,
    pub width: f64,
    pub baseline: f64,
}

impl StreakPeak {
    pub fn evaporation(&self) -> Evaporation {
        Evaporation {
            baseline: self.baseline,
            peaks: vec![EvaporationPeak {
                amplitude: self.amplitude,
                center: [0.0, 0.0],
                widths: [self.width, f64::INFINITY],
            }],
            periodic_images: false,
        }
    }

    pub fn model(&self, params: ModelParams, nodes: usize) -> Result<TearFilmModel, ModelError> {
        let grid = PeriodicGrid::line(nodes)?;
        let evap = self.evaporation();
        evap.validate()?;
        TearFilmModel::new(grid, params, evap)
    }
}

/// Integrates the streak from the uniform state, fluorescein included.
/// The trace is taken at `x = 0`.
pub fn integrate_streak(model: &TearFilmModel, config: &IntegratorConfig) -> Result<SolutionRecord, IntegratorError> {
    let grid = model.grid();
    if !grid.is_line() {
        return Err(IntegratorError::InvalidConfig("streak solver needs a line grid".into()));
    }
    let cfg = IntegratorConfig { keep_history: true, ..config.clone() };
    let initial = FieldState::uniform(grid, model.params().f0);
    let mut record = integrate(model, &initial, &cfg, &[[0.0, 0.0]])?;
    solve_f_stage(model, &mut record, None, &cfg)?;
    if !config.keep_history {
        record.history = None;
    }
    Ok(record)
}
