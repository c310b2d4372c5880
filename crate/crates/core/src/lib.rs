//! Evaporation-driven thinning and breakup of a periodic tear-film patch.
//!
//! The film thickness `h`, pressure `p`, osmolarity `c` and fluorescein
//! concentration `f` are discretized with Fourier collocation on
//! `(−π, π]²` ([`spectral`], [`model`]) and advanced with a variable-order
//! stiff integrator ([`dae`]). [`pod`] builds reduced models from
//! snapshots, [`axisym`] and [`streak`] solve the radially symmetric and
//! one-dimensional reductions, and [`studies`] holds the convergence and
//! error comparisons.

pub mod axisym;
pub mod dae;
pub mod model;
pub mod pod;
pub mod spectral;
pub mod streak;
pub mod studies;

pub use axisym::{integrate_radial, radial_to_cartesian, RadialGrid, RadialPeak, RadialRecord};
pub use dae::{
    integrate, solve_f_stage, HaltReason, IntegratorConfig, IntegratorError, LinearSolverKind, ProbeTrace,
    SolutionRecord,
};
pub use model::{
    dimensionalize, Evaporation, EvaporationPeak, FieldState, ModelError, ModelParams, PhysicalScales, Quantity,
    QuantityKind, TearFilmModel,
};
pub use pod::{integrate_reduced, radial_snapshot_basis, PodBasis, PodError, PodRanks};
pub use spectral::{PeriodicGrid, SpectralError};
pub use streak::{integrate_streak, StreakPeak};
