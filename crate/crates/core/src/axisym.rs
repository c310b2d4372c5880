//! Axisymmetric film model for a single circular evaporation spot.
//!
//! Fields are even in `r`, so they are represented on Chebyshev–Lobatto
//! points of `[−R0, R0]` and only the half with `r ≥ 0` is stored. The
//! coordinate singularity at `r = 0` uses `(1/r)∂r(r g) → 2∂r g` for odd
//! `g`. At `r = R0` the radial derivatives of `h`, `p`, `c` and `f`
//! vanish.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dae::ndf::{self, Halt, Observer, OdeSystem, Segment, SolverStats};
use crate::dae::{uniform_times, HaltReason, IntegratorConfig, IntegratorError, LinearSolverKind};
use crate::model::{check_positive, fl_intensity, ModelError, ModelParams};
use crate::spectral::PeriodicGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadialError {
    #[error("radial grid needs R0 > 0 and at least 32 nodes (got R0 = {r0}, n = {n})")]
    InvalidGrid { r0: f64, n: usize },
    #[error("invalid radial peak: {0}")]
    InvalidPeak(String),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

/// Nodes `0 = r_0 < … < r_{n−1} = R0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    r0: f64,
    r: Vec<f64>,
    /// Full Chebyshev points `x_j = R0 cos(πj/N)`, `j = 0..=N`.
    x: Vec<f64>,
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
}

impl RadialGrid {
    pub fn new(r0: f64, n: usize) -> Result<Self, RadialError> {
        if !(r0 > 0.0 && r0.is_finite()) || n < 32 {
            return Err(RadialError::InvalidGrid { r0, n });
        }
        let big_n = 2 * (n - 1);
        let x: Vec<f64> = (0..=big_n).map(|j| r0 * (PI * j as f64 / big_n as f64).cos()).collect();
        let d1 = cheb_matrix(&x);
        let d2 = &d1 * &d1;
        let mut r: Vec<f64> = (0..n).map(|j| x[big_n / 2 - j].abs()).collect();
        r[0] = 0.0;
        let weights = radial_weights(big_n, r0);
        let bary = (0..=big_n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == big_n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { r0, r, x, d1, d2, weights, bary })
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    /// Node radii, ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.r
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    fn full_len(&self) -> usize {
        self.x.len()
    }

    fn half(&self) -> usize {
        (self.x.len() - 1) / 2
    }

    /// Even extension of an ascending half profile to the full points.
    fn extend(&self, u: &[f64]) -> Vec<f64> {
        let nh = self.half();
        (0..self.full_len()).map(|j| u[nh - j.min(2 * nh - j)]).collect()
    }

    /// `∫₀^R0 u(r) r dr` for the polynomial interpolant of `u`.
    pub fn integrate_r(&self, u: &[f64]) -> f64 {
        let full = self.extend(u);
        full.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }

    /// Barycentric interpolation of the even extension at radius `r`.
    pub fn interpolate(&self, u: &[f64], r: f64) -> f64 {
        let full = self.extend(u);
        self.interp_full(&full, r)
    }

    fn interp_full(&self, full: &[f64], r: f64) -> f64 {
        if r >= self.r0 {
            return full[0];
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, (&xj, &wj)) in self.x.iter().zip(&self.bary).enumerate() {
            let d = r - xj;
            if d == 0.0 {
                return full[j];
            }
            let t = wj / d;
            num += t * full[j];
            den += t;
        }
        num / den
    }
}

fn cheb_matrix(x: &[f64]) -> DMatrix<f64> {
    let n = x.len() - 1;
    let c = |i: usize| if i == 0 || i == n { 2.0 } else { 1.0 };
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                d[(i, j)] = c(i) / c(j) * s / (x[i] - x[j]);
            }
        }
    }
    for i in 0..=n {
        let s: f64 = (0..=n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    d
}

/// Weights `w` with `Σ w_j u_j = ∫₀^R0 p(r) r dr`, `p` the interpolant.
fn radial_weights(n: usize, r0: f64) -> Vec<f64> {
    // ∫₀¹ T_m(x) dx.
    let jm = |m: usize| -> f64 {
        match m {
            0 => 1.0,
            1 => 0.5,
            _ => {
                let m = m as f64;
                (1.0 - ((m + 1.0) * PI / 2.0).cos()) / (2.0 * (m + 1.0)) - (1.0 - ((m - 1.0) * PI / 2.0).cos()) / (2.0 * (m - 1.0))
            }
        }
    };
    // ∫₀¹ x T_k(x) dx.
    let moments: Vec<f64> = (0..=n)
        .map(|k| match k {
            0 => 0.5,
            1 => 1.0 / 3.0,
            _ => 0.5 * (jm(k + 1) + jm(k - 1)),
        })
        .collect();
    let xs: Vec<f64> = (0..=n).map(|j| (PI * j as f64 / n as f64).cos()).collect();
    let v = DMatrix::from_fn(n + 1, n + 1, |j, k| (k as f64 * xs[j].acos()).cos());
    let w = v
        .transpose()
        .lu()
        .solve(&DVector::from_vec(moments))
        .expect("Chebyshev Vandermonde matrix is invertible");
    w.iter().map(|w| w * r0 * r0).collect()
}

/// Gaussian spot `J(r) = v_b + (a − v_b) exp(−(r/r_w)²/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialPeak {
    pub amplitude: f64,
    pub width: f64,
    pub baseline: f64,
}

impl RadialPeak {
    pub fn validate(&self) -> Result<(), RadialError> {
        if !(self.baseline >= 0.0) || !(self.amplitude > self.baseline) || !(self.width > 0.0) {
            return Err(RadialError::InvalidPeak(format!(
                "need a > v_b ≥ 0 and r_w > 0 (a = {}, v_b = {}, r_w = {})",
                self.amplitude, self.baseline, self.width
            )));
        }
        Ok(())
    }

    pub fn at(&self, r: f64) -> f64 {
        let s = r / self.width;
        self.baseline + (self.amplitude - self.baseline) * (-s * s / 2.0).exp()
    }
}

/// Radial profiles at one time, on the ascending nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub t: f64,
    pub h: Vec<f64>,
    pub p: Vec<f64>,
    pub c: Vec<f64>,
    pub f: Vec<f64>,
}

/// Values at `r = 0` over time.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CenterTrace {
    pub t: Vec<f64>,
    pub h: Vec<f64>,
    pub p: Vec<f64>,
    pub c: Vec<f64>,
    pub f: Vec<f64>,
    pub intensity: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RadialRecord {
    pub grid: RadialGrid,
    pub profiles: Vec<RadialProfile>,
    pub center: CenterTrace,
    pub final_profile: RadialProfile,
    pub tbut: Option<f64>,
    pub halted: HaltReason,
    pub stats: SolverStats,
    /// `∫ h c r dr` and `∫ h f r dr` at every accepted step.
    pub solute: Vec<(f64, f64, f64)>,
}

/// Radial `(h, c, f)` system with boundary values and `p` eliminated.
pub struct RadialSystem<'a> {
    grid: &'a RadialGrid,
    params: &'a ModelParams,
    j: Vec<f64>,
}

struct Fields {
    h: Vec<f64>,
    p: Vec<f64>,
    c: Vec<f64>,
    f: Vec<f64>,
}

impl<'a> RadialSystem<'a> {
    pub fn new(grid: &'a RadialGrid, params: &'a ModelParams, peak: &RadialPeak) -> Self {
        let j = grid.x.iter().map(|x| peak.at(x.abs())).collect();
        Self { grid, params, j }
    }

    fn unknowns(&self) -> usize {
        self.grid.half()
    }

    /// Full-point field from interior unknowns (`r < R0`, descending
    /// index order as in the full grid) with a Neumann outer value.
    fn with_boundary(&self, interior: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let big_n = g.full_len() - 1;
        let nh = g.half();
        let mut full = vec![0.0; big_n + 1];
        for j in 1..=nh {
            full[j] = interior[j - 1];
            full[big_n - j] = interior[j - 1];
        }
        self.neumann(&mut full);
        full
    }

    fn neumann(&self, full: &mut [f64]) {
        let d = &self.grid.d1;
        let big_n = full.len() - 1;
        let s: f64 = (1..big_n).map(|j| d[(0, j)] * full[j]).sum();
        let b = -s / (d[(0, 0)] + d[(0, big_n)]);
        full[0] = b;
        full[big_n] = b;
    }

    fn matvec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
        (m * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// `(1/x)∂x(x g)` for an odd full-point field `g` with derivative `dg`.
    fn axi_div(&self, g: &[f64], dg: &[f64]) -> Vec<f64> {
        let nh = self.grid.half();
        (0..g.len())
            .map(|j| if j == nh { 2.0 * dg[j] } else { dg[j] + g[j] / self.grid.x[j] })
            .collect()
    }

    fn fields(&self, y: &[f64]) -> Fields {
        let m = self.unknowns();
        let h = self.with_boundary(&y[..m]);
        let c = self.with_boundary(&y[m..2 * m]);
        let f = self.with_boundary(&y[2 * m..]);
        let g = self.grid;
        let nh = g.half();
        let dh = Self::matvec(&g.d1, &h);
        let d2h = Self::matvec(&g.d2, &h);
        let mut p: Vec<f64> = (0..h.len())
            .map(|j| if j == nh { -2.0 * d2h[j] } else { -(d2h[j] + dh[j] / g.x[j]) })
            .collect();
        self.neumann(&mut p);
        Fields { h, p, c, f }
    }

    /// Ascending half profile from a full-point field.
    fn half_profile(&self, full: &[f64]) -> Vec<f64> {
        let nh = self.grid.half();
        (0..=nh).map(|i| full[nh - i]).collect()
    }

    pub fn profile(&self, t: f64, y: &[f64]) -> RadialProfile {
        let fl = self.fields(y);
        RadialProfile {
            t,
            h: self.half_profile(&fl.h),
            p: self.half_profile(&fl.p),
            c: self.half_profile(&fl.c),
            f: self.half_profile(&fl.f),
        }
    }

    pub fn initial_state(&self, f0: f64) -> Vec<f64> {
        let m = self.unknowns();
        let mut y = vec![1.0; 3 * m];
        y[2 * m..].iter_mut().for_each(|v| *v = f0);
        y
    }

    fn solute_rate(&self, fl: &Fields, s: &[f64], u: &[f64], pe: f64) -> Vec<f64> {
        let g = self.grid;
        let ds = Self::matvec(&g.d1, s);
        let mut flux: Vec<f64> = fl.h.iter().zip(&ds).map(|(h, d)| h * d).collect();
        let last = flux.len() - 1;
        flux[0] = 0.0;
        flux[last] = 0.0;
        let dflux = Self::matvec(&g.d1, &flux);
        let div = self.axi_div(&flux, &dflux);
        (0..s.len())
            .map(|j| {
                let osm = self.params.pc * (fl.c[j] - 1.0);
                -u[j] * ds[j] + div[j] / (fl.h[j] * pe) + (self.j[j] - osm) * s[j] / fl.h[j]
            })
            .collect()
    }
}

impl OdeSystem for RadialSystem<'_> {
    fn len(&self) -> usize {
        3 * self.unknowns()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError> {
        let m = self.unknowns();
        check_positive(&y[..m])?;
        let fl = self.fields(y);
        let g = self.grid;
        let dp = Self::matvec(&g.d1, &fl.p);
        let last = dp.len() - 1;
        let u: Vec<f64> = fl.h.iter().zip(&dp).map(|(h, d)| -h * h / 12.0 * d).collect();
        let mut q: Vec<f64> = fl.h.iter().zip(&u).map(|(h, u)| h * u).collect();
        q[0] = 0.0;
        q[last] = 0.0;
        let dq = Self::matvec(&g.d1, &q);
        let divq = self.axi_div(&q, &dq);
        let dc = self.solute_rate(&fl, &fl.c, &u, self.params.pe_c);
        let df = self.solute_rate(&fl, &fl.f, &u, self.params.pe_f);
        for j in 1..=m {
            let osm = self.params.pc * (fl.c[j] - 1.0);
            dy[j - 1] = -divq[j] - self.j[j] + osm;
            dy[m + j - 1] = dc[j];
            dy[2 * m + j - 1] = df[j];
        }
        Ok(())
    }

    fn monitor(&self, y: &[f64]) -> Option<f64> {
        Some(y[..self.unknowns()].iter().copied().fold(f64::INFINITY, f64::min))
    }
}

struct RadialObserver<'a> {
    sys: &'a RadialSystem<'a>,
    snapshot: Vec<bool>,
    trace: Vec<bool>,
    profiles: Vec<RadialProfile>,
    center: CenterTrace,
    solute: Vec<(f64, f64, f64)>,
    params: &'a ModelParams,
}

impl RadialObserver<'_> {
    fn push_center(&mut self, prof: &RadialProfile) {
        self.center.t.push(prof.t);
        self.center.h.push(prof.h[0]);
        self.center.p.push(prof.p[0]);
        self.center.c.push(prof.c[0]);
        self.center.f.push(prof.f[0]);
        self.center.intensity.push(fl_intensity(&[prof.h[0]], &[prof.f[0]], self.params)[0]);
    }

    fn push_solute(&mut self, t: f64, y: &[f64]) {
        let prof = self.sys.profile(t, y);
        let g = self.sys.grid;
        let hc: Vec<f64> = prof.h.iter().zip(&prof.c).map(|(a, b)| a * b).collect();
        let hf: Vec<f64> = prof.h.iter().zip(&prof.f).map(|(a, b)| a * b).collect();
        self.solute.push((t, g.integrate_r(&hc), g.integrate_r(&hf)));
    }
}

impl Observer for RadialObserver<'_> {
    fn sample(&mut self, index: usize, t: f64, y: &[f64]) {
        let prof = self.sys.profile(t, y);
        if self.trace[index] {
            self.push_center(&prof);
        }
        if self.snapshot[index] {
            self.profiles.push(prof);
        }
    }

    fn step(&mut self, segment: &Segment) {
        self.push_solute(segment.t_new, &segment.y_new);
    }
}

/// Solves the axisymmetric model from the uniform state.
pub fn integrate_radial(
    peak: &RadialPeak,
    params: &ModelParams,
    grid: &RadialGrid,
    config: &IntegratorConfig,
) -> Result<RadialRecord, RadialError> {
    peak.validate()?;
    params.validate().map_err(IntegratorError::from)?;
    config.validate()?;
    let sys = RadialSystem::new(grid, params, peak);
    let snaps = config.snapshot_schedule();
    let traces = uniform_times(0.0, config.t_end, config.trace_interval);
    let mut times: Vec<f64> = snaps.iter().chain(&traces).copied().collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    let near = |set: &[f64], t: f64| set.iter().any(|s| (s - t).abs() <= 1e-12);
    let snapshot = times.iter().map(|&t| near(&snaps, t)).collect();
    let trace = times.iter().map(|&t| near(&traces, t)).collect();

    let mut cfg = config.clone();
    if cfg.linear_solver == LinearSolverKind::Auto {
        cfg.linear_solver = LinearSolverKind::Dense;
    }
    let opts = cfg.ndf_options(sys.len());
    let y0 = sys.initial_state(params.f0);
    let mut obs = RadialObserver {
        sys: &sys,
        snapshot,
        trace,
        profiles: Vec::new(),
        center: CenterTrace::default(),
        solute: Vec::new(),
        params,
    };
    obs.push_solute(0.0, &y0);
    let out = ndf::integrate(&sys, 0.0, &y0, config.t_end, &times, &opts, &mut obs).map_err(IntegratorError::from)?;
    let final_profile = sys.profile(out.t, &out.y);
    let (tbut, halted) = match &out.halt {
        Halt::Event => (out.event_time, HaltReason::Event),
        Halt::EndTime => (None, HaltReason::TEnd),
        Halt::Failure(m) => (None, HaltReason::Failure(m.clone())),
    };
    if out.halt != Halt::EndTime && obs.center.t.last().is_none_or(|&t| t < out.t) {
        obs.push_center(&final_profile);
    }
    Ok(RadialRecord {
        grid: grid.clone(),
        profiles: obs.profiles,
        center: obs.center,
        final_profile,
        tbut,
        halted,
        stats: out.stats,
        solute: obs.solute,
    })
}

/// Samples a radial profile around `center` on the periodic grid.
/// Radii beyond `R0` take the outermost value.
pub fn radial_to_cartesian(profile: &[f64], radial: &RadialGrid, center: [f64; 2], grid: &PeriodicGrid) -> Vec<f64> {
    let full = radial.extend(profile);
    grid.sample(|x, y| {
        let r = (x - center[0]).hypot(y - center[1]);
        radial.interp_full(&full, r)
    })
}
