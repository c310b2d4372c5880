//! Proper orthogonal decomposition: snapshot bases and the Galerkin
//! reduced film model.

use std::fmt;
use std::io::{self, BufRead, Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axisym::{integrate_radial, radial_to_cartesian, RadialError, RadialGrid, RadialPeak};
use crate::dae::{
    integrate, run_lifted, solve_f_stage, uniform_times, IntegratorConfig, IntegratorError, Lifting, OdeSystem,
    SolutionRecord,
};
use crate::model::{check_positive, Evaporation, FieldState, ModelError, ModelParams, TearFilmModel};
use crate::spectral::PeriodicGrid;

#[derive(Debug, Error)]
pub enum PodError {
    #[error("snapshot matrix needs at least 2 columns, got {0}")]
    TooFewSnapshots(usize),
    #[error("snapshot times must start at 0 and increase strictly")]
    BadTimes,
    #[error("snapshot column {index} has length {len}, expected {expected}")]
    ColumnLength { index: usize, len: usize, expected: usize },
    #[error("rank {rank} outside 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("breakup at t = {tbut} before the snapshot window ends at {tau}")]
    EarlyBreakup { tbut: f64, tau: f64 },
    #[error("snapshot window τ = {0} must be positive")]
    BadWindow(f64),
    #[error("peak {0} is not circular")]
    NonCircularPeak(usize),
    #[error("no fluorescein snapshots were captured")]
    MissingFluorescein,
    #[error("basis has {rows} rows but the grid has {nodes} nodes")]
    GridMismatch { rows: usize, nodes: usize },
    #[error("malformed basis file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    H,
    P,
    C,
    F,
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::H => "h",
            Self::P => "p",
            Self::C => "c",
            Self::F => "f",
        })
    }
}

impl FromStr for Variable {
    type Err = PodError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "h" => Ok(Self::H),
            "p" => Ok(Self::P),
            "c" => Ok(Self::C),
            "f" => Ok(Self::F),
            _ => Err(PodError::Format(format!("unknown variable {s:?}"))),
        }
    }
}

/// Columns are states of one variable at increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub variable: Variable,
    pub times: Vec<f64>,
    pub columns: DMatrix<f64>,
}

impl SnapshotMatrix {
    pub fn new(variable: Variable, times: Vec<f64>, columns: &[Vec<f64>]) -> Result<Self, PodError> {
        if columns.len() < 2 {
            return Err(PodError::TooFewSnapshots(columns.len()));
        }
        if times.len() != columns.len() || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PodError::BadTimes);
        }
        let m = columns[0].len();
        if let Some((index, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != m) {
            return Err(PodError::ColumnLength { index, len: c.len(), expected: m });
        }
        let columns = DMatrix::from_fn(m, columns.len(), |i, j| columns[j][i]);
        Ok(Self { variable, times, columns })
    }

    /// Side-by-side concatenation of matrices of the same variable.
    pub fn concat(parts: &[SnapshotMatrix]) -> Result<DMatrix<f64>, PodError> {
        let first = parts.first().ok_or(PodError::TooFewSnapshots(0))?;
        let m = first.columns.nrows();
        let n: usize = parts.iter().map(|p| p.columns.ncols()).sum();
        let mut out = DMatrix::zeros(m, n);
        let mut j = 0;
        for p in parts {
            if p.columns.nrows() != m {
                return Err(PodError::ColumnLength { index: j, len: p.columns.nrows(), expected: m });
            }
            out.columns_mut(j, p.columns.ncols()).copy_from(&p.columns);
            j += p.columns.ncols();
        }
        Ok(out)
    }
}

/// Orthonormal columns and the singular values they came with.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub vectors: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl Basis {
    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn rows(&self) -> usize {
        self.vectors.nrows()
    }

    /// `Bᵀv`.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.vectors.tr_mul(&DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// `Ba`.
    pub fn lift(&self, a: &[f64]) -> Vec<f64> {
        (&self.vectors * DVector::from_column_slice(a)).as_slice().to_vec()
    }

    /// `‖S − BBᵀS‖_F`.
    pub fn reconstruction_error(&self, s: &DMatrix<f64>) -> f64 {
        let coeffs = self.vectors.tr_mul(s);
        (s - &self.vectors * coeffs).norm()
    }

    /// `max |BᵀB − I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.vectors.tr_mul(&self.vectors);
        let k = g.nrows();
        (&g - DMatrix::identity(k, k)).amax()
    }
}

/// First `rank` left singular vectors of `s`, not mean-centered.
pub fn compute_basis(s: &DMatrix<f64>, rank: usize) -> Result<Basis, PodError> {
    let max = s.nrows().min(s.ncols());
    if rank == 0 || rank > max {
        return Err(PodError::RankOutOfRange { rank, max });
    }
    let svd = s.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut vectors = DMatrix::zeros(s.nrows(), rank);
    for (j, &k) in order.iter().take(rank).enumerate() {
        vectors.set_column(j, &u.column(k));
    }
    let singular_values = order.iter().map(|&k| svd.singular_values[k]).collect();
    Ok(Basis { vectors, singular_values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PodRanks {
    pub h: usize,
    pub p: usize,
    pub c: usize,
}

impl PodRanks {
    /// Working ranks for the snapshot windows 0.25, 0.5 and 1.
    pub fn for_window(tau: f64) -> Option<Self> {
        let close = |a: f64| (tau - a).abs() < 1e-9;
        if close(0.25) {
            Some(Self { h: 15, p: 25, c: 15 })
        } else if close(0.5) {
            Some(Self { h: 20, p: 30, c: 20 })
        } else if close(1.0) {
            Some(Self { h: 40, p: 50, c: 40 })
        } else {
            None
        }
    }

    /// Snapshot count used with the window `tau`, when standard.
    pub fn snapshot_count(tau: f64) -> Option<usize> {
        let close = |a: f64| (tau - a).abs() < 1e-9;
        [(0.25, 40), (0.5, 50), (1.0, 100)].iter().find(|(t, _)| close(*t)).map(|(_, n)| *n)
    }
}

/// Snapshot matrices of one full run over `[0, τ]`.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub h: SnapshotMatrix,
    pub p: SnapshotMatrix,
    pub c: SnapshotMatrix,
    pub f: Option<SnapshotMatrix>,
}

impl SnapshotSet {
    fn from_states(states: &[FieldState]) -> Result<Self, PodError> {
        let times: Vec<f64> = states.iter().map(|s| s.t).collect();
        let col = |v: Variable, get: &dyn Fn(&FieldState) -> Vec<f64>| -> Result<SnapshotMatrix, PodError> {
            let cols: Vec<Vec<f64>> = states.iter().map(get).collect();
            SnapshotMatrix::new(v, times.clone(), &cols)
        };
        let f = if states.iter().all(|s| s.f.is_some()) {
            Some(col(Variable::F, &|s| s.f.clone().unwrap_or_default())?)
        } else {
            None
        };
        Ok(Self {
            h: col(Variable::H, &|s| s.h.clone())?,
            p: col(Variable::P, &|s| s.p.clone())?,
            c: col(Variable::C, &|s| s.c.clone())?,
            f,
        })
    }
}

/// `count` times spread uniformly over `[0, τ]`, ends included.
pub fn snapshot_times(tau: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| tau * i as f64 / (count - 1) as f64).collect()
}

/// Runs the full model over `[0, τ]` and samples `count` uniformly spaced
/// states through dense output. With `with_fluorescein`, `f` is solved too.
pub fn capture_snapshots(
    model: &TearFilmModel,
    tau: f64,
    count: usize,
    config: &IntegratorConfig,
    with_fluorescein: bool,
) -> Result<(SnapshotSet, SolutionRecord), PodError> {
    if count < 2 {
        return Err(PodError::TooFewSnapshots(count));
    }
    if !(tau > 0.0) {
        return Err(PodError::BadWindow(tau));
    }
    let cfg = IntegratorConfig {
        t_end: tau,
        snapshot_times: snapshot_times(tau, count),
        snapshot_interval: None,
        keep_history: with_fluorescein,
        ..config.clone()
    };
    let initial = FieldState::uniform(model.grid(), model.params().f0);
    let mut record = integrate(model, &initial, &cfg, &[])?;
    if let Some(tbut) = record.tbut {
        return Err(PodError::EarlyBreakup { tbut, tau });
    }
    if record.snapshots.len() != count {
        return Err(IntegratorError::InvalidConfig(format!("integration stopped at t = {}", record.final_state.t)).into());
    }
    if with_fluorescein {
        solve_f_stage(model, &mut record, None, &cfg)?;
        record.history = None;
    }
    Ok((SnapshotSet::from_states(&record.snapshots)?, record))
}

/// Bases for `h`, `p`, `c` and optionally `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub h: Basis,
    pub p: Basis,
    pub c: Basis,
    pub f: Option<Basis>,
    /// Free-text description of the snapshot source.
    pub provenance: String,
}

impl PodBasis {
    /// `f` gets the rank of `c` when fluorescein snapshots exist.
    pub fn from_snapshots(set: &SnapshotSet, ranks: PodRanks, provenance: impl Into<String>) -> Result<Self, PodError> {
        Ok(Self {
            h: compute_basis(&set.h.columns, ranks.h)?,
            p: compute_basis(&set.p.columns, ranks.p)?,
            c: compute_basis(&set.c.columns, ranks.c)?,
            f: set.f.as_ref().map(|f| compute_basis(&f.columns, ranks.c)).transpose()?,
            provenance: provenance.into(),
        })
    }

    pub fn ranks(&self) -> PodRanks {
        PodRanks { h: self.h.rank(), p: self.p.rank(), c: self.c.rank() }
    }

    fn parts(&self) -> Vec<(Variable, &Basis)> {
        let mut v = vec![(Variable::H, &self.h), (Variable::P, &self.p), (Variable::C, &self.c)];
        if let Some(f) = &self.f {
            v.push((Variable::F, f));
        }
        v
    }

    /// Text header terminated by `end`, then each basis as little-endian
    /// `f64`: singular values followed by the column-major vectors.
    pub fn write_to(&self, mut w: impl Write, grid: &PeriodicGrid) -> Result<(), PodError> {
        writeln!(w, "tearfilm-pod-basis 1")?;
        writeln!(w, "grid {} {}", grid.nx(), grid.ny())?;
        for (v, b) in self.parts() {
            writeln!(w, "variable {v} rows {} rank {} values {}", b.rows(), b.rank(), b.singular_values.len())?;
        }
        writeln!(w, "provenance {}", self.provenance.replace('\n', " "))?;
        writeln!(w, "end")?;
        for (_, b) in self.parts() {
            for x in b.singular_values.iter().chain(b.vectors.iter()) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads what [`PodBasis::write_to`] wrote; returns the grid too.
    pub fn read_from(r: impl Read) -> Result<(Self, PeriodicGrid), PodError> {
        let mut r = io::BufReader::new(r);
        let mut line = String::new();
        let mut next = |r: &mut io::BufReader<_>| -> Result<String, PodError> {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(PodError::Format("unexpected end of header".into()));
            }
            Ok(line.trim_end().to_string())
        };
        let bad = |m: &str| PodError::Format(m.to_string());
        if next(&mut r)? != "tearfilm-pod-basis 1" {
            return Err(bad("missing magic line"));
        }
        let g = next(&mut r)?;
        let dims: Vec<usize> = g
            .strip_prefix("grid ")
            .ok_or_else(|| bad("missing grid line"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("bad grid dimensions")))
            .collect::<Result<_, _>>()?;
        if dims.len() != 2 {
            return Err(bad("grid line needs two dimensions"));
        }
        let grid = PeriodicGrid::new(dims[0], dims[1]).map_err(|e| PodError::Format(e.to_string()))?;
        let mut specs = Vec::new();
        let mut provenance = String::new();
        loop {
            let l = next(&mut r)?;
            if l == "end" {
                break;
            }
            if let Some(p) = l.strip_prefix("provenance ") {
                provenance = p.to_string();
                continue;
            }
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 8 || t[0] != "variable" || t[2] != "rows" || t[4] != "rank" || t[6] != "values" {
                return Err(PodError::Format(format!("unexpected header line {l:?}")));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad count"));
            specs.push((t[1].parse::<Variable>()?, num(t[3])?, num(t[5])?, num(t[7])?));
        }
        let mut read_f64s = |n: usize| -> Result<Vec<f64>, PodError> {
            let mut buf = vec![0u8; 8 * n];
            r.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
        };
        let (mut h, mut p, mut c, mut f) = (None, None, None, None);
        for (v, rows, rank, nvals) in specs {
            if rows != grid.len() {
                return Err(PodError::GridMismatch { rows, nodes: grid.len() });
            }
            let singular_values = read_f64s(nvals)?;
            let data = read_f64s(rows * rank)?;
            let b = Basis { vectors: DMatrix::from_vec(rows, rank, data), singular_values };
            match v {
                Variable::H => h = Some(b),
                Variable::P => p = Some(b),
                Variable::C => c = Some(b),
                Variable::F => f = Some(b),
            }
        }
        let need = |b: Option<Basis>, v: &str| b.ok_or_else(|| PodError::Format(format!("basis for {v} missing")));
        Ok((Self { h: need(h, "h")?, p: need(p, "p")?, c: need(c, "c")?, f, provenance }, grid))
    }
}

/// Galerkin-projected film model in the coefficients `(h̃, c̃)`; the
/// pressure coefficients follow from `p̃ = B_pᵀ(−∇²)B_h h̃`.
pub struct ReducedSystem<'a> {
    model: &'a TearFilmModel,
    basis: &'a PodBasis,
    pressure_map: DMatrix<f64>,
}

impl<'a> ReducedSystem<'a> {
    pub fn new(model: &'a TearFilmModel, basis: &'a PodBasis) -> Result<Self, PodError> {
        let nodes = model.grid().len();
        for (_, b) in basis.parts() {
            if b.rows() != nodes {
                return Err(PodError::GridMismatch { rows: b.rows(), nodes });
            }
        }
        let kh = basis.h.rank();
        let mut neg_lap = DMatrix::zeros(nodes, kh);
        for j in 0..kh {
            let col: Vec<f64> = basis.h.vectors.column(j).iter().copied().collect();
            neg_lap.set_column(j, &DVector::from_vec(model.pressure(&col)));
        }
        let pressure_map = basis.p.vectors.tr_mul(&neg_lap);
        Ok(Self { model, basis, pressure_map })
    }

    /// Projected coefficients `[B_hᵀh; B_cᵀc]`.
    pub fn project(&self, state: &FieldState) -> Vec<f64> {
        let mut y = self.basis.h.project(&state.h);
        y.extend(self.basis.c.project(&state.c));
        y
    }

    fn split<'y>(&self, y: &'y [f64]) -> (&'y [f64], &'y [f64]) {
        y.split_at(self.basis.h.rank())
    }

    /// Pressure coefficients `p̃` for the state `y`.
    pub fn pressure_coefficients(&self, y: &[f64]) -> Vec<f64> {
        let (a, _) = self.split(y);
        (&self.pressure_map * DVector::from_column_slice(a)).as_slice().to_vec()
    }
}

impl OdeSystem for ReducedSystem<'_> {
    fn len(&self) -> usize {
        self.basis.h.rank() + self.basis.c.rank()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError> {
        let (a, b) = self.split(y);
        let h = self.basis.h.lift(a);
        let c = self.basis.c.lift(b);
        let p = self.basis.p.lift(&self.pressure_coefficients(y));
        check_positive(&h)?;
        let (dh, dc) = self.model.film_rates(&h, &p, &c)?;
        let kh = self.basis.h.rank();
        dy[..kh].copy_from_slice(&self.basis.h.project(&dh));
        dy[kh..].copy_from_slice(&self.basis.c.project(&dc));
        Ok(())
    }

    fn monitor(&self, y: &[f64]) -> Option<f64> {
        let (a, _) = self.split(y);
        Some(self.basis.h.lift(a).into_iter().fold(f64::INFINITY, f64::min))
    }
}

impl Lifting for ReducedSystem<'_> {
    fn lift(&self, y: &[f64]) -> Vec<f64> {
        let (a, b) = self.split(y);
        let mut full = self.basis.h.lift(a);
        full.extend(self.basis.c.lift(b));
        full
    }

    fn lifted_pressure(&self, y: &[f64]) -> Vec<f64> {
        self.basis.p.lift(&self.pressure_coefficients(y))
    }
}

/// Integrates the reduced model from `initial` (at `t = 0`), lifting every
/// recorded state to the full grid. `config.atol` is read as a tolerance on
/// nodal values.
pub fn integrate_reduced(
    model: &TearFilmModel,
    basis: &PodBasis,
    initial: &FieldState,
    config: &IntegratorConfig,
    probes: &[[f64; 2]],
) -> Result<SolutionRecord, PodError> {
    if initial.t != 0.0 {
        return Err(IntegratorError::InvalidConfig(format!("initial time must be 0, got {}", initial.t)).into());
    }
    let sys = ReducedSystem::new(model, basis)?;
    let y0 = sys.project(initial);
    // Coefficients of unit-norm basis vectors scale like √nodes times the
    // nodal values, so the absolute tolerance follows.
    let cfg = IntegratorConfig {
        atol: config.atol * (model.grid().len() as f64).sqrt(),
        ..config.clone()
    };
    Ok(run_lifted(&sys, model, &y0, &cfg, probes)?)
}

/// Basis from axisymmetric solutions, one per circular peak, each mapped
/// onto the grid around its own center. The radial solves ignore the
/// breakup event, so the window may extend past breakup.
pub fn radial_snapshot_basis(
    evaporation: &Evaporation,
    params: &ModelParams,
    grid: &PeriodicGrid,
    radial: &RadialGrid,
    tau: f64,
    count: usize,
    ranks: PodRanks,
    config: &IntegratorConfig,
) -> Result<PodBasis, PodError> {
    if count < 2 {
        return Err(PodError::TooFewSnapshots(count));
    }
    if !(tau > 0.0) {
        return Err(PodError::BadWindow(tau));
    }
    evaporation.validate()?;
    if let Some(i) = evaporation.peaks.iter().position(|p| !p.is_circular()) {
        return Err(PodError::NonCircularPeak(i));
    }
    let times = snapshot_times(tau, count);
    let cfg = IntegratorConfig {
        t_end: tau,
        snapshot_times: times.clone(),
        snapshot_interval: None,
        trace_interval: tau,
        stop_at_breakup: false,
        ..config.clone()
    };
    // Peaks of equal shape share one radial solve.
    let mut solved: Vec<(RadialPeak, Vec<crate::axisym::RadialProfile>)> = Vec::new();
    let mut parts: [Vec<SnapshotMatrix>; 4] = Default::default();
    for peak in &evaporation.peaks {
        let rp = RadialPeak { amplitude: peak.amplitude, width: peak.widths[0], baseline: evaporation.baseline };
        let idx = match solved.iter().position(|(p, _)| *p == rp) {
            Some(i) => i,
            None => {
                let rec = integrate_radial(&rp, params, radial, &cfg)?;
                if rec.profiles.len() != count {
                    let msg = format!("radial solve stopped at t = {}: {:?}", rec.final_profile.t, rec.halted);
                    return Err(IntegratorError::InvalidConfig(msg).into());
                }
                solved.push((rp, rec.profiles));
                solved.len() - 1
            }
        };
        let profiles = &solved[idx].1;
        let map = |get: &dyn Fn(&crate::axisym::RadialProfile) -> &Vec<f64>| -> Vec<Vec<f64>> {
            profiles.iter().map(|pr| radial_to_cartesian(get(pr), radial, peak.center, grid)).collect()
        };
        let cols = [map(&|p| &p.h), map(&|p| &p.p), map(&|p| &p.c), map(&|p| &p.f)];
        let vars = [Variable::H, Variable::P, Variable::C, Variable::F];
        for ((part, v), c) in parts.iter_mut().zip(vars).zip(cols) {
            part.push(SnapshotMatrix::new(v, times.clone(), &c)?);
        }
    }
    let [h, p, c, f] = parts.map(|ps| SnapshotMatrix::concat(&ps));
    let (h, p, c, f) = (h?, p?, c?, f?);
    let provenance = format!("radial snapshots, τ = {tau}, N = {count}, {} peak(s)", evaporation.peaks.len());
    Ok(PodBasis {
        h: compute_basis(&h, ranks.h)?,
        p: compute_basis(&p, ranks.p)?,
        c: compute_basis(&c, ranks.c)?,
        f: Some(compute_basis(&f, ranks.c)?),
        provenance,
    })
}

/// Uniform comparison times `0, dt, …` up to `t_end`, plus `t_end`.
pub fn comparison_times(t_end: f64, dt: f64) -> Vec<f64> {
    let mut t = uniform_times(0.0, t_end, dt);
    if t.last().is_some_and(|l| (t_end - l).abs() > 1e-12) {
        t.push(t_end);
    }
    t
}
