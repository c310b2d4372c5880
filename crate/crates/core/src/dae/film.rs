use std::cell::RefCell;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::ndf::{self, Halt, Observer, OdeSystem, Segment, SolverStats};
use super::{uniform_times, HaltReason, IntegratorConfig, IntegratorError, ProbeTrace, SolutionRecord};
use crate::model::{fl_intensity, FieldState, ModelError, TearFilmModel, Transport};

/// Maps the integrator state to full-grid fields.
pub trait Lifting {
    /// Full-grid `[h; c]`. Must be linear in `y`.
    fn lift(&self, y: &[f64]) -> Vec<f64>;
    /// Full-grid pressure for the state `y`.
    fn lifted_pressure(&self, y: &[f64]) -> Vec<f64>;
}

/// The `(h, c)` system with the pressure eliminated.
pub struct FilmSystem<'a> {
    model: &'a TearFilmModel,
}

impl<'a> FilmSystem<'a> {
    pub fn new(model: &'a TearFilmModel) -> Self {
        Self { model }
    }

    pub fn pack(h: &[f64], c: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(h.len() + c.len());
        y.extend_from_slice(h);
        y.extend_from_slice(c);
        y
    }
}

impl OdeSystem for FilmSystem<'_> {
    fn len(&self) -> usize {
        2 * self.model.grid().len()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError> {
        let n = y.len() / 2;
        let (dh, dc) = self.model.film_rates_consistent(&y[..n], &y[n..])?;
        dy[..n].copy_from_slice(&dh);
        dy[n..].copy_from_slice(&dc);
        Ok(())
    }

    fn precondition(&self, _t: f64, y: &[f64], gamma: f64, v: &mut [f64]) {
        let n = y.len() / 2;
        let (vh, vc) = v.split_at_mut(n);
        self.model.precondition_film(gamma, &y[..n], vh, vc);
    }

    fn monitor(&self, y: &[f64]) -> Option<f64> {
        Some(y[..y.len() / 2].iter().copied().fold(f64::INFINITY, f64::min))
    }
}

impl Lifting for FilmSystem<'_> {
    fn lift(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }

    fn lifted_pressure(&self, y: &[f64]) -> Vec<f64> {
        self.model.pressure(&y[..y.len() / 2])
    }
}

/// Dense output of `[h; c]` over the accepted steps.
#[derive(Debug, Clone, Default)]
pub struct History {
    segments: Vec<Segment>,
}

impl History {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn t_start(&self) -> Option<f64> {
        self.segments.first().map(|s| s.t_old)
    }

    pub fn t_end(&self) -> Option<f64> {
        self.segments.last().map(|s| s.t_new)
    }

    /// `[h; c]` at `t`, or `None` outside the covered interval.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let first = self.segments.first()?;
        let last = self.segments.last()?;
        if t < first.t_old || t > last.t_new {
            return None;
        }
        let i = self.segments.partition_point(|s| s.t_new < t);
        let seg = &self.segments[i.min(self.segments.len() - 1)];
        let mut out = vec![0.0; seg.y_new.len()];
        seg.eval(t, &mut out);
        Some(out)
    }
}

#[derive(Clone, Copy, Default)]
struct SampleKind {
    snapshot: bool,
    trace: bool,
}

/// Collects snapshots, probe traces, history and timing.
pub struct FilmObserver<'a> {
    model: &'a TearFilmModel,
    lifting: &'a dyn Lifting,
    kinds: Vec<SampleKind>,
    probes: Vec<ProbeTrace>,
    snapshots: Vec<FieldState>,
    max_c: Vec<f64>,
    history: Option<History>,
    wall: Vec<(f64, f64)>,
    start: Instant,
}

impl<'a> FilmObserver<'a> {
    fn new(model: &'a TearFilmModel, lifting: &'a dyn Lifting, kinds: Vec<SampleKind>, probes: &[[f64; 2]], keep_history: bool) -> Self {
        let grid = model.grid();
        let probes = probes
            .iter()
            .map(|&point| ProbeTrace {
                point,
                node: grid.nearest_node(point[0], point[1]),
                ..ProbeTrace::default()
            })
            .collect();
        Self {
            model,
            lifting,
            kinds,
            probes,
            snapshots: Vec::new(),
            max_c: Vec::new(),
            history: keep_history.then(History::default),
            wall: Vec::new(),
            start: Instant::now(),
        }
    }

    fn state(&self, t: f64, y: &[f64]) -> FieldState {
        let full = self.lifting.lift(y);
        let n = full.len() / 2;
        FieldState {
            t,
            h: full[..n].to_vec(),
            p: self.lifting.lifted_pressure(y),
            c: full[n..].to_vec(),
            f: None,
        }
    }

    fn trace(&mut self, state: &FieldState) {
        self.max_c.push(state.c.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let mech = self.model.mechanism_terms(state).ok();
        for tr in &mut self.probes {
            let k = tr.node;
            tr.t.push(state.t);
            tr.h.push(state.h[k]);
            tr.p.push(state.p[k]);
            tr.c.push(state.c[k]);
            let nan = f64::NAN;
            let m = mech.as_ref();
            tr.advection.push(m.map_or(nan, |m| m.advection[k]));
            tr.diffusion.push(m.map_or(nan, |m| m.diffusion[k]));
            tr.evaporation.push(m.map_or(nan, |m| m.evaporation[k]));
            tr.osmosis.push(m.map_or(nan, |m| m.osmosis[k]));
        }
    }
}

impl Observer for FilmObserver<'_> {
    fn sample(&mut self, index: usize, t: f64, y: &[f64]) {
        let kind = self.kinds[index];
        let state = self.state(t, y);
        if kind.trace {
            self.trace(&state);
        }
        if kind.snapshot {
            self.snapshots.push(state);
        }
    }

    fn step(&mut self, segment: &Segment) {
        self.wall.push((segment.t_new, self.start.elapsed().as_secs_f64()));
        if let Some(h) = &mut self.history {
            h.segments.push(Segment {
                t_old: segment.t_old,
                t_new: segment.t_new,
                y_new: self.lifting.lift(&segment.y_new),
                dif: segment.dif.iter().map(|d| self.lifting.lift(d)).collect(),
            });
        }
    }
}

fn merged_schedule(config: &IntegratorConfig) -> (Vec<f64>, Vec<SampleKind>) {
    let snaps = config.snapshot_schedule();
    let traces = uniform_times(0.0, config.t_end, config.trace_interval);
    let mut all: Vec<(f64, SampleKind)> = Vec::with_capacity(snaps.len() + traces.len());
    all.extend(snaps.iter().map(|&t| (t, SampleKind { snapshot: true, trace: false })));
    all.extend(traces.iter().map(|&t| (t, SampleKind { snapshot: false, trace: true })));
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut times: Vec<f64> = Vec::new();
    let mut kinds: Vec<SampleKind> = Vec::new();
    for (t, k) in all {
        if let Some(last) = times.last() {
            if (t - last).abs() <= 1e-12 {
                let lk = kinds.last_mut().unwrap();
                lk.snapshot |= k.snapshot;
                lk.trace |= k.trace;
                continue;
            }
        }
        times.push(t);
        kinds.push(k);
    }
    (times, kinds)
}

/// Integrates any system whose state lifts to full-grid `(h, c)`.
pub(crate) fn run_lifted<S: OdeSystem + Lifting>(
    sys: &S,
    model: &TearFilmModel,
    y0: &[f64],
    config: &IntegratorConfig,
    probes: &[[f64; 2]],
) -> Result<SolutionRecord, IntegratorError> {
    config.validate()?;
    let (times, kinds) = merged_schedule(config);
    let opts = config.ndf_options(sys.len());
    let mut obs = FilmObserver::new(model, sys, kinds, probes, config.keep_history);
    let out = ndf::integrate(sys, 0.0, y0, config.t_end, &times, &opts, &mut obs)?;
    let final_state = obs.state(out.t, &out.y);
    let (tbut, halted) = match &out.halt {
        Halt::Event => (out.event_time, HaltReason::Event),
        Halt::EndTime => (None, HaltReason::TEnd),
        Halt::Failure(m) => (None, HaltReason::Failure(m.clone())),
    };
    // Breakup and failure states close the traces.
    if out.halt != Halt::EndTime && obs.probes.first().and_then(|p| p.t.last()).is_none_or(|&t| t < out.t) {
        obs.trace(&final_state);
    }
    let times = obs.snapshots.iter().map(|s| s.t).collect();
    Ok(SolutionRecord {
        grid: *model.grid(),
        times,
        snapshots: obs.snapshots,
        traces: obs.probes,
        max_c: obs.max_c,
        tbut,
        halted,
        final_state: FieldState { f: None, ..final_state },
        stats: out.stats,
        history: obs.history,
        wall_clock: obs.wall,
    })
}

/// Integrates `(h, p, c)` from `initial` until breakup or `t_end`.
///
/// `initial.p` is replaced by the consistent pressure `−∇²h`.
pub fn integrate(
    model: &TearFilmModel,
    initial: &FieldState,
    config: &IntegratorConfig,
    probes: &[[f64; 2]],
) -> Result<SolutionRecord, IntegratorError> {
    let grid = model.grid();
    grid.check(&initial.h).map_err(ModelError::from)?;
    grid.check(&initial.c).map_err(ModelError::from)?;
    if initial.t != 0.0 {
        return Err(IntegratorError::InvalidConfig(format!("initial time must be 0, got {}", initial.t)));
    }
    let sys = FilmSystem::new(model);
    let y0 = FilmSystem::pack(&initial.h, &initial.c);
    run_lifted(&sys, model, &y0, config, probes)
}

struct Frozen {
    t: f64,
    h: Vec<f64>,
    c: Vec<f64>,
    transport: Transport,
}

/// Fluorescein equation driven by a stored `(h, c)` history.
pub struct FStageSystem<'a> {
    model: &'a TearFilmModel,
    history: &'a History,
    cache: RefCell<Option<Frozen>>,
}

impl<'a> FStageSystem<'a> {
    pub fn new(model: &'a TearFilmModel, history: &'a History) -> Self {
        Self { model, history, cache: RefCell::new(None) }
    }

    fn ensure(&self, t: f64) -> Result<(), ModelError> {
        if self.cache.borrow().as_ref().is_some_and(|f| f.t == t) {
            return Ok(());
        }
        let hc = self.history.eval(t).ok_or(ModelError::InvalidParameter {
            name: "t",
            reason: format!("{t} is outside the stored history"),
        })?;
        let n = hc.len() / 2;
        let (h, c) = (hc[..n].to_vec(), hc[n..].to_vec());
        crate::model::check_positive(&h)?;
        let p = self.model.pressure(&h);
        let transport = self.model.transport(&h, &p);
        *self.cache.borrow_mut() = Some(Frozen { t, h, c, transport });
        Ok(())
    }
}

impl OdeSystem for FStageSystem<'_> {
    fn len(&self) -> usize {
        self.model.grid().len()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError> {
        self.ensure(t)?;
        let cache = self.cache.borrow();
        let fz = cache.as_ref().expect("cache filled");
        let r = self.model.fluorescein_rate_with(&fz.h, &fz.c, y, &fz.transport);
        dy.copy_from_slice(&r);
        Ok(())
    }

    fn precondition(&self, _t: f64, _y: &[f64], gamma: f64, v: &mut [f64]) {
        self.model.precondition_diffusion(gamma, self.model.params().pe_f, v);
    }
}

struct FCollector {
    sink: Vec<(f64, Vec<f64>)>,
}

impl Observer for FCollector {
    fn sample(&mut self, _index: usize, t: f64, y: &[f64]) {
        self.sink.push((t, y.to_vec()));
    }
}

/// Fluorescein stage in the span of an orthonormal basis `B_f`.
struct ReducedF<'a> {
    inner: FStageSystem<'a>,
    basis: &'a DMatrix<f64>,
}

impl OdeSystem for ReducedF<'_> {
    fn len(&self) -> usize {
        self.basis.ncols()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError> {
        let f = self.basis * DVector::from_column_slice(y);
        let mut full = vec![0.0; self.inner.len()];
        self.inner.rhs(t, f.as_slice(), &mut full)?;
        let r = self.basis.tr_mul(&DVector::from_vec(full));
        dy.copy_from_slice(r.as_slice());
        Ok(())
    }
}

/// Integrates the fluorescein equation over the stored history and fills
/// `f` and the intensity into the record's snapshots and traces.
pub fn solve_f_stage(
    model: &TearFilmModel,
    record: &mut SolutionRecord,
    initial_f: Option<&[f64]>,
    config: &IntegratorConfig,
) -> Result<SolverStats, IntegratorError> {
    f_stage(model, record, initial_f, config, None)
}

/// As [`solve_f_stage`], with `f` restricted to the span of the orthonormal
/// columns of `basis`.
pub fn solve_f_stage_reduced(
    model: &TearFilmModel,
    record: &mut SolutionRecord,
    initial_f: Option<&[f64]>,
    config: &IntegratorConfig,
    basis: &DMatrix<f64>,
) -> Result<SolverStats, IntegratorError> {
    if basis.nrows() != model.grid().len() {
        return Err(IntegratorError::LengthMismatch(basis.nrows(), model.grid().len()));
    }
    f_stage(model, record, initial_f, config, Some(basis))
}

fn f_stage(
    model: &TearFilmModel,
    record: &mut SolutionRecord,
    initial_f: Option<&[f64]>,
    config: &IntegratorConfig,
    basis: Option<&DMatrix<f64>>,
) -> Result<SolverStats, IntegratorError> {
    config.validate()?;
    let history = record.history.as_ref().ok_or(IntegratorError::MissingHistory)?;
    let t_end = history.t_end().ok_or(IntegratorError::MissingHistory)?;
    let grid = model.grid();
    let params = *model.params();
    let f0: Vec<f64> = match initial_f {
        Some(f) => {
            grid.check(f).map_err(ModelError::from)?;
            f.to_vec()
        }
        None => vec![params.f0; grid.len()],
    };
    let end = record.final_state.t.min(t_end);

    let mut times: Vec<f64> = record.times.clone();
    if let Some(tr) = record.traces.first() {
        times.extend(tr.t.iter().copied());
    } else {
        times.extend(uniform_times(0.0, end, config.trace_interval));
    }
    times.push(end);
    times.retain(|t| *t <= end);
    times.sort_by(f64::total_cmp);
    times.dedup();

    let sys = FStageSystem::new(model, history);
    let mut sink = FCollector { sink: Vec::new() };
    let out = match basis {
        None => {
            let mut opts = config.ndf_options(sys.len());
            opts.event_threshold = None;
            ndf::integrate(&sys, 0.0, &f0, end, &times, &opts, &mut sink)?
        }
        Some(b) => {
            let red = ReducedF { inner: sys, basis: b };
            let mut opts = config.ndf_options(red.len());
            opts.event_threshold = None;
            let a0 = b.tr_mul(&DVector::from_vec(f0));
            let out = ndf::integrate(&red, 0.0, a0.as_slice(), end, &times, &opts, &mut sink)?;
            for (_, f) in &mut sink.sink {
                *f = (b * DVector::from_column_slice(f)).as_slice().to_vec();
            }
            out
        }
    };
    if let Halt::Failure(m) = out.halt {
        return Err(IntegratorError::InvalidConfig(format!("fluorescein stage failed: {m}")));
    }
    let lookup = |t: f64| sink.sink.iter().find(|(s, _)| (s - t).abs() <= 1e-12).map(|(_, f)| f);

    for snap in &mut record.snapshots {
        snap.f = lookup(snap.t).cloned();
    }
    if let Some(f) = lookup(end) {
        record.final_state.f = Some(f.clone());
    }
    for tr in &mut record.traces {
        tr.f.clear();
        tr.intensity.clear();
        for (i, &t) in tr.t.iter().enumerate() {
            let fv = lookup(t).map_or(f64::NAN, |f| f[tr.node]);
            tr.f.push(fv);
            tr.intensity.push(fl_intensity(&[tr.h[i]], &[fv], &params)[0]);
        }
    }
    Ok(out.stats)
}
