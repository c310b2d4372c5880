//! The verbs behind the binary: `run`, `sweep` and `pod-compare`.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;
use tearfilm::dae::{relative_error, solve_f_stage_reduced, SolverStats};
use tearfilm::model::fl_intensity;
use tearfilm::pod::{capture_snapshots, comparison_times};
use tearfilm::studies::{grid_study, snapshot_errors};
use tearfilm::{
    dimensionalize, integrate, integrate_radial, integrate_reduced, integrate_streak, radial_snapshot_basis,
    solve_f_stage, FieldState, HaltReason, IntegratorConfig, PeriodicGrid, PodBasis, QuantityKind, RadialGrid,
    SolutionRecord, TearFilmModel,
};

use crate::config::{BasisSource, Mode, RunConfig, SweepConfig};
use crate::output::{num, unix_now, Manifest, OutputDir, SnapshotMeta};

/// What a finished run reports besides its files.
struct Outcome {
    tbut: Option<f64>,
    halted: Option<HaltReason>,
    summary: serde_json::Value,
}

fn stats_json(s: &SolverStats) -> serde_json::Value {
    json!({
        "steps": s.steps,
        "failed_steps": s.failed_steps,
        "rhs_evals": s.rhs_evals,
        "jacobians": s.jacobians,
        "factorizations": s.factorizations,
        "newton_iters": s.newton_iters,
        "linear_iters": s.linear_iters,
    })
}

fn model(cfg: &RunConfig) -> Result<TearFilmModel> {
    let grid = PeriodicGrid::new(cfg.grid.nx, cfg.grid.ny)?;
    Ok(TearFilmModel::new(grid, cfg.params, cfg.evaporation.clone())?)
}

/// Integrator settings for a recorded run: output cadence from the
/// `output` section and the dense history the fluorescein stage needs.
fn recording(cfg: &RunConfig) -> IntegratorConfig {
    let mut ic = cfg.integrator.clone();
    if cfg.output.snapshot_interval.is_some() {
        ic.snapshot_interval = cfg.output.snapshot_interval;
    }
    ic.keep_history = true;
    ic
}

/// Runs one config and writes its data products and manifest under `out`.
pub fn run(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> Result<Manifest> {
    cfg.validate()?;
    let started = unix_now();
    let mut dir = OutputDir::create(out)?;
    info!("mode {:?} into {}", cfg.mode, out.display());
    let outcome = match cfg.mode {
        Mode::Full => run_full(cfg, &mut dir)?,
        Mode::Pod => run_pod(cfg, &mut dir)?,
        Mode::Radial1d => run_radial(cfg, &mut dir)?,
        Mode::Streak1d => run_streak(cfg, &mut dir)?,
        Mode::GridStudy => run_grid_study(cfg, &mut dir)?,
        Mode::PodErrorStudy => run_pod_study(cfg, &mut dir)?,
    };
    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        mode: cfg.mode,
        config: cfg.clone(),
        seed,
        started_unix: started,
        finished_unix: unix_now(),
        tbut: outcome.tbut,
        tbut_dimensional: outcome.tbut.map(|t| dimensionalize(t, QuantityKind::Time, &cfg.params)),
        halted: outcome.halted,
        summary: outcome.summary,
        files: Vec::new(),
    };
    if let Some(t) = manifest.tbut {
        info!("TBUT {t:.4} ({:.1} s)", t * cfg.params.scales.time());
    }
    dir.finish(manifest)
}

/// Traces, snapshots, the final state and the `max c` series of a 2D or
/// streak record whose fluorescein stage has run.
fn write_record(dir: &mut OutputDir, rec: &SolutionRecord, cfg: &RunConfig) -> Result<()> {
    let grid = rec.grid;
    let mut probes = Vec::new();
    for (k, tr) in rec.traces.iter().enumerate() {
        dir.trace(&format!("trace_{k}.csv"), tr)?;
        probes.push(vec![k.to_string(), num(tr.point[0]), num(tr.point[1]), tr.node.to_string()]);
    }
    dir.csv("probes.csv", &["probe", "x", "y", "node"], &probes)?;
    if let Some(tr) = rec.traces.first() {
        let rows: Vec<Vec<String>> = tr.t.iter().zip(&rec.max_c).map(|(t, m)| vec![num(*t), num(*m)]).collect();
        dir.csv("max_c.csv", &["t", "max_c"], &rows)?;
    }
    let write_state = |dir: &mut OutputDir, prefix: &str, s: &FieldState| -> Result<()> {
        let mut fields = vec![("h", s.h.clone()), ("p", s.p.clone()), ("c", s.c.clone())];
        if let Some(f) = &s.f {
            fields.push(("I", fl_intensity(&s.h, f, &cfg.params)));
            fields.push(("f", f.clone()));
        }
        for (v, data) in fields {
            dir.snapshot(&format!("{prefix}_{v}"), &SnapshotMeta::grid(grid.nx(), grid.ny(), v, s.t), &data)?;
        }
        Ok(())
    };
    for (k, s) in rec.snapshots.iter().enumerate() {
        write_state(dir, &format!("snapshots/{k:04}"), s)?;
    }
    write_state(dir, "final/state", &rec.final_state)
}

fn record_summary(rec: &SolutionRecord, seconds: f64) -> serde_json::Value {
    let fin = &rec.final_state;
    json!({
        "final_t": fin.t,
        "min_h": fin.h.iter().copied().fold(f64::INFINITY, f64::min),
        "max_c": rec.max_c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "snapshots": rec.snapshots.len(),
        "wall_seconds": seconds,
        "stats": stats_json(&rec.stats),
    })
}

/// Runs the fluorescein stage; a failed 2D run keeps its `(h, p, c)`
/// products even if the stage cannot complete.
fn fluorescein(model: &TearFilmModel, rec: &mut SolutionRecord, ic: &IntegratorConfig, basis: Option<&PodBasis>) {
    let res = match basis.and_then(|b| b.f.as_ref()) {
        Some(bf) => solve_f_stage_reduced(model, rec, None, ic, &bf.vectors),
        None => solve_f_stage(model, rec, None, ic),
    };
    if let Err(e) = res {
        warn!("fluorescein stage failed: {e}");
    }
    rec.history = None;
}

fn run_full(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let model = model(cfg)?;
    let ic = recording(cfg);
    let clock = Instant::now();
    let mut rec = integrate(&model, &FieldState::uniform(model.grid(), cfg.params.f0), &ic, &cfg.probes())?;
    fluorescein(&model, &mut rec, &ic, None);
    let seconds = clock.elapsed().as_secs_f64();
    write_record(dir, &rec, cfg)?;
    let mut summary = record_summary(&rec, seconds);
    if cfg.pod.enabled {
        let (basis, secs) = build_basis(cfg, &model, cfg.pod.tau, cfg.pod.basis)?;
        write_basis(dir, &basis, model.grid())?;
        summary["pod_basis_seconds"] = json!(secs);
    }
    Ok(Outcome { tbut: rec.tbut, halted: Some(rec.halted.clone()), summary })
}

/// Basis for window `tau` from `source`, with the seconds it took.
fn build_basis(cfg: &RunConfig, model: &TearFilmModel, tau: f64, source: BasisSource) -> Result<(PodBasis, f64)> {
    let clock = Instant::now();
    let ranks = cfg.pod.ranks_for(tau)?;
    let basis = match source {
        BasisSource::Full2d => {
            let count = cfg.pod.snapshots_for(tau);
            let (set, _) = capture_snapshots(model, tau, count, &cfg.integrator, true)?;
            PodBasis::from_snapshots(&set, ranks, format!("2D snapshots, τ = {tau}, N = {count}"))?
        }
        BasisSource::Radial => {
            let radial = RadialGrid::new(cfg.radial.r0, cfg.radial.nodes)?;
            radial_snapshot_basis(
                &cfg.evaporation,
                &cfg.params,
                model.grid(),
                &radial,
                cfg.pod.radial_window,
                cfg.pod.radial_snapshots,
                ranks,
                &cfg.integrator,
            )?
        }
    };
    Ok((basis, clock.elapsed().as_secs_f64()))
}

fn write_basis(dir: &mut OutputDir, basis: &PodBasis, grid: &PeriodicGrid) -> Result<()> {
    dir.raw("pod_basis.bin", |f| Ok(basis.write_to(std::io::BufWriter::new(f), grid)?))
}

fn run_pod(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let model = model(cfg)?;
    let (basis, basis_seconds) = build_basis(cfg, &model, cfg.pod.tau, cfg.pod.basis)?;
    write_basis(dir, &basis, model.grid())?;
    let ic = recording(cfg);
    let clock = Instant::now();
    let init = FieldState::uniform(model.grid(), cfg.params.f0);
    let mut rec = integrate_reduced(&model, &basis, &init, &ic, &cfg.probes())?;
    fluorescein(&model, &mut rec, &ic, Some(&basis));
    let seconds = clock.elapsed().as_secs_f64();
    write_record(dir, &rec, cfg)?;
    let mut summary = record_summary(&rec, seconds);
    let r = basis.ranks();
    summary["basis_seconds"] = json!(basis_seconds);
    summary["ranks"] = json!({ "h": r.h, "p": r.p, "c": r.c });
    summary["provenance"] = json!(basis.provenance);
    Ok(Outcome { tbut: rec.tbut, halted: Some(rec.halted.clone()), summary })
}

fn run_radial(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let peak = cfg.radial_peak()?;
    let grid = RadialGrid::new(cfg.radial.r0, cfg.radial.nodes)?;
    let mut ic = cfg.integrator.clone();
    ic.snapshot_interval = cfg.output.snapshot_interval.or(ic.snapshot_interval);
    let clock = Instant::now();
    let rec = integrate_radial(&peak, &cfg.params, &grid, &ic)?;
    let seconds = clock.elapsed().as_secs_f64();
    let c = &rec.center;
    let rows: Vec<Vec<String>> = (0..c.t.len())
        .map(|k| [c.t[k], c.h[k], c.p[k], c.c[k], c.f[k], c.intensity[k]].map(num).to_vec())
        .collect();
    dir.csv("center.csv", &["t", "h", "p", "c", "f", "I"], &rows)?;
    let rows: Vec<Vec<String>> = rec.solute.iter().map(|&(t, a, b)| [t, a, b].map(num).to_vec()).collect();
    dir.csv("solute.csv", &["t", "int_hc_r_dr", "int_hf_r_dr"], &rows)?;
    let nodes = grid.nodes();
    for (k, pr) in rec.profiles.iter().chain(std::iter::once(&rec.final_profile)).enumerate() {
        let stem = if k < rec.profiles.len() { format!("profiles/{k:04}") } else { "final/profile".into() };
        let intensity = fl_intensity(&pr.h, &pr.f, &cfg.params);
        for (v, data) in [("h", &pr.h), ("p", &pr.p), ("c", &pr.c), ("f", &pr.f), ("I", &intensity)] {
            dir.snapshot(&format!("{stem}_{v}"), &SnapshotMeta::radial(nodes, v, pr.t), data)?;
        }
    }
    let summary = json!({
        "final_t": rec.final_profile.t,
        "center_h": rec.final_profile.h[0],
        "wall_seconds": seconds,
        "stats": stats_json(&rec.stats),
    });
    Ok(Outcome { tbut: rec.tbut, halted: Some(rec.halted), summary })
}

fn run_streak(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let model = cfg.streak_peak()?.model(cfg.params, cfg.streak.nodes)?;
    let ic = recording(cfg);
    let clock = Instant::now();
    let rec = integrate_streak(&model, &ic)?;
    let seconds = clock.elapsed().as_secs_f64();
    write_record(dir, &rec, cfg)?;
    Ok(Outcome { tbut: rec.tbut, halted: Some(rec.halted.clone()), summary: record_summary(&rec, seconds) })
}

fn run_grid_study(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let g = &cfg.grid_study;
    let clock = Instant::now();
    let rows = grid_study(&cfg.evaporation, &cfg.params, &g.sizes, g.reference, g.time, &cfg.integrator)?;
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.n.to_string(), num(r.errors.h), num(r.errors.p), num(r.errors.c)])
        .collect();
    dir.csv("grid_study.csv", &["n", "h", "p", "c"], &csv)?;
    let summary = json!({ "reference": g.reference, "time": g.time, "rows": rows, "wall_seconds": clock.elapsed().as_secs_f64() });
    Ok(Outcome { tbut: None, halted: None, summary })
}

fn source_name(s: BasisSource) -> &'static str {
    match s {
        BasisSource::Full2d => "full2d",
        BasisSource::Radial => "radial",
    }
}

/// Relative intensity errors at the times both records share.
fn intensity_errors(red: &SolutionRecord, full: &SolutionRecord, cfg: &RunConfig) -> Vec<Option<f64>> {
    full.snapshots
        .iter()
        .filter(|s| s.t > 0.0)
        .map(|r| {
            let a = red.snapshot_at(r.t)?;
            let ia = fl_intensity(&a.h, a.f.as_ref()?, &cfg.params);
            let ib = fl_intensity(&r.h, r.f.as_ref()?, &cfg.params);
            relative_error(&ia, &ib).ok()
        })
        .collect()
}

fn run_pod_study(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let model = model(cfg)?;
    let init = FieldState::uniform(model.grid(), cfg.params.f0);
    let pod = &cfg.pod;
    let taus = if pod.tau_values.is_empty() { vec![pod.tau] } else { pod.tau_values.clone() };
    let sources = if pod.sources.is_empty() { vec![pod.basis] } else { pod.sources.clone() };

    let clock = Instant::now();
    let reference = integrate(&model, &init, &cfg.integrator, &[])?;
    let full_seconds = clock.elapsed().as_secs_f64();
    let Some(tbut) = reference.tbut else {
        bail!("the full model did not break up before t = {}", reference.final_state.t);
    };
    let cmp = IntegratorConfig {
        t_end: tbut,
        stop_at_breakup: false,
        snapshot_times: comparison_times(tbut, pod.compare_interval),
        snapshot_interval: None,
        keep_history: true,
        ..cfg.integrator.clone()
    };
    let mut full = integrate(&model, &init, &cmp, &[])?;
    fluorescein(&model, &mut full, &cmp, None);

    let mut timing = Vec::new();
    let mut cases = Vec::new();
    for &tau in &taus {
        for &source in &sources {
            let name = source_name(source);
            info!("POD comparison τ = {tau}, basis {name}");
            let (basis, basis_seconds) = build_basis(cfg, &model, tau, source)?;
            let clock = Instant::now();
            let timed = integrate_reduced(&model, &basis, &init, &cfg.integrator, &[])?;
            let reduced_seconds = clock.elapsed().as_secs_f64();
            let mut red = integrate_reduced(&model, &basis, &init, &cmp, &[])?;
            fluorescein(&model, &mut red, &cmp, Some(&basis));
            let errors = snapshot_errors(&red, &full)?;
            let ierr = intensity_errors(&red, &full, cfg);
            let rows: Vec<Vec<String>> = errors
                .iter()
                .zip(&ierr)
                .map(|(e, i)| vec![num(e.t), num(e.h), num(e.p), num(e.c), i.map_or(String::new(), num)])
                .collect();
            let mut file = String::new();
            write!(file, "pod_errors_tau{tau}_{name}.csv")?;
            dir.csv(&file, &["t", "h", "p", "c", "I"], &rows)?;
            let full_after = reference.wall_after(tau);
            let red_after = timed.wall_after(tau);
            timing.push(vec![
                num(tau),
                name.to_string(),
                num(basis_seconds),
                timed.tbut.map_or(String::new(), num),
                num(reduced_seconds),
                num(red_after),
                num(full_seconds),
                num(full_after),
                num(red_after / full_after),
            ]);
            let last = errors.last();
            cases.push(json!({
                "tau": tau,
                "basis": name,
                "reduced_tbut": timed.tbut,
                "errors_at_tbut": last,
                "speed_ratio_after_tau": red_after / full_after,
            }));
        }
    }
    dir.csv(
        "pod_timing.csv",
        &[
            "tau",
            "basis",
            "basis_seconds",
            "reduced_tbut",
            "reduced_seconds",
            "reduced_seconds_after_tau",
            "full_seconds",
            "full_seconds_after_tau",
            "ratio_after_tau",
        ],
        &timing,
    )?;
    let summary = json!({ "full_seconds": full_seconds, "cases": cases });
    Ok(Outcome { tbut: Some(tbut), halted: Some(reference.halted), summary })
}

/// One row of the sweep summary.
struct CaseResult {
    value: f64,
    widths: [f64; 2],
    xk: f64,
    manifest: Result<Manifest>,
}

/// Runs every case of a sweep under `out/case_NN` and writes
/// `summary.csv`. Failed cases are recorded and the sweep continues.
pub fn sweep(path: &Path, out: &Path, threads: usize, seed: Option<u64>) -> Result<Vec<Vec<String>>> {
    let (sweep, base) = SweepConfig::load(path)?;
    let out_dir = OutputDir::create(out)?;
    let cases: Vec<(usize, f64, RunConfig)> = sweep
        .axis
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut cfg = base.clone();
            cfg.evaporation = sweep.axis.apply(&base.evaporation, v)?;
            cfg.output.probes = None;
            Ok((i, v, cfg))
        })
        .collect::<Result<_>>()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()?;
    let results: Vec<CaseResult> = pool.install(|| {
        cases
            .par_iter()
            .map(|(i, v, cfg)| {
                let dir = out_dir.root().join(format!("case_{i:02}"));
                let manifest = run(cfg, &dir, seed).with_context(|| format!("case {i} ({} = {v})", sweep.axis.name()));
                if let Err(e) = &manifest {
                    warn!("{e:#}");
                }
                let p = cfg.evaporation.peaks[cfg.evaporation.peaks.len() - 1];
                CaseResult { value: *v, widths: p.widths, xk: p.center[0], manifest }
            })
            .collect()
    });
    let header = [
        "case", "axis", "value", "x_w", "y_w", "x_k", "tbut", "tbut_seconds", "max_c", "center_c", "center_I",
        "min_center_I", "status",
    ];
    let mut rows = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let mut row = vec![
            format!("case_{i:02}"),
            sweep.axis.name().to_string(),
            num(r.value),
            num(r.widths[0]),
            num(r.widths[1]),
            num(r.xk),
        ];
        match &r.manifest {
            Ok(m) => {
                let center = read_center(&out_dir.root().join(format!("case_{i:02}")))?;
                row.push(m.tbut.map_or(String::new(), num));
                row.push(m.tbut_dimensional.map_or(String::new(), |q| num(q.value)));
                row.push(m.summary["max_c"].as_f64().map_or(String::new(), num));
                row.extend(center.into_iter().map(|v| v.map_or(String::new(), num)));
                row.push(match &m.halted {
                    Some(HaltReason::Failure(msg)) => format!("solver failure: {msg}"),
                    _ => "ok".into(),
                });
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(format!("error: {e:#}"));
            }
        }
        rows.push(row);
    }
    let mut out_dir = out_dir;
    out_dir.csv("summary.csv", &header, &rows)?;
    Ok(rows)
}

/// Final `c` and `I`, and the minimum `I`, on the first probe trace.
fn read_center(case: &Path) -> Result<[Option<f64>; 3]> {
    let mut rdr = csv::Reader::from_path(case.join("trace_0.csv"))?;
    let mut last_c = None;
    let mut last_i = None;
    let mut min_i: Option<f64> = None;
    for rec in rdr.records() {
        let rec = rec?;
        let c: f64 = rec[3].parse()?;
        let i: Option<f64> = rec[5].parse().ok();
        last_c = Some(c);
        last_i = i;
        if let Some(i) = i {
            min_i = Some(min_i.map_or(i, |m| m.min(i)));
        }
    }
    Ok([last_c, last_i, min_i])
}
