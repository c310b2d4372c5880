use tearfilm::model::total_solute;
use tearfilm::{
    integrate, solve_f_stage, Evaporation, FieldState, HaltReason, IntegratorConfig, LinearSolverKind, ModelParams,
    PeriodicGrid, TearFilmModel,
};

/// Classical RK4 for the spatially uniform film, `y = (h, c)`.
fn uniform_oracle(vb: f64, pc: f64, t_end: f64, steps: usize) -> Vec<(f64, f64, f64)> {
    let rate = |h: f64, c: f64| {
        let net = vb - pc * (c - 1.0);
        (-net, net * c / h)
    };
    let dt = t_end / steps as f64;
    let (mut h, mut c) = (1.0, 1.0);
    let mut out = vec![(0.0, h, c)];
    for i in 0..steps {
        let k1 = rate(h, c);
        let k2 = rate(h + 0.5 * dt * k1.0, c + 0.5 * dt * k1.1);
        let k3 = rate(h + 0.5 * dt * k2.0, c + 0.5 * dt * k2.1);
        let k4 = rate(h + dt * k3.0, c + dt * k3.1);
        h += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        c += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        out.push(((i + 1) as f64 * dt, h, c));
    }
    out
}

fn spot_model(n: usize) -> TearFilmModel {
    let grid = PeriodicGrid::square(n).unwrap();
    TearFilmModel::new(grid, ModelParams::default(), Evaporation::single_spot(1.0, 0.1, 0.5)).unwrap()
}

#[test]
fn uniform_evaporation_matches_the_ode() {
    let params = ModelParams::default();
    let vb = 0.4;
    let grid = PeriodicGrid::square(8).unwrap();
    let model = TearFilmModel::new(grid, params, Evaporation::uniform(vb)).unwrap();
    let cfg = IntegratorConfig {
        t_end: 1.5,
        stop_at_breakup: false,
        rtol: 1e-9,
        atol: 1e-11,
        trace_interval: 0.25,
        ..Default::default()
    };
    let rec = integrate(&model, &FieldState::uniform(&grid, 1.0), &cfg, &[[0.0, 0.0]]).unwrap();
    let oracle = uniform_oracle(vb, params.pc, 1.5, 6000);
    let tr = &rec.traces[0];
    for (k, &t) in tr.t.iter().enumerate() {
        let (_, h, c) = oracle[(t / 1.5 * 6000.0).round() as usize];
        assert!((tr.h[k] - h).abs() < 1e-6, "t = {t}: h {} vs {h}", tr.h[k]);
        assert!((tr.c[k] - c).abs() < 1e-6, "t = {t}: c {} vs {c}", tr.c[k]);
    }
    let spread = |v: &[f64]| v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - v.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    assert!(spread(&rec.final_state.h) < 1e-12);
}

#[test]
fn breakup_event_time_matches_the_ode() {
    let params = ModelParams::default();
    let vb = 2.0;
    let grid = PeriodicGrid::square(8).unwrap();
    let model = TearFilmModel::new(grid, params, Evaporation::uniform(vb)).unwrap();
    let cfg = IntegratorConfig { t_end: 10.0, rtol: 1e-9, atol: 1e-11, ..Default::default() };
    let rec = integrate(&model, &FieldState::uniform(&grid, 1.0), &cfg, &[]).unwrap();
    assert_eq!(rec.halted, HaltReason::Event);

    let oracle = uniform_oracle(vb, params.pc, 4.0, 400_000);
    let threshold = 1.0 / 4.5;
    let w = oracle.windows(2).find(|w| w[1].1 <= threshold).unwrap();
    let t_star = w[0].0 + (w[0].1 - threshold) / (w[0].1 - w[1].1) * (w[1].0 - w[0].0);
    let tbut = rec.tbut.unwrap();
    assert!((tbut - t_star).abs() < 1e-6, "{tbut} vs {t_star}");
    assert!((rec.final_state.t - tbut).abs() < 1e-12);
}

#[test]
fn fluorescein_tracks_osmolarity_when_peclet_numbers_agree() {
    let grid = PeriodicGrid::square(16).unwrap();
    let mut params = ModelParams::default();
    params.pe_f = params.pe_c;
    let model = TearFilmModel::new(grid, params, Evaporation::single_spot(1.0, 0.1, 0.6)).unwrap();
    let cfg = IntegratorConfig { t_end: 1.5, stop_at_breakup: false, keep_history: true, ..Default::default() };
    let mut rec = integrate(&model, &FieldState::uniform(&grid, params.f0), &cfg, &[[0.0, 0.0]]).unwrap();
    solve_f_stage(&model, &mut rec, None, &cfg).unwrap();
    let tr = &rec.traces[0];
    for k in 0..tr.t.len() {
        assert!((tr.f[k] - tr.c[k]).abs() < 1e-4 * tr.c[k], "t = {}: f {} c {}", tr.t[k], tr.f[k], tr.c[k]);
    }
    let fin = &rec.final_state;
    let f = fin.f.as_ref().unwrap();
    let err = f.iter().zip(&fin.c).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-4, "final field discrepancy {err:e}");
}

#[test]
fn integration_is_deterministic() {
    let model = spot_model(16);
    let cfg = IntegratorConfig { t_end: 1.0, stop_at_breakup: false, ..Default::default() };
    let init = FieldState::uniform(model.grid(), 1.0);
    let a = integrate(&model, &init, &cfg, &[[0.0, 0.0]]).unwrap();
    let b = integrate(&model, &init, &cfg, &[[0.0, 0.0]]).unwrap();
    assert_eq!(a.final_state.h, b.final_state.h);
    assert_eq!(a.final_state.c, b.final_state.c);
    assert_eq!(a.traces[0].h, b.traces[0].h);
    assert_eq!(a.stats.steps, b.stats.steps);
}

#[test]
fn tighter_tolerances_converge() {
    let model = spot_model(16);
    let init = FieldState::uniform(model.grid(), 1.0);
    let run = |rtol: f64| {
        let cfg = IntegratorConfig { t_end: 1.5, stop_at_breakup: false, rtol, atol: rtol * 1e-2, ..Default::default() };
        integrate(&model, &init, &cfg, &[]).unwrap().final_state
    };
    let reference = run(1e-10);
    let err = |s: &FieldState| s.h.iter().zip(&reference.h).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let errors: Vec<f64> = [1e-4, 1e-6, 1e-8].iter().map(|&r| err(&run(r))).collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    assert!(errors[2] < 1e-7, "{errors:?}");
}

#[test]
fn dense_and_krylov_solvers_agree() {
    let model = spot_model(16);
    let init = FieldState::uniform(model.grid(), 1.0);
    let run = |linear_solver| {
        let cfg = IntegratorConfig { t_end: 1.5, stop_at_breakup: false, rtol: 1e-8, atol: 1e-10, linear_solver, ..Default::default() };
        integrate(&model, &init, &cfg, &[]).unwrap().final_state
    };
    let a = run(LinearSolverKind::Dense);
    let b = run(LinearSolverKind::Krylov);
    let err = a.h.iter().zip(&b.h).chain(a.c.iter().zip(&b.c)).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn snapshots_satisfy_the_pressure_constraint() {
    let model = spot_model(32);
    let cfg = IntegratorConfig { snapshot_interval: Some(0.5), ..Default::default() };
    let rec = integrate(&model, &FieldState::uniform(model.grid(), 1.0), &cfg, &[]).unwrap();
    assert!(rec.snapshots.len() > 3);
    for s in &rec.snapshots {
        let lap = model.spectral().laplacian(&s.h).unwrap();
        let scale = lap.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        let defect = s.p.iter().zip(&lap).fold(0.0f64, |m, (p, l)| m.max((p + l).abs()));
        assert!(defect <= 1e-12 * scale.max(1.0), "t = {}: {defect:e}", s.t);
    }
}

#[test]
fn solute_and_dye_are_conserved_to_breakup() {
    let model = spot_model(32);
    let grid = *model.grid();
    let cfg = IntegratorConfig { snapshot_interval: Some(0.25), keep_history: true, ..Default::default() };
    let mut rec = integrate(&model, &FieldState::uniform(&grid, 1.0), &cfg, &[]).unwrap();
    assert_eq!(rec.halted, HaltReason::Event);
    solve_f_stage(&model, &mut rec, None, &cfg).unwrap();
    let c0 = total_solute(&rec.snapshots[0].h, &rec.snapshots[0].c, &grid).unwrap();
    for s in rec.snapshots.iter().chain(std::iter::once(&rec.final_state)) {
        let hc = total_solute(&s.h, &s.c, &grid).unwrap();
        let hf = total_solute(&s.h, s.f.as_ref().unwrap(), &grid).unwrap();
        assert!(((hc - c0) / c0).abs() < 1e-5, "t = {}: ∫hc drift {:e}", s.t, (hc - c0) / c0);
        assert!(((hf - c0) / c0).abs() < 1e-5, "t = {}: ∫hf drift {:e}", s.t, (hf - c0) / c0);
    }
}
