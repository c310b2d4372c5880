use tearfilm::model::total_solute;
use tearfilm::streak::DEFAULT_NODES;
use tearfilm::studies::trace_discrepancy;
use tearfilm::{
    integrate, integrate_streak, Evaporation, EvaporationPeak, FieldState, HaltReason, IntegratorConfig, ModelParams,
    PeriodicGrid, StreakPeak, TearFilmModel,
};

const STREAK: StreakPeak = StreakPeak { amplitude: 1.0, width: 0.5, baseline: 0.1 };

#[test]
fn streak_breakup_time() {
    let model = STREAK.model(ModelParams::default(), DEFAULT_NODES).unwrap();
    let rec = integrate_streak(&model, &IntegratorConfig::default()).unwrap();
    assert_eq!(rec.halted, HaltReason::Event);
    let tbut = rec.tbut.unwrap();
    assert!((tbut - 1.87).abs() < 0.03, "{tbut}");
    let tr = &rec.traces[0];
    assert_eq!(tr.point, [0.0, 0.0]);
    assert_eq!(tr.f.len(), tr.t.len());
    assert!(rec.history.is_none());
}

#[test]
fn breakup_time_is_resolved_on_the_default_grid() {
    let run = |n: usize| {
        let model = STREAK.model(ModelParams::default(), n).unwrap();
        integrate_streak(&model, &IntegratorConfig::default()).unwrap().tbut.unwrap()
    };
    let (a, b) = (run(DEFAULT_NODES), run(2 * DEFAULT_NODES));
    assert!((a - b).abs() < 1e-4, "{a} vs {b}");
}

#[test]
fn no_evaporation_keeps_the_film_at_rest() {
    let grid = PeriodicGrid::line(64).unwrap();
    let model = TearFilmModel::new(grid, ModelParams::default(), Evaporation::uniform(0.0)).unwrap();
    let cfg = IntegratorConfig { t_end: 2.0, ..Default::default() };
    let rec = integrate_streak(&model, &cfg).unwrap();
    assert_eq!(rec.halted, HaltReason::TEnd);
    let s = &rec.final_state;
    for k in 0..grid.len() {
        assert!((s.h[k] - 1.0).abs() < 1e-12);
        assert!((s.c[k] - 1.0).abs() < 1e-12);
        assert!((s.f.as_ref().unwrap()[k] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn solution_is_mirror_symmetric_and_conservative() {
    let model = STREAK.model(ModelParams::default(), DEFAULT_NODES).unwrap();
    let grid = *model.grid();
    let cfg = IntegratorConfig { snapshot_interval: Some(0.5), ..Default::default() };
    let rec = integrate_streak(&model, &cfg).unwrap();
    let n = grid.nx();
    let c0 = total_solute(&rec.snapshots[0].h, &rec.snapshots[0].c, &grid).unwrap();
    for s in rec.snapshots.iter().chain(std::iter::once(&rec.final_state)) {
        for i in 1..n {
            assert!((s.h[i] - s.h[n - i]).abs() < 1e-8, "t = {}, i = {i}", s.t);
            assert!((s.c[i] - s.c[n - i]).abs() < 1e-8);
        }
        let f = s.f.as_ref().unwrap();
        let hc = total_solute(&s.h, &s.c, &grid).unwrap();
        let hf = total_solute(&s.h, f, &grid).unwrap();
        assert!(((hc - c0) / c0).abs() < 1e-5, "t = {}: {hc} vs {c0}", s.t);
        assert!(((hf - c0) / c0).abs() < 1e-5, "t = {}: {hf} vs {c0}", s.t);
    }
}

#[test]
fn elongated_spots_approach_the_streak() {
    let params = ModelParams::default();
    let cfg = IntegratorConfig::default();
    let streak = integrate_streak(&STREAK.model(params, DEFAULT_NODES).unwrap(), &cfg).unwrap();
    let s = &streak.traces[0];
    let grid = PeriodicGrid::square(60).unwrap();
    let mut last = f64::INFINITY;
    for yw in [1.0, 2.0, 4.0] {
        let evap = Evaporation {
            baseline: 0.1,
            peaks: vec![EvaporationPeak { amplitude: 1.0, center: [0.0, 0.0], widths: [0.5, yw] }],
            periodic_images: false,
        };
        let model = TearFilmModel::new(grid, params, evap).unwrap();
        let rec = integrate(&model, &FieldState::uniform(&grid, 1.0), &cfg, &[[0.0, 0.0]]).unwrap();
        let tr = &rec.traces[0];
        let d = trace_discrepancy(&tr.t, &tr.h, &s.t, &s.h);
        assert!(d < last, "y_w = {yw}: {d} after {last}");
        last = d;
    }
    assert!(last < 0.02, "{last}");
}
