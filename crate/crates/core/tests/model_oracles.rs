use std::f64::consts::PI;

use proptest::prelude::*;
use tearfilm::model::{total_solute, Evaporation, EvaporationPeak, FieldState, ModelParams, TearFilmModel};
use tearfilm::spectral::{integrate_domain, PeriodicGrid};

fn smooth_h(x: f64, y: f64) -> f64 {
    1.0 + 0.2 * x.cos() + 0.1 * (2.0 * y).sin() * x.cos() - 0.05 * (x + y).sin()
}

fn smooth_c(x: f64, y: f64) -> f64 {
    1.0 + 0.3 * (x + y).sin() + 0.1 * (2.0 * x).cos()
}

fn spot() -> Evaporation {
    Evaporation::single_spot(1.0, 0.1, 0.5)
}

/// Second-order centered differences on a periodic `n × n` grid.
struct Fd {
    n: usize,
    d: f64,
}

impl Fd {
    fn at(&self, f: &[f64], i: isize, j: isize) -> f64 {
        let n = self.n as isize;
        f[(j.rem_euclid(n) * n + i.rem_euclid(n)) as usize]
    }

    fn map(&self, f: impl Fn(isize, isize) -> f64) -> Vec<f64> {
        let n = self.n as isize;
        (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).map(|(i, j)| f(i, j)).collect()
    }

    fn dx(&self, f: &[f64]) -> Vec<f64> {
        self.map(|i, j| (self.at(f, i + 1, j) - self.at(f, i - 1, j)) / (2.0 * self.d))
    }

    fn dy(&self, f: &[f64]) -> Vec<f64> {
        self.map(|i, j| (self.at(f, i, j + 1) - self.at(f, i, j - 1)) / (2.0 * self.d))
    }

    fn lap(&self, f: &[f64]) -> Vec<f64> {
        self.map(|i, j| {
            (self.at(f, i + 1, j) + self.at(f, i - 1, j) + self.at(f, i, j + 1) + self.at(f, i, j - 1)
                - 4.0 * self.at(f, i, j))
                / (self.d * self.d)
        })
    }
}

#[test]
fn rates_match_fine_finite_differences() {
    let params = ModelParams::default();
    let coarse = PeriodicGrid::square(64).unwrap();
    let fine = PeriodicGrid::square(512).unwrap();
    let model = TearFilmModel::new(coarse, params, spot()).unwrap();
    let h = coarse.sample(smooth_h);
    let c = coarse.sample(smooth_c);
    let (dh, dc) = model.film_rates_consistent(&h, &c).unwrap();

    let fd = Fd { n: 512, d: 2.0 * PI / 512.0 };
    let hf = fine.sample(smooth_h);
    let cf = fine.sample(smooth_c);
    let jf = spot().evaluate(&fine).unwrap();
    let p: Vec<f64> = fd.lap(&hf).iter().map(|v| -v).collect();
    let (px, py) = (fd.dx(&p), fd.dy(&p));
    let u: Vec<f64> = (0..hf.len()).map(|k| -hf[k] * hf[k] / 12.0 * px[k]).collect();
    let v: Vec<f64> = (0..hf.len()).map(|k| -hf[k] * hf[k] / 12.0 * py[k]).collect();
    let qx: Vec<f64> = (0..hf.len()).map(|k| hf[k] * u[k]).collect();
    let qy: Vec<f64> = (0..hf.len()).map(|k| hf[k] * v[k]).collect();
    let div_q: Vec<f64> = fd.dx(&qx).iter().zip(fd.dy(&qy)).map(|(a, b)| a + b).collect();
    let (cx, cy) = (fd.dx(&cf), fd.dy(&cf));
    let gx: Vec<f64> = (0..hf.len()).map(|k| hf[k] * cx[k]).collect();
    let gy: Vec<f64> = (0..hf.len()).map(|k| hf[k] * cy[k]).collect();
    let div_g: Vec<f64> = fd.dx(&gx).iter().zip(fd.dy(&gy)).map(|(a, b)| a + b).collect();

    let mut eh = 0.0f64;
    let mut ec = 0.0f64;
    let (mut sh, mut sc) = (0.0f64, 0.0f64);
    for j in 0..64 {
        for i in 0..64 {
            let k = j * 512 * 8 + i * 8;
            let osm = params.pc * (cf[k] - 1.0);
            let rh = -div_q[k] - jf[k] + osm;
            let rc = -(u[k] * cx[k] + v[k] * cy[k]) + div_g[k] / (hf[k] * params.pe_c) + (jf[k] - osm) * cf[k] / hf[k];
            let kc = coarse.index(i, j);
            eh = eh.max((dh[kc] - rh).abs());
            ec = ec.max((dc[kc] - rc).abs());
            sh = sh.max(rh.abs());
            sc = sc.max(rc.abs());
        }
    }
    assert!(eh / sh < 2e-3, "h rate mismatch {:e}", eh / sh);
    assert!(ec / sc < 2e-3, "c rate mismatch {:e}", ec / sc);
}

#[test]
fn consistent_rates_equal_rates_with_eliminated_pressure() {
    let grid = PeriodicGrid::new(48, 40).unwrap();
    let model = TearFilmModel::new(grid, ModelParams::default(), spot()).unwrap();
    let h = grid.sample(smooth_h);
    let c = grid.sample(smooth_c);
    let p = model.pressure(&h);
    let (a, b) = model.film_rates(&h, &p, &c).unwrap();
    let (a2, b2) = model.film_rates_consistent(&h, &c).unwrap();
    let scale = a.iter().chain(&b).fold(0.0f64, |m, v| m.max(v.abs()));
    for (x, y) in a.iter().zip(&a2).chain(b.iter().zip(&b2)) {
        assert!((x - y).abs() < 1e-11 * scale, "{x} vs {y}");
    }
}

#[test]
fn mechanism_terms_sum_to_osmolarity_rate() {
    let grid = PeriodicGrid::square(40).unwrap();
    let model = TearFilmModel::new(grid, ModelParams::default(), spot()).unwrap();
    let h = grid.sample(smooth_h);
    let c = grid.sample(smooth_c);
    let state = FieldState { t: 0.0, p: model.pressure(&h), h, c, f: None };
    let m = model.mechanism_terms(&state).unwrap();
    let r = model.residual(&state).unwrap();
    for k in 0..grid.len() {
        let sum = -m.advection[k] + m.diffusion[k] + m.evaporation[k] - m.osmosis[k];
        assert!((sum - r.c[k]).abs() < 1e-12, "node {k}: {sum} vs {}", r.c[k]);
    }
}

#[test]
fn water_balance_of_the_thickness_rate() {
    let grid = PeriodicGrid::square(48).unwrap();
    let params = ModelParams::default();
    let model = TearFilmModel::new(grid, params, spot()).unwrap();
    let h = grid.sample(smooth_h);
    let c = grid.sample(smooth_c);
    let (dh, _) = model.film_rates_consistent(&h, &c).unwrap();
    let sources: Vec<f64> = (0..grid.len()).map(|k| -model.j()[k] + params.pc * (c[k] - 1.0)).collect();
    let lhs = integrate_domain(&dh, &grid).unwrap();
    let rhs = integrate_domain(&sources, &grid).unwrap();
    assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
}

#[test]
fn solute_rate_integrates_to_zero_for_resolved_fields() {
    let grid = PeriodicGrid::square(64).unwrap();
    let model = TearFilmModel::new(grid, ModelParams::default(), spot()).unwrap();
    let h = grid.sample(smooth_h);
    let c = grid.sample(smooth_c);
    let (dh, dc) = model.film_rates_consistent(&h, &c).unwrap();
    let d_hc: Vec<f64> = (0..grid.len()).map(|k| h[k] * dc[k] + c[k] * dh[k]).collect();
    let scale = total_solute(&h, &c, &grid).unwrap();
    let rate = integrate_domain(&d_hc, &grid).unwrap();
    assert!(rate.abs() < 1e-10 * scale, "d/dt ∫hc = {rate:e}");
}

#[test]
fn centered_spot_rates_keep_quadrant_symmetry() {
    let grid = PeriodicGrid::square(32).unwrap();
    let model = TearFilmModel::new(grid, ModelParams::default(), spot()).unwrap();
    let sym = |x: f64, y: f64| 1.0 + 0.2 * x.cos() * y.cos() + 0.1 * (2.0 * x).cos();
    let h = grid.sample(sym);
    let c = grid.sample(|x, y| 1.0 + 0.1 * (x.cos() + (2.0 * y).cos()));
    let (dh, dc) = model.film_rates_consistent(&h, &c).unwrap();
    let n = 32;
    for j in 1..n {
        for i in 1..n {
            let k = grid.index(i, j);
            let mx = grid.index(n - i, j);
            let my = grid.index(i, n - j);
            for r in [&dh, &dc] {
                assert!((r[k] - r[mx]).abs() < 1e-12 && (r[k] - r[my]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn infinite_width_peak_gives_rates_uniform_in_y() {
    let grid = PeriodicGrid::new(32, 16).unwrap();
    let evap = Evaporation {
        baseline: 0.1,
        peaks: vec![EvaporationPeak { amplitude: 1.0, center: [0.0, 0.0], widths: [0.5, f64::INFINITY] }],
        periodic_images: false,
    };
    let model = TearFilmModel::new(grid, ModelParams::default(), evap).unwrap();
    let h = grid.sample(|x, _| 1.0 + 0.2 * x.cos());
    let c = grid.sample(|x, _| 1.0 + 0.1 * x.sin());
    let (dh, dc) = model.film_rates_consistent(&h, &c).unwrap();
    for j in 1..16 {
        for i in 0..32 {
            assert!((dh[grid.index(i, j)] - dh[grid.index(i, 0)]).abs() < 1e-12);
            assert!((dc[grid.index(i, j)] - dc[grid.index(i, 0)]).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn uniform_state_rates_match_the_ode(vb in 0.0f64..2.0, h0 in 0.3f64..2.0, c0 in 0.5f64..3.0) {
        let grid = PeriodicGrid::square(8).unwrap();
        let params = ModelParams::default();
        let model = TearFilmModel::new(grid, params, Evaporation::uniform(vb)).unwrap();
        let (dh, dc) = model.film_rates_consistent(&vec![h0; 64], &vec![c0; 64]).unwrap();
        let osm = params.pc * (c0 - 1.0);
        for k in 0..64 {
            prop_assert!((dh[k] - (-vb + osm)).abs() < 1e-12);
            prop_assert!((dc[k] - (vb - osm) * c0 / h0).abs() < 1e-12);
        }
    }

    #[test]
    fn water_balance_holds_for_random_modes(a in -0.3f64..0.3, b in -0.3f64..0.3, kx in 1u32..5, ky in 0u32..5) {
        let grid = PeriodicGrid::square(24).unwrap();
        let params = ModelParams::default();
        let model = TearFilmModel::new(grid, params, spot()).unwrap();
        let h = grid.sample(|x, y| 1.0 + a * (kx as f64 * x + ky as f64 * y).cos());
        let c = grid.sample(|x, y| 1.0 + b * (ky as f64 * x).sin() * (kx as f64 * y).cos());
        let (dh, _) = model.film_rates_consistent(&h, &c).unwrap();
        let sources: Vec<f64> = (0..grid.len()).map(|k| -model.j()[k] + params.pc * (c[k] - 1.0)).collect();
        let lhs = integrate_domain(&dh, &grid).unwrap();
        let rhs = integrate_domain(&sources, &grid).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-11);
    }
}
