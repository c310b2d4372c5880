use nalgebra::DMatrix;
use proptest::prelude::*;
use tearfilm::pod::{capture_snapshots, compute_basis, snapshot_times, Basis, PodError, SnapshotMatrix, Variable};
use tearfilm::{
    integrate, integrate_reduced, radial_snapshot_basis, Evaporation, EvaporationPeak, FieldState, IntegratorConfig,
    ModelParams, PeriodicGrid, PodBasis, PodRanks, RadialGrid, TearFilmModel,
};

fn matrix(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| data[(i * 7 + j * 3) % data.len()] + 0.1 * ((i * j) as f64).sin())
}

fn full_span(n: usize) -> Basis {
    compute_basis(&DMatrix::identity(n, n), n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_is_idempotent(
        data in prop::collection::vec(-1.0f64..1.0, 64),
        v in prop::collection::vec(-1.0f64..1.0, 20),
        rank in 1usize..8,
    ) {
        let s = matrix(20, 8, &data);
        let b = compute_basis(&s, rank).unwrap();
        let once = b.lift(&b.project(&v));
        let twice = b.lift(&b.project(&once));
        for (a, c) in once.iter().zip(&twice) {
            prop_assert!((a - c).abs() < 1e-12);
        }
        prop_assert!(b.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn error_decreases_with_rank_and_matches_the_singular_tail(data in prop::collection::vec(-1.0f64..1.0, 64)) {
        let s = matrix(24, 10, &data);
        let mut last = f64::INFINITY;
        for rank in 1..=10 {
            let b = compute_basis(&s, rank).unwrap();
            let err = b.reconstruction_error(&s);
            prop_assert!(err <= last + 1e-12);
            let tail: f64 = b.singular_values[rank..].iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((err - tail).abs() < 1e-10 * (1.0 + s.norm()), "rank {}: {} vs {}", rank, err, tail);
            last = err;
        }
        prop_assert!(last < 1e-10 * s.norm());
    }
}

#[test]
fn singular_values_are_sorted() {
    let s = matrix(30, 12, &[0.3, -0.7, 1.0, 0.2, -0.1, 0.9, 0.4]);
    let b = compute_basis(&s, 5).unwrap();
    assert!(b.singular_values.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(b.singular_values.len(), 12);
    assert_eq!(b.rank(), 5);
    assert_eq!(b.rows(), 30);
}

#[test]
fn rank_one_data_needs_one_vector() {
    let u: Vec<f64> = (0..16).map(|i| (i as f64 * 0.4).cos()).collect();
    let s = DMatrix::from_fn(16, 6, |i, j| u[i] * (1.0 + j as f64));
    let b = compute_basis(&s, 1).unwrap();
    assert!(b.reconstruction_error(&s) < 1e-12 * s.norm());
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot: f64 = (0..16).map(|i| b.vectors[(i, 0)] * u[i] / norm).sum();
    assert!((dot.abs() - 1.0).abs() < 1e-12);
}

#[test]
fn rank_bounds_are_checked() {
    let s = DMatrix::from_element(10, 4, 1.0);
    assert!(matches!(compute_basis(&s, 0), Err(PodError::RankOutOfRange { .. })));
    assert!(matches!(compute_basis(&s, 5), Err(PodError::RankOutOfRange { max: 4, .. })));
}

#[test]
fn snapshot_matrix_validation() {
    let cols = vec![vec![1.0; 4], vec![2.0; 4], vec![3.0; 4]];
    let m = SnapshotMatrix::new(Variable::H, vec![0.0, 0.5, 1.0], &cols).unwrap();
    assert_eq!(m.columns.shape(), (4, 3));
    assert_eq!(m.columns[(2, 1)], 2.0);
    assert!(matches!(SnapshotMatrix::new(Variable::H, vec![0.0], &cols[..1]), Err(PodError::TooFewSnapshots(1))));
    assert!(matches!(SnapshotMatrix::new(Variable::H, vec![0.1, 0.5, 1.0], &cols), Err(PodError::BadTimes)));
    assert!(matches!(SnapshotMatrix::new(Variable::H, vec![0.0, 1.0, 0.5], &cols), Err(PodError::BadTimes)));
    let ragged = vec![vec![1.0; 4], vec![2.0; 3]];
    assert!(matches!(
        SnapshotMatrix::new(Variable::C, vec![0.0, 1.0], &ragged),
        Err(PodError::ColumnLength { index: 1, len: 3, expected: 4 })
    ));
    let both = SnapshotMatrix::concat(&[m.clone(), m]).unwrap();
    assert_eq!(both.shape(), (4, 6));
}

#[test]
fn standard_ranks_and_counts() {
    assert_eq!(PodRanks::for_window(0.25), Some(PodRanks { h: 15, p: 25, c: 15 }));
    assert_eq!(PodRanks::for_window(0.5), Some(PodRanks { h: 20, p: 30, c: 20 }));
    assert_eq!(PodRanks::for_window(1.0), Some(PodRanks { h: 40, p: 50, c: 40 }));
    assert_eq!(PodRanks::for_window(0.7), None);
    assert_eq!(PodRanks::snapshot_count(0.5), Some(50));
    let t = snapshot_times(0.5, 51);
    assert_eq!(t.len(), 51);
    assert_eq!(t[0], 0.0);
    assert!((t[50] - 0.5).abs() < 1e-15);
}

#[test]
fn basis_file_round_trip() {
    let grid = PeriodicGrid::new(8, 10).unwrap();
    let s = matrix(80, 6, &[0.2, -0.5, 0.7, 1.1, -0.3]);
    let basis = PodBasis {
        h: compute_basis(&s, 3).unwrap(),
        p: compute_basis(&s, 4).unwrap(),
        c: compute_basis(&s, 2).unwrap(),
        f: Some(compute_basis(&s, 2).unwrap()),
        provenance: "test data, two lines\njoined".into(),
    };
    let mut buf = Vec::new();
    basis.write_to(&mut buf, &grid).unwrap();
    let (back, g) = PodBasis::read_from(buf.as_slice()).unwrap();
    assert_eq!(g, grid);
    assert_eq!(back.h, basis.h);
    assert_eq!(back.p, basis.p);
    assert_eq!(back.c, basis.c);
    assert_eq!(back.f, basis.f);
    assert_eq!(back.provenance, "test data, two lines joined");
    assert_eq!(back.ranks(), PodRanks { h: 3, p: 4, c: 2 });

    assert!(matches!(PodBasis::read_from(&buf[..buf.len() - 1]), Err(PodError::Io(_))));
    assert!(matches!(PodBasis::read_from(&b"not a basis\n"[..]), Err(PodError::Format(_))));
    let mut wrong = Vec::new();
    basis.write_to(&mut wrong, &PeriodicGrid::square(8).unwrap()).unwrap();
    assert!(matches!(PodBasis::read_from(wrong.as_slice()), Err(PodError::GridMismatch { rows: 80, nodes: 64 })));
}

#[test]
fn full_span_reduction_reproduces_the_full_model() {
    let grid = PeriodicGrid::square(16).unwrap();
    let model = TearFilmModel::new(grid, ModelParams::default(), Evaporation::single_spot(1.0, 0.1, 0.6)).unwrap();
    let n = grid.len();
    let basis = PodBasis { h: full_span(n), p: full_span(n), c: full_span(n), f: None, provenance: String::new() };
    let cfg = IntegratorConfig { t_end: 1.5, rtol: 1e-8, atol: 1e-10, ..Default::default() };
    let init = FieldState::uniform(&grid, 1.0);
    let full = integrate(&model, &init, &cfg, &[[0.0, 0.0]]).unwrap();
    let red = integrate_reduced(&model, &basis, &init, &cfg, &[[0.0, 0.0]]).unwrap();
    let (a, b) = (&red.final_state, &full.final_state);
    assert!((a.t - b.t).abs() < 1e-12);
    let err = a.h.iter().zip(&b.h).chain(a.c.iter().zip(&b.c)).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(err < 1e-6, "{err:e}");
    let perr = a.p.iter().zip(&b.p).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(perr < 1e-5, "{perr:e}");
}

#[test]
fn snapshot_basis_captures_its_own_window() {
    let grid = PeriodicGrid::square(20).unwrap();
    let model = TearFilmModel::new(grid, ModelParams::default(), Evaporation::single_spot(1.0, 0.1, 0.5)).unwrap();
    let cfg = IntegratorConfig::default();
    let (set, rec) = capture_snapshots(&model, 0.5, 26, &cfg, true).unwrap();
    assert_eq!(rec.snapshots.len(), 26);
    let basis = PodBasis::from_snapshots(&set, PodRanks { h: 10, p: 12, c: 10 }, "single spot").unwrap();
    assert_eq!(basis.f.as_ref().unwrap().rank(), 10);
    for (b, s) in [(&basis.h, &set.h), (&basis.c, &set.c), (&basis.p, &set.p)] {
        assert!(b.reconstruction_error(&s.columns) < 1e-4 * s.columns.norm());
    }
    let late = capture_snapshots(&model, 5.0, 10, &cfg, false);
    assert!(matches!(late, Err(PodError::EarlyBreakup { .. })));
}

#[test]
fn radial_basis_rejects_elliptical_peaks() {
    let evap = Evaporation {
        baseline: 0.1,
        peaks: vec![EvaporationPeak { amplitude: 1.0, center: [0.0, 0.0], widths: [0.5, 1.0] }],
        periodic_images: false,
    };
    let err = radial_snapshot_basis(
        &evap,
        &ModelParams::default(),
        &PeriodicGrid::square(16).unwrap(),
        &RadialGrid::new(std::f64::consts::PI, 32).unwrap(),
        0.5,
        10,
        PodRanks { h: 4, p: 4, c: 4 },
        &IntegratorConfig::default(),
    );
    assert!(matches!(err, Err(PodError::NonCircularPeak(0))));
}
