use dimfft::harness::*;
use proptest::prelude::*;

fn strip_time(mut r: RunReport) -> RunReport {
    r.wall_time_ms = 0.0;
    r
}

#[test]
fn random_phase_values_have_uniform_phase() {
    let mut phases = Vec::new();
    let mut spec = SignalSpec::new(SignalModel::RandomPhase, 64, 2, 100, 0);
    spec.magnitudes = Magnitudes { min: 0.5, max: 2.0 };
    for seed in 0..100 {
        spec.seed = seed;
        let (_, x) = generate(&spec).unwrap();
        for (_, v) in x.iter_flat() {
            assert!(v.norm() >= 0.5 - 1e-12 && v.norm() <= 2.0 + 1e-12);
            phases.push((v.arg() / std::f64::consts::TAU).rem_euclid(1.0));
        }
    }
    assert_eq!(phases.len(), 10_000);
    phases.sort_by(f64::total_cmp);
    let m = phases.len() as f64;
    let ks = phases
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - i as f64 / m).abs().max(((i + 1) as f64 / m - p).abs()))
        .fold(0.0, f64::max);
    assert!(ks * m.sqrt() < 1.628, "KS statistic {ks}");
}

#[test]
fn random_support_size_is_binomial() {
    let mut inside = 0;
    let mut total = 0usize;
    for seed in 0..1000 {
        let (_, x) = generate(&SignalSpec::new(SignalModel::RandomSupport, 16, 3, 16, seed)).unwrap();
        inside += usize::from(x.len().abs_diff(16) <= 12);
        total += x.len();
    }
    assert!(inside >= 990, "inside={inside}");
    assert!((total as f64 / 1000.0 - 16.0).abs() <= 3.0 * 4.0 / 1000f64.sqrt());
}

#[test]
fn run_examples() {
    let cfg = RunConfig::default();
    for model in [SignalModel::WorstCase, SignalModel::RandomPhase, SignalModel::RandomSupport] {
        let r = run(&SignalSpec::new(model, 16, 2, 8, 3), Algorithm::Estimate, &cfg).unwrap();
        assert!(r.success, "{model:?}");
    }
    let r = run(&SignalSpec::new(SignalModel::WorstCase, 16, 2, 8, 1), Algorithm::Worst, &cfg).unwrap();
    assert!(r.success);
    assert!(r.iterations <= 2 * (1 + 8) * 9);
    let r = run(&SignalSpec::new(SignalModel::WorstCase, 16, 2, 8, 1), Algorithm::RandomSupport, &cfg).unwrap();
    assert!(r.model_mismatch);
}

#[test]
fn sweep_writes_files_and_keeps_order() {
    let dir = std::env::temp_dir().join(format!("dimfft-sweep-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let grid = SweepGrid {
        models: vec![SignalModel::WorstCase],
        ns: vec![16],
        ds: vec![2],
        ks: vec![2, 4],
        seeds: vec![0, 1, 2],
        ..Default::default()
    };
    let (res, csv, json) = sweep(&grid, &dir.join("out"), Some(3)).unwrap();
    let order: Vec<(usize, u64)> = res.runs.iter().map(|r| (r.spec.k, r.spec.seed)).collect();
    assert_eq!(order, vec![(2, 0), (2, 1), (2, 2), (4, 0), (4, 1), (4, 2)]);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 7);
    let back: SweepResult = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back.runs.len(), 6);
    assert!(res.groups[0].slope.is_some());
    let serial = run_grid(&grid, Some(1)).unwrap();
    let a: Vec<_> = res.runs.into_iter().map(strip_time).collect();
    let b: Vec<_> = serial.runs.into_iter().map(strip_time).collect();
    assert_eq!(a, b);

    let (empty, csv, _) = sweep(&SweepGrid::default(), &dir.join("empty"), None).unwrap();
    assert!(empty.runs.is_empty());
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 1);
    std::fs::remove_dir_all(dir).unwrap();
}

fn model() -> impl Strategy<Value = SignalModel> {
    prop_oneof![
        Just(SignalModel::WorstCase),
        Just(SignalModel::RandomPhase),
        Just(SignalModel::RandomSupport),
    ]
}

fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop_oneof![
        Just(Algorithm::Estimate),
        Just(Algorithm::Worst),
        Just(Algorithm::RandomPhase),
        Just(Algorithm::RandomSupport),
        Just(Algorithm::DenseFftBaseline),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn reports_are_consistent_and_seeded(m in model(), a in algorithm(), k in prop::sample::select(vec![1usize, 2, 4]), seed in 0u64..1000) {
        let spec = SignalSpec::new(m, 8, 2, k, seed);
        let cfg = RunConfig::default();
        let r1 = run(&spec, a, &cfg).unwrap();
        let r2 = run(&spec, a, &cfg).unwrap();
        prop_assert_eq!(r1.success, r1.recomputed_success());
        prop_assert!(r1.l2_error >= 0.0);
        prop_assert_eq!(r1.schema, 1);
        prop_assert_eq!(strip_time(r1), strip_time(r2));
    }
}

#[test]
fn random_support_samples_scale_near_linearly() {
    let grid = SweepGrid {
        models: vec![SignalModel::RandomSupport],
        ns: vec![16],
        ds: vec![3],
        ks: vec![2, 4, 8, 16],
        seeds: (0..4).collect(),
        ..Default::default()
    };
    let res = run_grid(&grid, None).unwrap();
    let slope = res.groups[0].slope.unwrap();
    eprintln!("random-support samples slope {slope:.3}");
    assert!(slope <= 1.3);
}
