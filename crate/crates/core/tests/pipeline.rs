use std::path::Path;

use iges_core::batch::run_batch;
use iges_core::estimator::{run_estimation, EstimationMode, FilterSettings};
use iges_core::exec::Execution;
use iges_core::metrics::{compute_metrics, read_report_csv, QuantityClass, QuantitySeries};
use iges_core::pipeline::{
    read_table, recompute_report, write_estimation, write_simulation, Experiment, RunInfo, ESTIMATES_FILE,
    METRICS_FILE, TRUTH_FILE,
};
use proptest::prelude::*;

fn experiment(steps: usize) -> Experiment {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/base.toml");
    let mut cfg = Experiment::from_config_file(&path).unwrap().config;
    cfg.scenario.steps = steps;
    Experiment::prepare(cfg).unwrap()
}

fn info(exp: &Experiment, seed: u64, mode: Option<EstimationMode>, settings: Option<FilterSettings>) -> RunInfo {
    RunInfo {
        seed,
        steps: exp.config.scenario.steps,
        c_s: exp.problem.model.constants.c_s,
        mode,
        robust: settings.map(|s| s.robust),
        settings,
        config: exp.config.clone(),
    }
}

#[test]
fn sequential_and_parallel_batches_agree() {
    let exp = experiment(24);
    let settings = exp.config.estimator.settings();
    let modes = [EstimationMode::Integrated, EstimationMode::SeparatedGas];
    let seq = run_batch(&exp, &[4, 1, 9], &modes, &settings, Execution::Sequential).unwrap();
    let par = run_batch(&exp, &[4, 1, 9], &modes, &settings, Execution::Parallel).unwrap();
    assert_eq!(seq.iter().map(|r| r.seed()).collect::<Vec<_>>(), vec![4, 1, 9]);
    for (a, b) in seq.iter().zip(&par) {
        assert_eq!(a.simulation.measurements, b.simulation.measurements);
        assert_eq!(a.simulation.truth, b.simulation.truth);
        for (ra, rb) in a.runs.iter().zip(&b.runs) {
            assert_eq!(ra.trace.estimates, rb.trace.estimates);
            assert_eq!(ra.report, rb.report);
        }
    }
}

#[test]
fn simulation_is_seeded() {
    let exp = experiment(12);
    assert_eq!(exp.simulate(5).unwrap().measurements, exp.simulate(5).unwrap().measurements);
    assert_ne!(exp.simulate(5).unwrap().measurements, exp.simulate(6).unwrap().measurements);
}

#[test]
fn full_day_run_directory_round_trips() {
    let exp = experiment(144);
    let settings = exp.config.estimator.settings();
    let sim = exp.simulate(2).unwrap();
    let trace = exp.estimate(&sim, EstimationMode::Integrated, &settings).unwrap();
    let report = exp.report(&sim, &trace).unwrap();
    assert_eq!(trace.estimates.len(), 144);
    assert_eq!(trace.mu[0].iter().copied().fold(0.0, f64::max), 1.0);

    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    write_simulation(&dir, &exp, &sim, &info(&exp, 2, None, None)).unwrap();
    write_estimation(&dir, &trace, &report, &info(&exp, 2, Some(EstimationMode::Integrated), Some(settings))).unwrap();

    let (_, est) = read_table(&dir.join(ESTIMATES_FILE)).unwrap();
    assert_eq!(est.len(), 144);
    let (cols, truth) = read_table(&dir.join(TRUTH_FILE)).unwrap();
    assert_eq!(cols, exp.state_names());
    assert_eq!(truth, sim.truth.states);

    let from_csv = read_report_csv(&dir.join(METRICS_FILE), 144).unwrap();
    assert_eq!(from_csv, report);
    let (read_info, recomputed) = recompute_report(&dir).unwrap();
    assert_eq!(read_info.mode, Some(EstimationMode::Integrated));
    assert_eq!(recomputed, report);
}

#[test]
fn plain_filter_never_scales() {
    let exp = experiment(30);
    let sim = exp.simulate(1).unwrap();
    let plain = FilterSettings {
        robust: false,
        ..exp.config.estimator.settings()
    };
    let trace = run_estimation(&exp.problem, &sim.measurements, EstimationMode::Integrated, &plain).unwrap();
    assert!(trace.mu.iter().all(|m| m.iter().all(|&v| v == 1.0)));
}

#[test]
fn estimation_rejects_bad_input() {
    let exp = experiment(12);
    let settings = exp.config.estimator.settings();
    let sim = exp.simulate(1).unwrap();
    assert!(run_estimation(&exp.problem, &sim.measurements[..1], EstimationMode::Integrated, &settings).is_err());
    let mut short = sim.measurements.clone();
    short[3] = short[3].rows(0, 10).into_owned();
    assert!(run_estimation(&exp.problem, &short, EstimationMode::Integrated, &settings).is_err());
}

#[test]
fn separated_modes_estimate_their_own_block() {
    let exp = experiment(12);
    let settings = exp.config.estimator.settings();
    let sim = exp.simulate(1).unwrap();
    let np = exp.problem.model.power_state_dim();
    let gas = exp.estimate(&sim, EstimationMode::SeparatedGas, &settings).unwrap();
    assert_eq!(gas.state_cols.start, np);
    assert!(gas.state_names.iter().all(|n| !n.starts_with("e_") && !n.starts_with("f_")));
    let power = exp.estimate(&sim, EstimationMode::SeparatedPower, &settings).unwrap();
    assert_eq!(power.state_cols, 0..np);
}

fn series(truth: &[f64], meas: &[f64], est: &[f64]) -> QuantitySeries {
    QuantitySeries {
        name: "p_1".into(),
        class: QuantityClass::Pressure,
        truth: truth.to_vec(),
        estimate: est.to_vec(),
        measured: Some(meas.to_vec()),
    }
}

proptest! {
    #[test]
    fn metrics_ignore_time_order(
        triples in prop::collection::vec((30.0f64..45.0, -1.0f64..1.0, -0.5f64..0.5), 2..40),
        rotate in 0usize..40,
    ) {
        let truth: Vec<f64> = triples.iter().map(|t| t.0).collect();
        let meas: Vec<f64> = triples.iter().map(|t| t.0 + t.1).collect();
        let est: Vec<f64> = triples.iter().map(|t| t.0 + t.2).collect();
        let a = compute_metrics(&[series(&truth, &meas, &est)]).unwrap();
        let k = rotate % truth.len();
        let rot = |v: &[f64]| { let mut w = v.to_vec(); w.rotate_left(k); w.reverse(); w };
        let b = compute_metrics(&[series(&rot(&truth), &rot(&meas), &rot(&est))]).unwrap();
        let (qa, qb) = (&a.quantities[0], &b.quantities[0]);
        prop_assert!((qa.eps2 - qb.eps2).abs() <= 1e-12 * qa.eps2.max(1e-300));
        match (qa.eps1, qb.eps1) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300)),
            (x, y) => prop_assert_eq!(x, y),
        }
        prop_assert_eq!(qa.eps1_median, qb.eps1_median);
    }
}
