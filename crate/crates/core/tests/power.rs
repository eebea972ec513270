use std::path::Path;

use iges_core::net::{build_ybus, load_model, preprocess, BusKind, IgesModel, DEFAULT_MAX_SEGMENT_LENGTH};
use iges_core::power::{
    build_measurement_model, e_index, f_index, holt_predict, injected_power, injected_reactive_power,
    solve_power_flow, BusSchedule, HoltState, PmuChannel, PowerFlowOptions,
};
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;

fn fixture_model() -> IgesModel {
    let raw = load_model(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/iges39_gas40.toml")).unwrap();
    preprocess(&raw, DEFAULT_MAX_SEGMENT_LENGTH).unwrap()
}

fn phasor(x: &DVector<f64>, k: usize) -> Complex64 {
    Complex64::new(x[e_index(k)], x[f_index(k)])
}

/// Currents leaving each bus, summed branch by branch in complex arithmetic.
fn injections_by_branch(model: &IgesModel, x: &DVector<f64>) -> Vec<Complex64> {
    let base = model.constants.base_mva;
    let mut inj: Vec<Complex64> = model
        .buses
        .iter()
        .enumerate()
        .map(|(k, b)| Complex64::new(b.gs, b.bs) / base * phasor(x, k))
        .collect();
    for br in &model.branches {
        let (f, t) = (model.bus_index(br.from).unwrap(), model.bus_index(br.to).unwrap());
        let (vf, vt) = (phasor(x, f), phasor(x, t));
        let y = Complex64::new(br.g, br.b);
        let half = Complex64::new(0.0, br.charging / 2.0);
        let series = (vf / br.tap - vt) * y;
        inj[f] += series / br.tap + half * vf;
        inj[t] += -series + half * vt;
    }
    inj
}

#[test]
fn injection_rows_match_complex_oracle() {
    let model = fixture_model();
    let y = build_ybus(&model);
    let buses: Vec<usize> = model.buses.iter().map(|b| b.id).collect();
    let pmu = build_measurement_model(&model, &y, &buses, &[]).unwrap();
    let n = model.n_buses();
    let x = DVector::from_fn(2 * n, |i, _| if i % 2 == 0 { 1.0 + 0.01 * (i as f64).sin() } else { 0.1 * (i as f64).cos() });
    let z = &pmu.h * &x;
    let oracle = injections_by_branch(&model, &x);
    let mut worst = 0.0f64;
    for (row, ch) in pmu.channels.iter().enumerate() {
        let expected = match *ch {
            PmuChannel::InjectionReal(b) => oracle[model.bus_index(b).unwrap()].re,
            PmuChannel::InjectionImag(b) => oracle[model.bus_index(b).unwrap()].im,
            _ => continue,
        };
        worst = worst.max((z[row] - expected).abs());
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn fixture_flow_converges_within_10_iterations() {
    let model = fixture_model();
    let y = build_ybus(&model);
    let schedule = BusSchedule::nominal(&model);
    let options = PowerFlowOptions {
        max_iterations: 10,
        ..PowerFlowOptions::default()
    };
    let x = solve_power_flow(&model, &y, &schedule, options).unwrap();
    let base = model.constants.base_mva;
    for (i, bus) in model.buses.iter().enumerate() {
        let v = phasor(&x, i);
        match bus.kind {
            BusKind::Slack => {
                assert!((v.re - bus.vset).abs() < 1e-12 && v.im.abs() < 1e-12);
            }
            BusKind::Pv => {
                assert!((v.norm() - bus.vset).abs() < 1e-8);
                let p = injected_power(&y, &x, i);
                assert!((p - (bus.pg - bus.pd) / base).abs() < 1e-8, "bus {}", bus.id);
            }
            BusKind::Pq => {
                let p = injected_power(&y, &x, i);
                let q = injected_reactive_power(&y, &x, i);
                assert!((p - (bus.pg - bus.pd) / base).abs() < 1e-8, "bus {}", bus.id);
                assert!((q + bus.qd / base).abs() < 1e-8, "bus {}", bus.id);
            }
        }
        assert!(v.norm() > 0.9 && v.norm() < 1.1, "bus {} at {}", bus.id, v.norm());
    }
}

#[test]
fn every_gtu_bus_injects_its_scheduled_output() {
    let model = fixture_model();
    let y = build_ybus(&model);
    let schedule = BusSchedule::nominal(&model);
    let x = solve_power_flow(&model, &y, &schedule, PowerFlowOptions::default()).unwrap();
    for g in &model.gtus {
        let i = model.bus_index(g.bus).unwrap();
        let p_mw = injected_power(&y, &x, i) * model.constants.base_mva;
        assert!((p_mw - schedule.pg[i]).abs() < 1e-5, "bus {}", g.bus);
    }
}

proptest! {
    #[test]
    fn holt_matches_literal_recursion(
        slope in -0.01f64..0.01,
        noise in prop::collection::vec(-0.005f64..0.005, 30),
        alpha in 0.05f64..0.95,
        beta in 0.05f64..0.95,
    ) {
        let series: Vec<f64> = noise.iter().enumerate().map(|(t, w)| 1.0 + slope * t as f64 + w).collect();
        let v = |s: f64| DVector::from_vec(vec![s, -s]);
        let mut holt = HoltState::initialize(alpha, beta, &v(series[0]), &v(series[1])).unwrap();
        let (mut level, mut trend) = (series[1], series[1] - series[0]);
        for &x in &series[2..] {
            let (pred, u, next) = holt_predict(&holt, &v(x)).unwrap();
            let new_level = alpha * x + (1.0 - alpha) * (level + trend);
            trend = beta * (new_level - level) + (1.0 - beta) * trend;
            level = new_level;
            prop_assert!((pred[0] - (level + trend)).abs() < 1e-14);
            prop_assert!((pred[1] + (level + trend)).abs() < 1e-14);
            // affine form used by the filter transition
            let affine = alpha * v(x) + u;
            prop_assert!((affine - &pred).amax() < 1e-14);
            holt = next;
        }
    }
}
