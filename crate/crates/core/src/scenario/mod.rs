//! Ground-truth trajectories and synthetic measurements.

mod noise;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gas::{solve_steady_state, GasSystemMatrices};
use crate::net::{Admittance, BusKind, IgesModel, LoadProfile};
use crate::power::{solve_power_flow, BusSchedule, PowerFlowOptions};

pub use noise::{
    channel_sigmas, inject_bad_data, nominal_magnitudes, synthesize_measurements, BadDataSpec, BadDatum, ClassNoise, Distribution, NoiseSpec,
};

/// RNG stream for load wobble; measurement noise uses [`NOISE_STREAM`].
const WOBBLE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Scheduled change of one GTU's output from `step` onwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtuEvent {
    pub bus: usize,
    pub step: usize,
    pub delta_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Number of samples, including the initial one.
    pub steps: usize,
    /// Clock time of sample 0, hours.
    pub start_hour: f64,
    /// Stationary relative standard deviation of the load wobble.
    pub wobble: f64,
    /// Step-to-step correlation of the wobble.
    pub wobble_correlation: f64,
    /// Profile scaling power demand and non-GTU generation.
    pub power_profile: Option<String>,
    /// Profile scaling GTU output.
    pub gtu_profile: Option<String>,
    pub gtu_events: Vec<GtuEvent>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            steps: 144,
            start_hour: 0.0,
            wobble: 0.0,
            wobble_correlation: 0.9,
            power_profile: None,
            gtu_profile: None,
            gtu_events: Vec::new(),
        }
    }
}

impl ScenarioSpec {
    pub fn hour(&self, model: &IgesModel, step: usize) -> f64 {
        self.start_hour + step as f64 * model.constants.dt / 3600.0
    }

    fn check(&self, model: &IgesModel) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::InvalidArgument(format!("scenario needs at least 2 steps, got {}", self.steps)));
        }
        if self.wobble.is_nan() || self.wobble < 0.0 || !(0.0..1.0).contains(&self.wobble_correlation) {
            return Err(Error::InvalidArgument(
                "wobble must be nonnegative and its correlation in [0, 1)".into(),
            ));
        }
        for name in [&self.power_profile, &self.gtu_profile].into_iter().flatten() {
            if model.profile(name).is_none() {
                return Err(Error::InvalidArgument(format!("unknown profile '{name}'")));
            }
        }
        for ev in &self.gtu_events {
            if !model.gtus.iter().any(|g| g.bus == ev.bus) {
                return Err(Error::InvalidArgument(format!("gtu event at bus {} without a gtu", ev.bus)));
            }
        }
        Ok(())
    }

    fn profile<'a>(&self, model: &'a IgesModel, name: &Option<String>) -> &'a LoadProfile {
        name.as_deref()
            .and_then(|n| model.profile(n))
            .or_else(|| model.profile("flat"))
            .expect("flat profile always present")
    }
}

/// Truth trajectory with the boundary quantities that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// Joint states `[power | gas]`, one per step.
    pub states: Vec<DVector<f64>>,
    /// Sink offtakes in kg/s, one vector per step.
    pub sink_loads: Vec<DVector<f64>>,
    pub schedules: Vec<BusSchedule>,
}

impl Truth {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// AR(1) multipliers `1 + w_t`, one column per entity, stationary std `sigma`.
fn wobble_paths(rng: &mut ChaCha8Rng, entities: usize, steps: usize, sigma: f64, phi: f64) -> Vec<Vec<f64>> {
    let innovation = sigma * (1.0 - phi * phi).sqrt();
    let mut w: Vec<f64> = (0..entities)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        out.push(w.iter().map(|v| 1.0 + v).collect());
        for v in w.iter_mut() {
            *v = phi * *v + innovation * rng.sample::<f64, _>(StandardNormal);
        }
    }
    out
}

/// GTU output of every GTU bus at every step, MW (without wobble).
fn gtu_output(model: &IgesModel, spec: &ScenarioSpec, bus_pos: usize, step: usize) -> f64 {
    let bus = &model.buses[bus_pos];
    let shape = spec.profile(model, &spec.gtu_profile).at_hour(spec.hour(model, step));
    let events: f64 = spec
        .gtu_events
        .iter()
        .filter(|e| e.bus == bus.id && step >= e.step)
        .map(|e| e.delta_mw)
        .sum();
    bus.pg * shape + events
}

/// Loads an operator would assume before any measurement: base load times
/// profile at the start hour, GTU draw from the scheduled output.
pub fn nominal_sink_loads(model: &IgesModel, gas: &GasSystemMatrices, spec: &ScenarioSpec) -> DVector<f64> {
    let layout = &gas.layout;
    let hour = spec.hour(model, 0);
    DVector::from_iterator(
        layout.sinks.len(),
        layout.sinks.iter().map(|&p| {
            let node = &model.gas_nodes[p];
            if let Some(link) = model.gtu_for_sink(node.id) {
                let bus = model.bus_index(link.bus).expect("validated gtu bus");
                gtu_output(model, spec, bus, 0) / link.eta
            } else {
                let profile = node.load_profile.as_deref().and_then(|n| model.profile(n));
                node.base_load * profile.map_or(1.0, |p| p.at_hour(hour))
            }
        }),
    )
}

/// Schedules and gas loads for every step, drawn sequentially from one RNG
/// stream so the result does not depend on how the power flows are run.
fn draw_boundary(
    model: &IgesModel,
    gas: &GasSystemMatrices,
    spec: &ScenarioSpec,
    seed: u64,
) -> (Vec<BusSchedule>, Vec<DVector<f64>>) {
    let layout = &gas.layout;
    let n_sinks = layout.sinks.len();
    let n_buses = model.n_buses();
    let n_gtu = model.gtus.len();
    let mut rng = rng_for(seed, WOBBLE_STREAM);
    let wobble = wobble_paths(
        &mut rng,
        n_sinks + n_buses + n_gtu,
        spec.steps,
        spec.wobble,
        spec.wobble_correlation,
    );
    let power_shape = spec.profile(model, &spec.power_profile);

    let mut schedules = Vec::with_capacity(spec.steps);
    let mut loads = Vec::with_capacity(spec.steps);
    for (t, w) in wobble.iter().enumerate() {
        let hour = spec.hour(model, t);
        let shape = power_shape.at_hour(hour);
        let mut s = BusSchedule::nominal(model);
        for (i, bus) in model.buses.iter().enumerate() {
            let f = shape * w[n_sinks + i];
            s.pd[i] = bus.pd * f;
            s.qd[i] = bus.qd * f;
            if bus.kind == BusKind::Pv {
                s.pg[i] = bus.pg * shape;
            }
        }
        let mut l = DVector::zeros(n_sinks);
        for (g, link) in model.gtus.iter().enumerate() {
            let i = model.bus_index(link.bus).expect("validated gtu bus");
            let p = gtu_output(model, spec, i, t) * w[n_sinks + n_buses + g];
            s.pg[i] = p;
            let k = layout.sink_slot(link.gas_sink).expect("validated gtu sink");
            l[k] = p / link.eta;
        }
        for (k, &pos) in layout.sinks.iter().enumerate() {
            let node = &model.gas_nodes[pos];
            if model.gtu_for_sink(node.id).is_some() || node.is_junction() {
                continue;
            }
            let profile = node.load_profile.as_deref().and_then(|n| model.profile(n));
            l[k] = node.base_load * profile.map_or(1.0, |p| p.at_hour(hour)) * w[k];
        }
        schedules.push(s);
        loads.push(l);
    }
    (schedules, loads)
}

/// One power flow per schedule.
pub fn solve_flows(
    model: &IgesModel,
    y: &Admittance,
    schedules: &[BusSchedule],
    exec: Execution,
) -> Vec<Result<DVector<f64>>> {
    exec.map(schedules, |s| solve_power_flow(model, y, s, PowerFlowOptions::default()))
}

/// Power flow per step for the voltages, gas states by marching the
/// discretized network from the steady state at step 0.
pub fn generate_truth(
    model: &IgesModel,
    y: &Admittance,
    gas: &GasSystemMatrices,
    spec: &ScenarioSpec,
    seed: u64,
) -> Result<Truth> {
    generate_truth_with(model, y, gas, spec, seed, Execution::default())
}

pub fn generate_truth_with(
    model: &IgesModel,
    y: &Admittance,
    gas: &GasSystemMatrices,
    spec: &ScenarioSpec,
    seed: u64,
    exec: Execution,
) -> Result<Truth> {
    spec.check(model)?;
    let (schedules, sink_loads) = draw_boundary(model, gas, spec, seed);

    let voltages = solve_flows(model, y, &schedules, exec);
    let np = model.power_state_dim();
    let ng = gas.dim();

    let mut states = Vec::with_capacity(spec.steps);
    let mut xg = solve_steady_state(gas, &gas.input_with_loads(sink_loads[0].clone()))?;
    for (t, v) in voltages.into_iter().enumerate() {
        let v = v.map_err(|e| Error::StepFailed {
            step: t,
            source: Box::new(e),
        })?;
        if t > 0 {
            xg = &gas.transition * &xg + gas.forcing(&gas.input_with_loads(sink_loads[t].clone()));
        }
        let mut x = DVector::zeros(np + ng);
        x.rows_mut(0, np).copy_from(&v);
        x.rows_mut(np, ng).copy_from(&xg);
        states.push(x);
    }
    Ok(Truth {
        states,
        sink_loads,
        schedules,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::assemble_gas_system;
    use crate::net::{build_ybus, load_model_str};

    pub(crate) fn tiny() -> IgesModel {
        load_model_str(
            r#"
            [constants]
            c_s = 340.0
            dt = 600.0
            [[gas_nodes]]
            id = 1
            pressure_bar = 41.48
            [[gas_nodes]]
            id = 2
            load = 5.0
            profile = "day"
            [[gas_nodes]]
            id = 3
            kind = "sink"
            [[pipes]]
            from = 1
            to = 2
            length = 10000.0
            diameter = 0.5
            [[pipes]]
            from = 1
            to = 3
            length = 10000.0
            diameter = 0.5
            [[buses]]
            id = 1
            kind = "slack"
            vset = 1.02
            [[buses]]
            id = 2
            pd = 80.0
            qd = 20.0
            [[buses]]
            id = 3
            kind = "pv"
            pg = 60.0
            [[branches]]
            from = 1
            to = 2
            r = 0.01
            x = 0.1
            [[branches]]
            from = 2
            to = 3
            r = 0.01
            x = 0.1
            [[gtus]]
            bus = 3
            gas_sink = 3
            eta = 20.148
            [profiles.day]
            points = [[0.0, 0.8], [12.0, 1.2], [24.0, 0.8]]
            "#,
        )
        .unwrap()
    }

    fn truth(spec: &ScenarioSpec, seed: u64) -> Truth {
        let m = tiny();
        let y = build_ybus(&m);
        let gas = assemble_gas_system(&m).unwrap();
        generate_truth(&m, &y, &gas, spec, seed).unwrap()
    }

    #[test]
    fn constant_profiles_give_constant_states() {
        let m = tiny();
        let mut m2 = m.clone();
        m2.gas_nodes[1].load_profile = None;
        let y = build_ybus(&m2);
        let gas = assemble_gas_system(&m2).unwrap();
        let t = generate_truth(&m2, &y, &gas, &ScenarioSpec { steps: 12, ..Default::default() }, 1).unwrap();
        for x in &t.states {
            assert!((x - &t.states[0]).amax() < 1e-9);
        }
    }

    #[test]
    fn horizon_length() {
        assert_eq!(truth(&ScenarioSpec::default(), 3).len(), 144);
    }

    #[test]
    fn gtu_event_steps_gas_load() {
        let spec = ScenarioSpec {
            steps: 10,
            gtu_events: vec![GtuEvent {
                bus: 3,
                step: 5,
                delta_mw: 50.0,
            }],
            ..Default::default()
        };
        let t = truth(&spec, 1);
        let jump = t.sink_loads[5][1] - t.sink_loads[4][1];
        assert!((jump - 50.0 / 20.148).abs() < 1e-12);
        assert_eq!(t.sink_loads[4][1], 60.0 / 20.148);
    }

    #[test]
    fn wobble_is_seeded() {
        let spec = ScenarioSpec {
            steps: 6,
            wobble: 0.02,
            ..Default::default()
        };
        assert_eq!(truth(&spec, 9), truth(&spec, 9));
        assert_ne!(truth(&spec, 9).sink_loads, truth(&spec, 10).sink_loads);
    }

    #[test]
    fn rejects_short_horizon_and_unknown_profile() {
        let m = tiny();
        let y = build_ybus(&m);
        let gas = assemble_gas_system(&m).unwrap();
        let short = ScenarioSpec { steps: 1, ..Default::default() };
        assert!(generate_truth(&m, &y, &gas, &short, 0).is_err());
        let bad = ScenarioSpec {
            power_profile: Some("nope".into()),
            ..Default::default()
        };
        assert!(generate_truth(&m, &y, &gas, &bad, 0).is_err());
    }
}
