use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{build_integrated_model, kf_predict, kf_update, robust_scale, EstimationMode, FilterState, IgesSystemModel, ProcessNoise};
use crate::coupling::CouplingPlan;
use crate::error::{Error, Result};
use crate::gas::{solve_steady_state, GasSystemMatrices};
use crate::measurement::{joint_state_names, MeasurementLayout};
use crate::net::{Admittance, IgesModel};
use crate::power::{holt_predict, HoltState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSettings {
    pub alpha: f64,
    pub beta: f64,
    /// Innovation window length for robust scaling.
    pub window: usize,
    /// Initial covariance diagonal.
    pub p0: f64,
    pub q: ProcessNoise,
    pub robust: bool,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            alpha: 0.5,
            beta: 0.4,
            window: 10,
            p0: 1e-3,
            q: ProcessNoise::uniform(1e-5),
            robust: true,
        }
    }
}

/// Everything a filter run needs besides the measurements. Immutable and
/// shared between runs.
#[derive(Debug, Clone)]
pub struct EstimationProblem {
    /// Preprocessed, velocity-calibrated model.
    pub model: IgesModel,
    pub ybus: Admittance,
    pub gas: GasSystemMatrices,
    pub plan: CouplingPlan,
    pub layout: MeasurementLayout,
    /// Standard deviation per joint channel.
    pub sigma: DVector<f64>,
    /// Loads assumed for unmetered sinks at start-up, kg/s per sink.
    pub nominal_sink_loads: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationTrace {
    pub mode: EstimationMode,
    pub robust: bool,
    /// Names of the estimated states (a slice of the joint state).
    pub state_names: Vec<String>,
    pub state_cols: std::ops::Range<usize>,
    pub channel_rows: Vec<usize>,
    /// x̂_t for every step, including the start-up estimate at t = 0.
    pub estimates: Vec<DVector<f64>>,
    /// μ′ used at each step (all ones at t = 0 and for the plain filter).
    pub mu: Vec<DVector<f64>>,
    /// Wall-clock seconds spent per filter step (entry 0 is start-up).
    pub step_seconds: Vec<f64>,
}

pub fn run_estimation(
    problem: &EstimationProblem,
    measurements: &[DVector<f64>],
    mode: EstimationMode,
    settings: &FilterSettings,
) -> Result<EstimationTrace> {
    run_estimation_with(problem, measurements, mode, settings, |_, _| {})
}

/// Like [`run_estimation`], calling `observer(t, state)` after every update.
pub fn run_estimation_with(
    problem: &EstimationProblem,
    measurements: &[DVector<f64>],
    mode: EstimationMode,
    settings: &FilterSettings,
    mut observer: impl FnMut(usize, &FilterState),
) -> Result<EstimationTrace> {
    if measurements.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "estimation needs at least two measurement scans, got {}",
            measurements.len()
        )));
    }
    if let Some(z) = measurements.iter().find(|z| z.len() != problem.layout.len()) {
        return Err(Error::Dimension {
            context: "joint measurement vector",
            expected: problem.layout.len(),
            actual: z.len(),
        });
    }
    let full = build_integrated_model(&problem.gas, &problem.layout, settings.alpha, settings.q, &problem.sigma)?;
    let sys = full.restrict(mode)?;
    let zs: Vec<DVector<f64>> = measurements.iter().map(|z| sys.select(z)).collect();
    let np = sys.n_power;
    let ng = sys.n_gas();
    let all_names = joint_state_names(&problem.model, &problem.gas.layout);

    let started = Instant::now();
    let mut x0 = DVector::zeros(sys.n_states());
    if np > 0 {
        x0.rows_mut(0, np).copy_from(&static_power_estimate(&sys, &zs[0])?);
    }
    let power_of = |x: &DVector<f64>| x.rows(0, np).into_owned();
    let gas_of = |x: &DVector<f64>| x.rows(np, ng).into_owned();
    let coupled = mode == EstimationMode::Integrated;

    if ng > 0 {
        let x0p = power_of(&x0);
        let loads = initial_sink_loads(problem, &measurements[0], coupled.then_some(&x0p))?;
        let input = problem.gas.input_with_loads(loads);
        x0.rows_mut(np, ng).copy_from(&solve_steady_state(&problem.gas, &input)?);
    }
    let mut fs = FilterState::new(x0, DMatrix::identity(sys.n_states(), sys.n_states()) * settings.p0, settings.window);
    observer(0, &fs);

    let mut estimates = vec![fs.x.clone()];
    let mut mus = vec![DVector::from_element(sys.n_channels(), 1.0)];
    let mut step_seconds = vec![started.elapsed().as_secs_f64()];

    let mut power_holt: Option<(HoltState, bool)> = None;
    let mut load_holt: Option<(HoltState, bool)> = None;

    for (t, z) in zs.iter().enumerate().skip(1) {
        let started = Instant::now();
        let xp = power_of(&fs.x);
        let xg = gas_of(&fs.x);

        // power prediction and its affine input
        let (power_pred, power_u) = match power_holt.as_mut() {
            None => (xp.clone(), (1.0 - settings.alpha) * &xp),
            Some((h, fresh)) => {
                if *fresh {
                    *fresh = false;
                    h.initial_forecast(&xp)
                } else {
                    let (pred, u, next) = holt_predict(h, &xp)?;
                    *h = next;
                    (pred, u)
                }
            }
        };

        let mut u = DVector::zeros(sys.n_states());
        u.rows_mut(0, np).copy_from(&power_u);
        if ng > 0 {
            let current = problem.gas.layout.sink_loads(&xg);
            let load_pred = match load_holt.as_mut() {
                None => current,
                Some((h, fresh)) => {
                    if *fresh {
                        *fresh = false;
                        h.forecast()
                    } else {
                        let (pred, _, next) = holt_predict(h, &current)?;
                        *h = next;
                        pred
                    }
                }
            };
            let input = problem.plan.build_boundary_input(
                &problem.model,
                &problem.ybus,
                &problem.gas.source_densities,
                &load_pred,
                coupled.then_some(&power_pred),
            )?;
            u.rows_mut(np, ng).copy_from(&problem.gas.forcing(&input));
        }

        let mut pred = kf_predict(&sys, &fs, &u);
        let mu = if settings.robust {
            let innovation = z - &sys.h * &pred.x;
            robust_scale(&sys, &mut pred, &innovation)
        } else {
            DVector::from_element(sys.n_channels(), 1.0)
        };
        fs = kf_update(&sys, &pred, z, &mu).map_err(|e| Error::StepFailed {
            step: t,
            source: Box::new(e),
        })?;
        observer(t, &fs);

        if t == 1 {
            if np > 0 {
                let h = HoltState::initialize(settings.alpha, settings.beta, &power_of(&estimates[0]), &power_of(&fs.x))?;
                power_holt = Some((h, true));
            }
            if ng > 0 {
                let l0 = problem.gas.layout.sink_loads(&gas_of(&estimates[0]));
                let l1 = problem.gas.layout.sink_loads(&gas_of(&fs.x));
                load_holt = Some((HoltState::initialize(settings.alpha, settings.beta, &l0, &l1)?, true));
            }
        }
        estimates.push(fs.x.clone());
        mus.push(mu);
        step_seconds.push(started.elapsed().as_secs_f64());
    }

    Ok(EstimationTrace {
        mode,
        robust: settings.robust,
        state_names: all_names[sys.state_cols.clone()].to_vec(),
        state_cols: sys.state_cols.clone(),
        channel_rows: sys.channel_rows.clone(),
        estimates,
        mu: mus,
        step_seconds,
    })
}

/// Weighted least squares on one PMU scan with a weak pull towards the flat
/// profile, so buses the PMUs cannot see stay well defined.
/// Static power estimate from one scan: Huber-weighted least squares, so a
/// few wild channels in the first scan cannot spoil the start-up state.
fn static_power_estimate(sys: &IgesSystemModel, z: &DVector<f64>) -> Result<DVector<f64>> {
    const PRIOR_WEIGHT: f64 = 1e-6;
    const HUBER_K: f64 = 1.5;
    const MAX_SWEEPS: usize = 50;
    let np = sys.n_power;
    let rows: Vec<usize> = (0..sys.n_channels())
        .filter(|&r| (0..np).any(|c| sys.h[(r, c)] != 0.0))
        .collect();
    let prior = DVector::from_fn(np, |i, _| if i % 2 == 0 { 1.0 } else { 0.0 });
    let mut scale = vec![1.0; rows.len()];
    let mut x = prior.clone();
    for sweep in 0..MAX_SWEEPS {
        let mut normal = DMatrix::identity(np, np) * PRIOR_WEIGHT;
        let mut rhs = &prior * PRIOR_WEIGHT;
        for (&r, &s) in rows.iter().zip(&scale) {
            let w = s / sys.r[r];
            let h = sys.h.view((r, 0), (1, np));
            normal += w * h.transpose() * h;
            rhs += (w * z[r]) * h.transpose();
        }
        let next = normal.cholesky().map(|c| c.solve(&rhs)).ok_or(Error::Singular {
            what: "static power estimate",
            rcond: 0.0,
        })?;
        let change = (&next - &x).amax();
        x = next;
        if sweep > 0 && change < 1e-12 {
            break;
        }
        for (&r, s) in rows.iter().zip(scale.iter_mut()) {
            let u = ((z[r] - sys.h.row(r).columns(0, np).dot(&x.transpose())) / sys.r[r].sqrt()).abs();
            *s = if u <= HUBER_K { 1.0 } else { HUBER_K / u };
        }
    }
    Ok(x)
}

/// Start-up loads: metered sinks from the first scan, GTU sinks from the
/// power estimate when coupled, junctions zero, the rest nominal.
fn initial_sink_loads(
    problem: &EstimationProblem,
    z0: &DVector<f64>,
    power: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    use crate::coupling::{gtu_flow_from_voltage, SinkRole};
    let layout = &problem.gas.layout;
    let mut loads = problem.nominal_sink_loads.clone();
    for (k, &pos) in layout.sinks.iter().enumerate() {
        let id = layout.node_ids[pos];
        loads[k] = match (&problem.plan.roles[k], problem.layout.load_row(id), power) {
            (_, Some(row), _) => z0[row],
            (SinkRole::Junction, None, _) => 0.0,
            (SinkRole::Gtu(link), None, Some(x)) => gtu_flow_from_voltage(&problem.model, &problem.ybus, link, x)?,
            _ => loads[k],
        };
    }
    Ok(loads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_settings() {
        let s = FilterSettings::default();
        assert_eq!((s.alpha, s.beta, s.window, s.p0), (0.5, 0.4, 10, 1e-3));
        assert_eq!(s.q, ProcessNoise::uniform(1e-5));
    }
}
