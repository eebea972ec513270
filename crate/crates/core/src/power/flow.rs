use nalgebra::{DMatrix, DVector};

use super::{e_index, f_index, PowerState};
use crate::error::{Error, Result};
use crate::net::{Admittance, BusKind, IgesModel};

/// Per-bus demand and generation in MW / Mvar, indexed by bus position.
#[derive(Debug, Clone, PartialEq)]
pub struct BusSchedule {
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
    pub pg: Vec<f64>,
}

impl BusSchedule {
    /// Nominal values from the model.
    pub fn nominal(model: &IgesModel) -> Self {
        BusSchedule {
            pd: model.buses.iter().map(|b| b.pd).collect(),
            qd: model.buses.iter().map(|b| b.qd).collect(),
            pg: model.buses.iter().map(|b| b.pg).collect(),
        }
    }

    pub fn zero(n: usize) -> Self {
        BusSchedule {
            pd: vec![0.0; n],
            qd: vec![0.0; n],
            pg: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    /// Max-norm mismatch tolerance, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tolerance: 1e-8,
            max_iterations: 20,
        }
    }
}

/// Real and imaginary parts of the injected current `Σ_j Y_ij V_j`.
fn current_parts(y: &Admittance, x: &PowerState, i: usize) -> (f64, f64) {
    let mut a = 0.0;
    let mut b = 0.0;
    for j in 0..y.dim() {
        let (g, bb) = (y.g[(i, j)], y.b[(i, j)]);
        if g == 0.0 && bb == 0.0 {
            continue;
        }
        let (e, f) = (x[e_index(j)], x[f_index(j)]);
        a += g * e - bb * f;
        b += g * f + bb * e;
    }
    (a, b)
}

/// Net real power injected at bus position `i`, p.u.
pub fn injected_power(y: &Admittance, x: &PowerState, i: usize) -> f64 {
    let (a, b) = current_parts(y, x, i);
    x[e_index(i)] * a + x[f_index(i)] * b
}

/// Net reactive power injected at bus position `i`, p.u.
pub fn injected_reactive_power(y: &Admittance, x: &PowerState, i: usize) -> f64 {
    let (a, b) = current_parts(y, x, i);
    x[f_index(i)] * a - x[e_index(i)] * b
}

/// Rectangular-coordinate Newton–Raphson. The slack bus is held at
/// `vset ∠ 0`; PV buses enforce `e² + f² = vset²`.
pub fn solve_power_flow(
    model: &IgesModel,
    y: &Admittance,
    schedule: &BusSchedule,
    options: PowerFlowOptions,
) -> Result<PowerState> {
    let n = model.n_buses();
    for (context, v) in [("bus demand", &schedule.pd), ("bus reactive demand", &schedule.qd), ("bus generation", &schedule.pg)] {
        if v.len() != n {
            return Err(Error::Dimension {
                context,
                expected: n,
                actual: v.len(),
            });
        }
    }
    let slack = model
        .buses
        .iter()
        .position(|b| b.kind == BusKind::Slack)
        .ok_or_else(|| Error::InvalidModel("power flow needs a slack bus".into()))?;
    let base = model.constants.base_mva;
    let p_spec: Vec<f64> = (0..n).map(|i| (schedule.pg[i] - schedule.pd[i]) / base).collect();
    let q_spec: Vec<f64> = (0..n).map(|i| -schedule.qd[i] / base).collect();

    let mut x = DVector::zeros(2 * n);
    for (i, bus) in model.buses.iter().enumerate() {
        x[e_index(i)] = match bus.kind {
            BusKind::Pq => 1.0,
            _ => bus.vset,
        };
    }
    // unknown k <-> bus position, skipping the slack
    let unknowns: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = 2 * unknowns.len();
    let mut last = f64::INFINITY;

    for iter in 0..=options.max_iterations {
        let parts: Vec<(f64, f64)> = (0..n).map(|i| current_parts(y, &x, i)).collect();
        let mut mismatch = DVector::zeros(m);
        for (k, &i) in unknowns.iter().enumerate() {
            let (a, b) = parts[i];
            let (e, f) = (x[e_index(i)], x[f_index(i)]);
            mismatch[2 * k] = p_spec[i] - (e * a + f * b);
            mismatch[2 * k + 1] = match model.buses[i].kind {
                BusKind::Pv => model.buses[i].vset.powi(2) - (e * e + f * f),
                _ => q_spec[i] - (f * a - e * b),
            };
        }
        last = mismatch.amax();
        if !last.is_finite() {
            break;
        }
        if last < options.tolerance {
            return Ok(x);
        }
        if iter == options.max_iterations {
            break;
        }

        let mut jac = DMatrix::zeros(m, m);
        for (r, &i) in unknowns.iter().enumerate() {
            let (a, b) = parts[i];
            let (ei, fi) = (x[e_index(i)], x[f_index(i)]);
            let pv = model.buses[i].kind == BusKind::Pv;
            for (c, &j) in unknowns.iter().enumerate() {
                let (g, bb) = (y.g[(i, j)], y.b[(i, j)]);
                let (dp_de, dp_df, dq_de, dq_df) = if i == j {
                    (
                        a + ei * g + fi * bb,
                        b - ei * bb + fi * g,
                        -b + fi * g - ei * bb,
                        a - fi * bb - ei * g,
                    )
                } else {
                    (
                        ei * g + fi * bb,
                        -ei * bb + fi * g,
                        fi * g - ei * bb,
                        -fi * bb - ei * g,
                    )
                };
                jac[(2 * r, 2 * c)] = dp_de;
                jac[(2 * r, 2 * c + 1)] = dp_df;
                if pv {
                    if i == j {
                        jac[(2 * r + 1, 2 * c)] = 2.0 * ei;
                        jac[(2 * r + 1, 2 * c + 1)] = 2.0 * fi;
                    }
                } else {
                    jac[(2 * r + 1, 2 * c)] = dq_de;
                    jac[(2 * r + 1, 2 * c + 1)] = dq_df;
                }
            }
        }
        let dx = jac.lu().solve(&mismatch).ok_or(Error::Singular {
            what: "power-flow Jacobian",
            rcond: 0.0,
        })?;
        for (k, &i) in unknowns.iter().enumerate() {
            x[e_index(i)] += dx[2 * k];
            x[f_index(i)] += dx[2 * k + 1];
        }
    }
    Err(Error::PowerFlowDiverged {
        iterations: options.max_iterations,
        mismatch: last,
    })
}
