//! Gas-turbine coupling and the per-step gas boundary input.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gas::GasLayout;
use crate::net::{Admittance, GtuLink, IgesModel};
use crate::power::{injected_power, PowerState};

/// Right-hand side of the gas boundary rows: fixed source densities and
/// sink offtakes. Virtual-node rows are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryInput {
    /// kg/m³, one per source in node id order.
    pub source_densities: DVector<f64>,
    /// kg/s, one per sink in node id order.
    pub sink_loads: DVector<f64>,
}

impl BoundaryInput {
    /// Boundary part of 𝒰 in row order `[sources | sinks | virtual]`.
    pub fn boundary_rows(&self, n_virtual: usize) -> DVector<f64> {
        let ns = self.source_densities.len();
        let nl = self.sink_loads.len();
        let mut u = DVector::zeros(ns + nl + n_virtual);
        u.rows_mut(0, ns).copy_from(&self.source_densities);
        u.rows_mut(ns, nl).copy_from(&self.sink_loads);
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtuConversion {
    /// MW -> kg/s
    PowerToFlow,
    /// kg/s -> MW
    FlowToPower,
}

pub fn gtu_convert(link: &GtuLink, value: f64, direction: GtuConversion) -> f64 {
    match direction {
        GtuConversion::PowerToFlow => value / link.eta,
        GtuConversion::FlowToPower => value * link.eta,
    }
}

/// Gas drawn by a GTU whose output equals the net power injected at its bus.
pub fn gtu_flow_from_voltage(
    model: &IgesModel,
    y: &Admittance,
    link: &GtuLink,
    x: &PowerState,
) -> Result<f64> {
    let i = model.bus_index(link.bus).ok_or(Error::DanglingReference {
        element: format!("GTU at gas sink {}", link.gas_sink),
        kind: "bus",
        id: link.bus,
    })?;
    if x.len() != 2 * model.n_buses() {
        return Err(Error::Dimension {
            context: "power state",
            expected: 2 * model.n_buses(),
            actual: x.len(),
        });
    }
    let p_mw = injected_power(y, x, i) * model.constants.base_mva;
    Ok(gtu_convert(link, p_mw, GtuConversion::PowerToFlow))
}

/// How the load of each sink is predicted.
#[derive(Debug, Clone, PartialEq)]
pub enum SinkRole {
    /// Fed by a gas turbine; predicted from power-side voltages.
    Gtu(GtuLink),
    /// Predicted by smoothing its own load history.
    Forecast,
    /// Carries no load at all.
    Junction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingPlan {
    pub roles: Vec<SinkRole>,
}

impl CouplingPlan {
    pub fn new(model: &IgesModel, layout: &GasLayout) -> Self {
        let roles = layout
            .sinks
            .iter()
            .map(|&p| {
                let node = &model.gas_nodes[p];
                if let Some(link) = model.gtu_for_sink(node.id) {
                    SinkRole::Gtu(link.clone())
                } else if node.is_junction() {
                    SinkRole::Junction
                } else {
                    SinkRole::Forecast
                }
            })
            .collect();
        CouplingPlan { roles }
    }

    /// Sink loads for the next step. With `power_prediction` present GTU
    /// sinks follow the predicted voltages; otherwise they fall back to the
    /// smoothed gas load like every other sink.
    pub fn build_boundary_input(
        &self,
        model: &IgesModel,
        y: &Admittance,
        source_densities: &DVector<f64>,
        gas_load_prediction: &DVector<f64>,
        power_prediction: Option<&PowerState>,
    ) -> Result<BoundaryInput> {
        if gas_load_prediction.len() != self.roles.len() {
            return Err(Error::Dimension {
                context: "predicted sink loads",
                expected: self.roles.len(),
                actual: gas_load_prediction.len(),
            });
        }
        let mut loads = DVector::zeros(self.roles.len());
        for (k, role) in self.roles.iter().enumerate() {
            loads[k] = match (role, power_prediction) {
                (SinkRole::Junction, _) => 0.0,
                (SinkRole::Gtu(link), Some(x)) => gtu_flow_from_voltage(model, y, link, x)?,
                _ => gas_load_prediction[k],
            };
        }
        Ok(BoundaryInput {
            source_densities: source_densities.clone(),
            sink_loads: loads,
        })
    }
}
