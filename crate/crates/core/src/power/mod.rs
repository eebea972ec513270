//! Power-system side: Holt prediction, PMU measurement model and an AC
//! power-flow solver used to generate ground truth.
//!
//! Power states are interleaved rectangular voltages `[e_1, f_1, e_2, f_2, ...]`
//! in per unit, ordered by bus position in [`IgesModel::buses`](crate::net::IgesModel).

pub(crate) mod flow;
mod holt;
mod pmu;

use nalgebra::DVector;

pub use flow::{injected_power, injected_reactive_power, solve_power_flow, BusSchedule, PowerFlowOptions};
pub use holt::{holt_predict, HoltState};
pub use pmu::{build_measurement_model, PmuChannel, PmuMeasurementModel};

/// `[e_1, f_1, ..., e_n, f_n]`, per unit.
pub type PowerState = DVector<f64>;

pub fn e_index(bus_pos: usize) -> usize {
    2 * bus_pos
}

pub fn f_index(bus_pos: usize) -> usize {
    2 * bus_pos + 1
}

/// Column names `e_<bus>`, `f_<bus>`.
pub fn power_state_names(model: &crate::net::IgesModel) -> Vec<String> {
    model
        .buses
        .iter()
        .flat_map(|b| [format!("e_{}", b.id), format!("f_{}", b.id)])
        .collect()
}
