//! Joint measurement layout `z = H_I x` over the full state
//! `[power e/f per bus | gas densities | segment flow pairs]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::GasLayout;
use crate::net::{Admittance, IgesModel, NodeKind, PA_PER_BAR};
use crate::power::{build_measurement_model, power_state_names, PmuChannel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelClass {
    Voltage,
    Current,
    Pressure,
    Flow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Pmu(PmuChannel),
    /// Node pressure in bar.
    Pressure(usize),
    /// Gas offtake at a sink in kg/s.
    Load(usize),
}

impl Channel {
    pub fn name(&self) -> String {
        match self {
            Channel::Pmu(c) => c.name(),
            Channel::Pressure(n) => format!("p_{n}"),
            Channel::Load(n) => format!("load_{n}"),
        }
    }

    pub fn class(&self) -> ChannelClass {
        match self {
            Channel::Pmu(c) if c.is_voltage() => ChannelClass::Voltage,
            Channel::Pmu(_) => ChannelClass::Current,
            Channel::Pressure(_) => ChannelClass::Pressure,
            Channel::Load(_) => ChannelClass::Flow,
        }
    }

    pub fn is_power(&self) -> bool {
        matches!(self, Channel::Pmu(_))
    }
}

/// Which quantities are metered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeterPlacement {
    pub pmu_buses: Vec<usize>,
    pub measured_branches: Vec<(usize, usize)>,
    /// Gas nodes with a pressure meter; sinks also get a load meter.
    pub gas_meters: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementLayout {
    pub channels: Vec<Channel>,
    /// Rows over the full joint state.
    pub h: DMatrix<f64>,
    /// Number of power states (columns before the gas block).
    pub n_power_states: usize,
}

impl MeasurementLayout {
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.channels.iter().map(Channel::name).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name() == name)
    }

    /// Row of the load channel at `node`, if metered.
    pub fn load_row(&self, node: usize) -> Option<usize> {
        self.channels.iter().position(|c| *c == Channel::Load(node))
    }
}

pub fn build_measurement_layout(
    model: &IgesModel,
    y: &Admittance,
    gas: &GasLayout,
    meters: &MeterPlacement,
) -> Result<MeasurementLayout> {
    let pmu = build_measurement_model(model, y, &meters.pmu_buses, &meters.measured_branches)?;
    let n_power = model.power_state_dim();
    let n = n_power + gas.dim();
    let scale = model.constants.c_s * model.constants.c_s / PA_PER_BAR;

    let mut pressure_rows = Vec::new();
    let mut load_rows = Vec::new();
    for &id in &meters.gas_meters {
        let pos = gas.node_position(id).ok_or(Error::DanglingReference {
            element: "gas meter".into(),
            kind: "gas node",
            id,
        })?;
        match model.gas_nodes[pos].kind {
            NodeKind::Virtual => {
                return Err(Error::InvalidArgument(format!(
                    "gas meter on virtual node {id}"
                )))
            }
            NodeKind::Source => pressure_rows.push((id, pos)),
            NodeKind::Sink => {
                pressure_rows.push((id, pos));
                load_rows.push((id, pos));
            }
        }
    }

    let m = pmu.n_channels() + pressure_rows.len() + load_rows.len();
    let mut h = DMatrix::zeros(m, n);
    h.view_mut((0, 0), pmu.h.shape()).copy_from(&pmu.h);
    let mut channels: Vec<Channel> = pmu.channels.iter().copied().map(Channel::Pmu).collect();
    let mut row = pmu.n_channels();
    for &(id, pos) in &pressure_rows {
        h[(row, n_power + gas.density(pos))] = scale;
        channels.push(Channel::Pressure(id));
        row += 1;
    }
    for &(id, pos) in &load_rows {
        for (col, c) in gas.balance_row(pos) {
            h[(row, n_power + col)] += c;
        }
        channels.push(Channel::Load(id));
        row += 1;
    }
    Ok(MeasurementLayout {
        channels,
        h,
        n_power_states: n_power,
    })
}

/// Names of the full joint state.
pub fn joint_state_names(model: &IgesModel, gas: &GasLayout) -> Vec<String> {
    let mut names = power_state_names(model);
    names.extend(gas.state_names());
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::build_ybus;
    use nalgebra::DVector;

    #[test]
    fn gas_rows() {
        let m = crate::power::flow::tests::two_bus_model(0.0);
        let y = build_ybus(&m);
        let gas = GasLayout::from_model(&m);
        let meters = MeterPlacement {
            pmu_buses: vec![1],
            measured_branches: vec![],
            gas_meters: vec![1, 2],
        };
        let l = build_measurement_layout(&m, &y, &gas, &meters).unwrap();
        assert_eq!(l.names(), vec!["e_1", "f_1", "inr_1", "ini_1", "p_1", "p_2", "load_2"]);
        let x = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0, 30.0, 29.0, 5.0, 4.5]);
        let z = &l.h * &x;
        assert!((z[4] - 30.0 * 340.0 * 340.0 / 1e5).abs() < 1e-12);
        assert_eq!(z[6], 4.5);
        assert_eq!(l.channels[6].class(), ChannelClass::Flow);
    }

    #[test]
    fn virtual_meter_rejected() {
        let mut m = crate::power::flow::tests::two_bus_model(0.0);
        m = crate::net::preprocess(&{
            m.pipes[0].length = 30_000.0;
            m
        }, 20_000.0)
        .unwrap();
        let y = build_ybus(&m);
        let gas = GasLayout::from_model(&m);
        let meters = MeterPlacement {
            gas_meters: vec![3],
            ..Default::default()
        };
        assert!(build_measurement_layout(&m, &y, &gas, &meters).is_err());
    }
}
