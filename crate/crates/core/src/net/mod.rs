//! Network description of the coupled gas / power system.
//!
//! [`IgesModel`] is the canonical in-memory form every other module consumes.
//! It is produced by [`load_model`], normalized by [`preprocess`] and checked
//! by [`validate_model`]. After preprocessing the model is treated as
//! immutable and is shared freely between threads.

mod file;
mod preprocess;
mod validate;
mod ybus;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use file::{load_model, load_model_str, save_model, to_toml_string};
pub use preprocess::{preprocess, DEFAULT_MAX_SEGMENT_LENGTH};
pub use validate::{validate_model, ValidationReport};
pub use ybus::{build_ybus, Admittance};

/// Pascal per bar.
pub const PA_PER_BAR: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Source,
    Sink,
    Virtual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GasNode {
    pub id: usize,
    pub kind: NodeKind,
    /// Fixed density in kg/m³, present iff `kind == Source`.
    pub const_density: Option<f64>,
    /// Nominal gas offtake in kg/s (sinks only).
    pub base_load: f64,
    /// Name of the daily profile scaling `base_load`.
    pub load_profile: Option<String>,
}

impl GasNode {
    /// A sink that never carries a load: its balance row has a zero right-hand side.
    pub fn is_junction(&self) -> bool {
        self.kind == NodeKind::Sink && self.base_load == 0.0 && self.load_profile.is_none()
    }
}

/// One pipe (or pipe segment). Flow states are measured in the
/// `from -> to` direction at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct PipeSegment {
    pub from: usize,
    pub to: usize,
    /// m
    pub length: f64,
    /// m
    pub diameter: f64,
    /// m²
    pub area: f64,
    pub friction: f64,
    /// |v̄| in m/s used to linearize friction. `None` until calibrated.
    pub avg_velocity: Option<f64>,
    /// Density ratio of a compressor sitting at the `from` end.
    pub ratio_from: f64,
    /// Density ratio of a compressor sitting at the `to` end.
    pub ratio_to: f64,
}

/// A compressor station, kept only until [`preprocess`] folds it away.
#[derive(Debug, Clone, PartialEq)]
pub struct Compressor {
    pub from: usize,
    pub to: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Pq,
    Pv,
    Slack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// MW
    pub pd: f64,
    /// Mvar
    pub qd: f64,
    /// Scheduled generation, MW.
    pub pg: f64,
    /// Voltage magnitude set point for PV / slack buses, p.u.
    pub vset: f64,
    /// Shunt conductance, MW at 1 p.u.
    pub gs: f64,
    /// Shunt susceptance, Mvar at 1 p.u.
    pub bs: f64,
}

/// π-model branch with an off-nominal tap on the `from` side.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Series conductance, p.u.
    pub g: f64,
    /// Series susceptance, p.u.
    pub b: f64,
    /// Total line charging susceptance, p.u.
    pub charging: f64,
    pub tap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtuLink {
    pub bus: usize,
    pub gas_sink: usize,
    /// Energy conversion coefficient, MW·s/kg.
    pub eta: f64,
}

/// Piecewise-linear daily multiplier, periodic over 24 h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    /// `(hour, multiplier)` breakpoints, hours ascending in `[0, 24]`.
    pub points: Vec<(f64, f64)>,
}

impl LoadProfile {
    pub fn flat() -> Self {
        LoadProfile {
            points: vec![(0.0, 1.0), (24.0, 1.0)],
        }
    }

    pub fn at_hour(&self, hour: f64) -> f64 {
        let h = hour.rem_euclid(24.0);
        let pts = &self.points;
        if pts.is_empty() {
            return 1.0;
        }
        if h <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let (h0, v0) = w[0];
            let (h1, v1) = w[1];
            if h <= h1 {
                if h1 - h0 <= 0.0 {
                    return v1;
                }
                return v0 + (v1 - v0) * (h - h0) / (h1 - h0);
            }
        }
        pts[pts.len() - 1].1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constants {
    /// Isothermal sound speed, m/s.
    pub c_s: f64,
    /// Time step, s.
    pub dt: f64,
    pub gamma_default: f64,
    /// MVA
    pub base_mva: f64,
    /// Overrides the per-segment |v̄| when set.
    pub avg_velocity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IgesModel {
    /// Sorted by id.
    pub gas_nodes: Vec<GasNode>,
    pub pipes: Vec<PipeSegment>,
    pub compressors: Vec<Compressor>,
    /// Sorted by id.
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub gtus: Vec<GtuLink>,
    pub profiles: BTreeMap<String, LoadProfile>,
    pub constants: Constants,
}

impl IgesModel {
    pub fn node(&self, id: usize) -> Option<&GasNode> {
        self.gas_nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.gas_nodes[i])
    }

    pub fn node_index(&self, id: usize) -> Option<usize> {
        self.gas_nodes.binary_search_by_key(&id, |n| n.id).ok()
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.binary_search_by_key(&id, |b| b.id).ok()
    }

    pub fn bus(&self, id: usize) -> Option<&Bus> {
        self.bus_index(id).map(|i| &self.buses[i])
    }

    pub fn n_nodes(&self) -> usize {
        self.gas_nodes.len()
    }

    pub fn n_pipes(&self) -> usize {
        self.pipes.len()
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.gas_nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn gas_state_dim(&self) -> usize {
        self.n_nodes() + 2 * self.n_pipes()
    }

    pub fn power_state_dim(&self) -> usize {
        2 * self.n_buses()
    }

    pub fn state_dim(&self) -> usize {
        self.gas_state_dim() + self.power_state_dim()
    }

    pub fn slack_bus(&self) -> Option<usize> {
        self.buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
    }

    pub fn gtu_for_sink(&self, sink: usize) -> Option<&GtuLink> {
        self.gtus.iter().find(|g| g.gas_sink == sink)
    }

    pub fn profile(&self, name: &str) -> Option<&LoadProfile> {
        self.profiles.get(name)
    }

    /// Pipes incident to node `id`, as `(pipe index, node is the from end)`.
    pub fn incident_pipes(&self, id: usize) -> Vec<(usize, bool)> {
        self.pipes
            .iter()
            .enumerate()
            .filter_map(|(k, p)| {
                if p.from == id {
                    Some((k, true))
                } else if p.to == id {
                    Some((k, false))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn max_node_id(&self) -> usize {
        self.gas_nodes.iter().map(|n| n.id).max().unwrap_or(0)
    }
}

pub fn pressure_bar_to_density(p_bar: f64, c_s: f64) -> f64 {
    p_bar * PA_PER_BAR / (c_s * c_s)
}

pub fn density_to_pressure_bar(rho: f64, c_s: f64) -> f64 {
    rho * c_s * c_s / PA_PER_BAR
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_interpolates_and_wraps() {
        let p = LoadProfile {
            points: vec![(0.0, 1.0), (12.0, 2.0), (24.0, 1.0)],
        };
        assert_eq!(p.at_hour(0.0), 1.0);
        assert_eq!(p.at_hour(6.0), 1.5);
        assert_eq!(p.at_hour(12.0), 2.0);
        assert_eq!(p.at_hour(30.0), 1.5);
        assert_eq!(LoadProfile::flat().at_hour(17.3), 1.0);
    }
}
