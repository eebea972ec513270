//! TOML model file: `[constants]`, `[[gas_nodes]]`, `[[pipes]]`,
//! `[[compressors]]`, `[[buses]]`, `[[branches]]`, `[[gtus]]`, `[profiles.*]`.
//!
//! Pressures are given in bar, flows in kg/s, lengths in m. Source nodes may
//! give `density` (kg/m³) instead of `pressure_bar`; the writer always emits
//! `density` so that a save/load cycle is exact.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    pressure_bar_to_density, Branch, Bus, BusKind, Compressor, Constants, GasNode, GtuLink,
    IgesModel, LoadProfile, NodeKind, PipeSegment,
};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    constants: ConstantsFile,
    gas_nodes: Vec<GasNodeFile>,
    pipes: Vec<PipeFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    compressors: Vec<CompressorFile>,
    #[serde(default)]
    buses: Vec<BusFile>,
    #[serde(default)]
    branches: Vec<BranchFile>,
    #[serde(default)]
    gtus: Vec<GtuFile>,
    #[serde(default)]
    profiles: BTreeMap<String, LoadProfile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsFile {
    c_s: f64,
    dt: f64,
    #[serde(default = "default_gamma")]
    gamma_default: f64,
    #[serde(default = "default_base_mva")]
    base_mva: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    avg_velocity: Option<f64>,
}

fn default_gamma() -> f64 {
    0.003
}

fn default_base_mva() -> f64 {
    100.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GasNodeFile {
    id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<NodeKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pressure_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    load: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    profile: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipeFile {
    from: usize,
    to: usize,
    length: f64,
    diameter: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    friction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    avg_velocity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratio_from: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratio_to: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompressorFile {
    from: usize,
    to: usize,
    ratio: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusFile {
    id: usize,
    #[serde(default = "default_bus_kind")]
    kind: BusKind,
    #[serde(default)]
    pd: f64,
    #[serde(default)]
    qd: f64,
    #[serde(default)]
    pg: f64,
    #[serde(default = "one")]
    vset: f64,
    #[serde(default)]
    gs: f64,
    #[serde(default)]
    bs: f64,
}

fn default_bus_kind() -> BusKind {
    BusKind::Pq
}

fn one() -> f64 {
    1.0
}

/// Either `r`/`x` (series impedance) or `g`/`b` (series admittance).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchFile {
    from: usize,
    to: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(default)]
    charging: f64,
    #[serde(default = "one")]
    tap: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GtuFile {
    bus: usize,
    gas_sink: usize,
    eta: f64,
}

pub fn load_model(path: impl AsRef<Path>) -> Result<IgesModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn load_model_str(text: &str) -> Result<IgesModel> {
    parse(text)
}

pub fn save_model(model: &IgesModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_toml_string(model)?).map_err(|e| Error::io(path, e))
}

pub fn to_toml_string(model: &IgesModel) -> Result<String> {
    let file = ModelFile {
        constants: ConstantsFile {
            c_s: model.constants.c_s,
            dt: model.constants.dt,
            gamma_default: model.constants.gamma_default,
            base_mva: model.constants.base_mva,
            avg_velocity: model.constants.avg_velocity,
        },
        gas_nodes: model
            .gas_nodes
            .iter()
            .map(|n| GasNodeFile {
                id: n.id,
                kind: Some(n.kind),
                pressure_bar: None,
                density: n.const_density,
                load: (n.kind == NodeKind::Sink).then_some(n.base_load),
                profile: n.load_profile.clone(),
            })
            .collect(),
        pipes: model
            .pipes
            .iter()
            .map(|p| PipeFile {
                from: p.from,
                to: p.to,
                length: p.length,
                diameter: p.diameter,
                area: Some(p.area),
                friction: Some(p.friction),
                avg_velocity: p.avg_velocity,
                ratio_from: Some(p.ratio_from),
                ratio_to: Some(p.ratio_to),
            })
            .collect(),
        compressors: model
            .compressors
            .iter()
            .map(|c| CompressorFile {
                from: c.from,
                to: c.to,
                ratio: c.ratio,
            })
            .collect(),
        buses: model
            .buses
            .iter()
            .map(|b| BusFile {
                id: b.id,
                kind: b.kind,
                pd: b.pd,
                qd: b.qd,
                pg: b.pg,
                vset: b.vset,
                gs: b.gs,
                bs: b.bs,
            })
            .collect(),
        branches: model
            .branches
            .iter()
            .map(|br| BranchFile {
                from: br.from,
                to: br.to,
                r: None,
                x: None,
                g: Some(br.g),
                b: Some(br.b),
                charging: br.charging,
                tap: br.tap,
            })
            .collect(),
        gtus: model
            .gtus
            .iter()
            .map(|g| GtuFile {
                bus: g.bus,
                gas_sink: g.gas_sink,
                eta: g.eta,
            })
            .collect(),
        profiles: model.profiles.clone(),
    };
    toml::to_string(&file).map_err(|e| Error::InvalidModel(format!("serialization failed: {e}")))
}

fn parse(text: &str) -> Result<IgesModel> {
    let file: ModelFile = toml::from_str(text).map_err(|e| Error::Parse {
        path: "<string>".into(),
        message: e.to_string(),
    })?;
    build(file)
}

fn positive(element: impl Fn() -> String, field: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositive {
            element: element(),
            field,
            value,
        })
    }
}

fn build(file: ModelFile) -> Result<IgesModel> {
    let c = &file.constants;
    let constants = Constants {
        c_s: positive(|| "constants".into(), "c_s", c.c_s)?,
        dt: positive(|| "constants".into(), "dt", c.dt)?,
        gamma_default: positive(|| "constants".into(), "gamma_default", c.gamma_default)?,
        base_mva: positive(|| "constants".into(), "base_mva", c.base_mva)?,
        avg_velocity: match c.avg_velocity {
            Some(v) => Some(positive(|| "constants".into(), "avg_velocity", v)?),
            None => None,
        },
    };

    let mut profiles = file.profiles;
    for (name, p) in &profiles {
        if p.points.is_empty() || p.points.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::InvalidModel(format!(
                "profile '{name}' needs ascending hour breakpoints"
            )));
        }
    }
    profiles.entry("flat".into()).or_insert_with(LoadProfile::flat);

    let mut seen = HashSet::new();
    let mut gas_nodes = Vec::with_capacity(file.gas_nodes.len());
    for n in file.gas_nodes {
        if !seen.insert(n.id) {
            return Err(Error::InvalidModel(format!("duplicate gas node id {}", n.id)));
        }
        let element = || format!("gas node {}", n.id);
        let density = match (n.density, n.pressure_bar) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidModel(format!(
                    "gas node {}: give either density or pressure_bar, not both",
                    n.id
                )))
            }
            (Some(d), None) => Some(d),
            (None, Some(p)) => Some(pressure_bar_to_density(p, constants.c_s)),
            (None, None) => None,
        };
        let kind = match n.kind {
            Some(k) => k,
            None if density.is_some() => NodeKind::Source,
            None if n.load.is_some() || n.profile.is_some() => NodeKind::Sink,
            None => {
                return Err(Error::InvalidModel(format!(
                    "gas node {} cannot be classified: it has no load, no source density and \
                     no declared kind",
                    n.id
                )))
            }
        };
        let node = match kind {
            NodeKind::Source => {
                let d = density.ok_or_else(|| {
                    Error::InvalidModel(format!("source node {} needs a density", n.id))
                })?;
                if n.load.is_some() || n.profile.is_some() {
                    return Err(Error::InvalidModel(format!(
                        "source node {} cannot carry a load",
                        n.id
                    )));
                }
                GasNode {
                    id: n.id,
                    kind,
                    const_density: Some(positive(element, "density", d)?),
                    base_load: 0.0,
                    load_profile: None,
                }
            }
            NodeKind::Sink => {
                if density.is_some() {
                    return Err(Error::InvalidModel(format!(
                        "sink node {} cannot have a fixed density",
                        n.id
                    )));
                }
                let load = n.load.unwrap_or(0.0);
                if !load.is_finite() || load < 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "sink node {}: load must be non-negative, got {load}",
                        n.id
                    )));
                }
                if let Some(p) = &n.profile {
                    if !profiles.contains_key(p) {
                        return Err(Error::InvalidModel(format!(
                            "sink node {} references unknown profile '{p}'",
                            n.id
                        )));
                    }
                }
                GasNode {
                    id: n.id,
                    kind,
                    const_density: None,
                    base_load: load,
                    load_profile: n.profile,
                }
            }
            NodeKind::Virtual => {
                if density.is_some() || n.load.is_some() || n.profile.is_some() {
                    return Err(Error::InvalidModel(format!(
                        "virtual node {} carries neither load nor density",
                        n.id
                    )));
                }
                GasNode {
                    id: n.id,
                    kind,
                    const_density: None,
                    base_load: 0.0,
                    load_profile: None,
                }
            }
        };
        gas_nodes.push(node);
    }
    gas_nodes.sort_by_key(|n| n.id);

    let node_exists = |id: usize| gas_nodes.binary_search_by_key(&id, |n| n.id).is_ok();

    let mut pipes = Vec::with_capacity(file.pipes.len());
    for (k, p) in file.pipes.into_iter().enumerate() {
        let element = || format!("pipe #{k} ({}-{})", p.from, p.to);
        for id in [p.from, p.to] {
            if !node_exists(id) {
                return Err(Error::DanglingReference {
                    element: element(),
                    kind: "gas node",
                    id,
                });
            }
        }
        if p.from == p.to {
            return Err(Error::InvalidModel(format!("{} is a self loop", element())));
        }
        let diameter = positive(element, "diameter", p.diameter)?;
        let area = match p.area {
            Some(a) => positive(element, "area", a)?,
            None => PI * diameter * diameter / 4.0,
        };
        let ratio_from = p.ratio_from.unwrap_or(1.0);
        let ratio_to = p.ratio_to.unwrap_or(1.0);
        for (field, r) in [("ratio_from", ratio_from), ("ratio_to", ratio_to)] {
            if !(r >= 1.0 && r.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "{}: {field} must be >= 1, got {r}",
                    element()
                )));
            }
        }
        let mut seg = PipeSegment {
            from: p.from,
            to: p.to,
            length: positive(element, "length", p.length)?,
            diameter,
            area,
            friction: positive(element, "friction", p.friction.unwrap_or(constants.gamma_default))?,
            avg_velocity: match p.avg_velocity {
                Some(v) => Some(positive(element, "avg_velocity", v)?),
                None => None,
            },
            ratio_from,
            ratio_to,
        };
        // flow direction convention: small id -> big id
        if seg.from > seg.to {
            std::mem::swap(&mut seg.from, &mut seg.to);
            std::mem::swap(&mut seg.ratio_from, &mut seg.ratio_to);
        }
        pipes.push(seg);
    }

    let mut compressors = Vec::with_capacity(file.compressors.len());
    for c in file.compressors {
        let element = || format!("compressor {}->{}", c.from, c.to);
        for id in [c.from, c.to] {
            if !node_exists(id) {
                return Err(Error::DanglingReference {
                    element: element(),
                    kind: "gas node",
                    id,
                });
            }
        }
        if !(c.ratio >= 1.0 && c.ratio.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "{}: ratio must be >= 1, got {}",
                element(),
                c.ratio
            )));
        }
        compressors.push(Compressor {
            from: c.from,
            to: c.to,
            ratio: c.ratio,
        });
    }

    let mut bus_ids = HashSet::new();
    let mut buses = Vec::with_capacity(file.buses.len());
    for b in file.buses {
        if !bus_ids.insert(b.id) {
            return Err(Error::InvalidModel(format!("duplicate bus id {}", b.id)));
        }
        buses.push(Bus {
            id: b.id,
            kind: b.kind,
            pd: b.pd,
            qd: b.qd,
            pg: b.pg,
            vset: positive(|| format!("bus {}", b.id), "vset", b.vset)?,
            gs: b.gs,
            bs: b.bs,
        });
    }
    buses.sort_by_key(|b| b.id);
    if !buses.is_empty() && buses.iter().filter(|b| b.kind == BusKind::Slack).count() != 1 {
        return Err(Error::InvalidModel(
            "power network needs exactly one slack bus".into(),
        ));
    }

    let mut branches = Vec::with_capacity(file.branches.len());
    for (k, br) in file.branches.into_iter().enumerate() {
        let element = || format!("branch #{k} ({}-{})", br.from, br.to);
        for id in [br.from, br.to] {
            if !bus_ids.contains(&id) {
                return Err(Error::DanglingReference {
                    element: element(),
                    kind: "bus",
                    id,
                });
            }
        }
        let (g, b) = match (br.r, br.x, br.g, br.b) {
            (Some(r), Some(x), None, None) => {
                let z2 = r * r + x * x;
                if z2 <= 0.0 {
                    return Err(Error::InvalidModel(format!("{}: zero impedance", element())));
                }
                (r / z2, -x / z2)
            }
            (None, None, Some(g), Some(b)) => (g, b),
            _ => {
                return Err(Error::InvalidModel(format!(
                    "{}: give either r and x, or g and b",
                    element()
                )))
            }
        };
        branches.push(Branch {
            from: br.from,
            to: br.to,
            g,
            b,
            charging: br.charging,
            tap: positive(element, "tap", br.tap)?,
        });
    }

    let mut gtus = Vec::with_capacity(file.gtus.len());
    for g in file.gtus {
        let element = || format!("gtu at bus {}", g.bus);
        if !bus_ids.contains(&g.bus) {
            return Err(Error::DanglingReference {
                element: element(),
                kind: "bus",
                id: g.bus,
            });
        }
        if !node_exists(g.gas_sink) {
            return Err(Error::DanglingReference {
                element: element(),
                kind: "gas node",
                id: g.gas_sink,
            });
        }
        gtus.push(GtuLink {
            bus: g.bus,
            gas_sink: g.gas_sink,
            eta: positive(element, "eta", g.eta)?,
        });
    }

    Ok(IgesModel {
        gas_nodes,
        pipes,
        compressors,
        buses,
        branches,
        gtus,
        profiles,
        constants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
        [constants]
        c_s = 340.0
        dt = 600.0

        [[gas_nodes]]
        id = 1
        pressure_bar = 41.48

        [[gas_nodes]]
        id = 2
        load = 5.0

        [[pipes]]
        from = 1
        to = 2
        length = 10000.0
        diameter = 0.5
    "#;

    #[test]
    fn defaults_applied() {
        let m = load_model_str(SMALL).unwrap();
        assert_eq!(m.gas_nodes[0].kind, NodeKind::Source);
        assert_eq!(m.gas_nodes[1].kind, NodeKind::Sink);
        let p = &m.pipes[0];
        assert!((p.area - PI * 0.25 / 4.0).abs() < 1e-15);
        assert_eq!((p.ratio_from, p.ratio_to), (1.0, 1.0));
        assert_eq!(p.friction, 0.003);
    }

    #[test]
    fn dangling_node_rejected() {
        let text = SMALL.replace("to = 2", "to = 99");
        match load_model_str(&text) {
            Err(Error::DanglingReference { id: 99, .. }) => {}
            other => panic!("expected dangling reference, got {other:?}"),
        }
    }

    #[test]
    fn unclassifiable_node_rejected() {
        let text = format!("{SMALL}\n[[gas_nodes]]\nid = 3\n");
        let err = load_model_str(&text).unwrap_err();
        assert!(err.to_string().contains("cannot be classified"), "{err}");
    }

    #[test]
    fn non_positive_length_rejected() {
        let text = SMALL.replace("length = 10000.0", "length = -1.0");
        assert!(matches!(
            load_model_str(&text),
            Err(Error::NonPositive { field: "length", .. })
        ));
    }

    #[test]
    fn parse_error_mentions_location() {
        let err = load_model_str("[constants]\nc_s = \n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn reversed_pipe_is_normalized() {
        let text = SMALL.replace("from = 1\n        to = 2", "from = 2\n        to = 1\n        ratio_to = 1.2");
        let m = load_model_str(&text).unwrap();
        assert_eq!((m.pipes[0].from, m.pipes[0].to), (1, 2));
        assert_eq!(m.pipes[0].ratio_from, 1.2);
    }

    #[test]
    fn save_load_round_trip() {
        let m = load_model_str(SMALL).unwrap();
        let back = load_model_str(&to_toml_string(&m).unwrap()).unwrap();
        assert_eq!(m, back);
    }
}
