use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use super::{BusKind, IgesModel, NodeKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub n_nodes: usize,
    pub n_pipes: usize,
    pub n_sources: usize,
    pub n_sinks: usize,
    pub n_virtual: usize,
    pub n_buses: usize,
    /// n_N + 2 n_P
    pub gas_states: usize,
    /// 2 n_P PDE rows plus one boundary row per node.
    pub gas_equations: usize,
}

/// Checks a preprocessed model. Every violated assertion is collected and
/// reported together.
pub fn validate_model(model: &IgesModel) -> Result<ValidationReport> {
    let mut problems = Vec::new();

    let n_sources = model.count_kind(NodeKind::Source);
    let n_sinks = model.count_kind(NodeKind::Sink);
    let n_virtual = model.count_kind(NodeKind::Virtual);
    let n_nodes = model.n_nodes();
    let n_pipes = model.n_pipes();

    if n_sources + n_sinks + n_virtual != n_nodes {
        problems.push(format!(
            "node classes do not add up: {n_sources} + {n_sinks} + {n_virtual} != {n_nodes}"
        ));
    }
    let gas_states = n_nodes + 2 * n_pipes;
    let gas_equations = 2 * n_pipes + n_sources + n_sinks + n_virtual;
    if gas_states != gas_equations {
        problems.push(format!(
            "{gas_equations} gas equations for {gas_states} gas states"
        ));
    }
    if n_sources == 0 {
        problems.push("gas network has no source node".into());
    }
    if !model.compressors.is_empty() {
        problems.push(format!(
            "{} compressor(s) left unfolded; run preprocess first",
            model.compressors.len()
        ));
    }

    let mut degree: HashMap<usize, usize> = HashMap::new();
    for p in &model.pipes {
        *degree.entry(p.from).or_default() += 1;
        *degree.entry(p.to).or_default() += 1;
    }
    for n in &model.gas_nodes {
        let d = degree.get(&n.id).copied().unwrap_or(0);
        if d == 0 {
            problems.push(format!("gas node {} is isolated", n.id));
        }
        match n.kind {
            NodeKind::Source if n.const_density.is_none_or(|r| r <= 0.0) => {
                problems.push(format!("source node {} lacks a positive density", n.id));
            }
            NodeKind::Virtual if d != 2 => {
                problems.push(format!(
                    "virtual node {} joins {d} segments, expected 2",
                    n.id
                ));
            }
            _ => {}
        }
    }

    let gas_edges: Vec<_> = model.pipes.iter().map(|p| (p.from, p.to)).collect();
    let gas_ids: Vec<_> = model.gas_nodes.iter().map(|n| n.id).collect();
    if !gas_ids.is_empty() && !connected(&gas_ids, &gas_edges) {
        problems.push("gas network is not connected".into());
    }

    if !model.buses.is_empty() {
        let bus_ids: Vec<_> = model.buses.iter().map(|b| b.id).collect();
        let edges: Vec<_> = model.branches.iter().map(|b| (b.from, b.to)).collect();
        if !connected(&bus_ids, &edges) {
            problems.push("power network is not connected".into());
        }
        let slack = model.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slack != 1 {
            problems.push(format!("{slack} slack buses, expected exactly 1"));
        }
    }

    let mut gtu_sinks = BTreeSet::new();
    for g in &model.gtus {
        match model.node(g.gas_sink) {
            Some(n) if n.kind == NodeKind::Sink => {}
            Some(n) => problems.push(format!(
                "gtu at bus {} draws from node {} which is a {:?} node, not a sink",
                g.bus, n.id, n.kind
            )),
            None => problems.push(format!(
                "gtu at bus {} draws from missing node {}",
                g.bus, g.gas_sink
            )),
        }
        match model.bus(g.bus) {
            None => problems.push(format!("gtu references missing bus {}", g.bus)),
            // the gas draw is read back from the bus injection, so nothing else may sit there
            Some(b) if b.pd != 0.0 || b.qd != 0.0 => problems.push(format!(
                "gtu bus {} also carries demand; injected power would not equal gtu output",
                g.bus
            )),
            Some(b) if b.kind == BusKind::Slack => problems.push(format!(
                "gtu bus {} is the slack bus; its output is not scheduled",
                g.bus
            )),
            Some(_) => {}
        }
        if !gtu_sinks.insert(g.gas_sink) {
            problems.push(format!("gas sink {} feeds more than one gtu", g.gas_sink));
        }
    }

    if problems.is_empty() {
        Ok(ValidationReport {
            n_nodes,
            n_pipes,
            n_sources,
            n_sinks,
            n_virtual,
            n_buses: model.n_buses(),
            gas_states,
            gas_equations,
        })
    } else {
        Err(Error::Validation(problems))
    }
}

fn connected(ids: &[usize], edges: &[(usize, usize)]) -> bool {
    let pos: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in edges {
        if let (Some(&i), Some(&j)) = (pos.get(&a), pos.get(&b)) {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            parent[ri] = rj;
        }
    }
    let root = find(&mut parent, 0);
    (0..ids.len()).all(|i| find(&mut parent, i) == root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::load_model_str;

    const TWO_NODE: &str = r#"
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
    fn two_node_counts() {
        let r = validate_model(&load_model_str(TWO_NODE).unwrap()).unwrap();
        assert_eq!(r.gas_states, 4);
        assert_eq!(r.gas_equations, 4);
        assert_eq!((r.n_sources, r.n_sinks, r.n_virtual), (1, 1, 0));
    }

    #[test]
    fn disconnected_and_sourceless_reported_together() {
        let text = TWO_NODE.replace("pressure_bar = 41.48", "kind = \"sink\"")
            + "\n[[gas_nodes]]\nid = 3\nload = 1.0\n";
        let err = validate_model(&load_model_str(&text).unwrap()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("no source"), "{msg}");
        assert!(msg.contains("isolated"), "{msg}");
        assert!(msg.contains("not connected"), "{msg}");
    }

    #[test]
    fn gtu_on_source_rejected() {
        let text = format!(
            "{TWO_NODE}\n[[buses]]\nid = 1\nkind = \"slack\"\n[[gtus]]\nbus = 1\ngas_sink = 1\neta = 20.0\n"
        );
        let err = validate_model(&load_model_str(&text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("not a sink"), "{err}");
    }
}
