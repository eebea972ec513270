use super::{IgesModel, NodeKind, PipeSegment};
use crate::error::{Error, Result};

/// Default segmentation threshold, m.
pub const DEFAULT_MAX_SEGMENT_LENGTH: f64 = 20_000.0;

/// Folds compressors into pipe-end density ratios and splits long pipes.
///
/// * A compressor fed directly by a source turns its outlet node into a
///   source whose density is the upstream density times the ratio; the
///   upstream source disappears.
/// * Any other compressor must discharge into a virtual node feeding exactly
///   one pipe. That node is dropped and the pipe starts at the compressor
///   inlet, with the ratio applied at that end.
/// * Pipes longer than `max_segment_length` become `ceil(L / max)` equal
///   segments joined by fresh virtual nodes numbered above the current
///   maximum id. Segments keep the orientation of their parent pipe.
pub fn preprocess(model: &IgesModel, max_segment_length: f64) -> Result<IgesModel> {
    if !(max_segment_length > 0.0 && max_segment_length.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "max_segment_length must be positive, got {max_segment_length}"
        )));
    }
    let mut m = model.clone();
    fold_compressors(&mut m)?;
    split_long_pipes(&mut m, max_segment_length);
    Ok(m)
}

fn fold_compressors(m: &mut IgesModel) -> Result<()> {
    let compressors = std::mem::take(&mut m.compressors);
    for c in compressors {
        let inlet = m
            .node(c.from)
            .cloned()
            .ok_or_else(|| Error::DanglingReference {
                element: format!("compressor {}->{}", c.from, c.to),
                kind: "gas node",
                id: c.from,
            })?;
        let outlet = m
            .node(c.to)
            .cloned()
            .ok_or_else(|| Error::DanglingReference {
                element: format!("compressor {}->{}", c.from, c.to),
                kind: "gas node",
                id: c.to,
            })?;

        if inlet.kind == NodeKind::Source {
            if !m.incident_pipes(inlet.id).is_empty() {
                return Err(Error::InvalidModel(format!(
                    "source {} feeds compressor {}->{} and also pipes; cannot fold",
                    inlet.id, c.from, c.to
                )));
            }
            if outlet.kind == NodeKind::Source || outlet.base_load > 0.0 || outlet.load_profile.is_some() {
                return Err(Error::InvalidModel(format!(
                    "compressor {}->{}: outlet node must be an unloaded non-source node",
                    c.from, c.to
                )));
            }
            let rho = inlet.const_density.expect("source has density") * c.ratio;
            let idx = m.node_index(outlet.id).expect("outlet exists");
            let node = &mut m.gas_nodes[idx];
            node.kind = NodeKind::Source;
            node.const_density = Some(rho);
            node.base_load = 0.0;
            node.load_profile = None;
            remove_node(m, inlet.id);
            continue;
        }

        let attached = m.incident_pipes(outlet.id);
        if outlet.kind != NodeKind::Virtual || attached.len() != 1 || m.gtu_for_sink(outlet.id).is_some() {
            return Err(Error::InvalidModel(format!(
                "compressor {}->{}: outlet must be a virtual node feeding exactly one pipe",
                c.from, c.to
            )));
        }
        let (k, outlet_is_from) = attached[0];
        let pipe = &mut m.pipes[k];
        if outlet_is_from {
            pipe.from = inlet.id;
            pipe.ratio_from *= c.ratio;
        } else {
            pipe.to = inlet.id;
            pipe.ratio_to *= c.ratio;
        }
        if pipe.from == pipe.to {
            return Err(Error::InvalidModel(format!(
                "compressor {}->{} folds pipe #{k} into a self loop",
                c.from, c.to
            )));
        }
        if pipe.from > pipe.to {
            std::mem::swap(&mut pipe.from, &mut pipe.to);
            std::mem::swap(&mut pipe.ratio_from, &mut pipe.ratio_to);
        }
        remove_node(m, outlet.id);
    }
    Ok(())
}

fn remove_node(m: &mut IgesModel, id: usize) {
    m.gas_nodes.retain(|n| n.id != id);
}

fn split_long_pipes(m: &mut IgesModel, max_len: f64) {
    let mut next_id = m.max_node_id() + 1;
    let mut pipes = Vec::with_capacity(m.pipes.len());
    let mut new_nodes = Vec::new();
    for p in m.pipes.drain(..) {
        let n = segment_count(p.length, max_len);
        if n == 1 {
            pipes.push(p);
            continue;
        }
        let seg_len = p.length / n as f64;
        let mut prev = p.from;
        for s in 0..n {
            let to = if s + 1 == n {
                p.to
            } else {
                let v = next_id;
                next_id += 1;
                new_nodes.push(v);
                v
            };
            pipes.push(PipeSegment {
                from: prev,
                to,
                length: seg_len,
                ratio_from: if s == 0 { p.ratio_from } else { 1.0 },
                ratio_to: if s + 1 == n { p.ratio_to } else { 1.0 },
                ..p.clone()
            });
            prev = to;
        }
    }
    m.pipes = pipes;
    for id in new_nodes {
        m.gas_nodes.push(super::GasNode {
            id,
            kind: NodeKind::Virtual,
            const_density: None,
            base_load: 0.0,
            load_profile: None,
        });
    }
    m.gas_nodes.sort_by_key(|n| n.id);
}

fn segment_count(length: f64, max_len: f64) -> usize {
    // tolerate round-off so an already split segment is never split again
    let ratio = length / max_len;
    let n = (ratio - 1e-9).ceil();
    n.max(1.0) as usize
}
