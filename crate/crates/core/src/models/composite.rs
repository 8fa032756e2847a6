//! Composite (doubled) networks for Born-rule models.

use std::collections::{BTreeMap, BTreeSet};

use crate::network::{Core, EdgeId, TensorNetwork};
use crate::tensor::copy_tensor;

use super::{DecoheredBM, ModelError};

/// Composite network of `net` and its conjugate.
///
/// Node `v` becomes `ket:v` and `bra:v` (conjugated core). Each visible edge
/// `e` not in `traced` is merged through a copy node `merge:e` exposing `e`;
/// traced visible edges become a single hidden edge `trace:e` joining the
/// two copies. Hidden edges become `ket:e` and `bra:e`, except decohered
/// ones, whose four half-edges `ket:e@v`, `bra:e@v` meet at a fourth-order
/// copy node `dec:e`. The visible order is the network's order without the
/// traced edges.
pub fn composite_network(
    net: &TensorNetwork,
    decohered: &BTreeSet<EdgeId>,
    traced: &BTreeSet<EdgeId>,
) -> Result<TensorNetwork, ModelError> {
    net.validate()?;
    let graph = net.graph();
    let mut dims: BTreeMap<EdgeId, usize> = BTreeMap::new();
    let mut cores = BTreeMap::new();
    let rename = |side: &str, node: &str, e: &str| -> String {
        let edge = &graph.edges[e];
        if edge.is_visible() {
            if traced.contains(e) {
                format!("trace:{e}")
            } else {
                format!("{side}:{e}")
            }
        } else if decohered.contains(e) {
            format!("{side}:{e}@{node}")
        } else {
            format!("{side}:{e}")
        }
    };
    for (node, core) in net.cores() {
        for (side, tensor) in [("ket", core.tensor.clone()), ("bra", core.tensor.conjugate())] {
            let edges: Vec<EdgeId> = core.edges.iter().map(|e| rename(side, node, e)).collect();
            for (new, old) in edges.iter().zip(&core.edges) {
                dims.insert(new.clone(), graph.edges[old].dim);
            }
            cores.insert(format!("{side}:{node}"), Core { edges, tensor });
        }
    }
    for e in graph.edges.values() {
        if e.is_visible() && !traced.contains(&e.id) {
            dims.insert(e.id.clone(), e.dim);
            cores.insert(
                format!("merge:{}", e.id),
                Core {
                    edges: vec![format!("ket:{}", e.id), format!("bra:{}", e.id), e.id.clone()],
                    tensor: copy_tensor(3, e.dim)?,
                },
            );
        } else if e.is_hidden() && decohered.contains(&e.id) {
            let edges = ["ket", "bra"]
                .iter()
                .flat_map(|side| e.endpoints.iter().map(move |v| format!("{side}:{}@{v}", e.id)))
                .collect();
            cores.insert(
                format!("dec:{}", e.id),
                Core {
                    edges,
                    tensor: copy_tensor(4, e.dim)?,
                },
            );
        }
    }
    let order = net
        .visible_order()
        .iter()
        .filter(|e| !traced.contains(*e))
        .cloned()
        .collect();
    let out = TensorNetwork::from_parts(cores, dims, Some(order));
    out.validate()?;
    Ok(out)
}

/// Composite network of a (possibly partially) decohered Born machine.
pub fn build_composite(m: &DecoheredBM) -> Result<TensorNetwork, ModelError> {
    composite_network(m.net(), m.decohered(), &BTreeSet::new())
}
