use std::collections::BTreeMap;

use crate::tensor::{contract_labeled, next_index, DenseTensor, C64};

use super::{NetworkError, TensorNetwork};

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // smaller root wins so labels stay deterministic
        if ra < rb {
            self.0[rb] = ra;
        } else {
            self.0[ra] = rb;
        }
    }
}

/// Evaluates a validated network.
///
/// Copy-tensor cores are never materialized: all edges incident to a copy
/// tensor are merged into a single label, which the labeled contraction
/// treats as a hyperedge.
pub(super) fn evaluate(net: &TensorNetwork, budget: usize) -> Result<DenseTensor, NetworkError> {
    let edge_index: BTreeMap<&str, usize> = net
        .graph
        .edges
        .keys()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    let dims: Vec<usize> = net.graph.edges.values().map(|e| e.dim).collect();
    let mut uf = UnionFind((0..dims.len()).collect());

    let mut operands = Vec::new();
    let mut dense_nodes = Vec::new();
    for core in net.cores.values() {
        let labels: Vec<usize> = core.edges.iter().map(|e| edge_index[e.as_str()]).collect();
        if core.tensor.is_copy_tensor() {
            for w in labels.windows(2) {
                uf.union(w[0], w[1]);
            }
        } else {
            dense_nodes.push((core, labels));
        }
    }
    let mut referenced = vec![false; dims.len()];
    for (core, labels) in dense_nodes {
        let labels: Vec<usize> = labels.into_iter().map(|l| uf.find(l)).collect();
        for &l in &labels {
            referenced[l] = true;
        }
        operands.push((core.tensor.clone(), labels));
    }
    // classes touched only by copy tensors behave like an all-ones vector
    let mut classes: Vec<usize> = (0..dims.len()).map(|l| uf.find(l)).collect();
    classes.sort_unstable();
    classes.dedup();
    for &class in &classes {
        if !referenced[class] {
            operands.push((DenseTensor::ones(dims[class])?, vec![class]));
        }
    }

    let out_labels: Vec<usize> = net
        .graph
        .visible_order
        .iter()
        .map(|e| uf.find(edge_index[e.as_str()]))
        .collect();
    let mut unique = Vec::new();
    for &l in &out_labels {
        if !unique.contains(&l) {
            unique.push(l);
        }
    }
    let reduced = contract_labeled(operands, &unique, budget)?;
    if unique.len() == out_labels.len() {
        return Ok(reduced);
    }
    // several visible edges on one copy class: expand onto the diagonal
    let shape: Vec<usize> = net
        .graph
        .visible_order
        .iter()
        .map(|e| net.graph.edges[e].dim)
        .collect();
    let pos: Vec<usize> = out_labels
        .iter()
        .map(|l| unique.iter().position(|u| u == l).unwrap())
        .collect();
    let mut out = DenseTensor::zeros(shape.clone())?;
    let mut data = vec![C64::new(0.0, 0.0); out.len()];
    let mut idx = vec![0usize; shape.len()];
    let mut src = vec![0usize; unique.len()];
    let mut k = 0;
    loop {
        let mut consistent = true;
        let mut set = vec![false; unique.len()];
        for (i, &p) in pos.iter().enumerate() {
            if set[p] && src[p] != idx[i] {
                consistent = false;
                break;
            }
            src[p] = idx[i];
            set[p] = true;
        }
        if consistent {
            data[k] = reduced.get(&src)?;
        }
        k += 1;
        if !next_index(&mut idx, &shape) {
            break;
        }
    }
    out = DenseTensor::new(shape, data)?;
    Ok(out)
}
