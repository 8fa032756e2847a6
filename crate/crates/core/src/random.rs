//! Seeded generators for random networks and models, used by the
//! verification suites and tests.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::models::{BornMachine, DecoheredBM, Lps, Ugm, Variable};
use crate::network::{Core, TensorNetwork};
use crate::tensor::{DenseTensor, C64};

pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministically mixes a base seed with stream identifiers.
pub fn derive_seed(base: u64, stream: &[u64]) -> u64 {
    // splitmix64 finalizer over the running state
    let mut z = base ^ 0x9E37_79B9_7F4A_7C15;
    for &s in stream {
        z = z.wrapping_add(s.wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

pub fn complex_normal(rng: &mut impl Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn complex_tensor(rng: &mut impl Rng, shape: Vec<usize>) -> DenseTensor {
    let n = shape.iter().product();
    DenseTensor::new(shape, (0..n).map(|_| complex_normal(rng)).collect()).expect("valid shape")
}

/// Entries uniform in `[0, 1)`; with probability `zero_prob` an entry is 0.
pub fn nonneg_tensor(rng: &mut impl Rng, shape: Vec<usize>, zero_prob: f64) -> DenseTensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            if rng.random::<f64>() < zero_prob {
                C64::new(0.0, 0.0)
            } else {
                C64::new(rng.random_range(0.05..1.0), 0.0)
            }
        })
        .collect();
    DenseTensor::new(shape, data).expect("valid shape")
}

/// Shape parameters for random graphs.
#[derive(Debug, Clone, Copy)]
pub struct GraphSpec {
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub max_bond: usize,
    pub max_visible_dim: usize,
    /// Probability of each non-tree edge being present.
    pub extra_edge_prob: f64,
    /// Probability that a node carries a visible edge.
    pub visible_prob: f64,
}

impl Default for GraphSpec {
    fn default() -> Self {
        Self {
            min_nodes: 1,
            max_nodes: 5,
            max_bond: 3,
            max_visible_dim: 3,
            extra_edge_prob: 0.25,
            visible_prob: 0.8,
        }
    }
}

/// A random connected graph, returned as per-node incident edge lists and
/// edge dimensions. Node `n{i}`, visible edge `x{i}`, hidden edge `h{i}_{j}`.
pub fn random_structure(
    rng: &mut impl Rng,
    spec: &GraphSpec,
) -> (BTreeMap<String, Vec<String>>, BTreeMap<String, usize>) {
    let n = rng.random_range(spec.min_nodes..=spec.max_nodes);
    let mut incident: BTreeMap<String, Vec<String>> =
        (0..n).map(|i| (format!("n{i}"), Vec::new())).collect();
    let mut dims = BTreeMap::new();
    let mut pairs = BTreeSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        pairs.insert((j, i));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !pairs.contains(&(i, j)) && rng.random::<f64>() < spec.extra_edge_prob {
                pairs.insert((i, j));
            }
        }
    }
    for (i, j) in pairs {
        let id = format!("h{i}_{j}");
        dims.insert(id.clone(), rng.random_range(1..=spec.max_bond));
        incident.get_mut(&format!("n{i}")).unwrap().push(id.clone());
        incident.get_mut(&format!("n{j}")).unwrap().push(id);
    }
    let mut has_visible = false;
    for i in 0..n {
        if rng.random::<f64>() < spec.visible_prob {
            let id = format!("x{i}");
            dims.insert(id.clone(), rng.random_range(2..=spec.max_visible_dim.max(2)));
            incident.get_mut(&format!("n{i}")).unwrap().push(id);
            has_visible = true;
        }
    }
    if !has_visible {
        let i = rng.random_range(0..n);
        dims.insert(format!("x{i}"), rng.random_range(2..=spec.max_visible_dim.max(2)));
        incident.get_mut(&format!("n{i}")).unwrap().push(format!("x{i}"));
    }
    for edges in incident.values_mut() {
        edges.shuffle(rng);
    }
    (incident, dims)
}

/// Builds a network on a given structure, drawing each core with `fill`.
pub fn fill_network(
    incident: &BTreeMap<String, Vec<String>>,
    dims: &BTreeMap<String, usize>,
    mut fill: impl FnMut(Vec<usize>) -> DenseTensor,
) -> TensorNetwork {
    let cores = incident
        .iter()
        .map(|(node, edges)| {
            let shape = edges.iter().map(|e| dims[e]).collect();
            (
                node.clone(),
                Core {
                    edges: edges.clone(),
                    tensor: fill(shape),
                },
            )
        })
        .collect();
    TensorNetwork::from_parts(cores, dims.clone(), None)
}

pub fn complex_network(rng: &mut impl Rng, spec: &GraphSpec) -> TensorNetwork {
    let (inc, dims) = random_structure(rng, spec);
    fill_network(&inc, &dims, |s| complex_tensor(rng, s))
}

pub fn nonneg_network(rng: &mut impl Rng, spec: &GraphSpec) -> TensorNetwork {
    let (inc, dims) = random_structure(rng, spec);
    fill_network(&inc, &dims, |s| nonneg_tensor(rng, s, 0.1))
}

pub fn born_machine(rng: &mut impl Rng, spec: &GraphSpec) -> BornMachine {
    BornMachine::new(complex_network(rng, spec)).expect("random complex network is non-zero")
}

pub fn ugm(rng: &mut impl Rng, spec: &GraphSpec) -> Ugm {
    loop {
        if let Ok(m) = Ugm::new(nonneg_network(rng, spec)) {
            if m.distribution().is_ok() {
                return m;
            }
        }
    }
}

/// Random DBM; each hidden edge is decohered with probability `p`.
pub fn dbm(rng: &mut impl Rng, spec: &GraphSpec, p: f64) -> DecoheredBM {
    let bm = born_machine(rng, spec);
    let decohered = bm
        .net()
        .graph()
        .hidden_edges()
        .filter(|_| rng.random::<f64>() < p)
        .map(|e| e.id.clone())
        .collect();
    DecoheredBM::new(bm, decohered).expect("hidden edges")
}

pub fn fully_decohered(rng: &mut impl Rng, spec: &GraphSpec) -> DecoheredBM {
    dbm(rng, spec, 1.1)
}

/// Random LPS: every node has one visible edge `x{i}` and one purification
/// edge `p{i}`.
pub fn lps(rng: &mut impl Rng, spec: &GraphSpec) -> Lps {
    let all_visible = GraphSpec {
        visible_prob: 1.1,
        ..*spec
    };
    let (mut inc, mut dims) = random_structure(rng, &all_visible);
    let mut purification = BTreeSet::new();
    for (node, edges) in inc.iter_mut() {
        let i = &node[1..];
        let p = format!("p{i}");
        dims.insert(p.clone(), rng.random_range(1..=spec.max_bond));
        let at = rng.random_range(0..=edges.len());
        edges.insert(at, p.clone());
        purification.insert(p);
    }
    let net = fill_network(&inc, &dims, |s| complex_tensor(rng, s));
    Lps::new(net, purification).expect("valid random LPS")
}

/// Random complex matrix with condition number below `max_cond`.
pub fn invertible_matrix(rng: &mut impl Rng, d: usize, max_cond: f64) -> DenseTensor {
    loop {
        let m = complex_tensor(rng, vec![d, d]);
        if crate::network::condition_number(&m).is_ok_and(|c| c < max_cond) {
            return m;
        }
    }
}

/// Random UGM in clique form over variables `v0..` with pairwise and unary
/// cliques; every variable is covered by at least one clique.
pub fn clique_ugm(rng: &mut impl Rng, n_vars: usize, n_cliques: usize, max_dim: usize) -> Ugm {
    let vars: Vec<Variable> = (0..n_vars)
        .map(|i| Variable::new(format!("v{i}"), rng.random_range(2..=max_dim.max(2))))
        .collect();
    let mut cliques = Vec::new();
    for i in 0..n_vars.max(n_cliques) {
        let a = i % n_vars;
        let scope: Vec<usize> = if n_vars > 1 && rng.random::<f64>() < 0.7 {
            let mut b = rng.random_range(0..n_vars - 1);
            if b >= a {
                b += 1;
            }
            vec![a, b]
        } else {
            vec![a]
        };
        let shape = scope.iter().map(|&j| vars[j].dim).collect();
        cliques.push((
            scope.iter().map(|&j| vars[j].name.clone()).collect(),
            nonneg_tensor(rng, shape, 0.0),
        ));
    }
    Ugm::from_cliques(&vars, &cliques).expect("valid random cliques")
}

/// Random DBM together with a decohered cut set: the hidden edges crossing
/// a random proper node subset are decohered, and every other hidden edge
/// is decohered with probability `p`.
pub fn dbm_with_cut(rng: &mut impl Rng, spec: &GraphSpec, p: f64) -> (DecoheredBM, BTreeSet<String>) {
    let spec = GraphSpec {
        min_nodes: spec.min_nodes.max(2),
        ..*spec
    };
    let bm = born_machine(rng, &spec);
    let nodes: Vec<&String> = bm.net().graph().nodes.iter().collect();
    let side: BTreeSet<&String> = loop {
        let s: BTreeSet<&String> = nodes.iter().copied().filter(|_| rng.random::<f64>() < 0.5).collect();
        if !s.is_empty() && s.len() < nodes.len() {
            break s;
        }
    };
    let mut cut = BTreeSet::new();
    let mut decohered = BTreeSet::new();
    for e in bm.net().graph().hidden_edges() {
        let crossing = side.contains(&e.endpoints[0]) != side.contains(&e.endpoints[1]);
        if crossing {
            cut.insert(e.id.clone());
        }
        if crossing || rng.random::<f64>() < p {
            decohered.insert(e.id.clone());
        }
    }
    (DecoheredBM::new(bm, decohered).expect("hidden edges"), cut)
}
