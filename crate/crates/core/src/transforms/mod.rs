//! Conversions between model families and the checks that accompany them:
//! fully decohered Born machines and UGMs, LPS and DBMs, latent readout of
//! hidden edges, and conditional independence across decohered cut sets.

pub mod witness;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::models::{BornMachine, DecoheredBM, Distribution, Lps, Model, ModelError, Ugm};
use crate::network::{readout_name, Core, EdgeId, NetworkError, NodeId, TensorNetwork};
use crate::tensor::{next_index, DenseTensor, TensorError, C64};

/// Conditional-independence residuals above this fail the check.
pub const CI_TOLERANCE: f64 = 1e-10;

/// Readout outcomes with probability at or below this are skipped.
pub const ZERO_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("fully-decohered model required: every hidden edge must be decohered")]
    NotFullyDecohered,
    #[error("edge {0} is not decohered")]
    NotDecohered(EdgeId),
    #[error("edge {0} is decohered; a coherent hidden edge is required")]
    AlreadyDecohered(EdgeId),
    #[error("phase table for node {node}: {detail}")]
    Phase { node: NodeId, detail: String },
    #[error("assignment maps edge {edge} to node {node}, which is not an endpoint")]
    NotIncident { edge: EdgeId, node: NodeId },
    #[error("assignment does not cover decohered edge {0}")]
    Unassigned(EdgeId),
    #[error("assignment names edge {0}, which is not decohered")]
    ExtraAssignment(EdgeId),
}

impl From<NetworkError> for TransformError {
    fn from(e: NetworkError) -> Self {
        TransformError::Model(e.into())
    }
}

impl From<TensorError> for TransformError {
    fn from(e: TensorError) -> Self {
        TransformError::Model(e.into())
    }
}

/// Per-node real phase tables in turns: the complex phase of an entry is
/// `exp(2πi·θ)`. Nodes without a table get zero phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseAssignment {
    pub tables: BTreeMap<NodeId, Vec<f64>>,
}

impl PhaseAssignment {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Independent uniform phases in `[0, 1)` for every core entry.
    pub fn random(net: &TensorNetwork, rng: &mut impl Rng) -> Self {
        let tables = net
            .cores()
            .iter()
            .map(|(id, c)| (id.clone(), (0..c.tensor.len()).map(|_| rng.random::<f64>()).collect()))
            .collect();
        Self { tables }
    }
}

/// The UGM on the same graph whose cores are the
/// squared moduli of the Born machine cores.
pub fn fdbm_to_ugm(m: &DecoheredBM) -> Result<Ugm, TransformError> {
    if !m.is_fully_decohered() {
        return Err(TransformError::NotFullyDecohered);
    }
    let net = m.net().map_cores(|_, t| t.map(|z| C64::new(z.norm_sqr(), 0.0)));
    Ok(Ugm::new(net)?)
}

/// Fully decohered Born machine with cores `exp(2πi·θ)·√φ`.
pub fn ugm_to_fdbm(m: &Ugm, phases: &PhaseAssignment) -> Result<DecoheredBM, TransformError> {
    for (node, table) in &phases.tables {
        let core = m.net().core(node)?;
        if table.len() != core.tensor.len() {
            return Err(TransformError::Phase {
                node: node.clone(),
                detail: format!("{} entries, expected {}", table.len(), core.tensor.len()),
            });
        }
        if table.iter().any(|x| !x.is_finite()) {
            return Err(TransformError::Phase {
                node: node.clone(),
                detail: "non-finite phase".into(),
            });
        }
    }
    let (mut cores, dims, order) = m.net().clone().into_parts();
    for (node, core) in cores.iter_mut() {
        let data = core
            .tensor
            .data()
            .iter()
            .enumerate()
            .map(|(k, phi)| {
                let magnitude = phi.re.sqrt();
                match phases.tables.get(node) {
                    Some(t) => C64::from_polar(magnitude, TAU * t[k]),
                    None => C64::new(magnitude, 0.0),
                }
            })
            .collect();
        core.tensor = DenseTensor::new(core.tensor.shape().to_vec(), data).expect("same shape");
    }
    let bm = BornMachine::new(TensorNetwork::from_parts(cores, dims, Some(order)))?;
    Ok(DecoheredBM::fully_decohered(bm))
}

/// Exposes the latent variable `Z@edge` of a decohered edge. The decoherence
/// node becomes a fifth-order copy tensor; summing out `Z@edge` gives back
/// the original distribution.
pub fn readout_edge(m: &DecoheredBM, edge: &str) -> Result<DecoheredBM, TransformError> {
    if !m.decohered().contains(edge) {
        return Err(TransformError::NotDecohered(edge.to_string()));
    }
    let promoted = m.net().promote_hidden_edge(edge)?;
    let mut decohered = m.decohered().clone();
    decohered.remove(edge);
    Ok(DecoheredBM::new(BornMachine::new(promoted)?, decohered)?)
}

/// Reads out several decohered edges in turn.
pub fn readout_edges(m: &DecoheredBM, edges: &BTreeSet<EdgeId>) -> Result<DecoheredBM, TransformError> {
    edges.iter().try_fold(m.clone(), |acc, e| readout_edge(&acc, e))
}

/// Outcome of observing a coherent hidden edge of a Born machine.
#[derive(Debug, Clone)]
pub struct ForcedReadout {
    /// Born machine with the copy tensor inserted on the edge.
    pub readout: BornMachine,
    /// Distribution after summing out the readout variable.
    pub distribution: Distribution,
    pub original: Distribution,
    pub total_variation: f64,
    pub changed: bool,
}

/// Inserts a copy-tensor readout on a hidden edge of a Born machine and
/// sums the new variable out again.
pub fn force_readout_bm(m: &BornMachine, edge: &str) -> Result<ForcedReadout, TransformError> {
    let readout = BornMachine::new(m.net().promote_hidden_edge(edge)?)?;
    let z = readout_name(edge);
    let distribution = Model::Born(readout.clone()).marginalize(&[z.as_str()])?;
    let original = m.distribution()?;
    let total_variation = original.total_variation(&distribution)?;
    Ok(ForcedReadout {
        readout,
        distribution,
        original,
        total_variation,
        changed: total_variation > ZERO_PROBABILITY,
    })
}

/// Residual of `X_A ⟂ X_B | Z = z` for one readout outcome.
#[derive(Debug, Clone, Serialize)]
pub struct SliceResidual {
    /// Zero-based outcome of each readout variable.
    pub z: Vec<usize>,
    pub probability: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CondIndependenceReport {
    pub cut_set: bool,
    pub conditioning: Vec<EdgeId>,
    pub side_a: Vec<String>,
    pub side_b: Vec<String>,
    pub slices: Vec<SliceResidual>,
    pub max_residual: f64,
    /// Smallest normalized entry of the readout distribution before clamping.
    pub raw_min: f64,
}

impl CondIndependenceReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.cut_set && self.max_residual <= tol
    }
}

/// Visible variables split by the components left after removing `cut`:
/// side A holds the component of the first node, side B everything else.
fn partition(net: &TensorNetwork, cut: &BTreeSet<EdgeId>) -> Result<(bool, Vec<String>, Vec<String>), TransformError> {
    let is_cut = net.graph().is_cut_set(cut)?;
    let comps = net.graph().components_without(cut);
    let first = &comps[0];
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for v in net.visible_order() {
        if first.contains(net.owner(v)?) {
            a.push(v.clone());
        } else {
            b.push(v.clone());
        }
    }
    Ok((is_cut, a, b))
}

/// `max |P(a,b) − P(a)P(b)|` of a distribution over exactly `a ∪ b`.
fn independence_residual(d: &Distribution, a: &[String], b: &[String]) -> Result<f64, TransformError> {
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    let a_ref: Vec<&str> = a.iter().map(String::as_str).collect();
    let b_ref: Vec<&str> = b.iter().map(String::as_str).collect();
    let order: Vec<&str> = a_ref.iter().chain(&b_ref).copied().collect();
    let joint = d.reorder(&order)?;
    let pa = joint.marginalize(&b_ref)?;
    let pb = joint.marginalize(&a_ref)?;
    let nb = pb.table().len();
    Ok(joint
        .table()
        .iter()
        .enumerate()
        .map(|(k, p)| (p - pa.table()[k / nb] * pb.table()[k % nb]).abs())
        .fold(0.0, f64::max))
}

/// Reads out the decohered edges `cut` and checks, for every readout
/// outcome of positive probability, that the two sides of the cut are
/// conditionally independent.
pub fn check_cond_independence(
    m: &DecoheredBM,
    cut: &BTreeSet<EdgeId>,
) -> Result<CondIndependenceReport, TransformError> {
    if let Some(e) = cut.iter().find(|e| !m.decohered().contains(*e)) {
        return Err(TransformError::NotDecohered(e.clone()));
    }
    let (cut_set, side_a, side_b) = partition(m.net(), cut)?;
    let joint = readout_edges(m, cut)?.distribution()?;
    let z_names: Vec<String> = cut.iter().map(|e| readout_name(e)).collect();
    let z_dims: Vec<usize> = cut.iter().map(|e| m.net().graph().edges[e].dim).collect();
    let x_names: Vec<&str> = side_a.iter().chain(&side_b).map(String::as_str).collect();
    let pz = joint.marginalize(&x_names)?;
    let mut slices = Vec::new();
    let mut z = vec![0usize; z_dims.len()];
    loop {
        let probability = pz.prob(&z)?;
        if probability > ZERO_PROBABILITY {
            let assignment: Vec<(&str, usize)> = z_names.iter().map(String::as_str).zip(z.iter().copied()).collect();
            let conditional = joint.condition(&assignment)?;
            let residual = independence_residual(&conditional, &side_a, &side_b)?;
            slices.push(SliceResidual {
                z: z.clone(),
                probability,
                residual,
            });
        }
        if !next_index(&mut z, &z_dims) {
            break;
        }
    }
    let max_residual = slices.iter().map(|s| s.residual).fold(0.0, f64::max);
    Ok(CondIndependenceReport {
        cut_set,
        conditioning: cut.iter().cloned().collect(),
        side_a,
        side_b,
        slices,
        max_residual,
        raw_min: joint.raw_min(),
    })
}

/// For coherent hidden edges `cut` of a Born machine: the largest gap
/// between the Born distribution and `Σ_z P̃(z) P̃(a|z) P̃(b|z)`, where `P̃`
/// is the distribution after observing the edges. A zero gap would mean the
/// Born distribution factorizes through latent variables on the cut.
pub fn coherent_cut_residual(m: &BornMachine, cut: &BTreeSet<EdgeId>) -> Result<f64, TransformError> {
    let plain = DecoheredBM::new(m.clone(), BTreeSet::new())?;
    let full = DecoheredBM::new(m.clone(), cut.clone())?;
    let (_, side_a, side_b) = partition(m.net(), cut)?;
    let joint = readout_edges(&full, cut)?.distribution()?;
    let z_names: Vec<String> = cut.iter().map(|e| readout_name(e)).collect();
    let z_dims: Vec<usize> = cut.iter().map(|e| m.net().graph().edges[e].dim).collect();
    let a_ref: Vec<&str> = side_a.iter().map(String::as_str).collect();
    let b_ref: Vec<&str> = side_b.iter().map(String::as_str).collect();
    let x_names: Vec<&str> = a_ref.iter().chain(&b_ref).copied().collect();
    let pz = joint.marginalize(&x_names)?;
    let target = plain.distribution()?.reorder(&x_names)?;
    let mut mixture = vec![0.0; target.table().len()];
    let mut z = vec![0usize; z_dims.len()];
    loop {
        let w = pz.prob(&z)?;
        if w > ZERO_PROBABILITY {
            let assignment: Vec<(&str, usize)> = z_names.iter().map(String::as_str).zip(z.iter().copied()).collect();
            let cond = joint.condition(&assignment)?.reorder(&x_names)?;
            let pa = cond.marginalize(&b_ref)?;
            let pb = cond.marginalize(&a_ref)?;
            let nb = pb.table().len();
            for (k, slot) in mixture.iter_mut().enumerate() {
                *slot += w * pa.table()[k / nb] * pb.table()[k % nb];
            }
        }
        if !next_index(&mut z, &z_dims) {
            break;
        }
    }
    Ok(target
        .table()
        .iter()
        .zip(&mixture)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max))
}

/// Name of the node closing a purification edge in [`lps_to_dbm`].
pub fn purification_node(node: &str) -> String {
    format!("purif@{node}")
}

/// Attaches each purification edge to a new node carrying the all-ones
/// vector and decoheres it. Cores are unchanged.
pub fn lps_to_dbm(m: &Lps) -> Result<DecoheredBM, TransformError> {
    let (mut cores, dims, mut order) = m.net().clone().into_parts();
    let owners: Vec<(NodeId, EdgeId)> = m
        .net()
        .cores()
        .keys()
        .map(|v| (v.clone(), m.purification_of(v).expect("one per node").clone()))
        .collect();
    for (v, p) in &owners {
        let node = purification_node(v);
        if cores.contains_key(&node) {
            return Err(NetworkError::Duplicate(node).into());
        }
        cores.insert(
            node,
            Core {
                edges: vec![p.clone()],
                tensor: DenseTensor::ones(dims[p])?,
            },
        );
    }
    order.retain(|e| !m.purification().contains(e));
    let bm = BornMachine::new(TensorNetwork::from_parts(cores, dims, Some(order)))?;
    Ok(DecoheredBM::new(bm, m.purification().clone())?)
}

/// Map from decohered edges to one of their endpoints.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeToNodeAssignment {
    pub map: BTreeMap<EdgeId, NodeId>,
}

impl EdgeToNodeAssignment {
    /// Each decohered edge goes to its endpoint with the smaller node id.
    pub fn default_for(m: &DecoheredBM) -> Self {
        let map = m
            .decohered()
            .iter()
            .map(|e| {
                let ends = &m.net().graph().edges[e].endpoints;
                (e.clone(), ends.iter().min().expect("hidden edge").clone())
            })
            .collect();
        Self { map }
    }
}

/// Name of the purification edge added at `node` by [`dbm_to_lps`].
pub fn purification_edge(node: &str) -> String {
    format!("p@{node}")
}

/// LPS on the same graph: each decohered edge is moved onto the node chosen
/// by `f`, which gains a purification edge whose dimension is the product of
/// the assigned bond dimensions (1 if none). Decohered edges become ordinary
/// hidden edges.
pub fn dbm_to_lps(m: &DecoheredBM, f: Option<&EdgeToNodeAssignment>) -> Result<Lps, TransformError> {
    let default;
    let f = match f {
        Some(f) => f,
        None => {
            default = EdgeToNodeAssignment::default_for(m);
            &default
        }
    };
    for e in m.decohered() {
        let node = f.map.get(e).ok_or_else(|| TransformError::Unassigned(e.clone()))?;
        if !m.net().graph().edges[e].endpoints.contains(node) {
            return Err(TransformError::NotIncident {
                edge: e.clone(),
                node: node.clone(),
            });
        }
    }
    if let Some(e) = f.map.keys().find(|e| !m.decohered().contains(*e)) {
        return Err(TransformError::ExtraAssignment(e.clone()));
    }
    let (mut cores, mut dims, mut order) = m.net().clone().into_parts();
    let mut purification = BTreeSet::new();
    for (v, core) in cores.iter_mut() {
        let p = purification_edge(v);
        if dims.contains_key(&p) {
            return Err(NetworkError::Duplicate(p).into());
        }
        let assigned: Vec<usize> = core
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| f.map.get(*e) == Some(v))
            .map(|(i, _)| i)
            .collect();
        let shape = core.tensor.shape().to_vec();
        let pdim: usize = assigned.iter().map(|&i| shape[i]).product();
        let mut data = vec![C64::new(0.0, 0.0); core.tensor.len() * pdim];
        let mut idx = vec![0usize; shape.len()];
        for (k, a) in core.tensor.data().iter().enumerate() {
            let q = assigned.iter().fold(0, |acc, &i| acc * shape[i] + idx[i]);
            data[k * pdim + q] = *a;
            next_index(&mut idx, &shape);
        }
        let mut new_shape = shape;
        new_shape.push(pdim);
        core.tensor = DenseTensor::new(new_shape, data)?;
        core.edges.push(p.clone());
        dims.insert(p.clone(), pdim);
        order.push(p.clone());
        purification.insert(p);
    }
    Ok(Lps::new(TensorNetwork::from_parts(cores, dims, Some(order)), purification)?)
}
