//! The four probabilistic model families and their inference semantics.
//!
//! Every family reduces to a non-negative *inference network* whose visible
//! edges are the model's random variables:
//!
//! * a UGM is its own (dual-form) network;
//! * a Born machine, decohered or not, uses the composite network built from
//!   the underlying network and its conjugate;
//! * an LPS uses the composite network with each purification edge traced
//!   between the two copies.
//!
//! Marginalization caps a variable's edge with the all-ones vector and
//! conditioning caps it with a basis vector, after which the network is
//! contracted.

mod composite;
mod distribution;
pub mod io;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::network::{Core, EdgeId, NetworkError, TensorNetwork};
use crate::tensor::{copy_tensor, DenseTensor, TensorError};

pub use composite::{build_composite, composite_network};
pub use distribution::{Distribution, Variable};

/// Conditioning events with probability at or below this are rejected.
pub const ZERO_SUPPORT: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("core of node {0} has a negative or complex entry")]
    NotNonnegative(String),
    #[error("model evaluates to the zero tensor")]
    Degenerate,
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("duplicate variable {0}")]
    DuplicateVariable(String),
    #[error("outcome out of range: {0}")]
    OutcomeOutOfRange(String),
    #[error("conditioning on a zero-probability event: {0}")]
    UndefinedConditional(String),
    #[error("edge {0} is not a hidden edge")]
    NotHidden(String),
    #[error("invalid locally purified state: {0}")]
    InvalidLps(String),
    #[error("table has {actual} entries, expected {expected}")]
    TableSize { expected: usize, actual: usize },
    #[error("variables differ: {0}")]
    VariableMismatch(String),
    #[error("model file: {0}")]
    Format(String),
}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        ModelError::Network(e.into())
    }
}

/// Undirected graphical model in tensor-network (dual) form: nodes carry
/// clique potentials, variables are visible edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Ugm {
    net: TensorNetwork,
}

impl Ugm {
    pub fn new(net: TensorNetwork) -> Result<Self, ModelError> {
        net.validate()?;
        if let Some((id, _)) = net.cores().iter().find(|(_, c)| !c.tensor.is_nonnegative()) {
            return Err(ModelError::NotNonnegative(id.clone()));
        }
        Ok(Self { net })
    }

    /// Builds the dual network from clique potentials over named variables.
    /// Clique `i` becomes node `phi{i}`; each variable becomes a copy tensor
    /// node `var:{name}` joining its cliques and its visible edge.
    pub fn from_cliques(
        variables: &[Variable],
        cliques: &[(Vec<String>, DenseTensor)],
    ) -> Result<Self, ModelError> {
        let mut dims: BTreeMap<EdgeId, usize> = BTreeMap::new();
        let mut cores = BTreeMap::new();
        let mut members: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for v in variables {
            if members.insert(v.name.as_str(), Vec::new()).is_some() {
                return Err(ModelError::DuplicateVariable(v.name.clone()));
            }
            dims.insert(v.name.clone(), v.dim);
        }
        for (i, (scope, potential)) in cliques.iter().enumerate() {
            let node = format!("phi{i}");
            let mut edges = Vec::with_capacity(scope.len());
            for name in scope {
                let var = variables
                    .iter()
                    .find(|v| &v.name == name)
                    .ok_or_else(|| ModelError::UnknownVariable(name.clone()))?;
                let e = format!("{name}~{node}");
                dims.insert(e.clone(), var.dim);
                members.get_mut(name.as_str()).unwrap().push(e.clone());
                edges.push(e);
            }
            cores.insert(
                node,
                Core {
                    edges,
                    tensor: potential.clone(),
                },
            );
        }
        for v in variables {
            let mut edges = members[v.name.as_str()].clone();
            edges.push(v.name.clone());
            cores.insert(
                format!("var:{}", v.name),
                Core {
                    tensor: copy_tensor(edges.len(), v.dim)?,
                    edges,
                },
            );
        }
        let order = variables.iter().map(|v| v.name.clone()).collect();
        Ugm::new(TensorNetwork::from_parts(cores, dims, Some(order)))
    }

    pub fn net(&self) -> &TensorNetwork {
        &self.net
    }

    pub fn distribution(&self) -> Result<Distribution, ModelError> {
        ugm_prob(self)
    }
}

/// Born machine: probabilities are squared moduli of the network's tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct BornMachine {
    net: TensorNetwork,
}

impl BornMachine {
    pub fn new(net: TensorNetwork) -> Result<Self, ModelError> {
        net.validate()?;
        Ok(Self { net })
    }

    pub fn net(&self) -> &TensorNetwork {
        &self.net
    }

    pub fn distribution(&self) -> Result<Distribution, ModelError> {
        bm_prob(self)
    }
}

/// Born machine with a set of decohered hidden edges.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoheredBM {
    bm: BornMachine,
    decohered: BTreeSet<EdgeId>,
}

impl DecoheredBM {
    pub fn new(bm: BornMachine, decohered: BTreeSet<EdgeId>) -> Result<Self, ModelError> {
        for e in &decohered {
            let edge = bm.net.graph().edge(e)?;
            if !edge.is_hidden() {
                return Err(ModelError::NotHidden(e.clone()));
            }
        }
        Ok(Self { bm, decohered })
    }

    /// Every hidden edge decohered.
    pub fn fully_decohered(bm: BornMachine) -> Self {
        let decohered = bm.net.graph().hidden_edge_ids();
        Self { bm, decohered }
    }

    pub fn bm(&self) -> &BornMachine {
        &self.bm
    }

    pub fn net(&self) -> &TensorNetwork {
        &self.bm.net
    }

    pub fn decohered(&self) -> &BTreeSet<EdgeId> {
        &self.decohered
    }

    pub fn is_fully_decohered(&self) -> bool {
        self.bm.net.graph().hidden_edges().all(|e| self.decohered.contains(&e.id))
    }

    pub fn distribution(&self) -> Result<Distribution, ModelError> {
        dbm_prob(self)
    }
}

/// Locally purified state: every node owns exactly one purification edge,
/// which is traced out of the composite network.
#[derive(Debug, Clone, PartialEq)]
pub struct Lps {
    net: TensorNetwork,
    purification: BTreeSet<EdgeId>,
}

impl Lps {
    pub fn new(net: TensorNetwork, purification: BTreeSet<EdgeId>) -> Result<Self, ModelError> {
        net.validate()?;
        for p in &purification {
            if !net.graph().edge(p)?.is_visible() {
                return Err(ModelError::InvalidLps(format!("purification edge {p} is not visible")));
            }
        }
        for (node, core) in net.cores() {
            let count = core.edges.iter().filter(|e| purification.contains(*e)).count();
            if count != 1 {
                return Err(ModelError::InvalidLps(format!(
                    "node {node} has {count} purification edges, expected 1"
                )));
            }
        }
        Ok(Self { net, purification })
    }

    pub fn net(&self) -> &TensorNetwork {
        &self.net
    }

    pub fn purification(&self) -> &BTreeSet<EdgeId> {
        &self.purification
    }

    /// Purification edge of `node`.
    pub fn purification_of(&self, node: &str) -> Option<&EdgeId> {
        self.net
            .cores()
            .get(node)?
            .edges
            .iter()
            .find(|e| self.purification.contains(*e))
    }

    pub fn distribution(&self) -> Result<Distribution, ModelError> {
        lps_prob(self)
    }
}

/// Any of the four families.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Ugm(Ugm),
    Born(BornMachine),
    Decohered(DecoheredBM),
    Lps(Lps),
}

impl Model {
    pub fn family(&self) -> &'static str {
        match self {
            Model::Ugm(_) => "ugm",
            Model::Born(_) => "bm",
            Model::Decohered(_) => "dbm",
            Model::Lps(_) => "lps",
        }
    }

    /// Network whose visible edges are the model variables and whose
    /// evaluation is the unnormalized distribution.
    pub fn inference_network(&self) -> Result<TensorNetwork, ModelError> {
        match self {
            Model::Ugm(m) => Ok(m.net.clone()),
            Model::Born(m) => composite_network(&m.net, &BTreeSet::new(), &BTreeSet::new()),
            Model::Decohered(m) => composite_network(&m.bm.net, &m.decohered, &BTreeSet::new()),
            Model::Lps(m) => composite_network(&m.net, &BTreeSet::new(), &m.purification),
        }
    }

    pub fn variables(&self) -> Result<Vec<Variable>, ModelError> {
        let net = self.inference_network()?;
        Ok(variables_of(&net))
    }

    pub fn distribution(&self) -> Result<Distribution, ModelError> {
        match self {
            Model::Ugm(m) => ugm_prob(m),
            Model::Born(m) => bm_prob(m),
            Model::Decohered(m) => dbm_prob(m),
            Model::Lps(m) => lps_prob(m),
        }
    }

    /// Sums out `marginalize` and conditions on `condition` (zero-based
    /// outcomes) by capping edges of the inference network.
    pub fn query(
        &self,
        marginalize: &[&str],
        condition: &[(&str, usize)],
    ) -> Result<Distribution, ModelError> {
        let net = self.inference_network()?;
        let vars = variables_of(&net);
        let mut seen = BTreeSet::new();
        for name in marginalize.iter().chain(condition.iter().map(|(n, _)| n)) {
            if !vars.iter().any(|v| v.name == *name) {
                return Err(ModelError::UnknownVariable(name.to_string()));
            }
            if !seen.insert(*name) {
                return Err(ModelError::DuplicateVariable(name.to_string()));
            }
        }
        let mut capped = net.clone();
        for name in marginalize {
            let d = capped.graph().edge(name)?.dim;
            capped = capped.cap_visible(name, DenseTensor::ones(d)?, &format!("marg:{name}"))?;
        }
        let mut evidence_free = capped.clone();
        for &(name, x) in condition {
            let d = capped.graph().edge(name)?.dim;
            if x >= d {
                return Err(ModelError::OutcomeOutOfRange(format!("{name}={x}")));
            }
            capped = capped.cap_visible(name, DenseTensor::basis(d, x)?, &format!("cond:{name}"))?;
            evidence_free = evidence_free.cap_visible(name, DenseTensor::ones(d)?, &format!("cond:{name}"))?;
        }
        let dist = Distribution::from_unnormalized(variables_of(&capped), real_table(&capped)?);
        if condition.is_empty() {
            return dist;
        }
        // evidence mass relative to the model's total mass
        let remaining: Vec<String> = variables_of(&evidence_free).into_iter().map(|v| v.name).collect();
        let mut closed = evidence_free;
        for name in &remaining {
            let d = closed.graph().edge(name)?.dim;
            closed = closed.cap_visible(name, DenseTensor::ones(d)?, &format!("marg:{name}"))?;
        }
        let total = closed.evaluate()?.scalar_value().re;
        let undefined = || ModelError::UndefinedConditional(format!("{condition:?}"));
        match dist {
            Ok(d) if total > 0.0 && d.log_norm().exp() / total > ZERO_SUPPORT => Ok(d),
            Ok(_) | Err(ModelError::Degenerate) => Err(undefined()),
            Err(e) => Err(e),
        }
    }

    pub fn marginalize(&self, vars: &[&str]) -> Result<Distribution, ModelError> {
        self.query(vars, &[])
    }

    pub fn condition(&self, assignment: &[(&str, usize)]) -> Result<Distribution, ModelError> {
        self.query(&[], assignment)
    }
}

fn variables_of(net: &TensorNetwork) -> Vec<Variable> {
    net.visible_order()
        .iter()
        .zip(net.visible_dims())
        .map(|(n, d)| Variable::new(n.clone(), d))
        .collect()
}

/// Real parts of an inference network's evaluation.
fn real_table(net: &TensorNetwork) -> Result<Vec<f64>, ModelError> {
    Ok(net.evaluate()?.real_parts())
}

pub fn ugm_prob(m: &Ugm) -> Result<Distribution, ModelError> {
    Distribution::from_unnormalized(variables_of(&m.net), real_table(&m.net)?)
}

/// `|ψ|² / ‖ψ‖²` from the amplitude tensor.
pub fn bm_prob(m: &BornMachine) -> Result<Distribution, ModelError> {
    let psi = m.net.evaluate()?;
    if psi.norm2() == 0.0 {
        return Err(ModelError::Degenerate);
    }
    let values = psi.data().iter().map(|z| z.norm_sqr()).collect();
    Distribution::from_unnormalized(variables_of(&m.net), values)
}

pub fn dbm_prob(m: &DecoheredBM) -> Result<Distribution, ModelError> {
    let net = composite_network(&m.bm.net, &m.decohered, &BTreeSet::new())?;
    Distribution::from_unnormalized(variables_of(&net), real_table(&net)?)
}

pub fn lps_prob(m: &Lps) -> Result<Distribution, ModelError> {
    let net = composite_network(&m.net, &BTreeSet::new(), &m.purification)?;
    Distribution::from_unnormalized(variables_of(&net), real_table(&net)?)
}

#[cfg(test)]
mod tests;
