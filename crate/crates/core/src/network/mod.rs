//! Tensor-network graphs with visible and hidden edges, core assignment,
//! full-network evaluation and structural queries.

mod eval;
mod gauge;
pub mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::tensor::{copy_tensor, DenseTensor, TensorError};

pub(crate) use gauge::condition_number;
pub use gauge::{
    apply_gauge, checked_inverse, factor_nonneg_gauge, GaugeTransform, NonnegGauge, MAX_CONDITION,
};

pub type NodeId = String;
pub type EdgeId = String;

/// One invariant violation found by [`TensorNetwork::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    UnknownEdge { node: NodeId, edge: EdgeId },
    DanglingEdge { edge: EdgeId },
    OverfullEdge { edge: EdgeId, endpoints: usize },
    SelfLoop { node: NodeId, edge: EdgeId },
    ZeroDimension { edge: EdgeId },
    IsolatedNode { node: NodeId },
    ShapeMismatch {
        node: NodeId,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    VisibleOrder { detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownEdge { node, edge } => {
                write!(f, "node {node} references unknown edge {edge}")
            }
            Violation::DanglingEdge { edge } => write!(f, "edge {edge} has no endpoint"),
            Violation::OverfullEdge { edge, endpoints } => {
                write!(f, "edge {edge} has {endpoints} endpoints (at most 2 allowed)")
            }
            Violation::SelfLoop { node, edge } => {
                write!(f, "edge {edge} is attached twice to node {node}")
            }
            Violation::ZeroDimension { edge } => write!(f, "edge {edge} has dimension 0"),
            Violation::IsolatedNode { node } => write!(f, "node {node} has no incident edge"),
            Violation::ShapeMismatch {
                node,
                expected,
                actual,
            } => write!(f, "core of node {node} has shape {actual:?}, expected {expected:?}"),
            Violation::VisibleOrder { detail } => write!(f, "visible order: {detail}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("invalid network: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("edge {0} is visible; a hidden edge is required")]
    VisibleEdge(EdgeId),
    #[error("edge {0} is hidden; a visible edge is required")]
    HiddenEdge(EdgeId),
    #[error("duplicate identifier {0}")]
    Duplicate(String),
    #[error("gauge matrix is singular or ill-conditioned (condition number {0:e})")]
    Singular(f64),
    #[error("gauge matrix must be {expected}x{expected}, got shape {actual:?}")]
    GaugeShape { expected: usize, actual: Vec<usize> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("serialization: {0}")]
    Format(String),
}

/// An edge with one endpoint (visible) or two endpoints (hidden).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: EdgeId,
    pub endpoints: Vec<NodeId>,
    pub dim: usize,
}

impl Edge {
    pub fn is_visible(&self) -> bool {
        self.endpoints.len() == 1
    }

    pub fn is_hidden(&self) -> bool {
        self.endpoints.len() == 2
    }

    /// The endpoint other than `node`, for hidden edges.
    pub fn other(&self, node: &str) -> Option<&NodeId> {
        self.endpoints.iter().find(|n| n.as_str() != node)
    }
}

/// Graph structure of a tensor network. Endpoints are derived from the
/// per-node incident-edge lists, so the graph is always consistent with
/// the cores that own it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TnGraph {
    pub nodes: BTreeSet<NodeId>,
    pub edges: BTreeMap<EdgeId, Edge>,
    pub visible_order: Vec<EdgeId>,
}

impl TnGraph {
    pub fn edge(&self, id: &str) -> Result<&Edge, NetworkError> {
        self.edges
            .get(id)
            .ok_or_else(|| NetworkError::UnknownEdge(id.to_string()))
    }

    pub fn visible_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values().filter(|e| e.is_visible())
    }

    pub fn hidden_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values().filter(|e| e.is_hidden())
    }

    pub fn hidden_edge_ids(&self) -> BTreeSet<EdgeId> {
        self.hidden_edges().map(|e| e.id.clone()).collect()
    }

    /// Connected components of the node set after deleting `removed` edges.
    /// Components are sorted, each listed in node order.
    pub fn components_without(&self, removed: &BTreeSet<EdgeId>) -> Vec<BTreeSet<NodeId>> {
        let mut adjacency: BTreeMap<&str, Vec<&str>> =
            self.nodes.iter().map(|n| (n.as_str(), Vec::new())).collect();
        for e in self.hidden_edges().filter(|e| !removed.contains(&e.id)) {
            let (a, b) = (e.endpoints[0].as_str(), e.endpoints[1].as_str());
            adjacency.entry(a).or_default().push(b);
            adjacency.entry(b).or_default().push(a);
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut out = Vec::new();
        for start in &self.nodes {
            if seen.contains(start.as_str()) {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut stack = vec![start.as_str()];
            seen.insert(start.as_str());
            while let Some(n) = stack.pop() {
                comp.insert(n.to_string());
                for &m in &adjacency[n] {
                    if seen.insert(m) {
                        stack.push(m);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    /// Does removing `edges` split the nodes into at least two components?
    pub fn is_cut_set(&self, edges: &BTreeSet<EdgeId>) -> Result<bool, NetworkError> {
        if let Some(e) = edges.iter().find(|e| !self.edges.contains_key(*e)) {
            return Err(NetworkError::UnknownEdge(e.clone()));
        }
        Ok(self.components_without(edges).len() >= 2)
    }
}

/// Core tensor of a node together with the ordered list of its incident
/// edges (mode `i` of the tensor belongs to `edges[i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Core {
    pub edges: Vec<EdgeId>,
    pub tensor: DenseTensor,
}

/// A graph with a dense core tensor at each node.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorNetwork {
    graph: TnGraph,
    cores: BTreeMap<NodeId, Core>,
    violations: Vec<Violation>,
}

impl TensorNetwork {
    /// Builds a network from node cores and edge dimensions. `visible_order`
    /// of `None` lists visible edges in the order they are first met while
    /// walking nodes in id order. Invalid input is kept and reported by
    /// [`validate`](Self::validate).
    pub fn from_parts(
        cores: BTreeMap<NodeId, Core>,
        dims: BTreeMap<EdgeId, usize>,
        visible_order: Option<Vec<EdgeId>>,
    ) -> Self {
        let mut violations = Vec::new();
        let mut endpoints: BTreeMap<EdgeId, Vec<NodeId>> =
            dims.keys().map(|e| (e.clone(), Vec::new())).collect();
        for (node, core) in &cores {
            for e in &core.edges {
                match endpoints.get_mut(e) {
                    Some(list) => {
                        if list.contains(node) {
                            violations.push(Violation::SelfLoop {
                                node: node.clone(),
                                edge: e.clone(),
                            });
                        }
                        list.push(node.clone());
                    }
                    None => violations.push(Violation::UnknownEdge {
                        node: node.clone(),
                        edge: e.clone(),
                    }),
                }
            }
        }
        let edges: BTreeMap<EdgeId, Edge> = endpoints
            .into_iter()
            .map(|(id, ends)| {
                let dim = dims[&id];
                (
                    id.clone(),
                    Edge {
                        id,
                        endpoints: ends,
                        dim,
                    },
                )
            })
            .collect();
        let visible_order = visible_order.unwrap_or_else(|| {
            let mut order = Vec::new();
            for core in cores.values() {
                for e in &core.edges {
                    if edges.get(e).is_some_and(Edge::is_visible) && !order.contains(e) {
                        order.push(e.clone());
                    }
                }
            }
            order
        });
        let graph = TnGraph {
            nodes: cores.keys().cloned().collect(),
            edges,
            visible_order,
        };
        Self {
            graph,
            cores,
            violations,
        }
    }

    pub fn graph(&self) -> &TnGraph {
        &self.graph
    }

    pub fn cores(&self) -> &BTreeMap<NodeId, Core> {
        &self.cores
    }

    pub fn core(&self, node: &str) -> Result<&Core, NetworkError> {
        self.cores
            .get(node)
            .ok_or_else(|| NetworkError::UnknownNode(node.to_string()))
    }

    pub fn visible_order(&self) -> &[EdgeId] {
        &self.graph.visible_order
    }

    /// Dimensions of the visible edges, in visible order.
    pub fn visible_dims(&self) -> Vec<usize> {
        self.graph
            .visible_order
            .iter()
            .map(|e| self.graph.edges.get(e).map_or(0, |x| x.dim))
            .collect()
    }

    pub fn dims(&self) -> BTreeMap<EdgeId, usize> {
        self.graph
            .edges
            .iter()
            .map(|(k, e)| (k.clone(), e.dim))
            .collect()
    }

    /// Node owning a visible edge.
    pub fn owner(&self, visible: &str) -> Result<&NodeId, NetworkError> {
        let e = self.graph.edge(visible)?;
        if !e.is_visible() {
            return Err(NetworkError::HiddenEdge(visible.to_string()));
        }
        Ok(&e.endpoints[0])
    }

    /// Checks every structural invariant; returns all violations found.
    pub fn validate(&self) -> Result<(), NetworkError> {
        let mut v = self.violations.clone();
        for e in self.graph.edges.values() {
            if e.dim == 0 {
                v.push(Violation::ZeroDimension { edge: e.id.clone() });
            }
            match e.endpoints.len() {
                0 => v.push(Violation::DanglingEdge { edge: e.id.clone() }),
                1 | 2 => {}
                n => v.push(Violation::OverfullEdge {
                    edge: e.id.clone(),
                    endpoints: n,
                }),
            }
        }
        for (node, core) in &self.cores {
            if core.edges.is_empty() {
                v.push(Violation::IsolatedNode { node: node.clone() });
            }
            let expected: Vec<usize> = core
                .edges
                .iter()
                .map(|e| self.graph.edges.get(e).map_or(0, |x| x.dim))
                .collect();
            if expected != core.tensor.shape() {
                v.push(Violation::ShapeMismatch {
                    node: node.clone(),
                    expected,
                    actual: core.tensor.shape().to_vec(),
                });
            }
        }
        let visible: BTreeSet<&EdgeId> = self.graph.visible_edges().map(|e| &e.id).collect();
        let listed: BTreeSet<&EdgeId> = self.graph.visible_order.iter().collect();
        if listed.len() != self.graph.visible_order.len() {
            v.push(Violation::VisibleOrder {
                detail: "repeated edge".into(),
            });
        }
        for e in listed.difference(&visible) {
            v.push(Violation::VisibleOrder {
                detail: format!("{e} is not a visible edge"),
            });
        }
        for e in visible.difference(&listed) {
            v.push(Violation::VisibleOrder {
                detail: format!("visible edge {e} missing"),
            });
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(NetworkError::Invalid(v))
        }
    }

    /// Contracts all cores into the tensor over the visible edges, in
    /// visible order.
    pub fn evaluate(&self) -> Result<DenseTensor, NetworkError> {
        self.evaluate_with_budget(crate::tensor::default_budget())
    }

    pub fn evaluate_with_budget(&self, budget: usize) -> Result<DenseTensor, NetworkError> {
        self.validate()?;
        eval::evaluate(self, budget)
    }

    /// Returns a copy with the core of `node` replaced (shape must match).
    pub fn with_core(&self, node: &str, tensor: DenseTensor) -> Result<Self, NetworkError> {
        let mut out = self.clone();
        let core = out
            .cores
            .get_mut(node)
            .ok_or_else(|| NetworkError::UnknownNode(node.to_string()))?;
        if core.tensor.shape() != tensor.shape() {
            return Err(TensorError::ShapeMismatch {
                left: core.tensor.shape().to_vec(),
                right: tensor.shape().to_vec(),
            }
            .into());
        }
        core.tensor = tensor;
        Ok(out)
    }

    /// Applies `f` to every core tensor.
    pub fn map_cores(&self, f: impl Fn(&NodeId, &DenseTensor) -> DenseTensor) -> Self {
        let mut out = self.clone();
        for (id, core) in out.cores.iter_mut() {
            core.tensor = f(id, &core.tensor);
        }
        out
    }

    /// Consumes the network into its editable parts.
    pub fn into_parts(self) -> (BTreeMap<NodeId, Core>, BTreeMap<EdgeId, usize>, Vec<EdgeId>) {
        let dims = self.dims();
        (self.cores, dims, self.graph.visible_order)
    }

    /// Replaces hidden edge `edge` by a third-order copy tensor, exposing a
    /// new visible edge `Z@<edge>` appended to the visible order.
    pub fn promote_hidden_edge(&self, edge: &str) -> Result<Self, NetworkError> {
        let e = self.graph.edge(edge)?.clone();
        if !e.is_hidden() {
            return Err(NetworkError::VisibleEdge(edge.to_string()));
        }
        let readout = readout_name(edge);
        let node = format!("copy@{edge}");
        let halves = [format!("{edge}#0"), format!("{edge}#1")];
        let (mut cores, mut dims, mut order) = self.clone().into_parts();
        for id in [&readout, &node, &halves[0], &halves[1]] {
            if dims.contains_key(id) || cores.contains_key(id) {
                return Err(NetworkError::Duplicate(id.clone()));
            }
        }
        dims.remove(edge);
        for (end, half) in e.endpoints.iter().zip(&halves) {
            let core = cores.get_mut(end).expect("endpoint exists");
            for m in core.edges.iter_mut().filter(|m| m.as_str() == edge) {
                *m = half.clone();
            }
            dims.insert(half.clone(), e.dim);
        }
        dims.insert(readout.clone(), e.dim);
        cores.insert(
            node,
            Core {
                edges: vec![halves[0].clone(), halves[1].clone(), readout.clone()],
                tensor: copy_tensor(3, e.dim)?,
            },
        );
        order.push(readout);
        Ok(Self::from_parts(cores, dims, Some(order)))
    }

    /// Attaches a vector to visible edge `edge`, turning it into a hidden edge.
    pub fn cap_visible(&self, edge: &str, vector: DenseTensor, node: &str) -> Result<Self, NetworkError> {
        let e = self.graph.edge(edge)?;
        if !e.is_visible() {
            return Err(NetworkError::HiddenEdge(edge.to_string()));
        }
        if vector.shape() != [e.dim] {
            return Err(TensorError::ShapeMismatch {
                left: vec![e.dim],
                right: vector.shape().to_vec(),
            }
            .into());
        }
        let (mut cores, dims, mut order) = self.clone().into_parts();
        if cores.contains_key(node) {
            return Err(NetworkError::Duplicate(node.to_string()));
        }
        cores.insert(
            node.to_string(),
            Core {
                edges: vec![edge.to_string()],
                tensor: vector,
            },
        );
        order.retain(|x| x != edge);
        Ok(Self::from_parts(cores, dims, Some(order)))
    }
}

/// Name of the readout variable exposed on a hidden edge.
pub fn readout_name(edge: &str) -> String {
    format!("Z@{edge}")
}

/// Incremental construction helper.
#[derive(Debug, Default, Clone)]
pub struct NetworkBuilder {
    cores: BTreeMap<NodeId, Core>,
    dims: BTreeMap<EdgeId, usize>,
    order: Option<Vec<EdgeId>>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn edge(mut self, id: impl Into<String>, dim: usize) -> Self {
        self.dims.insert(id.into(), dim);
        self
    }

    pub fn node(mut self, id: impl Into<String>, edges: &[&str], tensor: DenseTensor) -> Self {
        self.cores.insert(
            id.into(),
            Core {
                edges: edges.iter().map(|s| s.to_string()).collect(),
                tensor,
            },
        );
        self
    }

    pub fn visible_order(mut self, order: &[&str]) -> Self {
        self.order = Some(order.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn build(self) -> TensorNetwork {
        TensorNetwork::from_parts(self.cores, self.dims, self.order)
    }
}
