//! JSON document format for tensor networks.
//!
//! ```json
//! {
//!   "nodes": [ { "id": "A", "edges": ["x", "b"], "core": [[[1.0, 0.0], [0.5, -2.0]], ...] } ],
//!   "edges": [ { "id": "x", "endpoints": ["A"], "dim": 2 }, ... ],
//!   "visible_order": ["x", ...]
//! }
//! ```
//!
//! `core` is a nested array with one nesting level per mode, in the node's
//! edge order, whose leaves are `[re, im]` pairs. A 0-mode core is a bare
//! pair. Doubles are written in shortest round-trip form, so finite values
//! survive a write/read cycle bit-for-bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::tensor::{DenseTensor, C64};

use super::{Core, NetworkError, TensorNetwork};

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    id: String,
    edges: Vec<String>,
    core: Value,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeDoc {
    id: String,
    endpoints: Vec<String>,
    dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NetworkDoc {
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
    visible_order: Vec<String>,
}

fn fmt_err(msg: impl Into<String>) -> NetworkError {
    NetworkError::Format(msg.into())
}

fn number(x: f64) -> Result<Value, NetworkError> {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .ok_or_else(|| fmt_err(format!("non-finite value {x} cannot be serialized")))
}

fn nest(shape: &[usize], data: &[C64]) -> Result<Value, NetworkError> {
    match shape.split_first() {
        None => Ok(Value::Array(vec![number(data[0].re)?, number(data[0].im)?])),
        Some((&d, rest)) => {
            let stride = data.len() / d;
            (0..d)
                .map(|i| nest(rest, &data[i * stride..(i + 1) * stride]))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Array)
        }
    }
}

fn unnest(v: &Value, shape: &[usize], out: &mut Vec<C64>) -> Result<(), NetworkError> {
    let arr = v.as_array().ok_or_else(|| fmt_err("core must be a nested array"))?;
    match shape.split_first() {
        None => {
            let pair: Vec<f64> = arr
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| fmt_err("expected [re, im] numbers")))
                .collect::<Result<_, _>>()?;
            if pair.len() != 2 {
                return Err(fmt_err("expected an [re, im] pair"));
            }
            out.push(C64::new(pair[0], pair[1]));
            Ok(())
        }
        Some((&d, rest)) => {
            if arr.len() != d {
                return Err(fmt_err(format!("expected {d} entries, found {}", arr.len())));
            }
            arr.iter().try_for_each(|x| unnest(x, rest, out))
        }
    }
}

/// Infers a core's shape from its nested-array nesting.
fn infer_shape(v: &Value) -> Result<Vec<usize>, NetworkError> {
    let mut shape = Vec::new();
    let mut cur = v;
    loop {
        let arr = cur.as_array().ok_or_else(|| fmt_err("core must be a nested array"))?;
        match arr.first() {
            Some(Value::Array(_)) => {
                shape.push(arr.len());
                cur = &arr[0];
            }
            _ => return Ok(shape),
        }
    }
}

pub fn tensor_to_json(t: &DenseTensor) -> Result<Value, NetworkError> {
    nest(t.shape(), t.data())
}

pub fn tensor_from_json(v: &Value) -> Result<DenseTensor, NetworkError> {
    let shape = infer_shape(v)?;
    let mut data = Vec::with_capacity(shape.iter().product());
    unnest(v, &shape, &mut data)?;
    Ok(DenseTensor::new(shape, data)?)
}

impl TensorNetwork {
    pub fn to_doc(&self) -> Result<NetworkDoc, NetworkError> {
        let nodes = self
            .cores
            .iter()
            .map(|(id, core)| {
                Ok(NodeDoc {
                    id: id.clone(),
                    edges: core.edges.clone(),
                    core: tensor_to_json(&core.tensor)?,
                })
            })
            .collect::<Result<_, NetworkError>>()?;
        let edges = self
            .graph
            .edges
            .values()
            .map(|e| EdgeDoc {
                id: e.id.clone(),
                endpoints: e.endpoints.clone(),
                dim: e.dim,
            })
            .collect();
        Ok(NetworkDoc {
            nodes,
            edges,
            visible_order: self.graph.visible_order.clone(),
        })
    }

    pub fn from_doc(doc: NetworkDoc) -> Result<Self, NetworkError> {
        let mut dims = BTreeMap::new();
        for e in &doc.edges {
            if dims.insert(e.id.clone(), e.dim).is_some() {
                return Err(NetworkError::Duplicate(e.id.clone()));
            }
        }
        let mut cores = BTreeMap::new();
        for n in doc.nodes {
            let tensor = tensor_from_json(&n.core)?;
            let core = Core {
                edges: n.edges,
                tensor,
            };
            if cores.insert(n.id.clone(), core).is_some() {
                return Err(NetworkError::Duplicate(n.id));
            }
        }
        let net = TensorNetwork::from_parts(cores, dims, Some(doc.visible_order));
        // declared endpoints must agree with the node edge lists
        for e in &doc.edges {
            let mut declared = e.endpoints.clone();
            declared.sort();
            let mut derived = net.graph.edges[&e.id].endpoints.clone();
            derived.sort();
            if declared != derived {
                return Err(fmt_err(format!(
                    "edge {} declares endpoints {:?} but nodes give {:?}",
                    e.id, e.endpoints, derived
                )));
            }
        }
        Ok(net)
    }

    pub fn to_json_value(&self) -> Result<Value, NetworkError> {
        serde_json::to_value(self.to_doc()?).map_err(|e| fmt_err(e.to_string()))
    }

    pub fn from_json_value(v: Value) -> Result<Self, NetworkError> {
        let doc: NetworkDoc = serde_json::from_value(v).map_err(|e| fmt_err(e.to_string()))?;
        Self::from_doc(doc)
    }

    pub fn to_json(&self) -> Result<String, NetworkError> {
        serde_json::to_string_pretty(&self.to_doc()?).map_err(|e| fmt_err(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, NetworkError> {
        let doc: NetworkDoc = serde_json::from_str(s).map_err(|e| fmt_err(e.to_string()))?;
        Self::from_doc(doc)
    }
}
