//! Model files: a network document plus a family tag and family metadata.
//!
//! ```json
//! {
//!   "family": "dbm",
//!   "network": { "nodes": [...], "edges": [...], "visible_order": [...] },
//!   "decohered": ["h0_1"],
//!   "purification": [],
//!   "nonnegative": false
//! }
//! ```
//!
//! `family` is one of `ugm`, `bm`, `dbm`, `lps`. `decohered` is used by
//! `dbm`, `purification` by `lps`, and `nonnegative` is true exactly for
//! `ugm` files.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::network::TensorNetwork;

use super::{BornMachine, DecoheredBM, Lps, Model, ModelError, Ugm};

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    family: String,
    network: Value,
    #[serde(default)]
    decohered: Vec<String>,
    #[serde(default)]
    purification: Vec<String>,
    #[serde(default)]
    nonnegative: bool,
}

impl Model {
    pub fn to_json(&self) -> Result<String, ModelError> {
        let (net, decohered, purification) = match self {
            Model::Ugm(m) => (m.net(), BTreeSet::new(), BTreeSet::new()),
            Model::Born(m) => (m.net(), BTreeSet::new(), BTreeSet::new()),
            Model::Decohered(m) => (m.net(), m.decohered().clone(), BTreeSet::new()),
            Model::Lps(m) => (m.net(), BTreeSet::new(), m.purification().clone()),
        };
        let doc = ModelDoc {
            family: self.family().to_string(),
            network: net.to_json_value()?,
            decohered: decohered.into_iter().collect(),
            purification: purification.into_iter().collect(),
            nonnegative: matches!(self, Model::Ugm(_)),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let doc: ModelDoc = serde_json::from_str(s).map_err(|e| ModelError::Format(e.to_string()))?;
        let net = TensorNetwork::from_json_value(doc.network)?;
        let decohered: BTreeSet<String> = doc.decohered.into_iter().collect();
        let purification: BTreeSet<String> = doc.purification.into_iter().collect();
        let unused = |name: &str, set: &BTreeSet<String>| {
            if set.is_empty() {
                Ok(())
            } else {
                Err(ModelError::Format(format!("family {} does not take {name} edges", doc.family)))
            }
        };
        match doc.family.as_str() {
            "ugm" => {
                unused("decohered", &decohered)?;
                unused("purification", &purification)?;
                Ok(Model::Ugm(Ugm::new(net)?))
            }
            "bm" => {
                unused("decohered", &decohered)?;
                unused("purification", &purification)?;
                Ok(Model::Born(BornMachine::new(net)?))
            }
            "dbm" => {
                unused("purification", &purification)?;
                Ok(Model::Decohered(DecoheredBM::new(BornMachine::new(net)?, decohered)?))
            }
            "lps" => {
                unused("decohered", &decohered)?;
                Ok(Model::Lps(Lps::new(net, purification)?))
            }
            other => Err(ModelError::Format(format!("unknown family {other}"))),
        }
    }
}
