//! Discrete probabilistic modeling with tensor networks.
//!
//! Undirected graphical models, Born machines, decohered Born machines and
//! locally purified states share one representation, [`network::TensorNetwork`].
//! The [`transforms`] module converts between the families, [`learn`] trains
//! hidden-Markov-shaped mixtures by maximum likelihood, and [`data`] builds
//! the Bars-and-Stripes benchmark.

pub mod data;
pub mod learn;
pub mod models;
pub mod network;
pub mod oracle;
pub mod random;
pub mod tensor;
pub mod transforms;
pub mod verify;
