//! HMM-shaped UGM and DBM mixtures: likelihoods, gradients and training.
//!
//! Both families are homogeneous chains with hidden state `hₜ ∈ 0..N` and
//! observation `oₜ`. The undirected component assigns weight
//! `v(h₁) Π T(hₜ, hₜ₊₁) Π H(hₜ, oₜ)` with unnormalized potentials
//! `exp(log table)` and a global normalizer over all hidden and observed
//! configurations. The Born-machine component uses amplitudes
//! `√potential · exp(2πiθ)` and normalizes `|ψ(O)|²` by a density-matrix pass.
//! All passes rescale per step, so long sequences stay finite.

mod chain;
mod params;
pub mod tape;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, SequenceDataset};
use crate::models::{BornMachine, ModelError, Ugm, Variable};
use crate::network::NetworkBuilder;
use crate::random::derive_seed;
use crate::tensor::{copy_tensor, DenseTensor, C64};

use chain::{component_log_probs, derive, seq_log_prob, Shape};
pub use params::{init_params, table_size, Family, HmmMixtureParams, HmmTables};
use tape::{Plain, Tape};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("malformed parameters: {0}")]
    Params(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sequence {index} has length {len}, expected {expected}")]
    Length { index: usize, len: usize, expected: usize },
    #[error("sequence {index} position {position}: symbol {symbol} outside 1..={d_obs}")]
    SymbolOutOfRange { index: usize, position: usize, symbol: u8, d_obs: usize },
    #[error("sequence {index} has zero or non-finite probability under the model")]
    ZeroProbability { index: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{0} is not available for the {1} mixture")]
    WrongFamily(&'static str, Family),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn shape(p: &HmmMixtureParams) -> Result<Shape, LearnError> {
    if !p.is_well_formed() {
        return Err(LearnError::Params(format!(
            "tables must match N = {}, d_obs = {}, T_len = {} with finite entries",
            p.n, p.d_obs, p.t_len
        )));
    }
    Ok(Shape { family: p.family, n: p.n, d: p.d_obs, t_len: p.t_len })
}

/// Converts 1-based symbol sequences to zero-based indices.
fn encode(p: &HmmMixtureParams, data: &[Vec<u8>]) -> Result<Vec<Vec<usize>>, LearnError> {
    data.iter()
        .enumerate()
        .map(|(index, seq)| {
            if seq.len() != p.t_len {
                return Err(LearnError::Length { index, len: seq.len(), expected: p.t_len });
            }
            seq.iter()
                .enumerate()
                .map(|(position, &symbol)| {
                    if symbol == 0 || symbol as usize > p.d_obs {
                        Err(LearnError::SymbolOutOfRange { index, position, symbol, d_obs: p.d_obs })
                    } else {
                        Ok(symbol as usize - 1)
                    }
                })
                .collect()
        })
        .collect()
}

/// `ln P(O)` under the mixture; symbols are 1-based.
pub fn mixture_log_prob(p: &HmmMixtureParams, o: &[u8]) -> Result<f64, LearnError> {
    let s = shape(p)?;
    let seq = encode(p, std::slice::from_ref(&o.to_vec()))?.remove(0);
    let derived = derive(&mut Plain, &p.to_vec(), s);
    Ok(seq_log_prob(&mut Plain, &derived, s, &seq))
}

/// `P(O)` under the mixture; symbols are 1-based.
pub fn mixture_prob(p: &HmmMixtureParams, o: &[u8]) -> Result<f64, LearnError> {
    Ok(mixture_log_prob(p, o)?.exp())
}

/// Unweighted component probabilities `(P₁(O), P₂(O))`.
pub fn component_probs(p: &HmmMixtureParams, o: &[u8]) -> Result<(f64, f64), LearnError> {
    let s = shape(p)?;
    let seq = encode(p, std::slice::from_ref(&o.to_vec()))?.remove(0);
    let derived = derive(&mut Plain, &p.to_vec(), s);
    let (a, b) = component_log_probs(&mut Plain, &derived, s, &seq);
    Ok((a.exp(), b.exp()))
}

/// Mean negative log-likelihood over a non-empty dataset.
pub fn nll(p: &HmmMixtureParams, data: &[Vec<u8>]) -> Result<f64, LearnError> {
    let s = shape(p)?;
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let seqs = encode(p, data)?;
    let derived = derive(&mut Plain, &p.to_vec(), s);
    let mut total = 0.0;
    for (index, seq) in seqs.iter().enumerate() {
        let lp = seq_log_prob(&mut Plain, &derived, s, seq);
        if !lp.is_finite() {
            return Err(LearnError::ZeroProbability { index });
        }
        total -= lp;
    }
    Ok(total / seqs.len() as f64)
}

/// Mean negative log-likelihood and its gradient with respect to every
/// free parameter, laid out like `p`.
pub fn nll_grad(p: &HmmMixtureParams, data: &[Vec<u8>]) -> Result<(f64, HmmMixtureParams), LearnError> {
    let s = shape(p)?;
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let seqs = encode(p, data)?;
    let (value, grad) = nll_grad_encoded(p, s, &seqs)?;
    Ok((value, p.with_values(&grad)))
}

fn nll_grad_encoded(p: &HmmMixtureParams, s: Shape, seqs: &[Vec<usize>]) -> Result<(f64, Vec<f64>), LearnError> {
    let mut outer = Tape::new();
    let leaves: Vec<_> = p.to_vec().into_iter().map(|x| outer.leaf(x)).collect();
    let derived = derive(&mut outer, &leaves, s);
    let values: Vec<f64> = derived.iter().map(|&v| tape::Arith::value(&outer, v)).collect();

    let weight = -1.0 / seqs.len() as f64;
    let mut adjoint = vec![0.0; derived.len()];
    let mut total = 0.0;
    let mut inner = Tape::new();
    for (index, seq) in seqs.iter().enumerate() {
        inner.clear();
        let xs: Vec<_> = values.iter().map(|&x| inner.leaf(x)).collect();
        let lp = seq_log_prob(&mut inner, &xs, s, seq);
        let v = tape::Arith::value(&inner, lp);
        if !v.is_finite() {
            return Err(LearnError::ZeroProbability { index });
        }
        total -= v;
        let adj = inner.backward(&[(lp, weight)]);
        for (a, x) in adjoint.iter_mut().zip(&xs) {
            *a += adj[x.0];
        }
    }
    let seeds: Vec<_> = derived.iter().copied().zip(adjoint).collect();
    let adj = outer.backward(&seeds);
    let grad = leaves.iter().map(|v| adj[v.0]).collect();
    Ok((total / seqs.len() as f64, grad))
}

/// Central-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;

/// Largest per-coordinate disagreement between the reverse-mode gradient
/// `a` and central differences `f`, measured as
/// `|a − f| / max(|a|, |f|, FD_STEP)`. The floor keeps coordinates whose
/// true derivative vanishes from being judged on difference round-off.
pub fn gradient_check(p: &HmmMixtureParams, data: &[Vec<u8>]) -> Result<f64, LearnError> {
    let (_, g) = nll_grad(p, data)?;
    let x = p.to_vec();
    let mut worst = 0.0f64;
    for (i, a) in g.to_vec().into_iter().enumerate() {
        let mut up = x.clone();
        let mut down = x.clone();
        up[i] += FD_STEP;
        down[i] -= FD_STEP;
        let f = (nll(&p.with_values(&up), data)? - nll(&p.with_values(&down), data)?) / (2.0 * FD_STEP);
        worst = worst.max((a - f).abs() / a.abs().max(f.abs()).max(FD_STEP));
    }
    Ok(worst)
}

fn chain_cores(
    p: &HmmMixtureParams,
    tables: [&[C64]; 3],
) -> Result<(DenseTensor, DenseTensor, DenseTensor), LearnError> {
    let (n, d) = (p.n, p.d_obs);
    let [v, t, h] = tables;
    Ok((
        DenseTensor::new(vec![n], v.to_vec()).map_err(ModelError::from)?,
        DenseTensor::new(vec![n, n], t.to_vec()).map_err(ModelError::from)?,
        DenseTensor::new(vec![n, d], h.to_vec()).map_err(ModelError::from)?,
    ))
}

fn real(xs: &[f64]) -> Vec<C64> {
    xs.iter().map(|&x| C64::new(x, 0.0)).collect()
}

/// The undirected chain of one component as a UGM over variables
/// `o1..oT` (observations) and `h1..hT` (hidden states).
///
/// For the UGM mixture `component` selects `Φ₁` or `Φ₂`; for the DBM
/// mixture only component 1, the magnitude chain `Φ₃`, is undirected.
pub fn build_hmm_ugm(p: &HmmMixtureParams, component: usize) -> Result<Ugm, LearnError> {
    shape(p)?;
    let tables = match (p.family, component) {
        (_, 1) => &p.first,
        (Family::Ugm, 2) => &p.second,
        (Family::Dbm, 2) => return Err(LearnError::WrongFamily("an undirected second component", p.family)),
        _ => return Err(LearnError::Params(format!("component must be 1 or 2, got {component}"))),
    };
    let pot = tables.map(f64::exp);
    let (v, t, h) = chain_cores(p, [&real(&pot.v), &real(&pot.t), &real(&pot.h)])?;
    let o_name = |k: usize| format!("o{k}");
    let h_name = |k: usize| format!("h{k}");
    let mut vars: Vec<Variable> = (1..=p.t_len).map(|k| Variable { name: o_name(k), dim: p.d_obs }).collect();
    vars.extend((1..=p.t_len).map(|k| Variable { name: h_name(k), dim: p.n }));
    let mut cliques = vec![(vec![h_name(1)], v)];
    for k in 1..p.t_len {
        cliques.push((vec![h_name(k), h_name(k + 1)], t.clone()));
    }
    for k in 1..=p.t_len {
        cliques.push((vec![h_name(k), o_name(k)], h.clone()));
    }
    Ok(Ugm::from_cliques(&vars, &cliques)?)
}

/// The Born-machine component of a DBM mixture as a tensor network whose
/// visible edges are `o1..oT` and whose hidden states are copy-tensor
/// nodes `h1..hT` joined to the cores by hidden edges.
pub fn build_hmm_bm(p: &HmmMixtureParams) -> Result<BornMachine, LearnError> {
    shape(p)?;
    if p.family != Family::Dbm {
        return Err(LearnError::WrongFamily("a Born-machine component", p.family));
    }
    let amp = |mag: &[f64], phase: &[f64]| -> Vec<C64> {
        mag.iter()
            .zip(phase)
            .map(|(&m, &q)| C64::from_polar((0.5 * m).exp(), std::f64::consts::TAU * q))
            .collect()
    };
    let (v, t, h) = chain_cores(
        p,
        [
            &amp(&p.first.v, &p.second.v),
            &amp(&p.first.t, &p.second.t),
            &amp(&p.first.h, &p.second.h),
        ],
    )?;
    let len = p.t_len;
    let mut b = NetworkBuilder::new().edge("h1|v", p.n).node("v", &["h1|v"], v);
    for k in 1..len {
        let (a, c) = (format!("h{k}|T{k}"), format!("h{}|T{k}", k + 1));
        b = b.edge(&a, p.n).edge(&c, p.n).node(format!("T{k}"), &[&a, &c], t.clone());
    }
    for k in 1..=len {
        let (e, o) = (format!("h{k}|H{k}"), format!("o{k}"));
        b = b.edge(&e, p.n).edge(&o, p.d_obs).node(format!("H{k}"), &[&e, &o], h.clone());
        let mut incident = vec![e];
        if k == 1 {
            incident.insert(0, "h1|v".to_string());
        } else {
            incident.insert(0, format!("h{k}|T{}", k - 1));
        }
        if k < len {
            incident.push(format!("h{k}|T{k}"));
        }
        let refs: Vec<&str> = incident.iter().map(String::as_str).collect();
        let copy = copy_tensor(refs.len(), p.n).map_err(ModelError::from)?;
        b = b.node(format!("h{k}"), &refs, copy);
    }
    let order: Vec<String> = (1..=len).map(|k| format!("o{k}")).collect();
    let refs: Vec<&str> = order.iter().map(String::as_str).collect();
    Ok(BornMachine::new(b.visible_order(&refs).build())?)
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(dim: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, m: vec![0.0; dim], v: vec![0.0; dim], step: 0 }
    }

    pub fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..x.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub replications: usize,
    pub split_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8, replications: 15, split_fraction: 0.7, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split fraction must lie strictly between 0 and 1");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("step size must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("moment decay rates must lie in [0, 1)");
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }

    /// Seed of replication `r`'s split; independent of family and `N`.
    pub fn split_seed(&self, r: usize) -> u64 {
        derive_seed(self.seed, &[0, r as u64])
    }

    /// Seed of replication `r`'s initial parameters.
    pub fn init_seed(&self, family: Family, n: usize, r: usize) -> u64 {
        let tag = match family {
            Family::Ugm => 1,
            Family::Dbm => 2,
        };
        derive_seed(self.seed, &[1, r as u64, tag, n as u64])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub test_nll: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub epoch: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Epoch 0 holds the initial parameters; epoch `e` follows `e` full-batch steps.
    pub trajectory: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_test_nll: f64,
    pub best_params: HmmMixtureParams,
    pub diverged: Option<Divergence>,
}

/// Full-batch Adam on `train`, tracking held-out NLL on `test`.
///
/// Errors in the initial evaluation are returned; a non-finite NLL later
/// stops training and is reported in [`TrainOutcome::diverged`].
pub fn train(
    p0: &HmmMixtureParams,
    train: &[Vec<u8>],
    test: &[Vec<u8>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, LearnError> {
    cfg.validate()?;
    let s = shape(p0)?;
    if train.is_empty() || test.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let train_seqs = encode(p0, train)?;
    let test_seqs = encode(p0, test)?;
    let eval = |p: &HmmMixtureParams| -> Result<f64, LearnError> {
        let derived = derive(&mut Plain, &p.to_vec(), s);
        let mut total = 0.0;
        for (index, seq) in test_seqs.iter().enumerate() {
            let lp = seq_log_prob(&mut Plain, &derived, s, seq);
            if !lp.is_finite() {
                return Err(LearnError::ZeroProbability { index });
            }
            total -= lp;
        }
        Ok(total / test_seqs.len() as f64)
    };

    let start = Instant::now();
    let mut x = p0.to_vec();
    let (mut train_nll, mut grad) = nll_grad_encoded(p0, s, &train_seqs)?;
    let test_nll = eval(p0)?;
    let mut trajectory = vec![EpochRecord { epoch: 0, train_nll, test_nll, wall_seconds: start.elapsed().as_secs_f64() }];
    let mut best = (0, test_nll, p0.clone());
    let mut diverged = None;
    let mut adam = Adam::new(x.len(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);

    for epoch in 1..=cfg.epochs {
        adam.step(&mut x, &grad);
        let p = p0.with_values(&x);
        let step = (|| -> Result<(f64, Vec<f64>, f64), LearnError> {
            if !x.iter().all(|v| v.is_finite()) {
                return Err(LearnError::Params("non-finite parameter after update".into()));
            }
            let (l, g) = nll_grad_encoded(&p, s, &train_seqs)?;
            let t = eval(&p)?;
            if !(l.is_finite() && t.is_finite()) {
                return Err(LearnError::Params("non-finite NLL".into()));
            }
            Ok((l, g, t))
        })();
        match step {
            Ok((l, g, t)) => {
                train_nll = l;
                grad = g;
                trajectory.push(EpochRecord {
                    epoch,
                    train_nll,
                    test_nll: t,
                    wall_seconds: start.elapsed().as_secs_f64(),
                });
                if t < best.1 {
                    best = (epoch, t, p);
                }
            }
            Err(e) => {
                diverged = Some(Divergence { epoch, message: e.to_string() });
                break;
            }
        }
    }
    Ok(TrainOutcome { trajectory, best_epoch: best.0, best_test_nll: best.1, best_params: best.2, diverged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub family: Family,
    pub n: usize,
    pub replication: usize,
    pub split_seed: u64,
    pub init_seed: u64,
    pub param_count: usize,
    pub outcome: TrainOutcome,
}

/// One replication: seeded split, seeded initialization, training.
pub fn run_replication(
    family: Family,
    n: usize,
    ds: &SequenceDataset,
    cfg: &TrainConfig,
    replication: usize,
) -> Result<ReplicationResult, LearnError> {
    cfg.validate()?;
    let split_seed = cfg.split_seed(replication);
    let init_seed = cfg.init_seed(family, n, replication);
    let (train_set, test_set) = ds.split(cfg.split_fraction, split_seed)?;
    let p0 = init_params(family, n, ds.d_obs, ds.seq_len(), init_seed);
    let outcome = train(&p0, &train_set, &test_set, cfg)?;
    Ok(ReplicationResult { family, n, replication, split_seed, init_seed, param_count: p0.param_count(), outcome })
}

#[cfg(test)]
mod tests;
