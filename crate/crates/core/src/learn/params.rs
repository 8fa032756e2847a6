use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::random::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `λ P(O; Φ₁) + (1 − λ) P(O; Φ₂)` with two undirected HMM chains.
    Ugm,
    /// `λ P(O; Φ₃) + (1 − λ) P(O; Φ₃, Θ₃)`: magnitude chain plus Born-machine chain.
    Dbm,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Ugm => "ugm",
            Family::Dbm => "dbm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ugm" => Some(Family::Ugm),
            "dbm" => Some(Family::Dbm),
            _ => None,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One set of homogeneous chain tables `(v, T, H)`.
///
/// `t[i * n + j]` couples hidden state `i` at step `t` with `j` at `t + 1`;
/// `h[i * d + o]` couples hidden state `i` with observation `o` (zero-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmTables {
    pub v: Vec<f64>,
    pub t: Vec<f64>,
    pub h: Vec<f64>,
}

impl HmmTables {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { v: vec![0.0; n], t: vec![0.0; n * n], h: vec![0.0; n * d] }
    }

    pub fn len(&self) -> usize {
        self.v.len() + self.t.len() + self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened as `v`, then `T`, then `H`.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.v.iter().chain(&self.t).chain(&self.h)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.v.iter_mut().chain(self.t.iter_mut()).chain(self.h.iter_mut())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            v: self.v.iter().map(|&x| f(x)).collect(),
            t: self.t.iter().map(|&x| f(x)).collect(),
            h: self.h.iter().map(|&x| f(x)).collect(),
        }
    }

    fn has_shape(&self, n: usize, d: usize) -> bool {
        self.v.len() == n && self.t.len() == n * n && self.h.len() == n * d
    }
}

/// Parameters of a two-component HMM mixture.
///
/// For [`Family::Ugm`], `first` and `second` are the log-potential tables
/// `Φ₁` and `Φ₂`. For [`Family::Dbm`], `first` is the shared log-magnitude
/// set `Φ₃` and `second` holds the phases `Θ₃` in turns, so a Born-machine
/// core entry is `√φ · exp(2πiθ)`. The mixture weight is `λ = sigmoid(logit)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmMixtureParams {
    pub family: Family,
    pub n: usize,
    pub d_obs: usize,
    pub t_len: usize,
    pub first: HmmTables,
    pub second: HmmTables,
    pub logit: f64,
}

/// `|Φ| = N + N² + N·d` for one table set.
pub fn table_size(n: usize, d: usize) -> usize {
    n + n * n + n * d
}

impl HmmMixtureParams {
    pub fn zeros(family: Family, n: usize, d_obs: usize, t_len: usize) -> Self {
        Self {
            family,
            n,
            d_obs,
            t_len,
            first: HmmTables::zeros(n, d_obs),
            second: HmmTables::zeros(n, d_obs),
            logit: 0.0,
        }
    }

    /// Number of free parameters, `2|Φ| + 1` for both families.
    pub fn param_count(&self) -> usize {
        self.first.len() + self.second.len() + 1
    }

    pub fn lambda(&self) -> f64 {
        1.0 / (1.0 + (-self.logit).exp())
    }

    pub fn is_well_formed(&self) -> bool {
        self.n >= 1
            && self.d_obs >= 1
            && self.t_len >= 1
            && self.first.has_shape(self.n, self.d_obs)
            && self.second.has_shape(self.n, self.d_obs)
            && self.to_vec().iter().all(|x| x.is_finite())
    }

    /// Flattened as `first`, `second`, `logit`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.first.iter().chain(self.second.iter()).copied().collect();
        out.push(self.logit);
        out
    }

    /// Inverse of [`to_vec`](Self::to_vec); `xs` must have `param_count` entries.
    pub fn with_values(&self, xs: &[f64]) -> Self {
        assert_eq!(xs.len(), self.param_count(), "parameter vector length");
        let mut out = self.clone();
        let mut it = xs.iter();
        for slot in out.first.iter_mut().chain(out.second.iter_mut()) {
            *slot = *it.next().unwrap();
        }
        out.logit = *it.next().unwrap();
        out
    }
}

/// Random initial parameters: log-tables and logit are standard normal,
/// phases are uniform on `[0, 1)` turns.
pub fn init_params(family: Family, n: usize, d_obs: usize, t_len: usize, seed: u64) -> HmmMixtureParams {
    let mut r = rng(seed);
    let mut p = HmmMixtureParams::zeros(family, n, d_obs, t_len);
    for x in p.first.iter_mut() {
        *x = r.sample(StandardNormal);
    }
    for x in p.second.iter_mut() {
        *x = match family {
            Family::Ugm => StandardNormal.sample(&mut r),
            Family::Dbm => r.random::<f64>(),
        };
    }
    p.logit = r.sample(StandardNormal);
    p
}
