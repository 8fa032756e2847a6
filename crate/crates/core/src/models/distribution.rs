use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::tensor::next_index;

use super::ModelError;

/// A named discrete random variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub dim: usize,
}

impl Variable {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
        }
    }
}

/// Normalized probability table over ordered variables (row-major, last
/// variable fastest). Outcomes are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    variables: Vec<Variable>,
    table: Vec<f64>,
    /// Log of the mass divided out during normalization.
    log_norm: f64,
    /// Smallest normalized entry before negative round-off was clamped.
    raw_min: f64,
}

impl Distribution {
    /// Normalizes a non-negative table. Entries below zero (round-off) are
    /// clamped, but remembered in [`raw_min`](Self::raw_min).
    pub fn from_unnormalized(variables: Vec<Variable>, values: Vec<f64>) -> Result<Self, ModelError> {
        let expected: usize = variables.iter().map(|v| v.dim).product();
        if expected != values.len() {
            return Err(ModelError::TableSize {
                expected,
                actual: values.len(),
            });
        }
        let total: f64 = values.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(ModelError::Degenerate);
        }
        let raw_min = values.iter().cloned().fold(f64::INFINITY, f64::min) / total;
        let clamped: Vec<f64> = values.iter().map(|&x| x.max(0.0)).collect();
        let mass: f64 = clamped.iter().sum();
        Ok(Self {
            variables,
            table: clamped.into_iter().map(|x| x / mass).collect(),
            log_norm: total.ln(),
            raw_min,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.dim).collect()
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn raw_min(&self) -> f64 {
        self.raw_min
    }

    fn position(&self, name: &str) -> Result<usize, ModelError> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| ModelError::UnknownVariable(name.to_string()))
    }

    pub fn prob(&self, outcome: &[usize]) -> Result<f64, ModelError> {
        let shape = self.shape();
        if outcome.len() != shape.len() || outcome.iter().zip(&shape).any(|(x, d)| x >= d) {
            return Err(ModelError::OutcomeOutOfRange(format!("{outcome:?}")));
        }
        let k = outcome.iter().zip(&shape).fold(0, |acc, (&x, &d)| acc * d + x);
        Ok(self.table[k])
    }

    /// Sums out the named variables.
    pub fn marginalize(&self, names: &[&str]) -> Result<Self, ModelError> {
        let drop: Vec<usize> = names.iter().map(|n| self.position(n)).collect::<Result<_, _>>()?;
        let keep: Vec<usize> = (0..self.variables.len()).filter(|i| !drop.contains(i)).collect();
        self.reduce(&keep, &BTreeMap::new())
    }

    /// Restricts to `assignment` and renormalizes.
    pub fn condition(&self, assignment: &[(&str, usize)]) -> Result<Self, ModelError> {
        let mut fixed = BTreeMap::new();
        for &(n, x) in assignment {
            let i = self.position(n)?;
            if x >= self.variables[i].dim {
                return Err(ModelError::OutcomeOutOfRange(format!("{n}={x}")));
            }
            fixed.insert(i, x);
        }
        let keep: Vec<usize> = (0..self.variables.len()).filter(|i| !fixed.contains_key(i)).collect();
        let reduced = self.reduce(&keep, &fixed)?;
        let mass = reduced.log_norm.exp();
        if mass <= super::ZERO_SUPPORT {
            return Err(ModelError::UndefinedConditional(format!("{assignment:?}")));
        }
        Ok(Self {
            log_norm: self.log_norm + reduced.log_norm,
            ..reduced
        })
    }

    /// Keeps variables `keep` (in that order), restricting `fixed` ones.
    /// The result's `log_norm` is the log of the retained mass.
    fn reduce(&self, keep: &[usize], fixed: &BTreeMap<usize, usize>) -> Result<Self, ModelError> {
        let shape = self.shape();
        let out_vars: Vec<Variable> = keep.iter().map(|&i| self.variables[i].clone()).collect();
        let out_shape: Vec<usize> = out_vars.iter().map(|v| v.dim).collect();
        let mut out = vec![0.0; out_shape.iter().product()];
        let mut idx = vec![0usize; shape.len()];
        let mut k = 0;
        if !self.table.is_empty() {
            loop {
                if fixed.iter().all(|(&i, &x)| idx[i] == x) {
                    let j = keep.iter().fold(0, |acc, &i| acc * shape[i] + idx[i]);
                    out[j] += self.table[k];
                }
                k += 1;
                if !next_index(&mut idx, &shape) {
                    break;
                }
            }
        }
        let mass: f64 = out.iter().sum();
        if mass <= 0.0 {
            return Err(ModelError::UndefinedConditional(format!("{fixed:?}")));
        }
        Ok(Self {
            variables: out_vars,
            table: out.iter().map(|x| x / mass).collect(),
            log_norm: mass.ln(),
            raw_min: self.raw_min,
        })
    }

    /// Reorders variables to `names`.
    pub fn reorder(&self, names: &[&str]) -> Result<Self, ModelError> {
        if names.len() != self.variables.len() {
            return Err(ModelError::UnknownVariable(format!("{names:?}")));
        }
        let keep: Vec<usize> = names.iter().map(|n| self.position(n)).collect::<Result<_, _>>()?;
        let r = self.reduce(&keep, &BTreeMap::new())?;
        Ok(Self {
            log_norm: self.log_norm,
            ..r
        })
    }

    fn same_support(&self, other: &Self) -> Result<(), ModelError> {
        if self.variables != other.variables {
            return Err(ModelError::VariableMismatch(format!(
                "{:?} vs {:?}",
                self.names(),
                other.names()
            )));
        }
        Ok(())
    }

    pub fn total_variation(&self, other: &Self) -> Result<f64, ModelError> {
        self.same_support(other)?;
        Ok(0.5 * self.table.iter().zip(&other.table).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, ModelError> {
        self.same_support(other)?;
        Ok(self
            .table
            .iter()
            .zip(&other.table)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Largest elementwise `|a − b| / max(|a|, |b|)`; entries equal to zero
    /// in both tables contribute nothing.
    pub fn max_rel_diff(&self, other: &Self) -> Result<f64, ModelError> {
        self.same_support(other)?;
        Ok(self
            .table
            .iter()
            .zip(&other.table)
            .map(|(a, b)| {
                let scale = a.abs().max(b.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / scale
                }
            })
            .fold(0.0, f64::max))
    }

    /// CSV with one row per outcome tuple (1-based outcomes) and a trailing
    /// probability column.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for v in &self.variables {
            let _ = write!(s, "{},", v.name);
        }
        s.push_str("probability\n");
        let shape = self.shape();
        let mut idx = vec![0usize; shape.len()];
        for p in &self.table {
            for x in &idx {
                let _ = write!(s, "{},", x + 1);
            }
            let _ = writeln!(s, "{p}");
            next_index(&mut idx, &shape);
        }
        s
    }
}
