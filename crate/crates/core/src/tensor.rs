//! Dense complex tensors and the primitive operations of the tensor-network
//! calculus.
//!
//! Elements are stored row-major (last mode fastest). All public mode and
//! index arguments are zero-based.
//!
//! The workhorse is [`contract_labeled`], an einsum-style engine: every
//! operand mode carries a label, labels shared between operands are joined,
//! and a label that appears in no output position is summed once no remaining
//! operand refers to it. A label may appear in any number of operands, which is
//! exactly how copy tensors are applied without materializing them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Errors raised by tensor construction and contraction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("element count {actual} does not match shape {shape:?} (expected {expected})")]
    ElementCount {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("zero-sized mode in shape {0:?}")]
    ZeroDimension(Vec<usize>),
    #[error("mode {mode} out of range for tensor of order {order}")]
    ModeOutOfRange { mode: usize, order: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("copy tensor order must be at least 1")]
    ZeroOrderCopy,
    #[error("mode ({tensor}, {mode}) appears in more than one pairing")]
    RepeatedMode { tensor: usize, mode: usize },
    #[error("tensor index {0} out of range")]
    TensorOutOfRange(usize),
    #[error("index {index:?} out of range for shape {shape:?}")]
    IndexOutOfRange { index: Vec<usize>, shape: Vec<usize> },
    #[error("label {0} has inconsistent dimensions across operands")]
    LabelDimension(usize),
    #[error("output label {0} does not appear in any operand")]
    UnknownOutputLabel(usize),
    #[error("output label {0} repeated")]
    RepeatedOutputLabel(usize),
    #[error("invalid permutation {0:?}")]
    InvalidPermutation(Vec<usize>),
    #[error(
        "contraction step {step} would produce {elements} elements, above the budget of {budget}"
    )]
    BudgetExceeded {
        step: usize,
        elements: usize,
        budget: usize,
    },
}

/// Default cap on the element count of any intermediate tensor.
pub const DEFAULT_BUDGET: usize = 100_000_000;

/// Contraction budget, overridable via the `TNPROB_BUDGET` environment variable.
pub fn default_budget() -> usize {
    std::env::var("TNPROB_BUDGET")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .unwrap_or(DEFAULT_BUDGET)
}

/// An n-mode array of complex scalars.
#[derive(Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl fmt::Debug for DenseTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenseTensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

fn checked_len(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.contains(&0) {
        return Err(TensorError::ZeroDimension(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Advances a row-major multi-index; returns false after the last index.
pub(crate) fn next_index(index: &mut [usize], shape: &[usize]) -> bool {
    for i in (0..shape.len()).rev() {
        index[i] += 1;
        if index[i] < shape[i] {
            return true;
        }
        index[i] = 0;
    }
    false
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self, TensorError> {
        let expected = checked_len(&shape)?;
        if expected != data.len() {
            return Err(TensorError::ElementCount {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_real(shape: Vec<usize>, data: &[f64]) -> Result<Self, TensorError> {
        Self::new(shape, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, TensorError> {
        let n = checked_len(&shape)?;
        Ok(Self {
            shape,
            data: vec![C64::new(0.0, 0.0); n],
        })
    }

    pub fn scalar(value: C64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// The all-ones vector of length `d` (the first-order copy tensor).
    pub fn ones(d: usize) -> Result<Self, TensorError> {
        copy_tensor(1, d)
    }

    /// Standard basis vector `e_x` of length `d`.
    pub fn basis(d: usize, x: usize) -> Result<Self, TensorError> {
        let mut t = Self::zeros(vec![d])?;
        if x >= d {
            return Err(TensorError::IndexOutOfRange {
                index: vec![x],
                shape: vec![d],
            });
        }
        t.data[x] = C64::new(1.0, 0.0);
        Ok(t)
    }

    /// Builds a matrix from rows.
    pub fn matrix(rows: &[Vec<C64>]) -> Result<Self, TensorError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(TensorError::ElementCount {
                    shape: vec![r, c],
                    expected: c,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![r, c], data)
    }

    pub fn real_matrix(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::matrix(&rows)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize, TensorError> {
        if index.len() != self.shape.len() || index.iter().zip(&self.shape).any(|(i, d)| i >= d) {
            return Err(TensorError::IndexOutOfRange {
                index: index.to_vec(),
                shape: self.shape.clone(),
            });
        }
        Ok(index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| acc * d + i))
    }

    pub fn get(&self, index: &[usize]) -> Result<C64, TensorError> {
        Ok(self.data[self.flat_index(index)?])
    }

    /// Value of a 0-tensor (or the first element otherwise).
    pub fn scalar_value(&self) -> C64 {
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn conjugate(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Real parts of all elements.
    pub fn real_parts(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    /// Largest absolute imaginary part.
    pub fn max_imag(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self, TensorError> {
        Self::new(shape, self.data.clone())
    }

    /// Reorders modes: output mode `i` is input mode `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self, TensorError> {
        let n = self.order();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::InvalidPermutation(perm.to_vec()));
        }
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let in_strides = strides(&self.shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut index = vec![0usize; n];
        let mut offset = 0usize;
        loop {
            data.push(self.data[offset]);
            // incremental update of the source offset
            let mut i = n;
            loop {
                if i == 0 {
                    return Ok(Self {
                        shape: out_shape,
                        data,
                    });
                }
                i -= 1;
                index[i] += 1;
                offset += src_strides[i];
                if index[i] < out_shape[i] {
                    break;
                }
                offset -= src_strides[i] * out_shape[i];
                index[i] = 0;
            }
        }
    }

    /// Fixes mode `mode` to index `x`, dropping the mode.
    pub fn select(&self, mode: usize, x: usize) -> Result<Self, TensorError> {
        if mode >= self.order() {
            return Err(TensorError::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        let d = self.shape[mode];
        if x >= d {
            return Err(TensorError::IndexOutOfRange {
                index: vec![x],
                shape: vec![d],
            });
        }
        let outer: usize = self.shape[..mode].iter().product();
        let inner: usize = self.shape[mode + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * d + x) * inner;
            data.extend_from_slice(&self.data[base..base + inner]);
        }
        let mut shape = self.shape.clone();
        shape.remove(mode);
        Ok(Self { shape, data })
    }

    /// Sums over mode `mode`.
    pub fn sum_mode(&self, mode: usize) -> Result<Self, TensorError> {
        let d = *self.shape.get(mode).ok_or(TensorError::ModeOutOfRange {
            mode,
            order: self.order(),
        })?;
        contract(self, mode, &copy_tensor(1, d)?, 0)
    }

    /// True when this is a copy tensor: all modes share one dimension and the
    /// element is 1 exactly when all indices agree, 0 otherwise.
    pub fn is_copy_tensor(&self) -> bool {
        let Some(&d) = self.shape.first() else {
            return false;
        };
        if self.shape.iter().any(|&x| x != d) {
            return false;
        }
        let n = self.order();
        // flat offset of (x, x, ..., x) is x * (1 + d + ... + d^{n-1})
        let diag_step: usize = (0..n).map(|i| d.pow(i as u32)).sum();
        self.data.iter().enumerate().all(|(k, z)| {
            let on_diag = k % diag_step == 0 && k / diag_step < d;
            if on_diag {
                z.re == 1.0 && z.im == 0.0
            } else {
                z.re == 0.0 && z.im == 0.0
            }
        })
    }

    /// Is every element real (imaginary part exactly zero) and non-negative?
    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0 && z.re >= 0.0)
    }
}

/// The order-`n` copy tensor of dimension `d`.
pub fn copy_tensor(n: usize, d: usize) -> Result<DenseTensor, TensorError> {
    if n == 0 {
        return Err(TensorError::ZeroOrderCopy);
    }
    let shape = vec![d; n];
    let mut t = DenseTensor::zeros(shape)?;
    let step: usize = (0..n).map(|i| d.pow(i as u32)).sum();
    for x in 0..d {
        t.data[x * step] = C64::new(1.0, 0.0);
    }
    Ok(t)
}

pub fn tensor_product(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
    let mut data = Vec::with_capacity(a.len() * b.len());
    for &x in &a.data {
        data.extend(b.data.iter().map(|&y| x * y));
    }
    let mut shape = a.shape.clone();
    shape.extend_from_slice(&b.shape);
    DenseTensor { shape, data }
}

pub fn elementwise_product(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor, TensorError> {
    if a.shape != b.shape {
        return Err(TensorError::ShapeMismatch {
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    Ok(DenseTensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

/// Contracts mode `k` of `a` with mode `k2` of `b`. The result lists the
/// remaining modes of `a` followed by the remaining modes of `b`.
pub fn contract(
    a: &DenseTensor,
    k: usize,
    b: &DenseTensor,
    k2: usize,
) -> Result<DenseTensor, TensorError> {
    if k >= a.order() {
        return Err(TensorError::ModeOutOfRange {
            mode: k,
            order: a.order(),
        });
    }
    if k2 >= b.order() {
        return Err(TensorError::ModeOutOfRange {
            mode: k2,
            order: b.order(),
        });
    }
    if a.shape[k] != b.shape[k2] {
        return Err(TensorError::DimensionMismatch {
            left: a.shape[k],
            right: b.shape[k2],
        });
    }
    let pa: Vec<usize> = (0..a.order()).filter(|&i| i != k).chain([k]).collect();
    let pb: Vec<usize> = [k2].into_iter().chain((0..b.order()).filter(|&i| i != k2)).collect();
    let at = a.permute(&pa)?;
    let bt = b.permute(&pb)?;
    let c = a.shape[k];
    let m = a.len() / c;
    let n = b.len() / c;
    let data = matmul(&at.data, &bt.data, m, c, n);
    let mut shape: Vec<usize> = pa[..pa.len() - 1].iter().map(|&i| a.shape[i]).collect();
    shape.extend(pb[1..].iter().map(|&i| b.shape[i]));
    Ok(DenseTensor { shape, data })
}

fn matmul(a: &[C64], b: &[C64], m: usize, k: usize, n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x.re == 0.0 && x.im == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &y) in row.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    out
}

/// A mode of one tensor in a list, `(tensor index, mode index)`.
pub type ModeRef = (usize, usize);

/// Performs all `pairings` among `tensors`. Unpaired modes form the output in
/// (tensor index, mode index) order; disconnected pieces combine by tensor
/// product.
pub fn contract_many(
    tensors: &[DenseTensor],
    pairings: &[(ModeRef, ModeRef)],
) -> Result<DenseTensor, TensorError> {
    let mut labels: Vec<Vec<usize>> = Vec::with_capacity(tensors.len());
    let mut next = 0usize;
    for t in tensors {
        labels.push((next..next + t.order()).collect());
        next += t.order();
    }
    let mut used = BTreeSet::new();
    for &((ta, ma), (tb, mb)) in pairings {
        for (t, m) in [(ta, ma), (tb, mb)] {
            let tensor = tensors.get(t).ok_or(TensorError::TensorOutOfRange(t))?;
            if m >= tensor.order() {
                return Err(TensorError::ModeOutOfRange {
                    mode: m,
                    order: tensor.order(),
                });
            }
            if !used.insert((t, m)) {
                return Err(TensorError::RepeatedMode { tensor: t, mode: m });
            }
        }
        let (da, db) = (tensors[ta].shape[ma], tensors[tb].shape[mb]);
        if da != db {
            return Err(TensorError::DimensionMismatch { left: da, right: db });
        }
        labels[tb][mb] = labels[ta][ma];
    }
    let output: Vec<usize> = tensors
        .iter()
        .enumerate()
        .flat_map(|(t, x)| (0..x.order()).map(move |m| (t, m)))
        .filter(|tm| !used.contains(tm))
        .map(|(t, m)| labels[t][m])
        .collect();
    let operands = tensors.iter().cloned().zip(labels).collect();
    contract_labeled(operands, &output, usize::MAX)
}

/// A tensor whose modes carry labels.
#[derive(Debug, Clone)]
struct Operand {
    tensor: DenseTensor,
    labels: Vec<usize>,
}

impl Operand {
    /// Collapses repeated labels to their diagonal.
    fn dedup_labels(self) -> Result<Self, TensorError> {
        let mut unique: Vec<usize> = Vec::new();
        for &l in &self.labels {
            if !unique.contains(&l) {
                unique.push(l);
            }
        }
        if unique.len() == self.labels.len() {
            return Ok(self);
        }
        let dims: Vec<usize> = unique
            .iter()
            .map(|l| self.tensor.shape[self.labels.iter().position(|x| x == l).unwrap()])
            .collect();
        let mut out = DenseTensor::zeros(dims.clone())?;
        let pos: Vec<usize> = self
            .labels
            .iter()
            .map(|l| unique.iter().position(|u| u == l).unwrap())
            .collect();
        let mut idx = vec![0usize; unique.len()];
        let mut src = vec![0usize; self.labels.len()];
        let mut k = 0;
        loop {
            for (s, &p) in src.iter_mut().zip(&pos) {
                *s = idx[p];
            }
            out.data[k] = self.tensor.get(&src)?;
            k += 1;
            if !next_index(&mut idx, &dims) {
                break;
            }
        }
        Ok(Operand {
            tensor: out,
            labels: unique,
        })
    }

    /// Sums out the given labels.
    fn sum_labels(self, drop: &BTreeSet<usize>) -> Result<Self, TensorError> {
        if !self.labels.iter().any(|l| drop.contains(l)) {
            return Ok(self);
        }
        let keep: Vec<usize> = (0..self.labels.len())
            .filter(|&i| !drop.contains(&self.labels[i]))
            .collect();
        let gone: Vec<usize> = (0..self.labels.len())
            .filter(|&i| drop.contains(&self.labels[i]))
            .collect();
        let perm: Vec<usize> = keep.iter().chain(&gone).copied().collect();
        let t = self.tensor.permute(&perm)?;
        let inner: usize = gone.iter().map(|&i| self.tensor.shape[i]).product();
        let outer = t.len() / inner;
        let data = (0..outer)
            .map(|o| t.data[o * inner..(o + 1) * inner].iter().sum())
            .collect();
        Ok(Operand {
            tensor: DenseTensor {
                shape: keep.iter().map(|&i| self.tensor.shape[i]).collect(),
                data,
            },
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

/// Einsum-style contraction of labeled operands.
///
/// Each operand is a tensor with one label per mode. `output` lists distinct
/// labels in the desired output order; every other label is summed. Pairs are
/// contracted greedily, smallest intermediate first (ties broken by the
/// smallest shared label), and no intermediate may exceed `budget` elements.
pub fn contract_labeled(
    operands: Vec<(DenseTensor, Vec<usize>)>,
    output: &[usize],
    budget: usize,
) -> Result<DenseTensor, TensorError> {
    let mut dims: BTreeMap<usize, usize> = BTreeMap::new();
    let mut ops = Vec::with_capacity(operands.len());
    for (tensor, labels) in operands {
        if labels.len() != tensor.order() {
            return Err(TensorError::ElementCount {
                shape: tensor.shape.clone(),
                expected: tensor.order(),
                actual: labels.len(),
            });
        }
        for (&l, &d) in labels.iter().zip(&tensor.shape) {
            if *dims.entry(l).or_insert(d) != d {
                return Err(TensorError::LabelDimension(l));
            }
        }
        ops.push(Operand { tensor, labels });
    }
    let out_set: BTreeSet<usize> = output.iter().copied().collect();
    if out_set.len() != output.len() {
        let dup = output
            .iter()
            .find(|l| output.iter().filter(|x| x == l).count() > 1)
            .unwrap();
        return Err(TensorError::RepeatedOutputLabel(*dup));
    }
    if let Some(&l) = output.iter().find(|l| !dims.contains_key(l)) {
        return Err(TensorError::UnknownOutputLabel(l));
    }

    // labels referenced only by operand i (and not output) can be summed now
    let private = |ops: &[Operand], i: usize| -> BTreeSet<usize> {
        ops[i]
            .labels
            .iter()
            .copied()
            .filter(|l| {
                !out_set.contains(l)
                    && ops
                        .iter()
                        .enumerate()
                        .all(|(j, o)| j == i || !o.labels.contains(l))
            })
            .collect()
    };
    let mut ops: Vec<Operand> = ops
        .into_iter()
        .map(Operand::dedup_labels)
        .collect::<Result<_, _>>()?;
    for i in 0..ops.len() {
        let drop = private(&ops, i);
        let op = std::mem::replace(
            &mut ops[i],
            Operand {
                tensor: DenseTensor::scalar(C64::new(1.0, 0.0)),
                labels: vec![],
            },
        );
        ops[i] = op.sum_labels(&drop)?;
    }

    let mut step = 0usize;
    while ops.len() > 1 {
        step += 1;
        let (i, j) = choose_pair(&ops, &out_set, &dims);
        let right = ops.swap_remove(j);
        let left = ops.swap_remove(i);
        let summed: BTreeSet<usize> = left
            .labels
            .iter()
            .copied()
            .filter(|l| {
                right.labels.contains(l)
                    && !out_set.contains(l)
                    && !ops.iter().any(|o| o.labels.contains(l))
            })
            .collect();
        let size = result_size(&left, &right, &summed, &dims);
        if size > budget {
            return Err(TensorError::BudgetExceeded {
                step,
                elements: size,
                budget,
            });
        }
        let mut merged = pairwise(left, right, &summed)?;
        // drop labels that became private to the merged operand
        let drop: BTreeSet<usize> = merged
            .labels
            .iter()
            .copied()
            .filter(|l| !out_set.contains(l) && !ops.iter().any(|o| o.labels.contains(l)))
            .collect();
        merged = merged.sum_labels(&drop)?;
        ops.push(merged);
    }

    let last = ops.pop().unwrap_or(Operand {
        tensor: DenseTensor::scalar(C64::new(1.0, 0.0)),
        labels: vec![],
    });
    let perm: Vec<usize> = output
        .iter()
        .map(|l| {
            last.labels
                .iter()
                .position(|x| x == l)
                .ok_or(TensorError::UnknownOutputLabel(*l))
        })
        .collect::<Result<_, _>>()?;
    last.tensor.permute(&perm)
}

fn result_size(
    a: &Operand,
    b: &Operand,
    summed: &BTreeSet<usize>,
    dims: &BTreeMap<usize, usize>,
) -> usize {
    let mut labels: BTreeSet<usize> = a.labels.iter().chain(&b.labels).copied().collect();
    labels.retain(|l| !summed.contains(l));
    labels
        .iter()
        .map(|l| dims[l])
        .fold(1usize, |acc, d| acc.saturating_mul(d))
}

fn choose_pair(
    ops: &[Operand],
    out_set: &BTreeSet<usize>,
    dims: &BTreeMap<usize, usize>,
) -> (usize, usize) {
    let mut best: Option<(usize, usize, usize, usize)> = None; // (size, min shared, i, j)
    for i in 0..ops.len() {
        for j in i + 1..ops.len() {
            let shared: Vec<usize> = ops[i]
                .labels
                .iter()
                .copied()
                .filter(|l| ops[j].labels.contains(l))
                .collect();
            let Some(&min_shared) = shared.iter().min() else {
                continue;
            };
            let summed: BTreeSet<usize> = shared
                .into_iter()
                .filter(|l| {
                    !out_set.contains(l)
                        && ops
                            .iter()
                            .enumerate()
                            .all(|(k, o)| k == i || k == j || !o.labels.contains(l))
                })
                .collect();
            let size = result_size(&ops[i], &ops[j], &summed, dims);
            let key = (size, min_shared, i, j);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
    }
    if let Some((_, _, i, j)) = best {
        return (i, j);
    }
    // no shared labels anywhere: outer product of the two smallest operands
    let mut order: Vec<usize> = (0..ops.len()).collect();
    order.sort_by_key(|&k| (ops[k].tensor.len(), k));
    let (i, j) = (order[0], order[1]);
    (i.min(j), i.max(j))
}

/// Contracts two operands. Result labels: shared-but-kept (batch) labels,
/// then the left operand's own labels, then the right operand's.
fn pairwise(a: Operand, b: Operand, summed: &BTreeSet<usize>) -> Result<Operand, TensorError> {
    let batch: Vec<usize> = a
        .labels
        .iter()
        .copied()
        .filter(|l| b.labels.contains(l) && !summed.contains(l))
        .collect();
    let contracted: Vec<usize> = a
        .labels
        .iter()
        .copied()
        .filter(|l| summed.contains(l))
        .collect();
    let left: Vec<usize> = a
        .labels
        .iter()
        .copied()
        .filter(|l| !b.labels.contains(l))
        .collect();
    let right: Vec<usize> = b
        .labels
        .iter()
        .copied()
        .filter(|l| !a.labels.contains(l))
        .collect();
    let pos = |op: &Operand, l: &usize| op.labels.iter().position(|x| x == l).unwrap();
    let dim = |op: &Operand, ls: &[usize]| -> usize {
        ls.iter().map(|l| op.tensor.shape[pos(op, l)]).product()
    };

    let pa: Vec<usize> = batch
        .iter()
        .chain(&left)
        .chain(&contracted)
        .map(|l| pos(&a, l))
        .collect();
    let pb: Vec<usize> = batch
        .iter()
        .chain(&contracted)
        .chain(&right)
        .map(|l| pos(&b, l))
        .collect();
    let at = a.tensor.permute(&pa)?;
    let bt = b.tensor.permute(&pb)?;
    let nb = dim(&a, &batch);
    let m = dim(&a, &left);
    let k = dim(&a, &contracted);
    let n = dim(&b, &right);
    let mut data = Vec::with_capacity(nb * m * n);
    for s in 0..nb {
        let ablock = &at.data[s * m * k..(s + 1) * m * k];
        let bblock = &bt.data[s * k * n..(s + 1) * k * n];
        data.extend(matmul(ablock, bblock, m, k, n));
    }
    let mut shape: Vec<usize> = batch
        .iter()
        .chain(&left)
        .map(|l| a.tensor.shape[pos(&a, l)])
        .collect();
    shape.extend(right.iter().map(|l| b.tensor.shape[pos(&b, l)]));
    let labels = batch.into_iter().chain(left).chain(right).collect();
    Ok(Operand {
        tensor: DenseTensor { shape, data },
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> DenseTensor {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        DenseTensor::new(shape, data).unwrap()
    }

    fn max_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
        assert_eq!(a.shape(), b.shape());
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn matrix_vector_contraction() {
        let m = DenseTensor::real_matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let v = DenseTensor::from_real(vec![2], &[1.0, 0.0]).unwrap();
        let r = contract(&m, 1, &v, 0).unwrap();
        assert_eq!(r.shape(), &[2]);
        assert_eq!(r.data(), &[c(1.0), c(3.0)]);
    }

    #[test]
    fn copy_tensor_copies_basis_vectors() {
        let d3 = copy_tensor(3, 2).unwrap();
        let e2 = DenseTensor::basis(2, 1).unwrap();
        let r = contract(&d3, 0, &e2, 0).unwrap();
        assert_eq!(r, tensor_product(&e2, &e2));
    }

    #[test]
    fn copy_tensor_on_non_basis_vector_does_not_factorize() {
        let d3 = copy_tensor(3, 2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = DenseTensor::from_real(vec![2], &[s, s]).unwrap();
        let r = contract(&d3, 0, &u, 0).unwrap();
        // r = diag(s, s), a rank-2 matrix; u ⊗ u has rank 1
        assert!(max_diff(&r, &tensor_product(&u, &u)) > 0.1);
    }

    #[test]
    fn contraction_dimension_mismatch() {
        let a = DenseTensor::zeros(vec![2, 3]).unwrap();
        let b = DenseTensor::zeros(vec![2]).unwrap();
        assert!(matches!(
            contract(&a, 1, &b, 0),
            Err(TensorError::DimensionMismatch { left: 3, right: 2 })
        ));
        assert!(matches!(
            contract(&a, 2, &b, 0),
            Err(TensorError::ModeOutOfRange { .. })
        ));
    }

    #[test]
    fn contraction_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let r = random_tensor(&mut rng, vec![2, 3]);
            let s = random_tensor(&mut rng, vec![3, 4]);
            let t = random_tensor(&mut rng, vec![4, 2]);
            let left = contract(&contract(&r, 1, &s, 0).unwrap(), 1, &t, 0).unwrap();
            let right = contract(&r, 1, &contract(&s, 1, &t, 0).unwrap(), 0).unwrap();
            assert!(max_diff(&left, &right) <= 1e-12 * left.norm2().max(1.0));
        }
    }

    #[test]
    fn contraction_is_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a1 = random_tensor(&mut rng, vec![3, 2, 2]);
        let a2 = random_tensor(&mut rng, vec![3, 2, 2]);
        let b = random_tensor(&mut rng, vec![2, 4]);
        let (x, y) = (C64::new(0.3, -1.2), C64::new(-2.0, 0.5));
        let combo = DenseTensor::new(
            vec![3, 2, 2],
            a1.data().iter().zip(a2.data()).map(|(p, q)| x * p + y * q).collect(),
        )
        .unwrap();
        let lhs = contract(&combo, 1, &b, 0).unwrap();
        let r1 = contract(&a1, 1, &b, 0).unwrap();
        let r2 = contract(&a2, 1, &b, 0).unwrap();
        let rhs = DenseTensor::new(
            lhs.shape().to_vec(),
            r1.data().iter().zip(r2.data()).map(|(p, q)| x * p + y * q).collect(),
        )
        .unwrap();
        assert!(max_diff(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn contract_many_matrix_chain() {
        let a = DenseTensor::real_matrix(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        let b = DenseTensor::real_matrix(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let cm = DenseTensor::real_matrix(&[vec![2.0, 0.0], vec![1.0, 3.0]]).unwrap();
        let r = contract_many(&[a.clone(), b.clone(), cm.clone()], &[((0, 1), (1, 0)), ((1, 1), (2, 0))])
            .unwrap();
        let expected = contract(&contract(&a, 1, &b, 0).unwrap(), 1, &cm, 0).unwrap();
        assert_eq!(r, expected);
    }

    #[test]
    fn contract_many_without_pairings_is_tensor_product() {
        let u = DenseTensor::from_real(vec![2], &[1.0, 2.0]).unwrap();
        let v = DenseTensor::from_real(vec![3], &[3.0, 4.0, 5.0]).unwrap();
        let r = contract_many(&[u.clone(), v.clone()], &[]).unwrap();
        assert_eq!(r, tensor_product(&u, &v));
    }

    #[test]
    fn contract_many_rejects_bad_pairings() {
        let u = DenseTensor::zeros(vec![2, 2]).unwrap();
        let v = DenseTensor::zeros(vec![3]).unwrap();
        assert!(matches!(
            contract_many(&[u.clone(), u.clone()], &[((0, 1), (1, 0)), ((0, 1), (1, 1))]),
            Err(TensorError::RepeatedMode { .. })
        ));
        assert!(matches!(
            contract_many(&[u, v], &[((0, 1), (1, 0))]),
            Err(TensorError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn contract_many_trace() {
        let m = DenseTensor::real_matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let r = contract_many(&[m], &[((0, 0), (0, 1))]).unwrap();
        assert_eq!(r.order(), 0);
        assert_eq!(r.scalar_value(), c(5.0));
    }

    /// Enumeration oracle: element of a tensor given a closure over indices.
    fn tabulate(shape: &[usize], f: impl Fn(&[usize]) -> f64) -> DenseTensor {
        let mut data = Vec::new();
        let mut idx = vec![0; shape.len()];
        loop {
            data.push(c(f(&idx)));
            if !next_index(&mut idx, shape) {
                break;
            }
        }
        DenseTensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn copy_tensor_networks_fuse() {
        for d in 1..=4 {
            // Δ3 -- Δ3 joined on one edge has four open edges
            let d3 = copy_tensor(3, d).unwrap();
            let r = contract_many(&[d3.clone(), d3.clone()], &[((0, 2), (1, 0))]).unwrap();
            assert_eq!(r, copy_tensor(4, d).unwrap());
            // Δ3 -- Δ4 gives five open edges
            let d4 = copy_tensor(4, d).unwrap();
            let r = contract_many(&[d3.clone(), d4], &[((0, 0), (1, 3))]).unwrap();
            assert_eq!(r, copy_tensor(5, d).unwrap());
            // a triangle of Δ3s joined pairwise leaves three open edges
            let r = contract_many(
                &[d3.clone(), d3.clone(), d3.clone()],
                &[((0, 1), (1, 0)), ((1, 1), (2, 0)), ((2, 1), (0, 2))],
            );
            // the loop contributes a closed copy network on top of Δ3, but it
            // is still connected: fusion gives Δ3
            assert_eq!(r.unwrap(), copy_tensor(3, d).unwrap());
            let oracle = tabulate(&[d; 3], |i| if i[0] == i[1] && i[1] == i[2] { 1.0 } else { 0.0 });
            assert_eq!(copy_tensor(3, d).unwrap(), oracle);
        }
    }

    #[test]
    fn copy_tensor_low_orders() {
        assert_eq!(copy_tensor(1, 3).unwrap().data(), &[c(1.0); 3]);
        let id = copy_tensor(2, 3).unwrap();
        let oracle = tabulate(&[3, 3], |i| if i[0] == i[1] { 1.0 } else { 0.0 });
        assert_eq!(id, oracle);
        let d3 = copy_tensor(3, 2).unwrap();
        let nz: Vec<usize> = (0..8).filter(|&k| d3.data()[k] != c(0.0)).collect();
        assert_eq!(nz, vec![0, 7]);
        assert_eq!(copy_tensor(0, 2), Err(TensorError::ZeroOrderCopy));
        assert!(d3.is_copy_tensor());
        assert!(!DenseTensor::from_real(vec![2, 2], &[1.0, 0.0, 0.0, 2.0]).unwrap().is_copy_tensor());
    }

    #[test]
    fn tensor_products() {
        let two = DenseTensor::scalar(c(2.0));
        let v = DenseTensor::from_real(vec![2], &[1.0, 3.0]).unwrap();
        assert_eq!(tensor_product(&two, &v).data(), &[c(2.0), c(6.0)]);
        let e1 = DenseTensor::basis(2, 0).unwrap();
        assert_eq!(
            tensor_product(&e1, &e1),
            DenseTensor::real_matrix(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap()
        );
        // independent joint table
        let pa = [0.25, 0.75];
        let pb = [0.2, 0.3, 0.5];
        let joint = tensor_product(
            &DenseTensor::from_real(vec![2], &pa).unwrap(),
            &DenseTensor::from_real(vec![3], &pb).unwrap(),
        );
        let oracle = tabulate(&[2, 3], |i| pa[i[0]] * pb[i[1]]);
        assert_eq!(joint, oracle);
    }

    #[test]
    fn elementwise_products() {
        let a = DenseTensor::from_real(vec![2], &[1.0, 2.0]).unwrap();
        let b = DenseTensor::from_real(vec![2], &[3.0, 4.0]).unwrap();
        assert_eq!(elementwise_product(&a, &b).unwrap().data(), &[c(3.0), c(8.0)]);
        assert!(elementwise_product(&a, &DenseTensor::zeros(vec![3]).unwrap()).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_tensor(&mut rng, vec![3, 2]);
        let sq = elementwise_product(&z, &z.conjugate()).unwrap();
        for (x, y) in sq.data().iter().zip(z.data()) {
            assert_eq!(x.im, 0.0);
            assert!((x.re - y.norm_sqr()).abs() < 1e-15);
        }

        // the copy-tensor route: each shared mode passes through a Δ3
        let w = random_tensor(&mut rng, vec![3, 2]);
        let d3a = copy_tensor(3, 3).unwrap();
        let d3b = copy_tensor(3, 2).unwrap();
        let net = contract_many(
            &[z.clone(), w.clone(), d3a, d3b],
            &[((0, 0), (2, 0)), ((1, 0), (2, 1)), ((0, 1), (3, 0)), ((1, 1), (3, 1))],
        )
        .unwrap();
        let direct = elementwise_product(&z, &w).unwrap();
        assert!(max_diff(&net, &direct) < 1e-15);
    }

    #[test]
    fn norms_and_conjugation() {
        let v = DenseTensor::from_real(vec![2], &[3.0, 4.0]).unwrap();
        assert_eq!(v.norm2(), 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = random_tensor(&mut rng, vec![2, 2, 3]);
        assert_eq!(z.conjugate().conjugate(), z);
        let sum: f64 = z.data().iter().map(|x| x.norm_sqr()).sum();
        assert!((z.norm2().powi(2) - sum).abs() < 1e-12);
        assert_eq!(DenseTensor::zeros(vec![3]).unwrap().norm2(), 0.0);
    }

    #[test]
    fn permute_and_select() {
        let t = DenseTensor::from_real(vec![2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let p = t.permute(&[1, 0]).unwrap();
        assert_eq!(p.shape(), &[3, 2]);
        assert_eq!(p.get(&[2, 1]).unwrap(), c(6.0));
        assert_eq!(t.select(1, 2).unwrap().data(), &[c(3.0), c(6.0)]);
        assert_eq!(t.sum_mode(0).unwrap().data(), &[c(5.0), c(7.0), c(9.0)]);
        assert!(t.permute(&[0, 0]).is_err());
    }

    #[test]
    fn labeled_hyperedges_and_budget() {
        // three vectors sharing one label: Σ_x a_x b_x c_x
        let a = DenseTensor::from_real(vec![2], &[1.0, 2.0]).unwrap();
        let b = DenseTensor::from_real(vec![2], &[3.0, 4.0]).unwrap();
        let cc = DenseTensor::from_real(vec![2], &[5.0, 6.0]).unwrap();
        let r = contract_labeled(
            vec![(a.clone(), vec![0]), (b.clone(), vec![0]), (cc, vec![0])],
            &[],
            usize::MAX,
        )
        .unwrap();
        assert_eq!(r.scalar_value(), c(1.0 * 3.0 * 5.0 + 2.0 * 4.0 * 6.0));
        let big = contract_labeled(vec![(a, vec![0]), (b, vec![1])], &[0, 1], 3);
        assert!(matches!(big, Err(TensorError::BudgetExceeded { step: 1, elements: 4, budget: 3 })));
    }
}
