//! Gauge transformations on hidden edges, and the factorization of gauges
//! that preserve non-negativity.

use nalgebra::DMatrix;

use crate::tensor::{contract, DenseTensor, C64};

use super::{NetworkError, TensorNetwork};

/// Gauge matrices above this condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Entries with magnitude at or below this are treated as zero when
/// checking sign patterns.
const SIGN_TOL: f64 = 1e-12;

/// An invertible matrix inserted (with its inverse) on a hidden edge.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeTransform {
    pub edge: String,
    pub matrix: DenseTensor,
}

fn to_nalgebra(m: &DenseTensor) -> Result<DMatrix<C64>, NetworkError> {
    let s = m.shape();
    if s.len() != 2 || s[0] != s[1] {
        return Err(NetworkError::GaugeShape {
            expected: s.first().copied().unwrap_or(0),
            actual: s.to_vec(),
        });
    }
    Ok(DMatrix::from_row_slice(s[0], s[1], m.data()))
}

fn from_nalgebra(m: &DMatrix<C64>) -> DenseTensor {
    let (r, c) = m.shape();
    let data = (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])).collect();
    DenseTensor::new(vec![r, c], data).expect("shape matches")
}

/// 2-norm condition number via singular values.
pub(crate) fn condition_number(m: &DenseTensor) -> Result<f64, NetworkError> {
    let a = to_nalgebra(m)?;
    let sv = a.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

/// Inverse of a square matrix, rejecting ill-conditioned input.
pub fn checked_inverse(m: &DenseTensor) -> Result<DenseTensor, NetworkError> {
    let cond = condition_number(m)?;
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(NetworkError::Singular(cond));
    }
    let inv = to_nalgebra(m)?
        .try_inverse()
        .ok_or(NetworkError::Singular(cond))?;
    Ok(from_nalgebra(&inv))
}

/// Inserts `M` and `M⁻¹` on a hidden edge. The edge's first endpoint `A`
/// becomes `A·M` and the second `B` becomes `M⁻¹·B`, both along the edge's
/// mode.
pub fn apply_gauge(net: &TensorNetwork, t: &GaugeTransform) -> Result<TensorNetwork, NetworkError> {
    let edge = net.graph().edge(&t.edge)?;
    if !edge.is_hidden() {
        return Err(NetworkError::VisibleEdge(t.edge.clone()));
    }
    if t.matrix.shape() != [edge.dim, edge.dim] {
        return Err(NetworkError::GaugeShape {
            expected: edge.dim,
            actual: t.matrix.shape().to_vec(),
        });
    }
    let inverse = checked_inverse(&t.matrix)?;
    let mut out = net.clone();
    for (end, gauge, mode_of_gauge) in [
        (&edge.endpoints[0], &t.matrix, 0usize),
        (&edge.endpoints[1], &inverse, 1usize),
    ] {
        let core = net.core(end)?;
        let mode = core
            .edges
            .iter()
            .position(|e| e == &t.edge)
            .expect("endpoint lists the edge");
        // contract core mode with the gauge's row (A·M) or column (M⁻¹·B) index
        let r = contract(&core.tensor, mode, gauge, mode_of_gauge)?;
        // new mode sits last; move it back into place
        let n = core.tensor.order();
        let perm: Vec<usize> = (0..n)
            .map(|i| match i.cmp(&mode) {
                std::cmp::Ordering::Less => i,
                std::cmp::Ordering::Equal => n - 1,
                std::cmp::Ordering::Greater => i - 1,
            })
            .collect();
        out = out.with_core(end, r.permute(&perm)?)?;
    }
    Ok(out)
}

/// `M = P·D` with `P` a permutation and `D` a positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct NonnegGauge {
    /// `perm[j]` is the row holding the non-zero of column `j`.
    pub perm: Vec<usize>,
    pub diag: Vec<f64>,
}

impl NonnegGauge {
    pub fn permutation_matrix(&self) -> DenseTensor {
        let n = self.perm.len();
        let mut rows = vec![vec![0.0; n]; n];
        for (j, &i) in self.perm.iter().enumerate() {
            rows[i][j] = 1.0;
        }
        DenseTensor::real_matrix(&rows).expect("square")
    }

    pub fn diagonal_matrix(&self) -> DenseTensor {
        let n = self.diag.len();
        let mut rows = vec![vec![0.0; n]; n];
        for (j, &d) in self.diag.iter().enumerate() {
            rows[j][j] = d;
        }
        DenseTensor::real_matrix(&rows).expect("square")
    }
}

/// Factors `m` as a permutation times a positive diagonal. Returns `Ok(None)`
/// when `m` or its inverse has a negative (or non-real) entry.
pub fn factor_nonneg_gauge(m: &DenseTensor) -> Result<Option<NonnegGauge>, NetworkError> {
    let n = m.shape().first().copied().unwrap_or(0);
    let cond = condition_number(m)?;
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(NetworkError::Singular(cond));
    }
    let scale = m.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = SIGN_TOL * scale;
    let entry = |i: usize, j: usize| m.data()[i * n + j];
    let mut perm = Vec::with_capacity(n);
    let mut diag = Vec::with_capacity(n);
    let mut row_used = vec![false; n];
    for j in 0..n {
        let mut hit = None;
        for i in 0..n {
            let z = entry(i, j);
            if z.norm() <= tol {
                continue;
            }
            if z.im.abs() > tol || z.re < 0.0 || hit.is_some() {
                return Ok(None);
            }
            hit = Some((i, z.re));
        }
        let Some((i, d)) = hit else {
            return Ok(None);
        };
        if std::mem::replace(&mut row_used[i], true) {
            return Ok(None);
        }
        perm.push(i);
        diag.push(d);
    }
    Ok(Some(NonnegGauge { perm, diag }))
}
