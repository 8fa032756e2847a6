//! Rescaled message passing on homogeneous chains, generic over [`Arith`].
//!
//! The "derived" vector is the intermediate between raw parameters and
//! per-sequence likelihoods. For a table size `f = |Φ|` its layout is
//!
//! * UGM mixture: `pot₁ (f) | pot₂ (f) | log Z₁ | log Z₂ | ln λ | ln(1 − λ)`
//! * DBM mixture: `pot₃ (f) | Re a (f) | Im a (f) | log Z₃ | log Z_BM | ln λ | ln(1 − λ)`
//!
//! where `pot = exp(log table)` and `a = √pot · exp(2πiθ)`.

use std::f64::consts::TAU;

use super::params::{table_size, Family};
use super::tape::Arith;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Shape {
    pub family: Family,
    pub n: usize,
    pub d: usize,
    pub t_len: usize,
}

impl Shape {
    fn f(&self) -> usize {
        table_size(self.n, self.d)
    }

    fn tables(&self) -> usize {
        match self.family {
            Family::Ugm => 2,
            Family::Dbm => 3,
        }
    }

    fn scalars(&self) -> usize {
        self.tables() * self.f()
    }

    fn table<'a, V>(&self, derived: &'a [V], k: usize) -> Table<'a, V> {
        let f = self.f();
        Table::split(&derived[k * f..(k + 1) * f], self.n)
    }
}

/// A `(v, T, H)` table set viewed inside a flat slice.
struct Table<'a, V> {
    v: &'a [V],
    t: &'a [V],
    h: &'a [V],
}

impl<'a, V> Table<'a, V> {
    fn split(xs: &'a [V], n: usize) -> Self {
        let (v, rest) = xs.split_at(n);
        let (t, h) = rest.split_at(n * n);
        Self { v, t, h }
    }
}

#[derive(Clone, Copy)]
struct Cx<V> {
    re: V,
    im: V,
}

fn cmul<A: Arith>(o: &mut A, a: Cx<A::V>, b: Cx<A::V>) -> Cx<A::V> {
    let rr = o.mul(a.re, b.re);
    let ii = o.mul(a.im, b.im);
    let ri = o.mul(a.re, b.im);
    let ir = o.mul(a.im, b.re);
    Cx { re: o.sub(rr, ii), im: o.add(ri, ir) }
}

/// `a · conj(b)`.
fn cmul_conj<A: Arith>(o: &mut A, a: Cx<A::V>, b: Cx<A::V>) -> Cx<A::V> {
    let rr = o.mul(a.re, b.re);
    let ii = o.mul(a.im, b.im);
    let ri = o.mul(a.re, b.im);
    let ir = o.mul(a.im, b.re);
    Cx { re: o.add(rr, ii), im: o.sub(ir, ri) }
}

fn csum<A: Arith>(o: &mut A, xs: &[Cx<A::V>]) -> Cx<A::V> {
    let re: Vec<A::V> = xs.iter().map(|x| x.re).collect();
    let im: Vec<A::V> = xs.iter().map(|x| x.im).collect();
    Cx { re: o.sum(&re), im: o.sum(&im) }
}

fn abs2<A: Arith>(o: &mut A, x: Cx<A::V>) -> A::V {
    let a = o.mul(x.re, x.re);
    let b = o.mul(x.im, x.im);
    o.add(a, b)
}

/// Divides `xs` by their sum in place and returns the log of the sum.
fn renormalize<A: Arith>(o: &mut A, xs: &mut [A::V]) -> A::V {
    let s = o.sum(xs);
    for x in xs.iter_mut() {
        *x = o.div(*x, s);
    }
    o.ln(s)
}

/// `ln Σ_h v(h₁) Π T(hₜ, hₜ₊₁) Π e(t, hₜ)` for a non-negative chain.
fn chain_log_mass<A: Arith>(
    o: &mut A,
    tab: &Table<'_, A::V>,
    n: usize,
    len: usize,
    emit: impl Fn(usize, usize) -> A::V,
) -> A::V {
    let mut alpha: Vec<A::V> = (0..n).map(|j| o.mul(tab.v[j], emit(0, j))).collect();
    let mut acc = renormalize(o, &mut alpha);
    for step in 1..len {
        let mut next = Vec::with_capacity(n);
        for j in 0..n {
            let terms: Vec<A::V> = (0..n).map(|i| o.mul(alpha[i], tab.t[i * n + j])).collect();
            let s = o.sum(&terms);
            next.push(o.mul(s, emit(step, j)));
        }
        alpha = next;
        let l = renormalize(o, &mut alpha);
        acc = o.add(acc, l);
    }
    acc
}

fn ugm_log_weight<A: Arith>(o: &mut A, tab: &Table<'_, A::V>, s: Shape, seq: &[usize]) -> A::V {
    let h = tab.h;
    chain_log_mass(o, tab, s.n, s.t_len, |t, j| h[j * s.d + seq[t]])
}

fn ugm_log_z<A: Arith>(o: &mut A, tab: &Table<'_, A::V>, s: Shape) -> A::V {
    let rows: Vec<A::V> = (0..s.n).map(|j| o.sum(&tab.h[j * s.d..(j + 1) * s.d])).collect();
    chain_log_mass(o, tab, s.n, s.t_len, |_, j| rows[j])
}

fn amplitude<V: Copy>(re: &[V], im: &[V], k: usize) -> Cx<V> {
    Cx { re: re[k], im: im[k] }
}

/// `ln |ψ(O)|²` with `ψ(O) = Σ_h a_v(h₁) Π a_T(hₜ, hₜ₊₁) Π a_H(hₜ, oₜ)`.
fn bm_log_amp2<A: Arith>(o: &mut A, re: &Table<'_, A::V>, im: &Table<'_, A::V>, s: Shape, seq: &[usize]) -> A::V {
    let n = s.n;
    let emit = |t: usize, j: usize| amplitude(re.h, im.h, j * s.d + seq[t]);
    let mut alpha: Vec<Cx<A::V>> =
        (0..n).map(|j| cmul(o, amplitude(re.v, im.v, j), emit(0, j))).collect();
    let mut acc = renormalize_cx(o, &mut alpha);
    for step in 1..s.t_len {
        let mut next = Vec::with_capacity(n);
        for j in 0..n {
            let terms: Vec<Cx<A::V>> =
                (0..n).map(|i| cmul(o, alpha[i], amplitude(re.t, im.t, i * n + j))).collect();
            let sum = csum(o, &terms);
            next.push(cmul(o, sum, emit(step, j)));
        }
        alpha = next;
        let l = renormalize_cx(o, &mut alpha);
        acc = o.add(acc, l);
    }
    let psi = csum(o, &alpha);
    let m = abs2(o, psi);
    let l = o.ln(m);
    o.add(acc, l)
}

/// Divides a complex vector by its Euclidean norm and returns the log of
/// the squared norm.
fn renormalize_cx<A: Arith>(o: &mut A, xs: &mut [Cx<A::V>]) -> A::V {
    let sq: Vec<A::V> = xs.iter().map(|&x| abs2(o, x)).collect();
    let s = o.sum(&sq);
    let k = o.sqrt(s);
    for x in xs.iter_mut() {
        *x = Cx { re: o.div(x.re, k), im: o.div(x.im, k) };
    }
    o.ln(s)
}

/// `ln Σ_O |ψ(O)|²` by a density-matrix pass over the doubled chain.
fn bm_log_z<A: Arith>(o: &mut A, re: &Table<'_, A::V>, im: &Table<'_, A::V>, s: Shape) -> A::V {
    let (n, d) = (s.n, s.d);
    // E(h, h') = Σ_o a_H(h, o) conj(a_H(h', o))
    let mut e = Vec::with_capacity(n * n);
    for h in 0..n {
        for hp in 0..n {
            let terms: Vec<Cx<A::V>> = (0..d)
                .map(|x| cmul_conj(o, amplitude(re.h, im.h, h * d + x), amplitude(re.h, im.h, hp * d + x)))
                .collect();
            e.push(csum(o, &terms));
        }
    }
    let mut rho = Vec::with_capacity(n * n);
    for h in 0..n {
        for hp in 0..n {
            let vv = cmul_conj(o, amplitude(re.v, im.v, h), amplitude(re.v, im.v, hp));
            rho.push(cmul(o, vv, e[h * n + hp]));
        }
    }
    let mut acc = renormalize_trace(o, &mut rho, n);
    for _ in 1..s.t_len {
        // m(g, h') = Σ_h a_T(h, g) ρ(h, h')
        let mut m = Vec::with_capacity(n * n);
        for g in 0..n {
            for hp in 0..n {
                let terms: Vec<Cx<A::V>> =
                    (0..n).map(|h| cmul(o, amplitude(re.t, im.t, h * n + g), rho[h * n + hp])).collect();
                m.push(csum(o, &terms));
            }
        }
        // ρ'(g, g') = E(g, g') Σ_h' m(g, h') conj(a_T(h', g'))
        let mut next = Vec::with_capacity(n * n);
        for g in 0..n {
            for gp in 0..n {
                let terms: Vec<Cx<A::V>> = (0..n)
                    .map(|hp| cmul_conj(o, m[g * n + hp], amplitude(re.t, im.t, hp * n + gp)))
                    .collect();
                let sum = csum(o, &terms);
                next.push(cmul(o, sum, e[g * n + gp]));
            }
        }
        rho = next;
        let l = renormalize_trace(o, &mut rho, n);
        acc = o.add(acc, l);
    }
    let total: Vec<A::V> = rho.iter().map(|x| x.re).collect();
    let t = o.sum(&total);
    let l = o.ln(t);
    o.add(acc, l)
}

fn renormalize_trace<A: Arith>(o: &mut A, rho: &mut [Cx<A::V>], n: usize) -> A::V {
    let diag: Vec<A::V> = (0..n).map(|h| rho[h * n + h].re).collect();
    let s = o.sum(&diag);
    for x in rho.iter_mut() {
        *x = Cx { re: o.div(x.re, s), im: o.div(x.im, s) };
    }
    o.ln(s)
}

/// Maps flattened parameters (see `HmmMixtureParams::to_vec`) to the
/// derived vector.
pub(crate) fn derive<A: Arith>(o: &mut A, params: &[A::V], s: Shape) -> Vec<A::V> {
    let f = s.f();
    let first = &params[..f];
    let second = &params[f..2 * f];
    let logit = params[2 * f];
    let mut out: Vec<A::V> = first.iter().map(|&x| o.exp(x)).collect();
    match s.family {
        Family::Ugm => {
            out.extend(second.iter().map(|&x| o.exp(x)));
            let z1 = ugm_log_z(o, &s.table(&out, 0), s);
            let z2 = ugm_log_z(o, &s.table(&out, 1), s);
            out.push(z1);
            out.push(z2);
        }
        Family::Dbm => {
            let mut re = Vec::with_capacity(f);
            let mut im = Vec::with_capacity(f);
            for k in 0..f {
                let half = o.scale(first[k], 0.5);
                let mag = o.exp(half);
                let angle = o.scale(second[k], TAU);
                let c = o.cos(angle);
                let sn = o.sin(angle);
                re.push(o.mul(mag, c));
                im.push(o.mul(mag, sn));
            }
            out.extend(re);
            out.extend(im);
            let z3 = ugm_log_z(o, &s.table(&out, 0), s);
            let zb = bm_log_z(o, &s.table(&out, 1), &s.table(&out, 2), s);
            out.push(z3);
            out.push(zb);
        }
    }
    let neg = o.scale(logit, -1.0);
    let sp_neg = o.softplus(neg);
    let sp = o.softplus(logit);
    out.push(o.scale(sp_neg, -1.0));
    out.push(o.scale(sp, -1.0));
    out
}

/// Log-likelihoods of both mixture components, before weighting.
pub(crate) fn component_log_probs<A: Arith>(o: &mut A, derived: &[A::V], s: Shape, seq: &[usize]) -> (A::V, A::V) {
    let base = s.scalars();
    let first = ugm_log_weight(o, &s.table(derived, 0), s, seq);
    let l1 = o.sub(first, derived[base]);
    let second = match s.family {
        Family::Ugm => ugm_log_weight(o, &s.table(derived, 1), s, seq),
        Family::Dbm => bm_log_amp2(o, &s.table(derived, 1), &s.table(derived, 2), s, seq),
    };
    let l2 = o.sub(second, derived[base + 1]);
    (l1, l2)
}

/// `ln(λ P₁(O) + (1 − λ) P₂(O))`.
pub(crate) fn seq_log_prob<A: Arith>(o: &mut A, derived: &[A::V], s: Shape, seq: &[usize]) -> A::V {
    let base = s.scalars();
    let (l1, l2) = component_log_probs(o, derived, s, seq);
    let a = o.add(derived[base + 2], l1);
    let b = o.add(derived[base + 3], l2);
    o.log_add_exp(a, b)
}
