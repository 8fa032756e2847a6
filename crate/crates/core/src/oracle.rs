//! Slow reference implementations by direct enumeration, used to check the
//! contraction-based code paths.

use std::collections::BTreeMap;

use crate::learn::{Family, HmmMixtureParams, HmmTables};
use crate::network::TensorNetwork;
use crate::tensor::{next_index, DenseTensor, C64};

/// Evaluates a network by summing, for every visible outcome, the product of
/// core elements over all joint assignments of the hidden edges.
pub fn brute_force_evaluate(net: &TensorNetwork) -> DenseTensor {
    let visible: Vec<&str> = net.visible_order().iter().map(String::as_str).collect();
    let hidden: Vec<&str> = net.graph().hidden_edges().map(|e| e.id.as_str()).collect();
    let vis_shape: Vec<usize> = net.visible_dims();
    let hid_shape: Vec<usize> = hidden.iter().map(|e| net.graph().edges[*e].dim).collect();
    let mut out = Vec::with_capacity(vis_shape.iter().product());
    let mut x = vec![0usize; visible.len()];
    loop {
        let mut total = C64::new(0.0, 0.0);
        let mut h = vec![0usize; hidden.len()];
        loop {
            let mut assignment: BTreeMap<&str, usize> = BTreeMap::new();
            for (e, &v) in visible.iter().zip(&x) {
                assignment.insert(e, v);
            }
            for (e, &v) in hidden.iter().zip(&h) {
                assignment.insert(e, v);
            }
            let mut term = C64::new(1.0, 0.0);
            for core in net.cores().values() {
                let idx: Vec<usize> = core.edges.iter().map(|e| assignment[e.as_str()]).collect();
                term *= core.tensor.get(&idx).expect("index in range");
            }
            total += term;
            if !next_index(&mut h, &hid_shape) {
                break;
            }
        }
        out.push(total);
        if !next_index(&mut x, &vis_shape) {
            break;
        }
    }
    DenseTensor::new(vis_shape, out).expect("consistent shape")
}

/// Largest elementwise `|a − b|` divided by the largest magnitude in `b`.
pub fn relative_error(a: &DenseTensor, b: &DenseTensor) -> f64 {
    let scale = b.data().iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
        / scale
}

/// Mixture probability of a 1-based symbol sequence by enumerating every
/// hidden path, and every observation sequence for the normalizers.
pub fn hmm_mixture_prob(p: &HmmMixtureParams, seq: &[u8]) -> f64 {
    let (n, d, len) = (p.n, p.d_obs, p.t_len);
    let obs: Vec<usize> = seq.iter().map(|&s| s as usize - 1).collect();
    let lambda = 1.0 / (1.0 + (-p.logit).exp());
    let weight = |tab: &HmmTables, o: &[usize]| -> f64 {
        let mut total = 0.0;
        let mut h = vec![0usize; len];
        loop {
            let mut w = tab.v[h[0]].exp();
            for t in 0..len {
                if t + 1 < len {
                    w *= tab.t[h[t] * n + h[t + 1]].exp();
                }
                w *= tab.h[h[t] * d + o[t]].exp();
            }
            total += w;
            if !next_index(&mut h, &vec![n; len]) {
                return total;
            }
        }
    };
    let amplitude = |o: &[usize]| -> C64 {
        let a = |log: f64, turns: f64| C64::from_polar((0.5 * log).exp(), std::f64::consts::TAU * turns);
        let (mag, ph) = (&p.first, &p.second);
        let mut total = C64::new(0.0, 0.0);
        let mut h = vec![0usize; len];
        loop {
            let mut w = a(mag.v[h[0]], ph.v[h[0]]);
            for t in 0..len {
                if t + 1 < len {
                    let k = h[t] * n + h[t + 1];
                    w *= a(mag.t[k], ph.t[k]);
                }
                let k = h[t] * d + o[t];
                w *= a(mag.h[k], ph.h[k]);
            }
            total += w;
            if !next_index(&mut h, &vec![n; len]) {
                return total;
            }
        }
    };
    let all_sequences = || {
        let mut out = Vec::new();
        let mut o = vec![0usize; len];
        loop {
            out.push(o.clone());
            if !next_index(&mut o, &vec![d; len]) {
                return out;
            }
        }
    };
    let normalized = |f: &dyn Fn(&[usize]) -> f64| -> f64 {
        let z: f64 = all_sequences().iter().map(|o| f(o)).sum();
        f(&obs) / z
    };
    let p1 = normalized(&|o| weight(&p.first, o));
    let p2 = match p.family {
        Family::Ugm => normalized(&|o| weight(&p.second, o)),
        Family::Dbm => normalized(&|o| amplitude(o).norm_sqr()),
    };
    lambda * p1 + (1.0 - lambda) * p2
}
