//! Scalar arithmetic shared by plain evaluation and reverse-mode
//! differentiation.
//!
//! Likelihood code is written once against [`Arith`]; running it with
//! [`Plain`] computes values, running it with [`Tape`] also records a
//! Wengert list that [`Tape::backward`] differentiates.

/// Arithmetic over some scalar representation `V`.
pub trait Arith {
    type V: Copy;

    fn constant(&mut self, x: f64) -> Self::V;
    fn value(&self, a: Self::V) -> f64;
    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn div(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn scale(&mut self, a: Self::V, c: f64) -> Self::V;
    fn add_const(&mut self, a: Self::V, c: f64) -> Self::V;
    fn exp(&mut self, a: Self::V) -> Self::V;
    fn ln(&mut self, a: Self::V) -> Self::V;
    fn sqrt(&mut self, a: Self::V) -> Self::V;
    fn sin(&mut self, a: Self::V) -> Self::V;
    fn cos(&mut self, a: Self::V) -> Self::V;

    fn sum(&mut self, xs: &[Self::V]) -> Self::V {
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = self.add(acc, x);
        }
        acc
    }

    /// `ln(eᵃ + eᵇ)` without overflow.
    fn log_add_exp(&mut self, a: Self::V, b: Self::V) -> Self::V {
        let (hi, lo) = if self.value(a) >= self.value(b) { (a, b) } else { (b, a) };
        let d = self.sub(lo, hi);
        let e = self.exp(d);
        let s = self.add_const(e, 1.0);
        let l = self.ln(s);
        self.add(hi, l)
    }

    /// `ln(1 + eˣ)` without overflow.
    fn softplus(&mut self, x: Self::V) -> Self::V {
        if self.value(x) > 0.0 {
            let n = self.scale(x, -1.0);
            let e = self.exp(n);
            let s = self.add_const(e, 1.0);
            let l = self.ln(s);
            self.add(x, l)
        } else {
            let e = self.exp(x);
            let s = self.add_const(e, 1.0);
            self.ln(s)
        }
    }
}

/// Plain `f64` evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

impl Arith for Plain {
    type V = f64;

    fn constant(&mut self, x: f64) -> f64 {
        x
    }
    fn value(&self, a: f64) -> f64 {
        a
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn div(&mut self, a: f64, b: f64) -> f64 {
        a / b
    }
    fn scale(&mut self, a: f64, c: f64) -> f64 {
        a * c
    }
    fn add_const(&mut self, a: f64, c: f64) -> f64 {
        a + c
    }
    fn exp(&mut self, a: f64) -> f64 {
        a.exp()
    }
    fn ln(&mut self, a: f64) -> f64 {
        a.ln()
    }
    fn sqrt(&mut self, a: f64) -> f64 {
        a.sqrt()
    }
    fn sin(&mut self, a: f64) -> f64 {
        a.sin()
    }
    fn cos(&mut self, a: f64) -> f64 {
        a.cos()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Wengert list of scalar operations with at most two inputs each.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    values: Vec<f64>,
    // unused input slots are (0, 0.0), which contribute nothing
    inputs: Vec<[(usize, f64); 2]>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.values.clear();
        self.inputs.clear();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// An independent input.
    pub fn leaf(&mut self, x: f64) -> Var {
        self.push(x, [(0, 0.0), (0, 0.0)])
    }

    fn push(&mut self, x: f64, inputs: [(usize, f64); 2]) -> Var {
        self.values.push(x);
        self.inputs.push(inputs);
        Var(self.values.len() - 1)
    }

    fn unary(&mut self, x: f64, a: Var, da: f64) -> Var {
        self.push(x, [(a.0, da), (0, 0.0)])
    }

    fn binary(&mut self, x: f64, a: Var, da: f64, b: Var, db: f64) -> Var {
        self.push(x, [(a.0, da), (b.0, db)])
    }

    /// Adjoints of every recorded value, given seed adjoints.
    pub fn backward(&self, seeds: &[(Var, f64)]) -> Vec<f64> {
        let mut adj = vec![0.0; self.values.len()];
        for &(v, s) in seeds {
            adj[v.0] += s;
        }
        for i in (0..self.values.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            for &(p, w) in &self.inputs[i] {
                adj[p] += w * a;
            }
        }
        adj
    }
}

impl Arith for Tape {
    type V = Var;

    fn constant(&mut self, x: f64) -> Var {
        self.leaf(x)
    }
    fn value(&self, a: Var) -> f64 {
        self.values[a.0]
    }
    fn add(&mut self, a: Var, b: Var) -> Var {
        let x = self.value(a) + self.value(b);
        self.binary(x, a, 1.0, b, 1.0)
    }
    fn sub(&mut self, a: Var, b: Var) -> Var {
        let x = self.value(a) - self.value(b);
        self.binary(x, a, 1.0, b, -1.0)
    }
    fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.binary(x * y, a, y, b, x)
    }
    fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.binary(x / y, a, 1.0 / y, b, -x / (y * y))
    }
    fn scale(&mut self, a: Var, c: f64) -> Var {
        let x = self.value(a);
        self.unary(x * c, a, c)
    }
    fn add_const(&mut self, a: Var, c: f64) -> Var {
        let x = self.value(a);
        self.unary(x + c, a, 1.0)
    }
    fn exp(&mut self, a: Var) -> Var {
        let e = self.value(a).exp();
        self.unary(e, a, e)
    }
    fn ln(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(x.ln(), a, 1.0 / x)
    }
    fn sqrt(&mut self, a: Var) -> Var {
        let r = self.value(a).sqrt();
        self.unary(r, a, 0.5 / r)
    }
    fn sin(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(x.sin(), a, x.cos())
    }
    fn cos(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(x.cos(), a, -x.sin())
    }
}
