//! Dynamically built computation graph with reverse-mode gradients.
//!
//! Nodes are appended in evaluation order, so a reverse sweep over the node
//! list is a valid topological order for backpropagation.

use std::collections::BTreeMap;

use crate::tensor::Tensor;
use crate::AutodiffError;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(String),
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddConst(Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    SoftplusScaled(Var, Var),
    SignedPow(Var, Var),
    SignedRoot(Var, Var),
    AbsPow(Var, Var),
    Sum(Var),
    SumList(Vec<Var>),
    LogSumExp(Var),
    Select(Vec<bool>, Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Parameter gradients keyed by parameter name, in name order.
pub type Gradients = BTreeMap<String, Tensor>;

/// A computation graph. Build it by calling the op methods, then call
/// [`Graph::backward`] on a scalar node.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

type Result<T> = std::result::Result<T, AutodiffError>;

fn shape_check(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(AutodiffError::ShapeMismatch { op, left: a.shape(), right: b.shape() });
    }
    Ok(())
}

fn scalar_check(op: &'static str, s: &Tensor) -> Result<()> {
    if s.shape() != (1, 1) {
        return Err(AutodiffError::ShapeMismatch { op, left: s.shape(), right: (1, 1) });
    }
    Ok(())
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^u)` without overflow.
fn log1p_exp(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// `τ·ln(1 + exp(x/τ))`.
pub fn softplus_scaled(x: f64, tau: f64) -> f64 {
    tau * log1p_exp(x / tau)
}

/// Derivative of `sign(x)|x|^p` with respect to `x`, with the convention
/// that the derivative at 0 is 1 when `p == 1` and 0 otherwise.
fn signed_power_slope(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        if p == 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        p * x.abs().powf(p - 1.0)
    }
}

fn ln_abs_or_zero(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().ln()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.all_finite() {
            return Err(AutodiffError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push("constant", value, Op::Constant)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Result<Var> {
        self.constant(Tensor::scalar(value))
    }

    pub fn zeros(&mut self, rows: usize) -> Var {
        self.nodes.push(Node { value: Tensor::zeros(rows, 1), op: Op::Constant });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf. Gradients for it are reported under `name`.
    pub fn param(&mut self, name: &str, value: Tensor) -> Result<Var> {
        self.push("param", value, Op::Param(name.to_string()))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (wm, xm) = (self.value(w), self.value(x));
        if xm.cols() != 1 || wm.cols() != xm.rows() {
            return Err(AutodiffError::ShapeMismatch { op: "matvec", left: wm.shape(), right: xm.shape() });
        }
        let (rows, cols) = wm.shape();
        let mut out = vec![0.0; rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wm.data()[r * cols..(r + 1) * cols];
            *o = row.iter().zip(xm.data()).map(|(a, b)| a * b).sum();
        }
        self.push("matvec", Tensor::column(out), Op::MatVec(w, x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        shape_check("add", self.value(a), self.value(b))?;
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push("add", v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        shape_check("sub", self.value(a), self.value(b))?;
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push("sub", v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        shape_check("mul", self.value(a), self.value(b))?;
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push("mul", v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        shape_check("div", self.value(a), self.value(b))?;
        let v = self.value(a).zip(self.value(b), |x, y| x / y);
        self.push("div", v, Op::Div(a, b))
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x + k);
        self.push("add_const", v, Op::AddConst(a))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x * k);
        self.push("scale", v, Op::Scale(a, k))
    }

    /// Multiplies every entry of `a` by the `1 × 1` node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        scalar_check("mul_scalar", self.value(s))?;
        let k = self.scalar(s);
        let v = self.value(a).map(|x| x * k);
        self.push("mul_scalar", v, Op::MulScalar(a, s))
    }

    /// Vertical concatenation of column vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.cols() != 1 {
                return Err(AutodiffError::ShapeMismatch { op: "concat", left: t.shape(), right: (t.rows(), 1) });
            }
            data.extend_from_slice(t.data());
        }
        self.push("concat", Tensor::column(data), Op::Concat(parts.to_vec()))
    }

    /// Rows `start..start+len` of a column vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.cols() != 1 || start + len > t.rows() {
            return Err(AutodiffError::ShapeMismatch { op: "slice", left: t.shape(), right: (start + len, 1) });
        }
        let v = Tensor::column(t.data()[start..start + len].to_vec());
        self.push("slice", v, Op::Slice(a, start))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::tanh);
        self.push("tanh", v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(sigmoid);
        self.push("sigmoid", v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::exp);
        self.push("exp", v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::ln);
        self.push("log", v, Op::Log(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::abs);
        self.push("abs", v, Op::Abs(a))
    }

    /// `τ·ln(1 + exp(x/τ))` elementwise, with `τ` a `1 × 1` node.
    pub fn softplus_scaled(&mut self, x: Var, tau: Var) -> Result<Var> {
        scalar_check("softplus_scaled", self.value(tau))?;
        let t = self.scalar(tau);
        let v = self.value(x).map(|z| softplus_scaled(z, t));
        self.push("softplus_scaled", v, Op::SoftplusScaled(x, tau))
    }

    /// `sign(x)|x|^β` elementwise, with `β` a `1 × 1` node.
    pub fn signed_pow(&mut self, x: Var, beta: Var) -> Result<Var> {
        scalar_check("signed_pow", self.value(beta))?;
        let b = self.scalar(beta);
        let v = self.value(x).map(|z| sign(z) * z.abs().powf(b));
        self.push("signed_pow", v, Op::SignedPow(x, beta))
    }

    /// `sign(x)|x|^(1/β)` elementwise: the inverse of [`Graph::signed_pow`].
    pub fn signed_root(&mut self, x: Var, beta: Var) -> Result<Var> {
        scalar_check("signed_root", self.value(beta))?;
        let p = 1.0 / self.scalar(beta);
        let v = self.value(x).map(|z| sign(z) * z.abs().powf(p));
        self.push("signed_root", v, Op::SignedRoot(x, beta))
    }

    /// `|x|^β` elementwise.
    pub fn abs_pow(&mut self, x: Var, beta: Var) -> Result<Var> {
        scalar_check("abs_pow", self.value(beta))?;
        let b = self.scalar(beta);
        let v = self.value(x).map(|z| z.abs().powf(b));
        self.push("abs_pow", v, Op::AbsPow(x, beta))
    }

    /// Sum of all entries, as a `1 × 1` node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(a).sum());
        self.push("sum", v, Op::Sum(a))
    }

    /// Elementwise sum of same-shape nodes. `parts` must be nonempty.
    pub fn sum_list(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().expect("sum_list of no nodes");
        let mut acc = self.value(*first).clone();
        for &p in &parts[1..] {
            shape_check("sum_list", &acc, self.value(p))?;
            acc.add_assign(self.value(p));
        }
        self.push("sum_list", acc, Op::SumList(parts.to_vec()))
    }

    /// `ln Σ exp(a_i)` as a `1 × 1` node. `a` must be nonempty.
    pub fn log_sum_exp(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let m = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = t.data().iter().map(|x| (x - m).exp()).sum();
        self.push("log_sum_exp", Tensor::scalar(m + s.ln()), Op::LogSumExp(a))
    }

    /// Elementwise choice: `a[i]` where `mask[i]`, else `b[i]`.
    pub fn select(&mut self, mask: Vec<bool>, a: Var, b: Var) -> Result<Var> {
        shape_check("select", self.value(a), self.value(b))?;
        if mask.len() != self.value(a).len() {
            return Err(AutodiffError::ShapeMismatch { op: "select", left: self.value(a).shape(), right: (mask.len(), 1) });
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let data = mask.iter().enumerate().map(|(i, &m)| if m { ta.data()[i] } else { tb.data()[i] }).collect();
        let v = Tensor::new(ta.rows(), ta.cols(), data);
        self.push("select", v, Op::Select(mask, a, b))
    }

    /// Reverse sweep from the scalar `loss`. Returns gradients of every
    /// parameter leaf reachable from it, summed over leaves sharing a name.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(name) => match out.get_mut(name) {
                    Some(existing) => existing.add_assign(&g),
                    None => {
                        out.insert(name.clone(), g);
                    }
                },
                Op::MatVec(w, x) => {
                    let (wm, xm) = (self.value(*w), self.value(*x));
                    let (rows, cols) = wm.shape();
                    let mut gw = vec![0.0; rows * cols];
                    let mut gx = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g.data()[r];
                        for c in 0..cols {
                            gw[r * cols + c] = gr * xm.data()[c];
                            gx[c] += gr * wm.data()[r * cols + c];
                        }
                    }
                    acc(*w, Tensor::new(rows, cols, gw));
                    acc(*x, Tensor::column(gx));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|x| -x));
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip(self.value(*b), |gi, bi| gi * bi);
                    let gb = g.zip(self.value(*a), |gi, ai| gi * ai);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    let ga = g.zip(bv, |gi, bi| gi / bi);
                    let gb = g.zip(y, |gi, yi| gi * yi).zip(bv, |t, bi| -t / bi);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::AddConst(a) => acc(*a, g),
                Op::Scale(a, k) => {
                    let k = *k;
                    acc(*a, g.map(|x| x * k));
                }
                Op::MulScalar(a, s) => {
                    let k = self.scalar(*s);
                    let gs: f64 = g.data().iter().zip(self.value(*a).data()).map(|(gi, ai)| gi * ai).sum();
                    acc(*a, g.map(|x| x * k));
                    acc(*s, Tensor::scalar(gs));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).rows();
                        acc(p, Tensor::column(g.data()[offset..offset + n].to_vec()));
                        offset += n;
                    }
                }
                Op::Slice(a, start) => {
                    let src = self.value(*a);
                    let mut full = vec![0.0; src.rows()];
                    full[*start..*start + g.len()].copy_from_slice(g.data());
                    acc(*a, Tensor::column(full));
                }
                Op::Tanh(a) => acc(*a, g.zip(y, |gi, yi| gi * (1.0 - yi * yi))),
                Op::Sigmoid(a) => acc(*a, g.zip(y, |gi, yi| gi * yi * (1.0 - yi))),
                Op::Exp(a) => acc(*a, g.zip(y, |gi, yi| gi * yi)),
                Op::Log(a) => acc(*a, g.zip(self.value(*a), |gi, xi| gi / xi)),
                Op::Abs(a) => acc(*a, g.zip(self.value(*a), |gi, xi| gi * sign(xi))),
                Op::SoftplusScaled(x, tau) => {
                    let t = self.scalar(*tau);
                    let xv = self.value(*x);
                    let gx = g.zip(xv, |gi, xi| gi * sigmoid(xi / t));
                    let gt: f64 = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(gi, xi)| {
                            let u = xi / t;
                            gi * (log1p_exp(u) - u * sigmoid(u))
                        })
                        .sum();
                    acc(*x, gx);
                    acc(*tau, Tensor::scalar(gt));
                }
                Op::SignedPow(x, beta) => {
                    let b = self.scalar(*beta);
                    let xv = self.value(*x);
                    let gx = g.zip(xv, |gi, xi| gi * signed_power_slope(xi, b));
                    let gb: f64 =
                        g.data().iter().zip(y.data()).zip(xv.data()).map(|((gi, yi), xi)| gi * yi * ln_abs_or_zero(*xi)).sum();
                    acc(*x, gx);
                    acc(*beta, Tensor::scalar(gb));
                }
                Op::SignedRoot(x, beta) => {
                    let b = self.scalar(*beta);
                    let xv = self.value(*x);
                    let gx = g.zip(xv, |gi, xi| gi * signed_power_slope(xi, 1.0 / b));
                    let gb: f64 = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .zip(xv.data())
                        .map(|((gi, yi), xi)| -gi * yi * ln_abs_or_zero(*xi) / (b * b))
                        .sum();
                    acc(*x, gx);
                    acc(*beta, Tensor::scalar(gb));
                }
                Op::AbsPow(x, beta) => {
                    let b = self.scalar(*beta);
                    let xv = self.value(*x);
                    let gx = g.zip(xv, |gi, xi| {
                        if xi == 0.0 {
                            0.0
                        } else {
                            gi * b * xi.abs().powf(b - 1.0) * sign(xi)
                        }
                    });
                    let gb: f64 =
                        g.data().iter().zip(y.data()).zip(xv.data()).map(|((gi, yi), xi)| gi * yi * ln_abs_or_zero(*xi)).sum();
                    acc(*x, gx);
                    acc(*beta, Tensor::scalar(gb));
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(*a, Tensor::filled(r, c, g.item()));
                }
                Op::SumList(parts) => {
                    for &p in parts {
                        acc(p, g.clone());
                    }
                }
                Op::LogSumExp(a) => {
                    let lse = y.item();
                    let gi = g.item();
                    acc(*a, self.value(*a).map(|x| gi * (x - lse).exp()));
                }
                Op::Select(mask, a, b) => {
                    let ga = Tensor::new(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(mask).map(|(x, &m)| if m { *x } else { 0.0 }).collect(),
                    );
                    let gb = Tensor::new(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(mask).map(|(x, &m)| if m { 0.0 } else { *x }).collect(),
                    );
                    acc(*a, ga);
                    acc(*b, gb);
                }
            }
        }
        for (name, g) in &out {
            if !g.all_finite() {
                return Err(AutodiffError::NonFiniteGradient { name: name.clone() });
            }
        }
        Ok(out)
    }
}
