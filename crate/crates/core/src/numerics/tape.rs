//! Reverse-mode differentiation over a dynamically recorded operation tape.
//!
//! A [`Tape`] is rebuilt for every forward pass. Nodes are appended in
//! evaluation order, so every parent index is smaller than its child's and a
//! single reverse sweep is a valid topological traversal.
//!
//! Binary elementwise operations broadcast over rows and columns: each of
//! the two matrix dimensions must either agree or be 1 on one side. The
//! backward pass sums the adjoint over broadcast dimensions.

use serde::Serialize;

use super::tensor::{shrink, sigmoid, sign, softsign, Tensor};
use crate::error::{shape_err, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Abs(Var),
    Square(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softsign(Var),
    Relu(Var),
    SoftThreshold {
        x: Var,
        theta: Var,
        exempt: Option<Vec<bool>>,
    },
    SumRows(Var),
    Sum(Var),
    SliceCols {
        a: Var,
        start: usize,
    },
    ConcatCols(Var, Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Abs(..) => "abs",
            Op::Square(..) => "square",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Softsign(..) => "softsign",
            Op::Relu(..) => "relu",
            Op::SoftThreshold { .. } => "soft_threshold",
            Op::SumRows(..) => "sum_rows",
            Op::Sum(..) => "sum",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match *self {
            Op::Leaf | Op::Constant => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::ConcatCols(a, b) => vec![a, b],
            Op::SoftThreshold { x, theta, .. } => vec![x, theta],
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Abs(a)
            | Op::Square(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Softsign(a)
            | Op::Relu(a)
            | Op::SumRows(a)
            | Op::Sum(a)
            | Op::SliceCols { a, .. } => vec![a],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Gradients of a scalar root with respect to every leaf that influenced it.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a leaf, or `None` when the leaf does not reach the root.
    pub fn get(&self, leaf: Var) -> Option<&Tensor> {
        self.grads.get(leaf.0).and_then(Option::as_ref)
    }

    /// Gradient for a leaf, zero-filled to `like`'s shape when unreachable.
    pub fn get_or_zeros(&self, leaf: Var, like: &Tensor) -> Tensor {
        self.get(leaf).cloned().unwrap_or_else(|| {
            let (r, c) = like.dims();
            Tensor::zeros(r, c)
        })
    }
}

#[derive(Serialize)]
struct NodeDump<'a> {
    id: usize,
    op: &'a str,
    shape: (usize, usize),
    parents: Vec<usize>,
}

/// Operation tape for one forward/backward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    adjoints: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
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

    /// Adjoint accumulated for `v` by the last [`Tape::backward`] call.
    pub fn adjoint(&self, v: Var) -> Option<&Tensor> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// Trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value, false)
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, op: Op, value: Tensor) -> Var {
        let rg = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(op, value, rg)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push_op(Op::MatMul(a, b), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = broadcast_zip(self.value(a), self.value(b), |x, y| x + y)?;
        Ok(self.push_op(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = broadcast_zip(self.value(a), self.value(b), |x, y| x - y)?;
        Ok(self.push_op(Op::Sub(a, b), value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = broadcast_zip(self.value(a), self.value(b), |x, y| x * y)?;
        Ok(self.push_op(Op::Mul(a, b), value))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = broadcast_zip(self.value(a), self.value(b), |x, y| x / y)?;
        Ok(self.push_op(Op::Div(a, b), value))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| -x);
        self.push_op(Op::Neg(a), value)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push_op(Op::Scale(a, s), value)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        self.push_op(Op::AddScalar(a), value)
    }

    /// `|x|`; backward uses `sign(x)` with 0 at the origin.
    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::abs);
        self.push_op(Op::Abs(a), value)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        self.push_op(Op::Square(a), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push_op(Op::Sigmoid(a), value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push_op(Op::Tanh(a), value)
    }

    pub fn softsign(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softsign);
        self.push_op(Op::Softsign(a), value)
    }

    /// `max(0, x)`; zero subgradient at the origin.
    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push_op(Op::Relu(a), value)
    }

    /// `sign(x) * max(0, |x| - theta)` with `theta` broadcast against `x`.
    ///
    /// The subgradient is taken as 0 on the kink set `|x| == theta`. Entries
    /// flagged in `exempt` (row-major, same size as `x`) pass through
    /// unchanged. A negative threshold is applied as written.
    pub fn soft_threshold(&mut self, x: Var, theta: Var, exempt: Option<Vec<bool>>) -> Result<Var> {
        let xv = self.value(x);
        if let Some(mask) = &exempt {
            if mask.len() != xv.len() {
                return shape_err("exemption mask does not match input size");
            }
        }
        let mut value = broadcast_zip(xv, self.value(theta), shrink)?;
        if value.dims() != xv.dims() {
            return shape_err("threshold must broadcast to the input shape");
        }
        if let Some(mask) = &exempt {
            for ((o, &keep), &xi) in value.data_mut().iter_mut().zip(mask).zip(xv.data()) {
                if keep {
                    *o = xi;
                }
            }
        }
        Ok(self.push_op(Op::SoftThreshold { x, theta, exempt }, value))
    }

    /// Row sums as an `r x 1` column.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let (r, _) = v.dims();
        let data = (0..r).map(|i| v.row(i).iter().sum()).collect();
        self.push_op(Op::SumRows(a), Tensor::matrix_unchecked(r, 1, data))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push_op(Op::Sum(a), value)
    }

    /// Per-row l1 norm as an `r x 1` column.
    pub fn l1_rows(&mut self, a: Var) -> Var {
        let abs = self.abs(a);
        self.sum_rows(abs)
    }

    pub fn l1_norm(&mut self, a: Var) -> Var {
        let abs = self.abs(a);
        self.sum(abs)
    }

    pub fn squared_norm(&mut self, a: Var) -> Var {
        let sq = self.square(a);
        self.sum(sq)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(a);
        let (r, c) = v.dims();
        if start + len > c {
            return shape_err(format!("column slice {start}..{} of {c} columns", start + len));
        }
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&v.row(i)[start..start + len]);
        }
        Ok(self.push_op(Op::SliceCols { a, start }, Tensor::matrix_unchecked(r, len, data)))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (ra, ca) = av.dims();
        let (rb, cb) = bv.dims();
        if ra != rb {
            return shape_err(format!("concat_cols row mismatch: {ra} vs {rb}"));
        }
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            data.extend_from_slice(av.row(i));
            data.extend_from_slice(bv.row(i));
        }
        Ok(self.push_op(Op::ConcatCols(a, b), Tensor::matrix_unchecked(ra, ca + cb, data)))
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        if self.nodes[root.0].value.len() != 1 {
            return shape_err(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].value.shape()
            ));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[root.0] = Some(Tensor::filled(1, 1, 1.0));

        for id in (0..=root.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.propagate(id, &g, &mut adj)?;
            }
            adj[id] = Some(g);
        }

        let grads = adj
            .iter()
            .zip(&self.nodes)
            .map(|(a, n)| match n.op {
                Op::Leaf => a.clone(),
                _ => None,
            })
            .collect();
        self.adjoints = adj;
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &Tensor, adj: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    accumulate(adj, *a, g.matmul_nt(val(*b))?);
                }
                if wants(*b) {
                    accumulate(adj, *b, val(*a).matmul_tn(g)?);
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    accumulate(adj, *a, reduce_to(g, self.dims(*a)));
                }
                if wants(*b) {
                    accumulate(adj, *b, reduce_to(g, self.dims(*b)));
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    accumulate(adj, *a, reduce_to(g, self.dims(*a)));
                }
                if wants(*b) {
                    accumulate(adj, *b, reduce_to(&g.map(|x| -x), self.dims(*b)));
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let d = broadcast_zip(g, val(*b), |gi, bi| gi * bi)?;
                    accumulate(adj, *a, reduce_to(&d, self.dims(*a)));
                }
                if wants(*b) {
                    let d = broadcast_zip(g, val(*a), |gi, ai| gi * ai)?;
                    accumulate(adj, *b, reduce_to(&d, self.dims(*b)));
                }
            }
            Op::Div(a, b) => {
                if wants(*a) {
                    let d = broadcast_zip(g, val(*b), |gi, bi| gi / bi)?;
                    accumulate(adj, *a, reduce_to(&d, self.dims(*a)));
                }
                if wants(*b) {
                    // d(a/b)/db = -(a/b)/b = -out/b
                    let ob = broadcast_zip(&node.value, val(*b), |o, bi| -o / bi)?;
                    let d = ob.zip_map(g, |x, gi| x * gi)?;
                    accumulate(adj, *b, reduce_to(&d, self.dims(*b)));
                }
            }
            Op::Neg(a) => accumulate(adj, *a, g.map(|x| -x)),
            Op::Scale(a, s) => accumulate(adj, *a, g.map(|x| x * s)),
            Op::AddScalar(a) => accumulate(adj, *a, g.clone()),
            Op::Abs(a) => accumulate(adj, *a, val(*a).zip_map(g, |x, gi| sign(x) * gi)?),
            Op::Square(a) => accumulate(adj, *a, val(*a).zip_map(g, |x, gi| 2.0 * x * gi)?),
            Op::Sigmoid(a) => accumulate(adj, *a, node.value.zip_map(g, |s, gi| s * (1.0 - s) * gi)?),
            Op::Tanh(a) => accumulate(adj, *a, node.value.zip_map(g, |t, gi| (1.0 - t * t) * gi)?),
            Op::Softsign(a) => accumulate(
                adj,
                *a,
                val(*a).zip_map(g, |x, gi| {
                    let d = 1.0 + x.abs();
                    gi / (d * d)
                })?,
            ),
            Op::Relu(a) => accumulate(adj, *a, val(*a).zip_map(g, |x, gi| if x > 0.0 { gi } else { 0.0 })?),
            Op::SoftThreshold { x, theta, exempt } => {
                let xv = val(*x);
                let (r, c) = xv.dims();
                let tv = val(*theta);
                let (tr, tc) = tv.dims();
                let mut dx = vec![0.0; r * c];
                let mut dtheta = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        let k = i * c + j;
                        let xi = xv.data()[k];
                        let gi = g.data()[k];
                        if exempt.as_ref().is_some_and(|m| m[k]) {
                            dx[k] = gi;
                            continue;
                        }
                        let t = tv.data()[(if tr == 1 { 0 } else { i }) * tc + if tc == 1 { 0 } else { j }];
                        if xi.abs() > t {
                            dx[k] = gi;
                            dtheta[k] = -sign(xi) * gi;
                        }
                    }
                }
                if wants(*x) {
                    accumulate(adj, *x, Tensor::matrix_unchecked(r, c, dx));
                }
                if wants(*theta) {
                    let d = Tensor::matrix_unchecked(r, c, dtheta);
                    accumulate(adj, *theta, reduce_to(&d, (tr, tc)));
                }
            }
            Op::SumRows(a) => {
                let (r, c) = self.dims(*a);
                let mut d = Vec::with_capacity(r * c);
                for i in 0..r {
                    d.extend(std::iter::repeat_n(g.data()[i], c));
                }
                accumulate(adj, *a, Tensor::matrix_unchecked(r, c, d));
            }
            Op::Sum(a) => {
                let (r, c) = self.dims(*a);
                accumulate(adj, *a, Tensor::filled(r, c, g.data()[0]));
            }
            Op::SliceCols { a, start } => {
                let (r, c) = self.dims(*a);
                let len = g.cols();
                let mut d = Tensor::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i)[*start..start + len].copy_from_slice(g.row(i));
                }
                accumulate(adj, *a, d);
            }
            Op::ConcatCols(a, b) => {
                let (r, ca) = self.dims(*a);
                let cb = self.dims(*b).1;
                if wants(*a) {
                    let mut d = Vec::with_capacity(r * ca);
                    for i in 0..r {
                        d.extend_from_slice(&g.row(i)[..ca]);
                    }
                    accumulate(adj, *a, Tensor::matrix_unchecked(r, ca, d));
                }
                if wants(*b) {
                    let mut d = Vec::with_capacity(r * cb);
                    for i in 0..r {
                        d.extend_from_slice(&g.row(i)[ca..]);
                    }
                    accumulate(adj, *b, Tensor::matrix_unchecked(r, cb, d));
                }
            }
        }
        Ok(())
    }

    /// JSON dump of the recorded graph (op names, shapes, parents).
    pub fn to_debug_json(&self) -> String {
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| NodeDump {
                id,
                op: n.op.name(),
                shape: n.value.dims(),
                parents: n.op.parents().iter().map(|p| p.0).collect(),
            })
            .collect();
        serde_json::to_string_pretty(&nodes).expect("node dump is always serializable")
    }
}

fn accumulate(adj: &mut [Option<Tensor>], v: Var, d: Tensor) {
    match &mut adj[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(d.data()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(d),
    }
}

fn broadcast_dims(a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| match (x, y) {
        _ if x == y => Some(x),
        (1, _) => Some(y),
        (_, 1) => Some(x),
        _ => None,
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => shape_err(format!("cannot broadcast {}x{} with {}x{}", a.0, a.1, b.0, b.1)),
    }
}

pub(crate) fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let (ar, ac) = a.dims();
    let (br, bc) = b.dims();
    let (r, c) = broadcast_dims((ar, ac), (br, bc))?;
    if (ar, ac) == (br, bc) {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor::matrix_unchecked(r, c, data));
    }
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let arow = a.row(if ar == 1 { 0 } else { i });
        let brow = b.row(if br == 1 { 0 } else { i });
        for j in 0..c {
            let x = arow[if ac == 1 { 0 } else { j }];
            let y = brow[if bc == 1 { 0 } else { j }];
            out.push(f(x, y));
        }
    }
    Ok(Tensor::matrix_unchecked(r, c, out))
}

/// Sum `g` over the dimensions along which `target` was broadcast.
fn reduce_to(g: &Tensor, target: (usize, usize)) -> Tensor {
    let (r, c) = g.dims();
    if (r, c) == target {
        return g.clone();
    }
    let (tr, tc) = target;
    let mut out = vec![0.0; tr * tc];
    for i in 0..r {
        let oi = if tr == 1 { 0 } else { i };
        for (j, v) in g.row(i).iter().enumerate() {
            let oj = if tc == 1 { 0 } else { j };
            out[oi * tc + oj] += v;
        }
    }
    Tensor::matrix_unchecked(tr, tc, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(f: impl Fn(&Tensor) -> f64, at: &Tensor, h: f64) -> Vec<f64> {
        (0..at.len())
            .map(|i| {
                let mut p = at.clone();
                p.data_mut()[i] += h;
                let mut m = at.clone();
                m.data_mut()[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::scalar(3.0));
        let sq = t.square(w);
        let s = t.sum(sq);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[6.0]);
        assert_eq!(t.adjoint(s).unwrap().data(), &[1.0]);
    }

    #[test]
    fn root_must_be_scalar() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::zeros(2, 2));
        assert!(t.backward(w).is_err());
    }

    #[test]
    fn least_squares_gradient_matches_closed_form_and_fd() {
        let phi = Tensor::from_rows(&[vec![1.0, 0.5, -0.3], vec![0.2, -1.0, 0.7]]).unwrap();
        let y = Tensor::from_rows(&[vec![0.3], vec![-0.4]]).unwrap();
        let w0 = Tensor::from_rows(&[vec![0.1], vec![0.2], vec![-0.5]]).unwrap();

        let loss = |w: &Tensor| {
            let r = y.sub(&phi.matmul(w).unwrap()).unwrap();
            0.5 * r.squared_norm()
        };

        let mut t = Tape::new();
        let p = t.constant(phi.clone());
        let yv = t.constant(y.clone());
        let w = t.leaf(w0.clone());
        let pw = t.matmul(p, w).unwrap();
        let r = t.sub(yv, pw).unwrap();
        let n = t.squared_norm(r);
        let l = t.scale(n, 0.5);
        let g = t.backward(l).unwrap();
        let got = g.get(w).unwrap();

        let closed = phi
            .transpose()
            .matmul(&phi.matmul(&w0).unwrap().sub(&y).unwrap())
            .unwrap();
        let fd = finite_diff(loss, &w0, 1e-6);
        for i in 0..3 {
            assert!((got.data()[i] - closed.data()[i]).abs() < 1e-14);
            assert!((got.data()[i] - fd[i]).abs() <= 1e-5 * fd[i].abs().max(1e-8));
        }
    }

    #[test]
    fn broadcasting_reduces_gradients() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let row = t.leaf(Tensor::from_rows(&[vec![10.0, 20.0]]).unwrap());
        let col = t.leaf(Tensor::from_rows(&[vec![2.0], vec![3.0]]).unwrap());
        let s = t.add(a, row).unwrap();
        let m = t.mul(s, col).unwrap();
        let out = t.sum(m);
        let g = t.backward(out).unwrap();
        assert_eq!(g.get(row).unwrap().data(), &[5.0, 5.0]);
        // col_i gradient = sum_j (a_ij + row_j)
        assert_eq!(g.get(col).unwrap().data(), &[33.0, 37.0]);
        assert_eq!(g.get(a).unwrap().data(), &[2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn soft_threshold_kink_and_exemption() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, -2.0, 0.5, 3.0]).unwrap());
        let th = t.leaf(Tensor::scalar(1.0));
        let y = t
            .soft_threshold(x, th, Some(vec![false, false, false, true]))
            .unwrap();
        assert_eq!(t.value(y).data(), &[0.0, -1.0, 0.0, 3.0]);
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        // kink at |x| == theta contributes zero
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(g.get(th).unwrap().data(), &[1.0]);
    }

    #[test]
    fn slice_and_concat_round_trip_gradients() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap());
        let l = t.slice_cols(a, 0, 1).unwrap();
        let r = t.slice_cols(a, 1, 2).unwrap();
        let c = t.concat_cols(r, l).unwrap();
        assert_eq!(t.value(c).data(), &[2.0, 3.0, 1.0]);
        let w = t.constant(Tensor::vector(vec![1.0, 10.0, 100.0]).unwrap());
        let p = t.mul(c, w).unwrap();
        let s = t.sum(p);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[100.0, 1.0, 10.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Tensor::scalar(2.0));
        let w = t.leaf(Tensor::scalar(1.0));
        let p = t.mul(c, w).unwrap();
        let g = t.backward(p).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(w).unwrap().data(), &[2.0]);
    }

    #[test]
    fn debug_dump_lists_parents() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::scalar(1.0));
        let b = t.tanh(a);
        let _ = t.sum(b);
        let dump: serde_json::Value = serde_json::from_str(&t.to_debug_json()).unwrap();
        assert_eq!(dump[1]["op"], "tanh");
        assert_eq!(dump[2]["parents"][0], 1);
    }
}
