//! Reverse-mode automatic differentiation over matrix-valued nodes.
//!
//! Every node holds a [`DenseMatrix`]; scalars are 1×1. Element-wise binary
//! operations broadcast a dimension of size 1 against any size, which covers
//! scalar-times-batch and bias-row additions. Nodes are appended in
//! evaluation order, so a parent always precedes its children and the backward
//! sweep is a single reverse pass.

use super::linalg::DenseMatrix;
use super::NumError;

/// Handle to a node on a [`Tape`].
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
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize),
    Powi(usize, i32),
    Powf(usize, f64),
    Tanh(usize),
    Sin(usize),
    Cos(usize),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    Softplus(usize),
    Sigmoid(usize),
    /// x·Wᵀ (+ b as a broadcast row)
    Affine { x: usize, w: usize, b: Option<usize> },
    Column(usize, usize),
    Rows(usize, Vec<usize>),
    ConcatCols(Vec<usize>),
    Sum(usize),
    Mean(usize),
}

impl Op {
    fn for_each_parent(&self, mut f: impl FnMut(usize)) {
        use Op::*;
        match self {
            Leaf | Const => {}
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
                f(*a);
                f(*b);
            }
            Neg(a) | Scale(a, _) | Offset(a) | Powi(a, _) | Powf(a, _) | Tanh(a) | Sin(a) | Cos(a)
            | Exp(a) | Ln(a) | Sqrt(a) | Softplus(a) | Sigmoid(a) | Column(a, _) | Rows(a, _) | Sum(a)
            | Mean(a) => f(*a),
            Affine { x, w, b } => {
                f(*x);
                f(*w);
                if let Some(b) = b {
                    f(*b);
                }
            }
            ConcatCols(parts) => parts.iter().copied().for_each(f),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: DenseMatrix,
}

/// Append-only computation graph.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("cannot broadcast {a:?} with {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

fn zip_broadcast(a: &DenseMatrix, b: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
    if a.shape() == b.shape() {
        let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| f(*x, *y)).collect();
        return DenseMatrix::from_vec(a.rows(), a.cols(), data);
    }
    let (r, c) = broadcast_shape(a.shape(), b.shape());
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        let (ia, ib) = (if a.rows() == 1 { 0 } else { i }, if b.rows() == 1 { 0 } else { i });
        for j in 0..c {
            let (ja, jb) = (if a.cols() == 1 { 0 } else { j }, if b.cols() == 1 { 0 } else { j });
            data.push(f(a.get(ia, ja), b.get(ib, jb)));
        }
    }
    DenseMatrix::from_vec(r, c, data)
}

fn map(a: &DenseMatrix, f: impl Fn(f64) -> f64) -> DenseMatrix {
    DenseMatrix::from_vec(a.rows(), a.cols(), a.as_slice().iter().map(|x| f(*x)).collect())
}

/// Sums `g` down to `shape` over broadcast dimensions.
fn reduce_to(g: DenseMatrix, shape: (usize, usize)) -> DenseMatrix {
    if g.shape() == shape {
        return g;
    }
    let mut out = DenseMatrix::zeros(shape.0, shape.1);
    let buf = out.as_mut_slice();
    for i in 0..g.rows() {
        let oi = if shape.0 == 1 { 0 } else { i };
        for j in 0..g.cols() {
            let oj = if shape.1 == 1 { 0 } else { j };
            buf[oi * shape.1 + oj] += g.get(i, j);
        }
    }
    out
}

fn accumulate(slot: &mut Option<DenseMatrix>, g: DenseMatrix) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += v;
            }
        }
        None => *slot = Some(g),
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
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

    fn push(&mut self, op: Op, value: DenseMatrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        self.val(v)
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.val(v);
        assert_eq!(m.shape(), (1, 1), "scalar() on a {:?} node", m.shape());
        m.get(0, 0)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.val(v).shape()
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: DenseMatrix) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn scalar_leaf(&mut self, x: f64) -> Var {
        self.leaf(DenseMatrix::scalar(x))
    }

    /// Input with no adjoint of interest; gradients still flow through it but
    /// it is not reported as a leaf.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(Op::Const, value)
    }

    pub fn scalar_const(&mut self, x: f64) -> Var {
        self.constant(DenseMatrix::scalar(x))
    }

    pub fn is_leaf(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = zip_broadcast(self.val(a), self.val(b), |x, y| x + y);
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = zip_broadcast(self.val(a), self.val(b), |x, y| x - y);
        self.push(Op::Sub(a.0, b.0), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = zip_broadcast(self.val(a), self.val(b), |x, y| x * y);
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = zip_broadcast(self.val(a), self.val(b), |x, y| x / y);
        self.push(Op::Div(a.0, b.0), v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = map(self.val(a), |x| -x);
        self.push(Op::Neg(a.0), v)
    }

    /// s·a for a fixed real s.
    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = map(self.val(a), |x| s * x);
        self.push(Op::Scale(a.0, s), v)
    }

    /// a + s for a fixed real s.
    pub fn offset(&mut self, a: Var, s: f64) -> Var {
        let v = map(self.val(a), |x| x + s);
        self.push(Op::Offset(a.0), v)
    }

    pub fn powi(&mut self, a: Var, n: i32) -> Var {
        let v = map(self.val(a), |x| x.powi(n));
        self.push(Op::Powi(a.0, n), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.powi(a, 2)
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let v = map(self.val(a), |x| x.powf(p));
        self.push(Op::Powf(a.0, p), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = map(self.val(a), f64::tanh);
        self.push(Op::Tanh(a.0), v)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = map(self.val(a), f64::sin);
        self.push(Op::Sin(a.0), v)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = map(self.val(a), f64::cos);
        self.push(Op::Cos(a.0), v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = map(self.val(a), f64::exp);
        self.push(Op::Exp(a.0), v)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = map(self.val(a), f64::ln);
        self.push(Op::Ln(a.0), v)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = map(self.val(a), f64::sqrt);
        self.push(Op::Sqrt(a.0), v)
    }

    /// ln(1 + eˣ), evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = map(self.val(a), softplus);
        self.push(Op::Softplus(a.0), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = map(self.val(a), sigmoid);
        self.push(Op::Sigmoid(a.0), v)
    }

    /// `x·Wᵀ + b` with x: n×in, W: out×in, b: 1×out.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (xv, wv) = (self.val(x), self.val(w));
        let (n, k) = xv.shape();
        let (o, k2) = wv.shape();
        assert_eq!(k, k2, "affine: input width {k} vs weight width {k2}");
        let mut data = vec![0.0; n * o];
        let (xs, ws) = (xv.as_slice(), wv.as_slice());
        for i in 0..n {
            let xr = &xs[i * k..(i + 1) * k];
            let orow = &mut data[i * o..(i + 1) * o];
            for (j, out) in orow.iter_mut().enumerate() {
                let wr = &ws[j * k..(j + 1) * k];
                *out = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
            }
        }
        if let Some(b) = b {
            let bv = self.val(b);
            assert_eq!(bv.shape(), (1, o), "affine: bias must be 1x{o}");
            let bs = bv.as_slice();
            for row in data.chunks_mut(o) {
                for (v, bb) in row.iter_mut().zip(bs) {
                    *v += bb;
                }
            }
        }
        self.push(Op::Affine { x: x.0, w: w.0, b: b.map(|b| b.0) }, DenseMatrix::from_vec(n, o, data))
    }

    /// Column `j` as an n×1 node.
    pub fn column(&mut self, a: Var, j: usize) -> Var {
        let v = DenseMatrix::column(&self.val(a).col_vec(j));
        self.push(Op::Column(a.0, j), v)
    }

    /// Selected rows, in the given order (repeats allowed).
    pub fn rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = self.val(a);
        let c = av.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &r in idx {
            data.extend_from_slice(av.row(r));
        }
        let v = DenseMatrix::from_vec(idx.len(), c, data);
        self.push(Op::Rows(a.0, idx.to_vec()), v)
    }

    /// Horizontal concatenation of nodes with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let r = self.val(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|p| self.val(*p).cols()).collect();
        let c: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for p in parts {
                let pv = self.val(*p);
                assert_eq!(pv.rows(), r, "concat_cols: row count mismatch");
                data.extend_from_slice(pv.row(i));
            }
        }
        let v = DenseMatrix::from_vec(r, c, data);
        self.push(Op::ConcatCols(parts.iter().map(|p| p.0).collect()), v)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.val(a).as_slice().iter().sum();
        self.push(Op::Sum(a.0), DenseMatrix::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.val(a);
        let s = m.as_slice().iter().sum::<f64>() / m.len() as f64;
        self.push(Op::Mean(a.0), DenseMatrix::scalar(s))
    }

    /// Mean over rows of the squared row norm: (1/n)·Σᵢ‖aᵢ‖².
    pub fn mean_sq_norm(&mut self, a: Var) -> Var {
        let rows = self.shape(a).0 as f64;
        let sq = self.square(a);
        let s = self.sum(sq);
        self.scale(s, 1.0 / rows)
    }

    /// Checks that every parent index precedes its child up to `upto`.
    fn validate(&self, upto: usize) -> Result<(), NumError> {
        for (i, node) in self.nodes[..=upto].iter().enumerate() {
            let mut bad = None;
            node.op.for_each_parent(|p| {
                if p >= i && bad.is_none() {
                    bad = Some(p);
                }
            });
            if let Some(parent) = bad {
                return Err(NumError::Structural { node: i, parent });
            }
        }
        Ok(())
    }
}

/// Adjoints produced by [`grad`].
#[derive(Clone, Debug)]
pub struct Gradients {
    adjoints: Vec<Option<DenseMatrix>>,
    shapes: Vec<(usize, usize)>,
    leaves: Vec<usize>,
}

impl Gradients {
    /// ∂output/∂v; zeros if `v` does not influence the output.
    pub fn wrt(&self, v: Var) -> DenseMatrix {
        match &self.adjoints[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }

    /// Scalar adjoint of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        assert_eq!(self.shapes[v.0], (1, 1));
        self.adjoints[v.0].as_ref().map_or(0.0, |g| g.get(0, 0))
    }

    /// Appends the adjoint of `v` in row-major order.
    pub fn extend_flat(&self, v: Var, out: &mut Vec<f64>) {
        match &self.adjoints[v.0] {
            Some(g) => out.extend_from_slice(g.as_slice()),
            None => {
                let (r, c) = self.shapes[v.0];
                out.extend(std::iter::repeat_n(0.0, r * c));
            }
        }
    }

    /// Leaf → adjoint for every leaf created before the output node.
    pub fn leaves(&self) -> Vec<(Var, DenseMatrix)> {
        self.leaves.iter().map(|&i| (Var(i), self.wrt(Var(i)))).collect()
    }
}

/// Reverse sweep from a 1×1 `output`. The tape is left untouched.
pub fn grad(tape: &Tape, output: Var) -> Result<Gradients, NumError> {
    let n = output.0 + 1;
    if output.0 >= tape.nodes.len() {
        return Err(NumError::Shape(format!("output node {} not on tape of {} nodes", output.0, tape.nodes.len())));
    }
    if tape.shape(output) != (1, 1) {
        return Err(NumError::Shape(format!("gradient of non-scalar node with shape {:?}", tape.shape(output))));
    }
    tape.validate(output.0)?;
    let mut adj: Vec<Option<DenseMatrix>> = vec![None; n];
    adj[output.0] = Some(DenseMatrix::scalar(1.0));
    for i in (0..n).rev() {
        let Some(g) = adj[i].take() else { continue };
        let node = &tape.nodes[i];
        if node.value.as_slice().iter().any(|v| v.is_nan()) || g.as_slice().iter().any(|v| v.is_nan()) {
            return Err(NumError::NonFinite { node: nan_origin(tape, i) });
        }
        backprop(tape, &node.op, &node.value, &g, &mut adj);
        adj[i] = Some(g);
    }
    let shapes = tape.nodes[..n].iter().map(|nd| nd.value.shape()).collect();
    let leaves = (0..n).filter(|&i| matches!(tape.nodes[i].op, Op::Leaf)).collect();
    Ok(Gradients { adjoints: adj, shapes, leaves })
}

/// Follows NaN-valued parents back to the earliest node that produced one.
fn nan_origin(tape: &Tape, mut node: usize) -> usize {
    loop {
        let mut next = None;
        tape.nodes[node].op.for_each_parent(|p| {
            if next.is_none() && tape.nodes[p].value.as_slice().iter().any(|v| v.is_nan()) {
                next = Some(p);
            }
        });
        match next {
            Some(p) => node = p,
            None => return node,
        }
    }
}

fn unary_local(
    tape: &Tape,
    a: usize,
    g: &DenseMatrix,
    adj: &mut [Option<DenseMatrix>],
    local: impl Fn(f64) -> f64,
) {
    let x = &tape.nodes[a].value;
    let d = DenseMatrix::from_vec(
        x.rows(),
        x.cols(),
        x.as_slice().iter().zip(g.as_slice()).map(|(xv, gv)| gv * local(*xv)).collect(),
    );
    accumulate(&mut adj[a], d);
}

fn unary_from_out(a: usize, out: &DenseMatrix, g: &DenseMatrix, adj: &mut [Option<DenseMatrix>], local: impl Fn(f64) -> f64) {
    let d = DenseMatrix::from_vec(
        out.rows(),
        out.cols(),
        out.as_slice().iter().zip(g.as_slice()).map(|(y, gv)| gv * local(*y)).collect(),
    );
    accumulate(&mut adj[a], d);
}

fn backprop(tape: &Tape, op: &Op, out: &DenseMatrix, g: &DenseMatrix, adj: &mut [Option<DenseMatrix>]) {
    let val = |i: usize| &tape.nodes[i].value;
    match op {
        Op::Leaf | Op::Const => {}
        Op::Add(a, b) => {
            accumulate(&mut adj[*a], reduce_to(g.clone(), val(*a).shape()));
            accumulate(&mut adj[*b], reduce_to(g.clone(), val(*b).shape()));
        }
        Op::Sub(a, b) => {
            accumulate(&mut adj[*a], reduce_to(g.clone(), val(*a).shape()));
            accumulate(&mut adj[*b], reduce_to(map(g, |x| -x), val(*b).shape()));
        }
        Op::Mul(a, b) => {
            let ga = zip_broadcast(g, val(*b), |x, y| x * y);
            let gb = zip_broadcast(g, val(*a), |x, y| x * y);
            accumulate(&mut adj[*a], reduce_to(ga, val(*a).shape()));
            accumulate(&mut adj[*b], reduce_to(gb, val(*b).shape()));
        }
        Op::Div(a, b) => {
            let ga = zip_broadcast(g, val(*b), |x, y| x / y);
            let q = zip_broadcast(out, val(*b), |o, y| o / y);
            let gb = zip_broadcast(g, &q, |x, y| -x * y);
            accumulate(&mut adj[*a], reduce_to(ga, val(*a).shape()));
            accumulate(&mut adj[*b], reduce_to(gb, val(*b).shape()));
        }
        Op::Neg(a) => accumulate(&mut adj[*a], map(g, |x| -x)),
        Op::Scale(a, s) => {
            let s = *s;
            accumulate(&mut adj[*a], map(g, |x| s * x))
        }
        Op::Offset(a) => accumulate(&mut adj[*a], g.clone()),
        Op::Powi(a, n) => {
            let n = *n;
            match n {
                0 => accumulate(&mut adj[*a], DenseMatrix::zeros(g.rows(), g.cols())),
                1 => accumulate(&mut adj[*a], g.clone()),
                2 => unary_local(tape, *a, g, adj, |x| 2.0 * x),
                _ => unary_local(tape, *a, g, adj, |x| f64::from(n) * x.powi(n - 1)),
            }
        }
        Op::Powf(a, p) => {
            let p = *p;
            unary_local(tape, *a, g, adj, |x| p * x.powf(p - 1.0))
        }
        Op::Tanh(a) => unary_from_out(*a, out, g, adj, |y| 1.0 - y * y),
        Op::Sin(a) => unary_local(tape, *a, g, adj, f64::cos),
        Op::Cos(a) => unary_local(tape, *a, g, adj, |x| -x.sin()),
        Op::Exp(a) => unary_from_out(*a, out, g, adj, |y| y),
        Op::Ln(a) => unary_local(tape, *a, g, adj, |x| 1.0 / x),
        Op::Sqrt(a) => unary_from_out(*a, out, g, adj, |y| 0.5 / y),
        Op::Softplus(a) => unary_local(tape, *a, g, adj, sigmoid),
        Op::Sigmoid(a) => unary_from_out(*a, out, g, adj, |y| y * (1.0 - y)),
        Op::Affine { x, w, b } => {
            let (xv, wv) = (val(*x), val(*w));
            let (n, k) = xv.shape();
            let o = wv.rows();
            let (xs, ws, gs) = (xv.as_slice(), wv.as_slice(), g.as_slice());
            // gx = g·W
            let mut gx = vec![0.0; n * k];
            for i in 0..n {
                let gxr = &mut gx[i * k..(i + 1) * k];
                for j in 0..o {
                    let gij = gs[i * o + j];
                    if gij == 0.0 {
                        continue;
                    }
                    for (t, wv) in gxr.iter_mut().zip(&ws[j * k..(j + 1) * k]) {
                        *t += gij * wv;
                    }
                }
            }
            // gW = gᵀ·x
            let mut gw = vec![0.0; o * k];
            for i in 0..n {
                let xr = &xs[i * k..(i + 1) * k];
                for j in 0..o {
                    let gij = gs[i * o + j];
                    if gij == 0.0 {
                        continue;
                    }
                    for (t, xv) in gw[j * k..(j + 1) * k].iter_mut().zip(xr) {
                        *t += gij * xv;
                    }
                }
            }
            accumulate(&mut adj[*x], DenseMatrix::from_vec(n, k, gx));
            accumulate(&mut adj[*w], DenseMatrix::from_vec(o, k, gw));
            if let Some(b) = b {
                accumulate(&mut adj[*b], reduce_to(g.clone(), (1, o)));
            }
        }
        Op::Column(a, j) => {
            let (r, c) = val(*a).shape();
            let mut d = DenseMatrix::zeros(r, c);
            let buf = d.as_mut_slice();
            for i in 0..r {
                buf[i * c + j] = g.get(i, 0);
            }
            accumulate(&mut adj[*a], d);
        }
        Op::Rows(a, idx) => {
            let (r, c) = val(*a).shape();
            let mut d = DenseMatrix::zeros(r, c);
            let buf = d.as_mut_slice();
            for (k, &src) in idx.iter().enumerate() {
                for (t, gv) in buf[src * c..(src + 1) * c].iter_mut().zip(g.row(k)) {
                    *t += gv;
                }
            }
            accumulate(&mut adj[*a], d);
        }
        Op::ConcatCols(parts) => {
            let r = g.rows();
            let mut off = 0;
            for p in parts {
                let c = val(*p).cols();
                let mut d = Vec::with_capacity(r * c);
                for i in 0..r {
                    d.extend_from_slice(&g.row(i)[off..off + c]);
                }
                off += c;
                accumulate(&mut adj[*p], DenseMatrix::from_vec(r, c, d));
            }
        }
        Op::Sum(a) => {
            let (r, c) = val(*a).shape();
            accumulate(&mut adj[*a], DenseMatrix::filled(r, c, g.get(0, 0)));
        }
        Op::Mean(a) => {
            let (r, c) = val(*a).shape();
            accumulate(&mut adj[*a], DenseMatrix::filled(r, c, g.get(0, 0) / (r * c) as f64));
        }
    }
}
