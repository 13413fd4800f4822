//! Tape-based reverse-mode differentiation over small dense tensors.
//!
//! Every operation evaluates eagerly and appends a node to the [`Tape`].
//! [`Tape::backward`] walks the tape in reverse insertion order, which is a
//! valid reverse topological order because inputs always precede outputs.
//! Parameter leaves remember their [`ParamId`], and their gradients are
//! accumulated into the owning [`ParamStore`].
//!
//! Shapes follow a 2-axis convention: `[rows, cols]`, with 1-axis tensors
//! treated as a single row and 0-axis tensors as scalars.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{numel, ParamId, ParamStore, Tensor};

/// Norms below this are treated as zero by the cosine similarity op.
pub const COSINE_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMulNT(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Sigmoid(usize),
    Sum(usize),
    Mean(usize),
    SumAbs(usize),
    ColSlice { src: usize, start: usize, len: usize },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    ScaleByCol { src: usize, coeffs: usize, col: usize },
    ColNorms(usize),
    GroupSum { src: usize, group: usize },
    WeightedSum { src: usize, weights: Vec<f64> },
    Cosine(usize, usize),
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
    param: Option<ParamId>,
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        _ => (shape[0], numel(&shape[1..])),
    }
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape node shape is consistent")
    }

    /// Records a constant that never receives gradient.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    pub fn constant_raw(&mut self, shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Var> {
        let shape = shape.into();
        if numel(&shape) != data.len() {
            return Err(Error::shape("constant", &shape, &[data.len()]));
        }
        Ok(self.push(shape, data, Op::Leaf, false))
    }

    /// Records a parameter leaf. It takes part in differentiation only if
    /// the stored tensor has `requires_grad` set.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let t = store.get(id);
        let v = self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            Op::Leaf,
            t.requires_grad(),
        );
        self.nodes[v.0].param = Some(id);
        v
    }

    /// `a · bᵀ` for `a: [n, k]`, `b: [m, k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = dims2(self.shape(a));
        let (m, k2) = dims2(self.shape(b));
        if k != k2 {
            return Err(Error::shape("matmul_nt", &[m, k], &[m, k2]));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let arow = &av[i * k..(i + 1) * k];
            for j in 0..m {
                let brow = &bv[j * k..(j + 1) * k];
                out[i * m + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(vec![n, m], out, Op::MatMulNT(a.0, b.0), ng))
    }

    /// Adds a row vector `b: [m]` to every row of `a: [n, m]`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, m) = dims2(self.shape(a));
        if self.value(b).len() != m {
            return Err(Error::shape("add_row", &[m], self.shape(b)));
        }
        let bv = self.value(b);
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(idx, x)| x + bv[idx % m])
            .collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(vec![n, m], out, Op::AddRow(a.0, b.0), ng))
    }

    /// Multiplies every row of `a: [n, m]` elementwise by `b: [m]`.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, m) = dims2(self.shape(a));
        if self.value(b).len() != m {
            return Err(Error::shape("mul_row", &[m], self.shape(b)));
        }
        let bv = self.value(b);
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(idx, x)| x * bv[idx % m])
            .collect();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(vec![n, m], out, Op::MulRow(a.0, b.0), ng))
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::shape(name, self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a.0, b.0))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        let ng = self.ng(a);
        let shape = self.shape(a).to_vec();
        self.push(shape, out, op, ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x * c, Op::Scale(a.0, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, crate::ops::relu, Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 / (1.0 + libm::exp(-x)), Op::Sigmoid(a.0))
    }

    fn reduce(&mut self, a: Var, value: f64, op: Op) -> Var {
        let ng = self.ng(a);
        self.push(Vec::new(), vec![value], op, ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.reduce(a, s, Op::Sum(a.0))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        self.reduce(a, s, Op::Mean(a.0))
    }

    /// Sum of absolute values (the L1 norm of the flattened tensor).
    pub fn sum_abs(&mut self, a: Var) -> Var {
        let s = crate::ops::l1_norm(self.value(a));
        self.reduce(a, s, Op::SumAbs(a.0))
    }

    /// Columns `start..start+len` of `a: [n, m]`.
    pub fn col_slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (n, m) = dims2(self.shape(a));
        if start + len > m {
            return Err(Error::shape("col_slice", &[n, start + len], &[n, m]));
        }
        let av = self.value(a);
        let mut out = Vec::with_capacity(n * len);
        for i in 0..n {
            out.extend_from_slice(&av[i * m + start..i * m + start + len]);
        }
        let ng = self.ng(a);
        Ok(self.push(vec![n, len], out, Op::ColSlice { src: a.0, start, len }, ng))
    }

    /// Horizontal concatenation of `[n, c_i]` blocks.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts.first().map(|p| dims2(self.shape(*p)).0).unwrap_or(0);
        let mut total = 0;
        for p in parts {
            let (r, c) = dims2(self.shape(*p));
            if r != n {
                return Err(Error::shape("concat_cols", &[n, c], &[r, c]));
            }
            total += c;
        }
        let mut out = vec![0.0; n * total];
        let mut offset = 0;
        for p in parts {
            let (_, c) = dims2(self.shape(*p));
            let pv = self.value(*p);
            for i in 0..n {
                out[i * total + offset..i * total + offset + c].copy_from_slice(&pv[i * c..(i + 1) * c]);
            }
            offset += c;
        }
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(vec![n, total], out, Op::ConcatCols(parts.iter().map(|p| p.0).collect()), ng))
    }

    /// Stacks equally sized flat parts as the rows of a matrix.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = parts.first().map(|p| self.value(*p).len()).unwrap_or(0);
        let mut out = Vec::with_capacity(c * parts.len());
        for p in parts {
            if self.value(*p).len() != c {
                return Err(Error::shape("concat_rows", &[c], self.shape(*p)));
            }
            out.extend_from_slice(self.value(*p));
        }
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(
            vec![parts.len(), c],
            out,
            Op::ConcatRows(parts.iter().map(|p| p.0).collect()),
            ng,
        ))
    }

    /// Scales row `i` of `a: [n, m]` by `coeffs[i, col]` where `coeffs: [n, k]`.
    pub fn scale_by_col(&mut self, a: Var, coeffs: Var, col: usize) -> Result<Var> {
        let (n, m) = dims2(self.shape(a));
        let (cn, k) = dims2(self.shape(coeffs));
        if cn != n || col >= k {
            return Err(Error::shape("scale_by_col", &[n, col + 1], &[cn, k]));
        }
        let av = self.value(a);
        let cv = self.value(coeffs);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let s = cv[i * k + col];
            for j in 0..m {
                out[i * m + j] = av[i * m + j] * s;
            }
        }
        let ng = self.ng(a) || self.ng(coeffs);
        Ok(self.push(
            vec![n, m],
            out,
            Op::ScaleByCol {
                src: a.0,
                coeffs: coeffs.0,
                col,
            },
            ng,
        ))
    }

    /// Euclidean norm of each column of `a: [r, c]`, giving `[c]`.
    pub fn col_norms(&mut self, a: Var) -> Var {
        let (r, c) = dims2(self.shape(a));
        let av = self.value(a);
        let mut out = vec![0.0; c];
        for (j, o) in out.iter_mut().enumerate() {
            let ss: f64 = (0..r).map(|i| av[i * c + j] * av[i * c + j]).sum();
            *o = libm::sqrt(ss);
        }
        let ng = self.ng(a);
        self.push(vec![c], out, Op::ColNorms(a.0), ng)
    }

    /// Sums consecutive runs of `group` elements of a flat tensor.
    pub fn group_sum(&mut self, a: Var, group: usize) -> Result<Var> {
        let av = self.value(a);
        if group == 0 || av.len() % group != 0 {
            return Err(Error::shape("group_sum", &[group], &[av.len()]));
        }
        let out: Vec<f64> = av.chunks(group).map(|c| c.iter().sum()).collect();
        let ng = self.ng(a);
        let len = out.len();
        Ok(self.push(vec![len], out, Op::GroupSum { src: a.0, group }, ng))
    }

    /// `Σ_i weights_i · a_i` with constant weights.
    pub fn weighted_sum(&mut self, a: Var, weights: Vec<f64>) -> Result<Var> {
        if weights.len() != self.value(a).len() {
            return Err(Error::shape("weighted_sum", self.shape(a), &[weights.len()]));
        }
        let s = self.value(a).iter().zip(&weights).map(|(x, w)| x * w).sum();
        Ok(self.reduce(a, s, Op::WeightedSum { src: a.0, weights }))
    }

    /// Cosine similarity of the flattened inputs; 0 when either norm is
    /// below [`COSINE_EPS`].
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let s = crate::ops::cosine_sim(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Vec::new(), vec![s], Op::Cosine(a.0, b.0), ng))
    }

    /// Mean squared error between same-shaped tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// Back-propagates from a scalar `loss`, accumulating gradients into the
    /// `requires_grad` parameters of `store` that the loss depends on.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let root = self.node(loss);
        if root.value.len() != 1 || root.shape.iter().any(|&d| d != 1) {
            return Err(Error::NonScalarLoss(root.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.backprop_node(node, &g, &mut grads);
            if let Some(id) = node.param {
                store.get_mut(id).accumulate_grad(&g);
            }
        }
        Ok(())
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let wants = |i: usize| nodes[i].needs_grad;
        fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], i: usize) -> &'a mut Vec<f64> {
            let len = nodes[i].value.len();
            grads[i].get_or_insert_with(|| vec![0.0; len])
        }

        match &node.op {
            Op::Leaf => {}
            Op::MatMulNT(a, b) => {
                let (n, k) = dims2(&nodes[*a].shape);
                let (m, _) = dims2(&nodes[*b].shape);
                if wants(*a) {
                    let bv = &nodes[*b].value;
                    let ga = acc(grads, nodes, *a);
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let brow = &bv[j * k..(j + 1) * k];
                            for (x, y) in ga[i * k..(i + 1) * k].iter_mut().zip(brow) {
                                *x += gij * y;
                            }
                        }
                    }
                }
                if wants(*b) {
                    let av = &nodes[*a].value;
                    let gb = acc(grads, nodes, *b);
                    for i in 0..n {
                        let arow = &av[i * k..(i + 1) * k];
                        for j in 0..m {
                            let gij = g[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for (x, y) in gb[j * k..(j + 1) * k].iter_mut().zip(arow) {
                                *x += gij * y;
                            }
                        }
                    }
                }
            }
            Op::AddRow(a, b) => {
                let m = nodes[*b].value.len();
                if wants(*a) {
                    let ga = acc(grads, nodes, *a);
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if wants(*b) {
                    let gb = acc(grads, nodes, *b);
                    for (idx, y) in g.iter().enumerate() {
                        gb[idx % m] += y;
                    }
                }
            }
            Op::MulRow(a, b) => {
                let m = nodes[*b].value.len();
                if wants(*a) {
                    let bv = &nodes[*b].value;
                    let ga = acc(grads, nodes, *a);
                    for (idx, y) in g.iter().enumerate() {
                        ga[idx] += y * bv[idx % m];
                    }
                }
                if wants(*b) {
                    let av = &nodes[*a].value;
                    let gb = acc(grads, nodes, *b);
                    for (idx, y) in g.iter().enumerate() {
                        gb[idx % m] += y * av[idx];
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if wants(*a) {
                    let ga = acc(grads, nodes, *a);
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if wants(*b) {
                    let gb = acc(grads, nodes, *b);
                    gb.iter_mut().zip(g).for_each(|(x, y)| *x += sign * y);
                }
            }
            Op::Mul(a, b) => {
                // a and b may be the same node (squares); accumulate in two passes.
                if wants(*a) {
                    let bv = &nodes[*b].value;
                    let ga = acc(grads, nodes, *a);
                    for ((x, y), w) in ga.iter_mut().zip(g).zip(bv) {
                        *x += y * w;
                    }
                }
                if wants(*b) {
                    let av = &nodes[*a].value;
                    let gb = acc(grads, nodes, *b);
                    for ((x, y), w) in gb.iter_mut().zip(g).zip(av) {
                        *x += y * w;
                    }
                }
            }
            Op::Scale(a, c) => {
                if wants(*a) {
                    let ga = acc(grads, nodes, *a);
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += c * y);
                }
            }
            Op::Relu(a) => {
                if wants(*a) {
                    let av = &nodes[*a].value;
                    let ga = acc(grads, nodes, *a);
                    for ((x, y), v) in ga.iter_mut().zip(g).zip(av) {
                        if *v > 0.0 {
                            *x += y;
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                if wants(*a) {
                    let out = &node.value;
                    let ga = acc(grads, nodes, *a);
                    for ((x, y), s) in ga.iter_mut().zip(g).zip(out) {
                        *x += y * s * (1.0 - s);
                    }
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                if wants(*a) {
                    let n = nodes[*a].value.len();
                    let scale = if matches!(node.op, Op::Mean(_)) {
                        g[0] / n as f64
                    } else {
                        g[0]
                    };
                    let ga = acc(grads, nodes, *a);
                    ga.iter_mut().for_each(|x| *x += scale);
                }
            }
            Op::SumAbs(a) => {
                if wants(*a) {
                    let av = &nodes[*a].value;
                    let ga = acc(grads, nodes, *a);
                    for (x, v) in ga.iter_mut().zip(av) {
                        if *v > 0.0 {
                            *x += g[0];
                        } else if *v < 0.0 {
                            *x -= g[0];
                        }
                    }
                }
            }
            Op::ColSlice { src, start, len } => {
                if wants(*src) {
                    let (n, m) = dims2(&nodes[*src].shape);
                    let ga = acc(grads, nodes, *src);
                    for i in 0..n {
                        for j in 0..*len {
                            ga[i * m + start + j] += g[i * len + j];
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (n, total) = dims2(&node.shape);
                let mut offset = 0;
                for p in parts {
                    let (_, c) = dims2(&nodes[*p].shape);
                    if wants(*p) {
                        let gp = acc(grads, nodes, *p);
                        for i in 0..n {
                            for j in 0..c {
                                gp[i * c + j] += g[i * total + offset + j];
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let c = dims2(&node.shape).1;
                for (r, p) in parts.iter().enumerate() {
                    if wants(*p) {
                        let gp = acc(grads, nodes, *p);
                        gp.iter_mut()
                            .zip(&g[r * c..(r + 1) * c])
                            .for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::ScaleByCol { src, coeffs, col } => {
                let (n, m) = dims2(&nodes[*src].shape);
                let k = dims2(&nodes[*coeffs].shape).1;
                if wants(*src) {
                    let cv = &nodes[*coeffs].value;
                    let ga = acc(grads, nodes, *src);
                    for i in 0..n {
                        let s = cv[i * k + col];
                        for j in 0..m {
                            ga[i * m + j] += g[i * m + j] * s;
                        }
                    }
                }
                if wants(*coeffs) {
                    let av = &nodes[*src].value;
                    let gc = acc(grads, nodes, *coeffs);
                    for i in 0..n {
                        let dot: f64 = (0..m).map(|j| g[i * m + j] * av[i * m + j]).sum();
                        gc[i * k + col] += dot;
                    }
                }
            }
            Op::ColNorms(a) => {
                if wants(*a) {
                    let (r, c) = dims2(&nodes[*a].shape);
                    let av = &nodes[*a].value;
                    let norms = &node.value;
                    let ga = acc(grads, nodes, *a);
                    for j in 0..c {
                        if norms[j] == 0.0 {
                            continue;
                        }
                        let s = g[j] / norms[j];
                        for i in 0..r {
                            ga[i * c + j] += s * av[i * c + j];
                        }
                    }
                }
            }
            Op::GroupSum { src, group } => {
                if wants(*src) {
                    let ga = acc(grads, nodes, *src);
                    for (idx, x) in ga.iter_mut().enumerate() {
                        *x += g[idx / group];
                    }
                }
            }
            Op::WeightedSum { src, weights } => {
                if wants(*src) {
                    let ga = acc(grads, nodes, *src);
                    for (x, w) in ga.iter_mut().zip(weights) {
                        *x += g[0] * w;
                    }
                }
            }
            Op::Cosine(a, b) => {
                let av = &nodes[*a].value;
                let bv = &nodes[*b].value;
                let na = libm::sqrt(av.iter().map(|x| x * x).sum::<f64>());
                let nb = libm::sqrt(bv.iter().map(|x| x * x).sum::<f64>());
                if na < COSINE_EPS || nb < COSINE_EPS {
                    return;
                }
                let cos = node.value[0];
                let inv = 1.0 / (na * nb);
                if wants(*a) {
                    let ga = acc(grads, nodes, *a);
                    for i in 0..ga.len() {
                        ga[i] += g[0] * (bv[i] * inv - cos * av[i] / (na * na));
                    }
                }
                if wants(*b) {
                    let gb = acc(grads, nodes, *b);
                    for i in 0..gb.len() {
                        gb[i] += g[0] * (av[i] * inv - cos * bv[i] / (nb * nb));
                    }
                }
            }
        }
    }
}
