//! Reverse-mode differentiation over small dense matrices.
//!
//! Every node holds a row-major `rows x cols` value. Rows are batch entries,
//! so most operations act row-wise and a whole batch of imagined rollouts is
//! one graph. Nodes are appended in evaluation order, which makes the node
//! index a valid topological order for the backward sweep.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a recorded node. Only valid on the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    index: usize,
    tape: u64,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `y = x W^T + b`, with `W` (out x in, row-major) and `b` read out of a
    /// flat parameter node at the given offsets.
    Linear {
        x: usize,
        params: usize,
        w_off: usize,
        b_off: usize,
        n_in: usize,
        n_out: usize,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `a * scale + shift`; only the scale matters for the backward pass.
    Affine(usize, f64),
    /// Per-column `a * scale[c] + shift[c]`.
    ColumnAffine(usize, Vec<f64>),
    /// Elementwise product with a constant matrix of the same shape.
    MulConst(usize, Vec<f64>),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Sin(usize),
    Cos(usize),
    Square(usize),
    Softplus(usize),
    Recip(usize),
    /// Angle wrap into `[-pi, pi)`; piecewise identity so its derivative is 1.
    WrapAngle(usize),
    SumCols(usize),
    SumAll(usize),
    MeanAll(usize),
    SliceCols(usize, usize),
    ConcatCols(Vec<usize>),
    /// `rows x 1` repeated across `cols` columns.
    BroadcastCols(usize),
    /// Gathers the listed rows, in order.
    SelectRows(usize, Vec<usize>),
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Linear { x, params, .. } => vec![*x, *params],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::ConcatCols(parts) => parts.clone(),
            Op::Affine(a, _)
            | Op::ColumnAffine(a, _)
            | Op::MulConst(a, _)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Square(a)
            | Op::Softplus(a)
            | Op::Recip(a)
            | Op::WrapAngle(a)
            | Op::SumCols(a)
            | Op::SumAll(a)
            | Op::MeanAll(a)
            | Op::SliceCols(a, _)
            | Op::BroadcastCols(a)
            | Op::SelectRows(a, _) => vec![*a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    /// False for constants and for nodes that depend only on constants; the
    /// reverse sweep never accumulates into them.
    needs_grad: bool,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints of every node with respect to one scalar output.
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
    sizes: Vec<usize>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when the output does not depend on it.
    pub fn wrt(&self, v: Var) -> Result<Vec<f64>> {
        if v.tape != self.tape || v.index >= self.grads.len() {
            return Err(Error::Usage(format!("node {} was not recorded on this tape", v.index)));
        }
        Ok(match &self.grads[v.index] {
            Some(g) => g.clone(),
            None => vec![0.0; self.sizes[v.index]],
        })
    }
}

pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    x - two_pi * ((x + std::f64::consts::PI) / two_pi).floor()
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
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
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(v.tape, self.id, "variable recorded on a different tape");
        v.index
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        let needs_grad = op.inputs().iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
            needs_grad,
        });
        Var {
            index: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    /// Records an input or parameter matrix. Gradients are available for leaves.
    pub fn leaf(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(value.len(), rows * cols, "leaf shape mismatch");
        let v = self.push(Op::Leaf, rows, cols, value);
        self.nodes[v.index].needs_grad = true;
        v
    }

    /// Records a matrix that is never differentiated. Work downstream of
    /// constants alone is skipped in the reverse sweep.
    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        assert_eq!(value.len(), rows * cols, "constant shape mismatch");
        self.push(Op::Leaf, rows, cols, value)
    }

    pub fn row(&mut self, value: &[f64]) -> Var {
        self.leaf(1, value.len(), value.to_vec())
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[self.idx(v)].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[self.idx(v)];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let n = &self.nodes[self.idx(v)];
        assert_eq!(n.value.len(), 1, "not a scalar node");
        n.value[0]
    }

    fn unary(&mut self, a: Var, op: fn(usize) -> Op, f: impl Fn(f64) -> f64) -> Var {
        let i = self.idx(a);
        let (r, c) = (self.nodes[i].rows, self.nodes[i].cols);
        let value = self.nodes[i].value.iter().map(|&x| f(x)).collect();
        self.push(op(i), r, c, value)
    }

    fn binary(&mut self, a: Var, b: Var, op: fn(usize, usize) -> Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (i, j) = (self.idx(a), self.idx(b));
        let (na, nb) = (&self.nodes[i], &self.nodes[j]);
        assert_eq!((na.rows, na.cols), (nb.rows, nb.cols), "shape mismatch in elementwise op");
        let (r, c) = (na.rows, na.cols);
        let value = na.value.iter().zip(&nb.value).map(|(&x, &y)| f(x, y)).collect();
        self.push(op(i, j), r, c, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul, |x, y| x * y)
    }

    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let i = self.idx(a);
        let (r, c) = (self.nodes[i].rows, self.nodes[i].cols);
        let value = self.nodes[i].value.iter().map(|&x| x * scale + shift).collect();
        self.push(Op::Affine(i, scale), r, c, value)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    pub fn column_affine(&mut self, a: Var, scale: &[f64], shift: &[f64]) -> Var {
        let i = self.idx(a);
        let (r, c) = (self.nodes[i].rows, self.nodes[i].cols);
        assert!(scale.len() == c && shift.len() == c, "column affine width mismatch");
        let v = &self.nodes[i].value;
        let value = (0..r * c).map(|k| v[k] * scale[k % c] + shift[k % c]).collect();
        self.push(Op::ColumnAffine(i, scale.to_vec()), r, c, value)
    }

    pub fn mul_const(&mut self, a: Var, k: Vec<f64>) -> Var {
        let i = self.idx(a);
        let (r, c) = (self.nodes[i].rows, self.nodes[i].cols);
        assert_eq!(k.len(), r * c, "constant shape mismatch");
        let value = self.nodes[i].value.iter().zip(&k).map(|(x, y)| x * y).collect();
        self.push(Op::MulConst(i, k), r, c, value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh, f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp, f64::exp)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log, f64::ln)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sin, f64::sin)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, Op::Cos, f64::cos)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square, |x| x * x)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus, softplus)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.unary(a, Op::Recip, |x| 1.0 / x)
    }

    pub fn wrap_angle(&mut self, a: Var) -> Var {
        self.unary(a, Op::WrapAngle, wrap_angle)
    }

    /// Row sums: `rows x cols -> rows x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let i = self.idx(a);
        let (r, c) = (self.nodes[i].rows, self.nodes[i].cols);
        let v = &self.nodes[i].value;
        let value = (0..r).map(|row| v[row * c..(row + 1) * c].iter().sum()).collect();
        self.push(Op::SumCols(i), r, 1, value)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let i = self.idx(a);
        let s = self.nodes[i].value.iter().sum();
        self.push(Op::SumAll(i), 1, 1, vec![s])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let i = self.idx(a);
        let n = self.nodes[i].value.len() as f64;
        let s: f64 = self.nodes[i].value.iter().sum();
        self.push(Op::MeanAll(i), 1, 1, vec![s / n])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let i = self.idx(a);
        let (r, c) = (self.nodes[i].rows, self.nodes[i].cols);
        assert!(start + len <= c, "column slice out of range");
        let v = &self.nodes[i].value;
        let mut value = Vec::with_capacity(r * len);
        for row in 0..r {
            value.extend_from_slice(&v[row * c + start..row * c + start + len]);
        }
        self.push(Op::SliceCols(i, start), r, len, value)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let idx: Vec<usize> = parts.iter().map(|&p| self.idx(p)).collect();
        let r = self.nodes[idx[0]].rows;
        assert!(idx.iter().all(|&i| self.nodes[i].rows == r), "row mismatch in concat");
        let c: usize = idx.iter().map(|&i| self.nodes[i].cols).sum();
        let mut value = Vec::with_capacity(r * c);
        for row in 0..r {
            for &i in &idx {
                let n = &self.nodes[i];
                value.extend_from_slice(&n.value[row * n.cols..(row + 1) * n.cols]);
            }
        }
        self.push(Op::ConcatCols(idx), r, c, value)
    }

    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Var {
        let i = self.idx(a);
        assert_eq!(self.nodes[i].cols, 1, "broadcast source must be a column");
        let r = self.nodes[i].rows;
        let v = &self.nodes[i].value;
        let value = (0..r * cols).map(|k| v[k / cols]).collect();
        self.push(Op::BroadcastCols(i), r, cols, value)
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let i = self.idx(a);
        let (r, c) = (self.nodes[i].rows, self.nodes[i].cols);
        assert!(rows.iter().all(|&k| k < r), "row index out of range");
        let v = &self.nodes[i].value;
        let mut value = Vec::with_capacity(rows.len() * c);
        for &k in rows {
            value.extend_from_slice(&v[k * c..(k + 1) * c]);
        }
        self.push(Op::SelectRows(i, rows.to_vec()), rows.len(), c, value)
    }

    /// Affine layer reading its weights from a flat parameter node.
    pub fn linear(&mut self, x: Var, params: Var, w_off: usize, b_off: usize, n_out: usize) -> Var {
        let (xi, pi) = (self.idx(x), self.idx(params));
        let (rows, n_in) = (self.nodes[xi].rows, self.nodes[xi].cols);
        let p = &self.nodes[pi].value;
        assert!(w_off + n_in * n_out <= p.len() && b_off + n_out <= p.len(), "parameter slice out of range");
        let xv = &self.nodes[xi].value;
        let mut value = vec![0.0; rows * n_out];
        for r in 0..rows {
            let xr = &xv[r * n_in..(r + 1) * n_in];
            let yr = &mut value[r * n_out..(r + 1) * n_out];
            for (o, y) in yr.iter_mut().enumerate() {
                let w = &p[w_off + o * n_in..w_off + (o + 1) * n_in];
                *y = p[b_off + o] + w.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        self.push(
            Op::Linear {
                x: xi,
                params: pi,
                w_off,
                b_off,
                n_in,
                n_out,
            },
            rows,
            n_out,
            value,
        )
    }

    /// Reverse sweep from a scalar node. The tape is left untouched, so the
    /// sweep can be replayed.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if output.tape != self.id || output.index >= self.nodes.len() {
            return Err(Error::Usage(format!("node {} was not recorded on this tape", output.index)));
        }
        if self.nodes[output.index].value.len() != 1 {
            return Err(Error::Usage("backward requires a scalar output".into()));
        }
        let n = output.index + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.index] = Some(vec![1.0]);

        for k in (0..n).rev() {
            let node = &self.nodes[k];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[k].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[k] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
            sizes: self.nodes.iter().map(|n| n.value.len()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        fn acc<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], i: usize) -> Option<&'g mut Vec<f64>> {
            if !nodes[i].needs_grad {
                return None;
            }
            Some(grads[i].get_or_insert_with(|| vec![0.0; nodes[i].value.len()]))
        }
        let nodes = &self.nodes;
        let val = |i: usize| &nodes[i].value;
        let elementwise = |grads: &mut [Option<Vec<f64>>], a: usize, d: &dyn Fn(usize) -> f64| {
            let Some(ga) = acc(grads, nodes, a) else { return };
            for (k, gk) in g.iter().enumerate() {
                ga[k] += gk * d(k);
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                elementwise(grads, *a, &|_| 1.0);
                elementwise(grads, *b, &|_| 1.0);
            }
            Op::Sub(a, b) => {
                elementwise(grads, *a, &|_| 1.0);
                elementwise(grads, *b, &|_| -1.0);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                elementwise(grads, *a, &|k| vb[k]);
                elementwise(grads, *b, &|k| va[k]);
            }
            Op::Affine(a, s) => elementwise(grads, *a, &|_| *s),
            Op::ColumnAffine(a, s) => {
                let c = node.cols;
                elementwise(grads, *a, &|k| s[k % c]);
            }
            Op::MulConst(a, kv) => elementwise(grads, *a, &|k| kv[k]),
            Op::Tanh(a) => elementwise(grads, *a, &|k| 1.0 - node.value[k] * node.value[k]),
            Op::Exp(a) => elementwise(grads, *a, &|k| node.value[k]),
            Op::Log(a) => {
                let va = val(*a);
                elementwise(grads, *a, &|k| 1.0 / va[k]);
            }
            Op::Sin(a) => {
                let va = val(*a);
                elementwise(grads, *a, &|k| va[k].cos());
            }
            Op::Cos(a) => {
                let va = val(*a);
                elementwise(grads, *a, &|k| -va[k].sin());
            }
            Op::Square(a) => {
                let va = val(*a);
                elementwise(grads, *a, &|k| 2.0 * va[k]);
            }
            Op::Softplus(a) => {
                let va = val(*a);
                elementwise(grads, *a, &|k| sigmoid(va[k]));
            }
            Op::Recip(a) => elementwise(grads, *a, &|k| -node.value[k] * node.value[k]),
            Op::WrapAngle(a) => elementwise(grads, *a, &|_| 1.0),
            Op::SumCols(a) => {
                let c = self.nodes[*a].cols;
                let Some(ga) = acc(grads, nodes, *a) else { return };
                for (k, v) in ga.iter_mut().enumerate() {
                    *v += g[k / c];
                }
            }
            Op::SumAll(a) => {
                let Some(ga) = acc(grads, nodes, *a) else { return };
                for v in ga.iter_mut() {
                    *v += g[0];
                }
            }
            Op::MeanAll(a) => {
                let n = nodes[*a].value.len() as f64;
                let Some(ga) = acc(grads, nodes, *a) else { return };
                for v in ga.iter_mut() {
                    *v += g[0] / n;
                }
            }
            Op::SliceCols(a, start) => {
                let pc = self.nodes[*a].cols;
                let c = node.cols;
                let Some(ga) = acc(grads, nodes, *a) else { return };
                for r in 0..node.rows {
                    for j in 0..c {
                        ga[r * pc + start + j] += g[r * c + j];
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let c = node.cols;
                let mut off = 0;
                for &p in parts {
                    let pc = self.nodes[p].cols;
                    if let Some(ga) = acc(grads, nodes, p) {
                        for r in 0..node.rows {
                            for j in 0..pc {
                                ga[r * pc + j] += g[r * c + off + j];
                            }
                        }
                    }
                    off += pc;
                }
            }
            Op::SelectRows(a, picked) => {
                let c = node.cols;
                let Some(ga) = acc(grads, nodes, *a) else { return };
                for (r, &k) in picked.iter().enumerate() {
                    for j in 0..c {
                        ga[k * c + j] += g[r * c + j];
                    }
                }
            }
            Op::BroadcastCols(a) => {
                let c = node.cols;
                let Some(ga) = acc(grads, nodes, *a) else { return };
                for (k, gk) in g.iter().enumerate() {
                    ga[k / c] += gk;
                }
            }
            Op::Linear {
                x,
                params,
                w_off,
                b_off,
                n_in,
                n_out,
            } => {
                let (x, params, w_off, b_off, n_in, n_out) = (*x, *params, *w_off, *b_off, *n_in, *n_out);
                let rows = node.rows;
                let p = val(params);
                let xv = val(x);
                if let Some(gx) = acc(grads, nodes, x) {
                    for r in 0..rows {
                        let gr = &g[r * n_out..(r + 1) * n_out];
                        let gxr = &mut gx[r * n_in..(r + 1) * n_in];
                        for (o, &go) in gr.iter().enumerate() {
                            if go == 0.0 {
                                continue;
                            }
                            let w = &p[w_off + o * n_in..w_off + (o + 1) * n_in];
                            for (gxi, wi) in gxr.iter_mut().zip(w) {
                                *gxi += go * wi;
                            }
                        }
                    }
                }
                let Some(gp) = acc(grads, nodes, params) else { return };
                for r in 0..rows {
                    let gr = &g[r * n_out..(r + 1) * n_out];
                    let xr = &xv[r * n_in..(r + 1) * n_in];
                    for (o, &go) in gr.iter().enumerate() {
                        if go == 0.0 {
                            continue;
                        }
                        gp[b_off + o] += go;
                        let gw = &mut gp[w_off + o * n_in..w_off + (o + 1) * n_in];
                        for (gwi, xi) in gw.iter_mut().zip(xr) {
                            *gwi += go * xi;
                        }
                    }
                }
            }
        }
    }
}
