use std::borrow::Cow;

use super::{NumericsError, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Affine {
        w: Var,
        x: Var,
        b: Option<Var>,
        rows: Option<Vec<usize>>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Clamp {
        x: Var,
        lo: f64,
        hi: f64,
    },
    LogSoftmax {
        x: Var,
        subset: Option<Vec<usize>>,
    },
    Embedding {
        table: Var,
        index: usize,
    },
    EmbeddingBag {
        table: Var,
        indices: Vec<usize>,
    },
    Sum(Var),
    Dot(Var, Var),
    Pick(Var, usize),
}

struct Node<'a> {
    shape: Vec<usize>,
    value: Cow<'a, [f64]>,
    op: Op,
}

/// A dynamically built reverse-mode computation graph.
///
/// Leaves borrow parameter storage, so binding a large matrix costs nothing.
/// Nodes are appended in evaluation order, which makes the node list a valid
/// topological order for the backward sweep.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    consumed: bool,
    check_finite: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn is_scalar_shape(shape: &[usize]) -> bool {
    shape.iter().product::<usize>() == 1 && shape.len() <= 1
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
            check_finite: cfg!(debug_assertions),
        }
    }

    /// Enables or disables the non-finite value check on every recorded node.
    pub fn with_finite_check(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        op: Op,
        shape: Vec<usize>,
        value: Cow<'a, [f64]>,
        name: &'static str,
    ) -> Result<Var, NumericsError> {
        if self.check_finite && value.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite { op: name });
        }
        self.nodes.push(Node { shape, value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a differentiable leaf that borrows `t`.
    pub fn leaf(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: Cow::Borrowed(t.data()),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a differentiable leaf that owns its value.
    pub fn leaf_owned(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: Cow::Owned(t.into_data()),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: Cow::Owned(t.into_data()),
            op: Op::Constant,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn vec_len(&self, v: Var, op: &'static str) -> Result<usize, NumericsError> {
        let shape = &self.nodes[v.0].shape;
        match shape.len() {
            0 => Ok(1),
            1 => Ok(shape[0]),
            _ => Err(NumericsError::ShapeMismatch {
                op,
                left: shape.clone(),
                right: vec![],
            }),
        }
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(), NumericsError> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa != sb {
            return Err(NumericsError::ShapeMismatch {
                op,
                left: sa.clone(),
                right: sb.clone(),
            });
        }
        Ok(())
    }

    /// `W x + b`, with `b` optional.
    pub fn affine(&mut self, w: Var, x: Var, b: Option<Var>) -> Result<Var, NumericsError> {
        self.affine_impl(w, x, b, None)
    }

    /// `(W x + b)` restricted to the listed rows, in the listed order.
    pub fn affine_rows(
        &mut self,
        w: Var,
        x: Var,
        b: Option<Var>,
        rows: &[usize],
    ) -> Result<Var, NumericsError> {
        if rows.is_empty() {
            return Err(NumericsError::EmptySubset);
        }
        self.affine_impl(w, x, b, Some(rows.to_vec()))
    }

    fn affine_impl(
        &mut self,
        w: Var,
        x: Var,
        b: Option<Var>,
        rows: Option<Vec<usize>>,
    ) -> Result<Var, NumericsError> {
        let wshape = self.nodes[w.0].shape.clone();
        if wshape.len() != 2 {
            return Err(NumericsError::ShapeMismatch {
                op: "affine",
                left: wshape,
                right: self.nodes[x.0].shape.clone(),
            });
        }
        let (m, n) = (wshape[0], wshape[1]);
        let xn = self.vec_len(x, "affine")?;
        if xn != n {
            return Err(NumericsError::ShapeMismatch {
                op: "affine",
                left: wshape,
                right: self.nodes[x.0].shape.clone(),
            });
        }
        if let Some(b) = b {
            let bn = self.vec_len(b, "affine")?;
            if bn != m {
                return Err(NumericsError::ShapeMismatch {
                    op: "affine",
                    left: wshape,
                    right: self.nodes[b.0].shape.clone(),
                });
            }
        }
        if let Some(rows) = &rows {
            if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
                return Err(NumericsError::IndexOutOfRange { index: bad, len: m });
            }
        }
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        let bv = b.map(|b| &self.nodes[b.0].value);
        let row_value = |r: usize| -> f64 {
            let row = &wv[r * n..(r + 1) * n];
            let mut acc: f64 = row.iter().zip(xv.iter()).map(|(a, b)| a * b).sum();
            if let Some(bv) = bv {
                acc += bv[r];
            }
            acc
        };
        let out: Vec<f64> = match &rows {
            Some(rows) => rows.iter().map(|&r| row_value(r)).collect(),
            None => (0..m).map(row_value).collect(),
        };
        let shape = vec![out.len()];
        self.push(Op::Affine { w, x, b, rows }, shape, Cow::Owned(out), "affine")
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, NumericsError> {
        self.same_shape(a, b, name)?;
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(op, shape, Cow::Owned(out), name)
    }

    fn unary(
        &mut self,
        a: Var,
        op: Op,
        name: &'static str,
        f: impl Fn(f64) -> f64,
    ) -> Result<Var, NumericsError> {
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push(op, shape, Cow::Owned(out), name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary(a, b, Op::Hadamard(a, b), "hadamard", |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NumericsError> {
        self.unary(a, Op::Scale(a, c), "scale", |x| c * x)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.unary(a, Op::Tanh(a), "tanh", f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.unary(a, Op::Sigmoid(a), "sigmoid", sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.unary(a, Op::Exp(a), "exp", f64::exp)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var, NumericsError> {
        self.unary(a, Op::Ln(a), "ln", f64::ln)
    }

    /// Elementwise clamp; the gradient is zero where the input lies outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, NumericsError> {
        self.unary(a, Op::Clamp { x: a, lo, hi }, "clamp", |x| x.clamp(lo, hi))
    }

    /// Log-softmax over the whole vector, or over `subset` (output in subset order).
    pub fn log_softmax(&mut self, x: Var, subset: Option<&[usize]>) -> Result<Var, NumericsError> {
        let n = self.vec_len(x, "log_softmax")?;
        let xv = &self.nodes[x.0].value;
        let gathered: Vec<f64> = match subset {
            Some([]) => return Err(NumericsError::EmptySubset),
            Some(s) => {
                if let Some(&bad) = s.iter().find(|&&i| i >= n) {
                    return Err(NumericsError::IndexOutOfRange { index: bad, len: n });
                }
                s.iter().map(|&i| xv[i]).collect()
            }
            None => xv.to_vec(),
        };
        let out = log_softmax(&gathered);
        let shape = vec![out.len()];
        self.push(
            Op::LogSoftmax {
                x,
                subset: subset.map(<[usize]>::to_vec),
            },
            shape,
            Cow::Owned(out),
            "log_softmax",
        )
    }

    /// Row `index` of a matrix.
    pub fn embedding(&mut self, table: Var, index: usize) -> Result<Var, NumericsError> {
        let shape = self.nodes[table.0].shape.clone();
        if shape.len() != 2 {
            return Err(NumericsError::ShapeMismatch {
                op: "embedding",
                left: shape,
                right: vec![],
            });
        }
        if index >= shape[0] {
            return Err(NumericsError::IndexOutOfRange {
                index,
                len: shape[0],
            });
        }
        let cols = shape[1];
        let row = self.nodes[table.0].value[index * cols..(index + 1) * cols].to_vec();
        self.push(
            Op::Embedding { table, index },
            vec![cols],
            Cow::Owned(row),
            "embedding",
        )
    }

    /// Sum of the rows named by `indices` (repeats counted).
    pub fn embedding_bag(&mut self, table: Var, indices: &[usize]) -> Result<Var, NumericsError> {
        let shape = self.nodes[table.0].shape.clone();
        if shape.len() != 2 {
            return Err(NumericsError::ShapeMismatch {
                op: "embedding_bag",
                left: shape,
                right: vec![],
            });
        }
        if indices.is_empty() {
            return Err(NumericsError::EmptySubset);
        }
        let (rows, cols) = (shape[0], shape[1]);
        let tv = &self.nodes[table.0].value;
        let mut out = vec![0.0; cols];
        for &i in indices {
            if i >= rows {
                return Err(NumericsError::IndexOutOfRange { index: i, len: rows });
            }
            for (o, v) in out.iter_mut().zip(&tv[i * cols..(i + 1) * cols]) {
                *o += v;
            }
        }
        self.push(
            Op::EmbeddingBag {
                table,
                indices: indices.to_vec(),
            },
            vec![cols],
            Cow::Owned(out),
            "embedding_bag",
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumericsError> {
        let s: f64 = self.nodes[a.0].value.iter().sum();
        self.push(Op::Sum(a), vec![], Cow::Owned(vec![s]), "sum")
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape(a, b, "dot")?;
        let s: f64 = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(x, y)| x * y)
            .sum();
        self.push(Op::Dot(a, b), vec![], Cow::Owned(vec![s]), "dot")
    }

    /// Element `i` of a vector, as a scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var, NumericsError> {
        let n = self.nodes[a.0].value.len();
        if i >= n {
            return Err(NumericsError::IndexOutOfRange { index: i, len: n });
        }
        let v = self.nodes[a.0].value[i];
        self.push(Op::Pick(a, i), vec![], Cow::Owned(vec![v]), "pick")
    }

    /// Sum of same-shaped nodes.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var, NumericsError> {
        let (&first, rest) = vars.split_first().ok_or(NumericsError::EmptySubset)?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    /// Reverse sweep from a scalar root.
    ///
    /// A graph can be differentiated once; a second call fails with
    /// [`NumericsError::BackwardTwice`].
    pub fn backward(&mut self, root: Var) -> Result<Gradients, NumericsError> {
        if self.consumed {
            return Err(NumericsError::BackwardTwice);
        }
        let root_shape = &self.nodes[root.0].shape;
        if !is_scalar_shape(root_shape) {
            return Err(NumericsError::NonScalarRoot {
                shape: root_shape.clone(),
            });
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::Constant => {}
                Op::Affine { w, x, b, rows } => {
                    let n = self.nodes[x.0].value.len();
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    let row_ids: Box<dyn Iterator<Item = (usize, usize)>> = match rows {
                        Some(r) => Box::new(r.iter().copied().enumerate()),
                        None => Box::new((0..g.len()).map(|r| (r, r))),
                    };
                    let row_ids: Vec<(usize, usize)> = row_ids.collect();
                    {
                        let gw = accum(&mut grads, w.0, wv.len());
                        for &(j, r) in &row_ids {
                            let gj = g[j];
                            if gj == 0.0 {
                                continue;
                            }
                            for (d, xk) in gw[r * n..(r + 1) * n].iter_mut().zip(xv.iter()) {
                                *d += gj * xk;
                            }
                        }
                    }
                    {
                        let gx = accum(&mut grads, x.0, n);
                        for &(j, r) in &row_ids {
                            let gj = g[j];
                            if gj == 0.0 {
                                continue;
                            }
                            for (d, wk) in gx.iter_mut().zip(&wv[r * n..(r + 1) * n]) {
                                *d += gj * wk;
                            }
                        }
                    }
                    if let Some(b) = b {
                        let blen = self.nodes[b.0].value.len();
                        let gb = accum(&mut grads, b.0, blen);
                        for &(j, r) in &row_ids {
                            gb[r] += g[j];
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(accum(&mut grads, a.0, g.len()), &g, 1.0);
                    add_into(accum(&mut grads, b.0, g.len()), &g, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(accum(&mut grads, a.0, g.len()), &g, 1.0);
                    add_into(accum(&mut grads, b.0, g.len()), &g, -1.0);
                }
                Op::Hadamard(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga = accum(&mut grads, a.0, g.len());
                    for ((d, gi), bi) in ga.iter_mut().zip(&g).zip(bv.iter()) {
                        *d += gi * bi;
                    }
                    let gb = accum(&mut grads, b.0, g.len());
                    for ((d, gi), ai) in gb.iter_mut().zip(&g).zip(av.iter()) {
                        *d += gi * ai;
                    }
                }
                Op::Scale(a, c) => {
                    add_into(accum(&mut grads, a.0, g.len()), &g, *c);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = accum(&mut grads, a.0, g.len());
                    for ((d, gi), yi) in ga.iter_mut().zip(&g).zip(y.iter()) {
                        *d += gi * (1.0 - yi * yi);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ga = accum(&mut grads, a.0, g.len());
                    for ((d, gi), yi) in ga.iter_mut().zip(&g).zip(y.iter()) {
                        *d += gi * yi * (1.0 - yi);
                    }
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    let ga = accum(&mut grads, a.0, g.len());
                    for ((d, gi), yi) in ga.iter_mut().zip(&g).zip(y.iter()) {
                        *d += gi * yi;
                    }
                }
                Op::Ln(a) => {
                    let xv = &self.nodes[a.0].value;
                    let ga = accum(&mut grads, a.0, g.len());
                    for ((d, gi), xi) in ga.iter_mut().zip(&g).zip(xv.iter()) {
                        *d += gi / xi;
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = &self.nodes[x.0].value;
                    let ga = accum(&mut grads, x.0, g.len());
                    for ((d, gi), xi) in ga.iter_mut().zip(&g).zip(xv.iter()) {
                        if *xi >= *lo && *xi <= *hi {
                            *d += gi;
                        }
                    }
                }
                Op::LogSoftmax { x, subset } => {
                    let y = &node.value;
                    let total: f64 = g.iter().sum();
                    let xlen = self.nodes[x.0].value.len();
                    let gx = accum(&mut grads, x.0, xlen);
                    for (j, (gi, yi)) in g.iter().zip(y.iter()).enumerate() {
                        let target = subset.as_ref().map_or(j, |s| s[j]);
                        gx[target] += gi - yi.exp() * total;
                    }
                }
                Op::Embedding { table, index } => {
                    let tlen = self.nodes[table.0].value.len();
                    let cols = g.len();
                    let gt = accum(&mut grads, table.0, tlen);
                    add_into(&mut gt[index * cols..(index + 1) * cols], &g, 1.0);
                }
                Op::EmbeddingBag { table, indices } => {
                    let tlen = self.nodes[table.0].value.len();
                    let cols = g.len();
                    let gt = accum(&mut grads, table.0, tlen);
                    for &i in indices {
                        add_into(&mut gt[i * cols..(i + 1) * cols], &g, 1.0);
                    }
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].value.len();
                    let ga = accum(&mut grads, a.0, n);
                    ga.iter_mut().for_each(|d| *d += g[0]);
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let n = av.len();
                    add_into(accum(&mut grads, a.0, n), bv, g[0]);
                    add_into(accum(&mut grads, b.0, n), av, g[0]);
                }
                Op::Pick(a, idx) => {
                    let n = self.nodes[a.0].value.len();
                    accum(&mut grads, a.0, n)[*idx] += g[0];
                }
            }
        }

        Ok(Gradients { grads })
    }
}

fn accum(grads: &mut [Option<Vec<f64>>], idx: usize, len: usize) -> &mut Vec<f64> {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

/// Gradients of a scalar root with respect to the leaves of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf, or `None` when the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of a leaf as a tensor of the given shape (zeros if unreached).
    pub fn tensor(&self, v: Var, shape: &[usize]) -> Tensor {
        match self.get(v) {
            Some(g) => Tensor::new(shape.to_vec(), g.to_vec())
                .expect("gradient length matches the leaf it was accumulated for"),
            None => Tensor::zeros(shape),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted log-sum-exp.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(x);
    x.iter().map(|v| v - lse).collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    log_softmax(x).into_iter().map(f64::exp).collect()
}
