//! Reverse-mode differentiation over a linear tape of array operations.
//!
//! Nodes are appended in creation order, so every node's inputs precede it and
//! the reverse of creation order is a valid topological order for the
//! backward sweep. Node values are immutable once recorded.

use crate::error::{Error, Result};

use super::tensor::{Real, Tensor};

/// Handle to a node in one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddConst(Var),
    MulConst(Var, Vec<T>),
    AddRowBias(Var, Var),
    MatMul(Var, Var),
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, T, T),
    SmoothL1(Var),
    Sum(Var),
    Mean(Var),
    Gather(Var, Vec<usize>),
    Slice(Var, usize),
    Concat(Vec<Var>),
    Reshape(Var),
    XentRows {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Normalize(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
}

/// One computation graph. Build a fresh graph per training step; parameters
/// enter as tracked leaves, data as untracked constants.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, v: T) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    pub fn item(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated by the last [`Graph::backward`], if the node was
    /// reached.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let tracked = self.tracked(a);
        self.push(value, op, tracked)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op<T>, what: &str, f: impl Fn(T, T) -> T) -> Result<Var> {
        same_shape(self.value(a), self.value(b), what)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    /// Adds a constant array of the same length as `a`.
    pub fn add_const(&mut self, a: Var, c: &[T]) -> Result<Var> {
        let src = self.value(a);
        if src.len() != c.len() {
            return Err(Error::Shape(format!(
                "add_const: {:?} vs {} constants",
                src.shape(),
                c.len()
            )));
        }
        let data = src.data().iter().zip(c).map(|(&x, &k)| x + k).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        let tracked = self.tracked(a);
        Ok(self.push(value, Op::AddConst(a), tracked))
    }

    /// Multiplies elementwise by a constant array of the same length as `a`.
    pub fn mul_const(&mut self, a: Var, c: Vec<T>) -> Result<Var> {
        let src = self.value(a);
        if src.len() != c.len() {
            return Err(Error::Shape(format!(
                "mul_const: {:?} vs {} constants",
                src.shape(),
                c.len()
            )));
        }
        let data = src.data().iter().zip(&c).map(|(&x, &k)| x * k).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        let tracked = self.tracked(a);
        Ok(self.push(value, Op::MulConst(a, c), tracked))
    }

    /// `x + b` with `b` broadcast over the rows of `x`.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (_, cols) = self.value(x).rows_cols();
        if self.value(b).len() != cols {
            return Err(Error::Shape(format!(
                "bias {:?} does not match input {:?}",
                self.shape(b),
                self.shape(x)
            )));
        }
        let bias = self.data(b);
        let data = self
            .data(x)
            .chunks(cols)
            .flat_map(|row| row.iter().zip(bias).map(|(&v, &k)| v + k))
            .collect();
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        let tracked = self.tracked(x) || self.tracked(b);
        Ok(self.push(value, Op::AddRowBias(x, b), tracked))
    }

    /// `[n×k]·[k×m]`. A 1-D left operand of length `k` is one row and yields a
    /// 1-D result of length `m`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if vb.shape().len() != 2 || va.shape().len() > 2 {
            return Err(Error::Shape(format!(
                "matmul expects [n×k]·[k×m], got {:?}·{:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let (n, k) = va.rows_cols();
        let (k2, m) = (vb.shape()[0], vb.shape()[1]);
        if k != k2 {
            return Err(Error::Shape(format!(
                "inner dimensions disagree: {:?}·{:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let mut out = vec![T::zero(); n * m];
        let (ad, bd) = (va.data(), vb.data());
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let x = ad[i * k + p];
                if x == T::zero() {
                    continue;
                }
                for (o, &w) in orow.iter_mut().zip(&bd[p * m..(p + 1) * m]) {
                    *o = *o + x * w;
                }
            }
        }
        let shape = if va.shape().len() == 1 { vec![m] } else { vec![n, m] };
        let value = Tensor::new(shape, out)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMul(a, b), tracked))
    }

    /// Temporal cross-correlation with zero padding.
    /// `input: [T×C_in]`, `weight: [K×C_in×C_out]`, `bias: [C_out]`.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (vi, vw, vb) = (self.value(input), self.value(weight), self.value(bias));
        if vi.shape().len() != 2 || vw.shape().len() != 3 {
            return Err(Error::Shape(format!(
                "conv1d expects input [T×C] and weights [K×C_in×C_out], got {:?} and {:?}",
                vi.shape(),
                vw.shape()
            )));
        }
        let (t_in, c_in) = (vi.shape()[0], vi.shape()[1]);
        let (k, wc_in, c_out) = (vw.shape()[0], vw.shape()[1], vw.shape()[2]);
        if wc_in != c_in {
            return Err(Error::Shape(format!(
                "conv1d weights {:?} expect {wc_in} input channels, input {:?} has {c_in}",
                vw.shape(),
                vi.shape()
            )));
        }
        if vb.len() != c_out {
            return Err(Error::Shape(format!(
                "conv1d bias {:?} does not match weights {:?}",
                vb.shape(),
                vw.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidInput("conv1d stride must be positive".into()));
        }
        if k > t_in + 2 * padding {
            return Err(Error::Shape(format!(
                "conv1d kernel {k} longer than padded input {}",
                t_in + 2 * padding
            )));
        }
        let t_out = conv1d_output_len(t_in, k, stride, padding);
        let (xd, wd, bd) = (vi.data(), vw.data(), vb.data());
        let mut out = Vec::with_capacity(t_out * c_out);
        for _ in 0..t_out {
            out.extend_from_slice(bd);
        }
        for t in 0..t_out {
            let orow = &mut out[t * c_out..(t + 1) * c_out];
            for kk in 0..k {
                let pos = (t * stride + kk) as isize - padding as isize;
                if pos < 0 || pos as usize >= t_in {
                    continue;
                }
                let xrow = &xd[pos as usize * c_in..(pos as usize + 1) * c_in];
                for (c, &x) in xrow.iter().enumerate() {
                    if x == T::zero() {
                        continue;
                    }
                    let wrow = &wd[(kk * c_in + c) * c_out..(kk * c_in + c + 1) * c_out];
                    for (o, &w) in orow.iter_mut().zip(wrow) {
                        *o = *o + x * w;
                    }
                }
            }
        }
        let value = Tensor::new(vec![t_out, c_out], out)?;
        let tracked = self.tracked(input) || self.tracked(weight) || self.tracked(bias);
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            tracked,
        ))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.max(lo).min(hi))
    }

    /// Elementwise smooth L1: `0.5x²` for `|x| < 1`, else `|x| − 0.5`.
    pub fn smooth_l1(&mut self, a: Var) -> Var {
        self.unary(a, Op::SmoothL1(a), smooth_l1)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().copied().sum();
        let tracked = self.tracked(a);
        self.push(Tensor::scalar(s), Op::Sum(a), tracked)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s: T = v.data().iter().copied().sum();
        let m = s / T::from_f64(v.len() as f64);
        let tracked = self.tracked(a);
        self.push(Tensor::scalar(m), Op::Mean(a), tracked)
    }

    /// Picks flat elements of `a` into a 1-D array.
    pub fn gather(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        let src = self.value(a);
        if indices.is_empty() {
            return Err(Error::Shape("gather with no indices".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= src.len()) {
            return Err(Error::Shape(format!(
                "gather index {bad} out of range for {:?}",
                src.shape()
            )));
        }
        let data = indices.iter().map(|&i| src.data()[i]).collect();
        let tracked = self.tracked(a);
        Ok(self.push(Tensor::vector(data), Op::Gather(a, indices), tracked))
    }

    /// Contiguous flat range `[start, start+len)` as a 1-D array.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(a);
        if len == 0 || start + len > src.len() {
            return Err(Error::Shape(format!(
                "slice [{start}, {}) out of range for {:?}",
                start + len,
                src.shape()
            )));
        }
        let data = src.data()[start..start + len].to_vec();
        let tracked = self.tracked(a);
        Ok(self.push(Tensor::vector(data), Op::Slice(a, start), tracked))
    }

    /// Flattens and concatenates into one 1-D array.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Shape("concat of nothing".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.data(p));
        }
        let tracked = parts.iter().any(|&p| self.tracked(p));
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), tracked))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).reshaped(shape)?;
        let tracked = self.tracked(a);
        Ok(self.push(value, Op::Reshape(a), tracked))
    }

    /// Row-wise `−log softmax(row)[label]`, stabilized by max subtraction.
    /// A 1-D input is a single row. Output has one entry per row.
    pub fn xent_rows(&mut self, logits: Var, labels: Vec<usize>) -> Result<Var> {
        let v = self.value(logits);
        let (rows, cols) = v.rows_cols();
        if labels.len() != rows {
            return Err(Error::Shape(format!(
                "{} labels for {rows} rows of {:?}",
                labels.len(),
                v.shape()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= cols) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {cols} classes"
            )));
        }
        let mut probs = Vec::with_capacity(rows * cols);
        let mut losses = Vec::with_capacity(rows);
        for (row, &label) in v.data().chunks(cols).zip(&labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&x| (x - max).exp()).sum();
            let log_z = z.ln();
            losses.push(log_z - (row[label] - max));
            probs.extend(row.iter().map(|&x| (x - max).exp() / z));
        }
        let tracked = self.tracked(logits);
        Ok(self.push(
            Tensor::vector(losses),
            Op::XentRows {
                logits,
                labels,
                probs,
            },
            tracked,
        ))
    }

    /// `a / Σa` over all elements.
    pub fn normalize(&mut self, a: Var) -> Var {
        let s: T = self.data(a).iter().copied().sum();
        self.unary(a, Op::Normalize(a), |x| x / s)
    }

    /// Populates gradients of every tracked ancestor of the scalar `root`.
    /// Gradients from earlier calls are discarded.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::Shape(format!(
                "backward needs a scalar root, got {:?}",
                self.shape(root)
            )));
        }
        for g in &mut self.grads {
            *g = None;
        }
        if !self.tracked(root) {
            return Ok(());
        }
        self.grads[root.0] = Some(vec![T::one()]);
        let Graph { nodes, grads } = self;
        for i in (0..=root.0).rev() {
            let node = &nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            propagate(nodes, grads, node, &g);
            grads[i] = Some(g);
        }
        Ok(())
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn smooth_l1<T: Real>(x: T) -> T {
    let a = x.abs();
    if a < T::one() {
        T::from_f64(0.5) * x * x
    } else {
        a - T::from_f64(0.5)
    }
}

pub fn conv1d_output_len(t: usize, k: usize, stride: usize, padding: usize) -> usize {
    (t + 2 * padding - k) / stride + 1
}

fn acc<T: Real>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
    if !nodes[v.0].tracked {
        return;
    }
    let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()]);
    f(slot);
}

fn propagate<T: Real>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], node: &Node<T>, g: &[T]) {
    let out = node.value.data();
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            acc(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g));
            acc(nodes, grads, *b, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g));
        }
        Op::Sub(a, b) => {
            acc(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g));
            acc(nodes, grads, *b, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d - g));
        }
        Op::Mul(a, b) => {
            let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
            acc(nodes, grads, *a, |d| {
                for ((d, &g), &y) in d.iter_mut().zip(g).zip(vb) {
                    *d = *d + g * y;
                }
            });
            acc(nodes, grads, *b, |d| {
                for ((d, &g), &x) in d.iter_mut().zip(g).zip(va) {
                    *d = *d + g * x;
                }
            });
        }
        Op::Scale(a, c) => {
            let c = *c;
            acc(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g * c));
        }
        Op::AddConst(a) | Op::Reshape(a) => {
            acc(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g));
        }
        Op::MulConst(a, c) => {
            acc(nodes, grads, *a, |d| {
                for ((d, &g), &k) in d.iter_mut().zip(g).zip(c) {
                    *d = *d + g * k;
                }
            });
        }
        Op::AddRowBias(x, b) => {
            acc(nodes, grads, *x, |d| d.iter_mut().zip(g).for_each(|(d, &g)| *d = *d + g));
            let cols = nodes[b.0].value.len();
            acc(nodes, grads, *b, |d| {
                for row in g.chunks(cols) {
                    d.iter_mut().zip(row).for_each(|(d, &g)| *d = *d + g);
                }
            });
        }
        Op::MatMul(a, b) => {
            let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
            let (n, k) = va.rows_cols();
            let m = vb.shape()[1];
            let (ad, bd) = (va.data(), vb.data());
            // dA = G·Bᵀ
            acc(nodes, grads, *a, |d| {
                for i in 0..n {
                    let grow = &g[i * m..(i + 1) * m];
                    for p in 0..k {
                        let brow = &bd[p * m..(p + 1) * m];
                        let s: T = grow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
                        d[i * k + p] = d[i * k + p] + s;
                    }
                }
            });
            // dB = Aᵀ·G
            acc(nodes, grads, *b, |d| {
                for i in 0..n {
                    let grow = &g[i * m..(i + 1) * m];
                    for p in 0..k {
                        let x = ad[i * k + p];
                        if x == T::zero() {
                            continue;
                        }
                        for (dv, &gv) in d[p * m..(p + 1) * m].iter_mut().zip(grow) {
                            *dv = *dv + x * gv;
                        }
                    }
                }
            });
        }
        Op::Conv1d {
            input,
            weight,
            bias,
            stride,
            padding,
        } => {
            let (vi, vw) = (&nodes[input.0].value, &nodes[weight.0].value);
            let (t_in, c_in) = (vi.shape()[0], vi.shape()[1]);
            let (k, c_out) = (vw.shape()[0], vw.shape()[2]);
            let t_out = node.value.shape()[0];
            let (xd, wd) = (vi.data(), vw.data());
            let (stride, padding) = (*stride, *padding);
            let positions = |t: usize, kk: usize| -> Option<usize> {
                let pos = (t * stride + kk) as isize - padding as isize;
                (pos >= 0 && (pos as usize) < t_in).then_some(pos as usize)
            };
            acc(nodes, grads, *bias, |d| {
                for row in g.chunks(c_out) {
                    d.iter_mut().zip(row).for_each(|(d, &g)| *d = *d + g);
                }
            });
            acc(nodes, grads, *weight, |d| {
                for t in 0..t_out {
                    let grow = &g[t * c_out..(t + 1) * c_out];
                    for kk in 0..k {
                        let Some(pos) = positions(t, kk) else { continue };
                        for c in 0..c_in {
                            let x = xd[pos * c_in + c];
                            if x == T::zero() {
                                continue;
                            }
                            let base = (kk * c_in + c) * c_out;
                            for (dv, &gv) in d[base..base + c_out].iter_mut().zip(grow) {
                                *dv = *dv + x * gv;
                            }
                        }
                    }
                }
            });
            acc(nodes, grads, *input, |d| {
                for t in 0..t_out {
                    let grow = &g[t * c_out..(t + 1) * c_out];
                    for kk in 0..k {
                        let Some(pos) = positions(t, kk) else { continue };
                        for c in 0..c_in {
                            let base = (kk * c_in + c) * c_out;
                            let s: T = wd[base..base + c_out].iter().zip(grow).map(|(&w, &g)| w * g).sum();
                            d[pos * c_in + c] = d[pos * c_in + c] + s;
                        }
                    }
                }
            });
        }
        Op::Relu(a) => {
            let x = nodes[a.0].value.data();
            acc(nodes, grads, *a, |d| {
                for ((d, &g), &x) in d.iter_mut().zip(g).zip(x) {
                    if x > T::zero() {
                        *d = *d + g;
                    }
                }
            });
        }
        Op::Sigmoid(a) => acc(nodes, grads, *a, |d| {
            for ((d, &g), &y) in d.iter_mut().zip(g).zip(out) {
                *d = *d + g * y * (T::one() - y);
            }
        }),
        Op::Tanh(a) => acc(nodes, grads, *a, |d| {
            for ((d, &g), &y) in d.iter_mut().zip(g).zip(out) {
                *d = *d + g * (T::one() - y * y);
            }
        }),
        Op::Exp(a) => acc(nodes, grads, *a, |d| {
            for ((d, &g), &y) in d.iter_mut().zip(g).zip(out) {
                *d = *d + g * y;
            }
        }),
        Op::Square(a) => {
            let x = nodes[a.0].value.data();
            let two = T::from_f64(2.0);
            acc(nodes, grads, *a, |d| {
                for ((d, &g), &x) in d.iter_mut().zip(g).zip(x) {
                    *d = *d + g * two * x;
                }
            });
        }
        Op::Clamp(a, lo, hi) => {
            let x = nodes[a.0].value.data();
            let (lo, hi) = (*lo, *hi);
            acc(nodes, grads, *a, |d| {
                for ((d, &g), &x) in d.iter_mut().zip(g).zip(x) {
                    if x >= lo && x <= hi {
                        *d = *d + g;
                    }
                }
            });
        }
        Op::SmoothL1(a) => {
            let x = nodes[a.0].value.data();
            acc(nodes, grads, *a, |d| {
                for ((d, &g), &x) in d.iter_mut().zip(g).zip(x) {
                    let slope = if x.abs() < T::one() { x } else { x.signum() };
                    *d = *d + g * slope;
                }
            });
        }
        Op::Sum(a) => {
            let g0 = g[0];
            acc(nodes, grads, *a, |d| d.iter_mut().for_each(|d| *d = *d + g0));
        }
        Op::Mean(a) => {
            let g0 = g[0] / T::from_f64(nodes[a.0].value.len() as f64);
            acc(nodes, grads, *a, |d| d.iter_mut().for_each(|d| *d = *d + g0));
        }
        Op::Gather(a, idx) => acc(nodes, grads, *a, |d| {
            for (&i, &g) in idx.iter().zip(g) {
                d[i] = d[i] + g;
            }
        }),
        Op::Slice(a, start) => {
            let start = *start;
            acc(nodes, grads, *a, |d| {
                for (d, &g) in d[start..start + g.len()].iter_mut().zip(g) {
                    *d = *d + g;
                }
            });
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for p in parts {
                let n = nodes[p.0].value.len();
                let gs = &g[offset..offset + n];
                acc(nodes, grads, *p, |d| d.iter_mut().zip(gs).for_each(|(d, &g)| *d = *d + g));
                offset += n;
            }
        }
        Op::XentRows {
            logits,
            labels,
            probs,
        } => {
            let cols = probs.len() / labels.len();
            acc(nodes, grads, *logits, |d| {
                for (r, (&label, &gr)) in labels.iter().zip(g).enumerate() {
                    for c in 0..cols {
                        let target = if c == label { T::one() } else { T::zero() };
                        let i = r * cols + c;
                        d[i] = d[i] + gr * (probs[i] - target);
                    }
                }
            });
        }
        Op::Normalize(a) => {
            let x = nodes[a.0].value.data();
            let s: T = x.iter().copied().sum();
            let dot: T = g.iter().zip(x).map(|(&g, &x)| g * x).sum();
            let shift = dot / (s * s);
            acc(nodes, grads, *a, |d| {
                for (d, &g) in d.iter_mut().zip(g) {
                    *d = *d + g / s - shift;
                }
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(1.0));
        let y = g.add(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0]);
    }

    #[test]
    fn constant_root_is_noop() {
        let mut g = Graph::<f64>::new();
        let c = g.scalar(4.0);
        g.backward(c).unwrap();
        assert!(g.grad(c).is_none());
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Shape(_))));
    }

    #[test]
    fn dag_matches_tree() {
        // s = x*y shared twice versus two independent copies of x*y.
        let run = |shared: bool| {
            let mut g = Graph::<f64>::new();
            let x = g.param(Tensor::scalar(1.5));
            let y = g.param(Tensor::scalar(-0.7));
            let s1 = g.mul(x, y).unwrap();
            let s2 = if shared { s1 } else { g.mul(x, y).unwrap() };
            let t = g.tanh(s1);
            let z = g.mul(t, s2).unwrap();
            g.backward(z).unwrap();
            (g.grad(x).unwrap()[0], g.grad(y).unwrap()[0])
        };
        let (a, b) = (run(true), run(false));
        assert!((a.0 - b.0).abs() < 1e-15 && (a.1 - b.1).abs() < 1e-15);
    }

    #[test]
    fn xent_is_stable() {
        let mut g = Graph::<f64>::new();
        let l = g.constant(Tensor::vector(vec![1000.0, 0.0]));
        let x = g.xent_rows(l, vec![0]).unwrap();
        assert!(g.item(x).abs() < 1e-12);
    }
}
