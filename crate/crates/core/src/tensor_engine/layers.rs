//! Layer primitives built from graph ops.

use crate::error::{Error, Result};

use super::graph::{Graph, Var};
use super::tensor::Real;

pub fn conv1d_forward<T: Real>(
    g: &mut Graph<T>,
    input: Var,
    weights: Var,
    bias: Var,
    stride: usize,
    padding: usize,
) -> Result<Var> {
    g.conv1d(input, weights, bias, stride, padding)
}

/// `input · W + b`, with `W: [in×out]`. Works on a single vector or on the
/// rows of a matrix.
pub fn fully_connected<T: Real>(g: &mut Graph<T>, input: Var, weights: Var, bias: Var) -> Result<Var> {
    let z = g.matmul(input, weights)?;
    g.add_row_bias(z, bias)
}

/// Leaves of one LSTM cell. Gate blocks are laid out `[i, f, g, o]` along
/// the `4H` axis.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    /// `[in×4H]`
    pub wx: Var,
    /// `[H×4H]`
    pub wh: Var,
    /// `[4H]`
    pub b: Var,
}

/// Standard cell without peepholes: `c = f⊙c_prev + i⊙g`, `h = o⊙tanh(c)`.
pub fn lstm_step<T: Real>(g: &mut Graph<T>, x: Var, h_prev: Var, c_prev: Var, p: &LstmParams) -> Result<(Var, Var)> {
    let hidden = g.len_of(p.wh, 0);
    if g.value(h_prev).len() != hidden || g.value(c_prev).len() != hidden {
        return Err(Error::Shape(format!(
            "lstm state widths {:?}/{:?} do not match hidden width {hidden}",
            g.shape(h_prev),
            g.shape(c_prev)
        )));
    }
    if g.value(x).len() != g.len_of(p.wx, 0) {
        return Err(Error::Shape(format!(
            "lstm input {:?} does not match input weights {:?}",
            g.shape(x),
            g.shape(p.wx)
        )));
    }
    let zx = g.matmul(x, p.wx)?;
    let zh = g.matmul(h_prev, p.wh)?;
    let z = g.add(zx, zh)?;
    let z = g.add_row_bias(z, p.b)?;
    let i = g.slice(z, 0, hidden)?;
    let f = g.slice(z, hidden, hidden)?;
    let cand = g.slice(z, 2 * hidden, hidden)?;
    let o = g.slice(z, 3 * hidden, hidden)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// `−log softmax(logits)[label]` as a scalar.
pub fn softmax_xent<T: Real>(g: &mut Graph<T>, logits: Var, label: usize) -> Result<Var> {
    let n = g.value(logits).len();
    if label >= n {
        return Err(Error::InvalidInput(format!(
            "label {label} out of range for {n} logits"
        )));
    }
    let row = g.reshape(logits, vec![n])?;
    let l = g.xent_rows(row, vec![label])?;
    g.reshape(l, vec![1])
}

impl<T: Real> Graph<T> {
    fn len_of(&self, v: Var, axis: usize) -> usize {
        self.shape(v).get(axis).copied().unwrap_or(0)
    }
}
