use crate::error::{Error, Result};

use super::params::ParamStore;
use super::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub m: ParamStore<T>,
    pub v: ParamStore<T>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: AdamConfig) -> Self {
        OptimizerState {
            m: ParamStore::new(),
            v: ParamStore::new(),
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam step over every parameter that has a gradient.
/// A non-finite gradient rejects the whole step before anything is modified.
pub fn adam_update<T: Real>(params: &mut ParamStore<T>, grads: &ParamStore<T>, state: &mut OptimizerState<T>) -> Result<()> {
    for (name, g) in grads.iter() {
        let p = params.require(name)?;
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "gradient for `{name}` has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if g.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name.to_owned()));
        }
    }
    state.t += 1;
    let c = state.config;
    let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
    let one = T::one();
    let bc1 = one - T::from_f64(c.beta1.powi(state.t as i32));
    let bc2 = one - T::from_f64(c.beta2.powi(state.t as i32));
    let (lr, eps) = (T::from_f64(c.lr), T::from_f64(c.eps));

    for (name, g) in grads.iter() {
        if !state.m.contains(name) {
            state.m.insert(name, Tensor::zeros(g.shape()));
            state.v.insert(name, Tensor::zeros(g.shape()));
        }
        let m = state.m.get_mut(name).expect("inserted").data_mut();
        for (m, &g) in m.iter_mut().zip(g.data()) {
            *m = b1 * *m + (one - b1) * g;
        }
        let v = state.v.get_mut(name).expect("inserted").data_mut();
        for (v, &g) in v.iter_mut().zip(g.data()) {
            *v = b2 * *v + (one - b2) * g * g;
        }
        let (m, v) = (state.m.require(name)?.data(), state.v.require(name)?.data());
        let p = params.get_mut(name).expect("checked").data_mut();
        for ((p, &m), &v) in p.iter_mut().zip(m).zip(v) {
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Global L2 norm over all gradients.
pub fn global_norm<T: Real>(grads: &ParamStore<T>) -> f64 {
    grads
        .iter()
        .flat_map(|(_, t)| t.data().iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_grad_norm<T: Real>(grads: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm.is_finite() {
        let k = T::from_f64(max_norm / norm);
        for (_, t) in grads.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = *v * k);
        }
    }
    norm
}
