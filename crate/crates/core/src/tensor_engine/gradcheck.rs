//! Central finite-difference verification of analytic gradients.

use crate::error::Result;

use super::graph::{Graph, Var};
use super::params::{BoundParams, ParamStore};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`;
    /// infinite when any evaluation produced a NaN.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error < tol
    }
}

/// Compares the backward pass of `f` against `(f(p+eps) − f(p−eps)) / 2eps`
/// for every coordinate of every parameter.
pub fn grad_check<F>(params: &ParamStore<f64>, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &BoundParams) -> Result<Var>,
{
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let root = f(&mut g, &bound)?;
    g.backward(root)?;
    let analytic = params.grads_from(&g, &bound);

    let eval = |p: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let bound = p.bind_frozen(&mut g);
        let root = f(&mut g, &bound)?;
        Ok(g.item(root))
    };

    let mut work = params.clone();
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for name in &names {
        let n = params.require(name)?.len();
        let a = analytic.require(name)?.data().to_vec();
        for i in 0..n {
            let orig = params.require(name)?.data()[i];
            work.get_mut(name).expect("cloned").data_mut()[i] = orig + eps;
            let fp = eval(&work)?;
            work.get_mut(name).expect("cloned").data_mut()[i] = orig - eps;
            let fm = eval(&work)?;
            work.get_mut(name).expect("cloned").data_mut()[i] = orig;

            let numeric = (fp - fm) / (2.0 * eps);
            let denom = a[i].abs().max(numeric.abs()).max(1e-8);
            let mut rel = (a[i] - numeric).abs() / denom;
            if rel.is_nan() {
                rel = f64::INFINITY;
            }
            report.coordinates += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}
