//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, Var};
use super::param::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::GradientCheck(format!("non-finite {what}")))
    }
}

/// Checks the gradient of a scalar function of one tensor argument.
///
/// Returns the largest `|analytic − numeric| / max(1, |analytic|)` over all
/// coordinates, with the numeric derivative taken by central differences
/// of half-width `delta`.
pub fn gradient_check<F>(f: F, point: &Tensor, delta: f64) -> Result<f64>
where
    F: Fn(&mut Graph<'_>, Var) -> Result<Var>,
{
    let eval = |t: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.input(t);
        let y = f(&mut g, x)?;
        finite(g.scalar(y), "function value")
    };
    let mut g = Graph::new();
    let x = g.leaf(point.clone());
    let y = f(&mut g, x)?;
    finite(g.scalar(y), "function value")?;
    let grads = g.backward(y)?;
    let zeros = vec![0.0; point.len()];
    let analytic = grads.wrt(x).unwrap_or(&zeros);

    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let mut plus = point.clone();
        plus.data_mut()[k] += delta;
        let mut minus = point.clone();
        minus.data_mut()[k] -= delta;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * delta);
        worst = worst.max(rel_err(finite(a, "gradient")?, numeric));
    }
    Ok(worst)
}

/// Checks parameter gradients of a scalar loss built from `store`.
///
/// At most `max_coords` coordinates per parameter are perturbed, spread
/// evenly across the tensor; pass `usize::MAX` to check all of them.
pub fn gradient_check_params<F>(
    store: &mut ParamStore,
    f: F,
    delta: f64,
    max_coords: usize,
) -> Result<f64>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let analytic: Vec<(crate::kernel::ParamId, Option<Vec<f64>>)> = {
        let mut g = Graph::with_params(store);
        let y = f(&mut g)?;
        finite(g.scalar(y), "loss")?;
        let grads = g.backward(y)?;
        store
            .ids()
            .map(|id| (id, grads.param(id).map(<[f64]>::to_vec)))
            .collect()
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::with_params(store);
        let y = f(&mut g)?;
        finite(g.scalar(y), "loss")
    };

    let mut worst: f64 = 0.0;
    for (id, grad) in analytic {
        if !store.param(id).trainable {
            continue;
        }
        let n = store.get(id).len();
        let stride = n.div_ceil(max_coords.min(n)).max(1);
        for k in (0..n).step_by(stride) {
            let original = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = original + delta;
            let up = eval(store)?;
            store.get_mut(id).data_mut()[k] = original - delta;
            let down = eval(store)?;
            store.get_mut(id).data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * delta);
            let a = grad.as_ref().map_or(0.0, |g| g[k]);
            worst = worst.max(rel_err(finite(a, "gradient")?, numeric));
        }
    }
    Ok(worst)
}
