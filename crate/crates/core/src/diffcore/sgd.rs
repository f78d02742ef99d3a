use super::graph::Gradients;
use super::tensor::ParamGroup;
use crate::error::{Error, Result};

/// Plain SGD: `param <- param - lr * grad` for every entry that has a gradient.
///
/// `grads` is the gradient group for `params` (same name); entries missing from
/// it are left alone. Non-finite gradients are rejected before anything is
/// written.
pub fn sgd_step(params: &mut ParamGroup, grads: &ParamGroup, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    for (key, g) in grads.iter() {
        let p = params.get(key).ok_or_else(|| {
            Error::Contract(format!(
                "gradient for `{key}` has no parameter in group `{}`",
                params.name()
            ))
        })?;
        if !p.same_shape(g) {
            return Err(Error::Dimension(format!(
                "gradient for `{key}` has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient for `{}.{key}`",
                params.name()
            )));
        }
    }
    for (key, g) in grads.iter() {
        let p = params.get_mut(key).expect("checked above");
        for (w, d) in p.values_mut().iter_mut().zip(g.values()) {
            *w -= lr * d;
        }
    }
    Ok(())
}

/// Applies the matching gradient group from `grads`, if any.
pub fn sgd_step_from(params: &mut ParamGroup, grads: &Gradients, lr: f64) -> Result<()> {
    match grads.group(params.name()) {
        Some(g) => sgd_step(params, g, lr),
        None => Ok(()),
    }
}
