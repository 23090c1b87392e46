use super::params::ParamTree;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor in
/// [`ParamTree`] leaf order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new<P: ParamTree<Tensor<S>>>(params: &P) -> Self {
        let zeros: Vec<Vec<S>> = params.leaves().iter().map(|t| vec![S::zero(); t.len()]).collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One Adam update of every leaf in `params` from the matching leaf in `grads`.
/// Nothing is modified when any gradient entry is non-finite.
pub fn adam_step<S: Scalar, P: ParamTree<Tensor<S>>>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState<S>,
    cfg: &AdamConfig,
) -> Result<()> {
    if !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    let mut names = Vec::new();
    let mut gs = Vec::new();
    grads.visit("", &mut |name, g| {
        names.push(name);
        gs.push(g);
    });
    let ps = params.leaves_mut();
    if ps.len() != gs.len() || ps.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "{} parameters, {} gradients, {} optimiser slots",
            ps.len(),
            gs.len(),
            state.m.len()
        )));
    }
    for ((p, g), name) in ps.iter().zip(&gs).zip(&names) {
        if p.shape() != g.shape() {
            return Err(Error::Dimension(format!(
                "gradient for {name} is {:?}, parameter is {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (S::lit(cfg.beta1), S::lit(cfg.beta2));
    let bc1 = S::one() - b1.powi(t);
    let bc2 = S::one() - b2.powi(t);
    let (lr, eps) = (S::lit(cfg.lr), S::lit(cfg.eps));
    for (((p, g), m), v) in ps.into_iter().zip(gs).zip(&mut state.m).zip(&mut state.v) {
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (S::one() - b1) * gi;
            *vi = b2 * *vi + (S::one() - b2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *w -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
