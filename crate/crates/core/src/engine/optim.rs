//! Adam and RMSProp update rules plus weight clipping.

use std::collections::BTreeMap;

use super::params::ParameterSet;
use super::tape::Gradients;
use super::EngineError;

/// Per-parameter Adam moments. `t` is tracked per parameter so that updating
/// a subset of parameters keeps bias correction consistent for each tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
    pub t: BTreeMap<String, u64>,
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState { beta1, beta2, eps, m: BTreeMap::new(), v: BTreeMap::new(), t: BTreeMap::new() }
    }
}

/// Per-parameter RMSProp squared-gradient accumulators.
#[derive(Debug, Clone)]
pub struct RmsPropState {
    pub decay: f64,
    pub eps: f64,
    pub acc: BTreeMap<String, Vec<f64>>,
}

impl RmsPropState {
    pub fn new(decay: f64, eps: f64) -> Self {
        RmsPropState { decay, eps, acc: BTreeMap::new() }
    }
}

/// Optimizer state attached to a model; serialized with checkpoints so that
/// resumed runs continue exactly where they stopped.
#[derive(Debug, Clone)]
pub enum OptState {
    Adam(AdamState),
    RmsProp(RmsPropState),
}

/// Which way the objective moves: gradient descent on a loss, or gradient
/// ascent on a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

/// One Adam step with classic (coupled) L2 weight decay. Only parameters
/// present in `grads` are touched.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<(), EngineError> {
    let beta1 = state.beta1;
    let beta2 = state.beta2;
    let eps = state.eps;
    for (name, grad) in grads {
        let p = params.get_mut(name)?;
        let n = p.numel();
        if grad.numel() != n {
            return Err(EngineError::ShapeMismatch { expected: n, got: grad.numel() });
        }
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let t = state.t.entry(name.clone()).or_insert(0);
        *t += 1;
        let bc1 = 1.0 - beta1.powi(*t as i32);
        let bc2 = 1.0 - beta2.powi(*t as i32);
        let pv = p.values_mut();
        for i in 0..n {
            let g = grad.values()[i] + weight_decay * pv[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            pv[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// One RMSProp step. `direction` selects descent on a loss or ascent on a
/// score (the critic and generator both climb their objectives).
pub fn rmsprop_step(
    params: &mut ParameterSet,
    grads: &Gradients,
    state: &mut RmsPropState,
    lr: f64,
    direction: Direction,
) -> Result<(), EngineError> {
    let decay = state.decay;
    let eps = state.eps;
    let sign = match direction {
        Direction::Minimize => -1.0,
        Direction::Maximize => 1.0,
    };
    for (name, grad) in grads {
        let p = params.get_mut(name)?;
        let n = p.numel();
        if grad.numel() != n {
            return Err(EngineError::ShapeMismatch { expected: n, got: grad.numel() });
        }
        let acc = state.acc.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let pv = p.values_mut();
        for i in 0..n {
            let g = grad.values()[i];
            acc[i] = decay * acc[i] + (1.0 - decay) * g * g;
            pv[i] += sign * lr * g / (acc[i].sqrt() + eps);
        }
    }
    Ok(())
}

/// Plain SGD step, descent only.
pub fn sgd_step(
    params: &mut ParameterSet,
    grads: &Gradients,
    lr: f64,
) -> Result<(), EngineError> {
    for (name, grad) in grads {
        let p = params.get_mut(name)?;
        let n = p.numel();
        if grad.numel() != n {
            return Err(EngineError::ShapeMismatch { expected: n, got: grad.numel() });
        }
        let pv = p.values_mut();
        for i in 0..n {
            pv[i] -= lr * grad.values()[i];
        }
    }
    Ok(())
}

/// Clamp every parameter value into [-c, c].
pub fn clip_weights(params: &mut ParameterSet, c: f64) {
    assert!(c > 0.0, "clip bound must be positive");
    for (_, t) in params.iter_mut() {
        for v in t.values_mut() {
            *v = v.clamp(-c, c);
        }
    }
}
