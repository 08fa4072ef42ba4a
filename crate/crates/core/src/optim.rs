//! Plain SGD and Adam updates over [`ModelParams`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstm::{ModelParams, ParamGrads};

fn check_congruent(params: &ModelParams, grads: &ParamGrads) -> Result<()> {
    if params.dims() != grads.dims() {
        return Err(Error::Shape(format!(
            "gradient dims {:?} do not match parameter dims {:?}",
            grads.dims(),
            params.dims()
        )));
    }
    Ok(())
}

/// `params - lr * grads`.
pub fn sgd_step(params: &ModelParams, grads: &ParamGrads, lr: f64) -> Result<ModelParams> {
    let mut next = params.clone();
    sgd_step_in_place(&mut next, grads, lr)?;
    Ok(next)
}

pub fn sgd_step_in_place(params: &mut ModelParams, grads: &ParamGrads, lr: f64) -> Result<()> {
    check_congruent(params, grads)?;
    for (p, g) in params.values_mut().iter_mut().zip(grads.values()) {
        *p -= lr * g;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One bias-corrected Adam update. A fresh (empty) state is sized on first use.
pub fn adam_step(
    params: &ModelParams,
    grads: &ParamGrads,
    state: &AdamState,
    config: &AdamConfig,
) -> Result<(ModelParams, AdamState)> {
    let mut next = params.clone();
    let mut state = state.clone();
    adam_step_in_place(&mut next, grads, &mut state, config)?;
    Ok((next, state))
}

pub fn adam_step_in_place(
    params: &mut ModelParams,
    grads: &ParamGrads,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    check_congruent(params, grads)?;
    let n = grads.values().len();
    if state.step == 0 && state.m.is_empty() {
        state.m = vec![0.0; n];
        state.v = vec![0.0; n];
    }
    if state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape(format!(
            "adam state holds {} moments for {n} parameters",
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    for (((p, g), m), v) in params
        .values_mut()
        .iter_mut()
        .zip(grads.values())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
    }
    Ok(())
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut ParamGrads, max_norm: f64) {
    let norm = grads.l2_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{init_params, Dims};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ModelParams, Dims) {
        let dims = Dims::new(3, 2, 2).unwrap();
        (init_params(dims, &mut ChaCha8Rng::seed_from_u64(0)), dims)
    }

    fn filled(dims: Dims, v: f64) -> ParamGrads {
        ParamGrads::from_values(dims, vec![v; dims.num_params()]).unwrap()
    }

    #[test]
    fn sgd_zero_grads_is_identity() {
        let (p, dims) = setup();
        assert_eq!(sgd_step(&p, &ParamGrads::zeros(dims), 0.1).unwrap(), p);
    }

    #[test]
    fn sgd_unit_grads() {
        let (p, dims) = setup();
        let q = sgd_step(&p, &filled(dims, 1.0), 0.001).unwrap();
        for (a, b) in p.values().iter().zip(q.values()) {
            assert!((a - b - 0.001).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_steps_compose_linearly() {
        let (p, dims) = setup();
        let g1 = filled(dims, 0.5);
        let g2 = filled(dims, -2.0);
        let two = sgd_step(&sgd_step(&p, &g1, 0.1).unwrap(), &g2, 0.1).unwrap();
        let mut sum = g1.clone();
        sum.add_assign(&g2);
        let one = sgd_step(&p, &sum, 0.1).unwrap();
        for (a, b) in two.values().iter().zip(one.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let (p, dims) = setup();
        let cfg = AdamConfig::with_lr(0.01);
        let (q, state) = adam_step(&p, &filled(dims, 3.0), &AdamState::new(), &cfg).unwrap();
        assert_eq!(state.step, 1);
        // m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps)
        let expected = 0.01 * 3.0 / (3.0 + 1e-8);
        for (a, b) in p.values().iter().zip(q.values()) {
            assert!((a - b - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_zero_grads_never_move() {
        let (p, dims) = setup();
        let mut q = p.clone();
        let mut state = AdamState::new();
        for _ in 0..10 {
            adam_step_in_place(&mut q, &ParamGrads::zeros(dims), &mut state, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, q);
        assert_eq!(state.step, 10);
    }

    #[test]
    fn adam_defaults() {
        let c = AdamConfig::default();
        assert_eq!((c.beta1, c.beta2, c.eps), (0.9, 0.999, 1e-8));
    }

    #[test]
    fn clip_bounds_norm() {
        let (_, dims) = setup();
        let mut g = filled(dims, 10.0);
        clip_global_norm(&mut g, 1.0);
        assert!((g.l2_norm() - 1.0).abs() < 1e-12);
        let mut small = filled(dims, 1e-3);
        let before = small.clone();
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, before);
    }
}
