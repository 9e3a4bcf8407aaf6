//! Adam with bias correction and a cosine-annealed learning rate.

use serde::{Deserialize, Serialize};

use super::network::{Gradients, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    /// First and second moments, one per ParamStore tensor (empty if frozen).
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| {
                if t.trainable {
                    vec![0.0; t.data.len()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update of every trainable tensor.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.params.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch(
            "gradient / optimizer state does not mirror the parameter store".into(),
        ));
    }
    for (i, t) in params.tensors().iter().enumerate() {
        let expected = if t.trainable { t.data.len() } else { 0 };
        if grads.params[i].len() != expected
            || state.m[i].len() != expected
            || state.v[i].len() != expected
        {
            return Err(Error::ShapeMismatch(format!("tensor `{}`", t.name)));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(t);
    let c2 = 1.0 - b2.powf(t);
    for i in 0..params.len() {
        let g = &grads.params[i];
        if g.is_empty() {
            continue;
        }
        let data = &mut params.tensor_mut(i).data;
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..g.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            data[k] -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub total_steps: usize,
}

impl Schedule {
    pub fn new(lr_max: f64, lr_min: f64, total_steps: usize) -> Result<Self> {
        if !(lr_max > lr_min && lr_min > 0.0) || total_steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "schedule needs lr_max > lr_min > 0 and T >= 1 (got {lr_max}, {lr_min}, {total_steps})"
            )));
        }
        Ok(Self {
            lr_max,
            lr_min,
            total_steps,
        })
    }
}

/// `lr_min + ½(lr_max − lr_min)(1 + cos(πt/T))`, exact at both endpoints.
pub fn cosine_lr(step: usize, schedule: &Schedule) -> Result<f64> {
    let total = schedule.total_steps;
    if step > total {
        return Err(Error::StepOutOfRange { step, total });
    }
    if step == 0 {
        return Ok(schedule.lr_max);
    }
    if step == total {
        return Ok(schedule.lr_min);
    }
    let phase = std::f64::consts::PI * step as f64 / total as f64;
    Ok(schedule.lr_min + 0.5 * (schedule.lr_max - schedule.lr_min) * (1.0 + phase.cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::SeededRng;
    use crate::nn::{LayerSpec, Matrix, Network};

    fn scalar_net() -> Network {
        // a single PReLU owns exactly one scalar parameter
        Network::new(1, vec![LayerSpec::PRelu], &mut SeededRng::new(0)).unwrap()
    }

    fn grads_for(net: &Network, g: f64) -> Gradients {
        assert_eq!(net.params().len(), 1);
        Gradients {
            params: vec![vec![g]],
            input: Matrix::zeros(1, 1),
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = scalar_net();
        let mut state = AdamState::new(net.params());
        let before = net.params().clone();
        let g = grads_for(&net, 0.0);
        adam_step(net.params_mut(), &g, &mut state, 0.1).unwrap();
        assert_eq!(net.params(), &before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut net = scalar_net();
        let mut state = AdamState::new(net.params());
        let g = grads_for(&net, 1.0);
        adam_step(net.params_mut(), &g, &mut state, 0.1).unwrap();
        // m̂ = 1, v̂ = 1 ⇒ Δ = 0.1 / (1 + 1e-8)
        let moved = 0.25 - net.params().tensor(0).data[0];
        assert!((moved - 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut a = scalar_net();
        let mut b = scalar_net();
        let mut sa = AdamState::new(a.params());
        let mut sb = AdamState::new(b.params());
        for k in 0..5 {
            let g = grads_for(&a, 0.3 * k as f64 - 0.4);
            adam_step(a.params_mut(), &g, &mut sa, 0.01).unwrap();
            adam_step(b.params_mut(), &g, &mut sb, 0.01).unwrap();
        }
        assert_eq!(a.params(), b.params());
        assert_eq!(sa, sb);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut net = scalar_net();
        let mut state = AdamState::new(net.params());
        let bad = Gradients {
            params: vec![vec![1.0, 2.0]],
            input: Matrix::zeros(1, 1),
        };
        assert!(adam_step(net.params_mut(), &bad, &mut state, 0.1).is_err());
    }

    #[test]
    fn cosine_schedule_endpoints_and_midpoint() {
        let s = Schedule::new(1e-4, 1e-7, 1000).unwrap();
        assert_eq!(cosine_lr(0, &s).unwrap(), 1e-4);
        assert_eq!(cosine_lr(1000, &s).unwrap(), 1e-7);
        assert!((cosine_lr(500, &s).unwrap() - 5.005e-5).abs() < 1e-18);
        assert!(matches!(
            cosine_lr(1001, &s),
            Err(Error::StepOutOfRange { .. })
        ));
        let lrs: Vec<f64> = (0..=1000).map(|t| cosine_lr(t, &s).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::new(1e-7, 1e-4, 10).is_err());
        assert!(Schedule::new(1e-4, 0.0, 10).is_err());
        assert!(Schedule::new(1e-4, 1e-7, 0).is_err());
    }
}
