//! First-order optimizers over a flat list of parameter tensors.

use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(hyper: AdamHyper, params: &[Tensor]) -> Self {
        Self {
            hyper,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }
}

fn check_shapes(params: &[Tensor], grads: &[Tensor]) -> Result<(), TensorError> {
    if params.len() != grads.len() {
        return Err(TensorError::ShapeMismatch {
            op: "optimizer",
            left: vec![params.len()],
            right: vec![grads.len()],
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "optimizer",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<(), TensorError> {
    check_shapes(params, grads)?;
    if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.numel()) {
        return Err(TensorError::ShapeMismatch {
            op: "adam",
            left: state.m.iter().map(Vec::len).collect(),
            right: params.iter().map(Tensor::numel).collect(),
        });
    }
    let AdamHyper { lr, beta1, beta2, eps } = state.hyper;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    RmsProp,
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam(AdamState),
    RmsProp { lr: f64, alpha: f64, eps: f64, sq: Vec<Vec<f64>> },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &[Tensor]) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(
                AdamHyper {
                    lr,
                    ..Default::default()
                },
                params,
            )),
            OptimizerKind::RmsProp => Optimizer::RmsProp {
                lr,
                alpha: 0.99,
                eps: 1e-8,
                sq: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            },
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), TensorError> {
        match self {
            Optimizer::Adam(state) => adam_step(params, grads, state),
            Optimizer::Sgd { lr } => {
                check_shapes(params, grads)?;
                for (p, g) in params.iter_mut().zip(grads) {
                    p.data_mut().iter_mut().zip(g.data()).for_each(|(w, gi)| *w -= *lr * gi);
                }
                Ok(())
            }
            Optimizer::RmsProp { lr, alpha, eps, sq } => {
                check_shapes(params, grads)?;
                for ((p, g), s) in params.iter_mut().zip(grads).zip(sq.iter_mut()) {
                    for ((w, gi), si) in p.data_mut().iter_mut().zip(g.data()).zip(s.iter_mut()) {
                        *si = *alpha * *si + (1.0 - *alpha) * gi * gi;
                        *w -= *lr * gi / (si.sqrt() + *eps);
                    }
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut params = vec![Tensor::scalar(0.0)];
        let grads = vec![Tensor::scalar(1.0)];
        let hyper = AdamHyper {
            lr: 1e-3,
            ..Default::default()
        };
        let mut state = AdamState::new(hyper, &params);
        adam_step(&mut params, &grads, &mut state).unwrap();
        assert!((params[0].item() + 1e-3).abs() < 1e-6);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![Tensor::row_vector(&[0.3, -1.2])];
        let before = params.clone();
        let mut state = AdamState::new(AdamHyper::default(), &params);
        for _ in 0..10 {
            adam_step(&mut params, &[Tensor::zeros(&[1, 2])], &mut state).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let p0 = vec![Tensor::row_vector(&[0.1, 0.2, 0.3])];
        let g = vec![Tensor::row_vector(&[0.5, -0.25, 2.0])];
        let (mut a, mut b) = (p0.clone(), p0.clone());
        let mut sa = AdamState::new(AdamHyper::default(), &p0);
        let mut sb = sa.clone();
        adam_step(&mut a, &g, &mut sa).unwrap();
        adam_step(&mut b, &g, &mut sb).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(adam_step(&mut a, &[Tensor::zeros(&[3, 1])], &mut sa).is_err());
    }

    #[test]
    fn sgd_and_rmsprop_descend() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::RmsProp, OptimizerKind::Adam] {
            let mut p = vec![Tensor::scalar(2.0)];
            let mut opt = Optimizer::new(kind, 0.05, &p);
            for _ in 0..200 {
                let g = vec![Tensor::scalar(2.0 * p[0].item())];
                opt.step(&mut p, &g).unwrap();
            }
            assert!(p[0].item().abs() < 0.2, "{kind:?} {}", p[0].item());
        }
    }
}
