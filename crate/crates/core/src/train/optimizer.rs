use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::nn::{Gradients, ModelParams, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub momentum: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            momentum: 0.9,
        }
    }
}

/// Per-parameter moments, laid out like [`ModelParams::sections`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    /// Adam first moment, or SGD velocity.
    first: [Vec<T>; 3],
    /// Adam second moment; unused by SGD.
    second: [Vec<T>; 3],
    step: i32,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let zeros = || params.sections().map(|s| vec![T::zero(); s.len()]);
        OptimizerState {
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }
}

/// Applies one update in place.
pub fn optimizer_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    state: &mut OptimizerState<T>,
    cfg: &OptimizerConfig,
) -> Result<(), TrainError> {
    let grad_sections = grads.sections();
    for (p, g) in params.sections().iter().zip(&grad_sections) {
        if p.len() != g.len() {
            return Err(TrainError::Shape(format!(
                "gradient section has {} entries, parameters {}",
                g.len(),
                p.len()
            )));
        }
    }
    state.step += 1;
    let lr = T::of_f64(cfg.learning_rate);
    match cfg.kind {
        OptimizerKind::Adam => {
            let (b1, b2) = (T::of_f64(cfg.beta1), T::of_f64(cfg.beta2));
            let eps = T::of_f64(cfg.epsilon);
            let corr1 = T::one() - b1.powi(state.step);
            let corr2 = T::one() - b2.powi(state.step);
            for (s, p) in params.sections_mut().into_iter().enumerate() {
                let (m, v, g) = (&mut state.first[s], &mut state.second[s], grad_sections[s]);
                for i in 0..p.len() {
                    m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                    v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                    let m_hat = m[i] / corr1;
                    let v_hat = v[i] / corr2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        OptimizerKind::SgdMomentum => {
            let mu = T::of_f64(cfg.momentum);
            for (s, p) in params.sections_mut().into_iter().enumerate() {
                let (vel, g) = (&mut state.first[s], grad_sections[s]);
                for i in 0..p.len() {
                    vel[i] = mu * vel[i] + g[i];
                    p[i] -= lr * vel[i];
                }
            }
        }
    }
    if params.is_finite() {
        Ok(())
    } else {
        Err(TrainError::NonFiniteUpdate { step: state.step })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Competition;
    use approx::assert_relative_eq;

    fn params() -> ModelParams<f64> {
        ModelParams::from_parts(
            2,
            2,
            vec![0.1, -0.2, 0.3, 0.4],
            vec![0.05, -0.05],
            vec![0.0, 0.2],
            Competition::none(),
        )
        .unwrap()
    }

    fn grads(dw: [f64; 4]) -> Gradients<f64> {
        Gradients {
            dw: dw.to_vec(),
            db: vec![0.5, -1.5],
            dc: vec![2.0, -0.25],
            loss: 0.0,
        }
    }

    fn sgd(lr: f64) -> OptimizerConfig {
        OptimizerConfig {
            kind: OptimizerKind::SgdMomentum,
            learning_rate: lr,
            ..Default::default()
        }
    }

    #[test]
    fn sgd_zero_gradient_is_noop() {
        let mut p = params();
        let before = p.clone();
        let mut state = OptimizerState::new(&p);
        let zero = Gradients::zeros(2, 2);
        optimizer_step(&mut p, &zero, &mut state, &sgd(0.1)).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn sgd_momentum_unrolls() {
        let lr = 0.01;
        let g = grads([1.0, -2.0, 0.5, 3.0]);
        let mut p = params();
        let p0 = p.clone();
        let mut state = OptimizerState::new(&p);
        optimizer_step(&mut p, &g, &mut state, &sgd(lr)).unwrap();
        let p1 = p.clone();
        optimizer_step(&mut p, &g, &mut state, &sgd(lr)).unwrap();
        for i in 0..4 {
            assert_relative_eq!(p0.w[i] - p1.w[i], lr * g.dw[i], max_relative = 1e-12);
            assert_relative_eq!(p1.w[i] - p.w[i], lr * g.dw[i] * 1.9, max_relative = 1e-12);
        }
    }

    #[test]
    fn adam_first_step_is_sign_times_lr() {
        let cfg = OptimizerConfig::default();
        let g = grads([1e-3, -2.0, 0.5, 30.0]);
        let mut p = params();
        let p0 = p.clone();
        let mut state = OptimizerState::new(&p);
        optimizer_step(&mut p, &g, &mut state, &cfg).unwrap();
        for i in 0..4 {
            let expected = cfg.learning_rate * g.dw[i] / (g.dw[i].abs() + cfg.epsilon);
            assert_relative_eq!(p0.w[i] - p.w[i], expected, max_relative = 1e-9);
        }
        for i in 0..2 {
            let expected = cfg.learning_rate * g.dc[i] / (g.dc[i].abs() + cfg.epsilon);
            assert_relative_eq!(p0.c[i] - p.c[i], expected, max_relative = 1e-9);
        }
        assert_eq!(state.steps(), 1);
    }

    #[test]
    fn non_finite_update_is_rejected() {
        let mut p = params();
        let mut state = OptimizerState::new(&p);
        let g = grads([f64::INFINITY, 0.0, 0.0, 0.0]);
        let err = optimizer_step(&mut p, &g, &mut state, &sgd(0.1)).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteUpdate { step: 1 }));
    }
}
