use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_params(params: &[Tensor]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: params.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update of every parameter that requires grad.
pub fn adam_step(params: &mut [Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<(), TrainError> {
    if state.m.len() != params.len()
        || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
        || state.v.iter().zip(state.m.iter()).any(|(v, m)| v.len() != m.len())
    {
        return Err(TrainError::Contract("optimizer state does not match parameter shapes".into()));
    }
    if let Some(i) = params.iter().position(|p| p.requires_grad() && p.grad().is_none()) {
        return Err(TrainError::Contract(format!("parameter {i} has no gradient")));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        if !p.requires_grad() {
            continue;
        }
        let g = p.grad().expect("checked above").to_vec();
        for (((w, mi), vi), gi) in p.values_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(&g) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64, g: f64) -> Tensor {
        let mut t = Tensor::parameter(vec![1], vec![v]).unwrap();
        t.accumulate_grad(&[g]).unwrap();
        t
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![scalar(1.5, 0.0)];
        let mut s = AdamState::for_params(&p);
        adam_step(&mut p, &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p[0].values(), &[1.5]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn matches_hand_computed_update() {
        let cfg = AdamConfig { learning_rate: 0.1, ..Default::default() };
        let mut p = vec![scalar(0.9, -0.2)];
        let mut s = AdamState { step: 1, m: vec![vec![0.05]], v: vec![vec![0.00025]] };
        adam_step(&mut p, &mut s, &cfg).unwrap();
        assert!((s.m[0][0] - 0.025).abs() < 1e-15);
        assert!((s.v[0][0] - 0.00028975).abs() < 1e-15);
        assert!((p[0].values()[0] - 0.865_439_416_116_510_9).abs() < 1e-12);
        assert_eq!(s.step, 2);
    }

    #[test]
    fn missing_grad_is_contract_error() {
        let mut p = vec![Tensor::parameter(vec![2], vec![1.0, 2.0]).unwrap()];
        let mut s = AdamState::for_params(&p);
        assert!(matches!(adam_step(&mut p, &mut s, &AdamConfig::default()), Err(TrainError::Contract(_))));
        let mut s = AdamState::default();
        assert!(adam_step(&mut p, &mut s, &AdamConfig::default()).is_err());
    }

    #[test]
    fn identical_runs_agree() {
        let run = || {
            let mut p = vec![scalar(0.3, 0.0)];
            let mut s = AdamState::for_params(&p);
            let mut out = Vec::new();
            for k in 0..20 {
                let x = p[0].values()[0];
                p[0].zero_grad();
                p[0].accumulate_grad(&[2.0 * x + (k as f64).sin()]).unwrap();
                adam_step(&mut p, &mut s, &AdamConfig::default()).unwrap();
                out.push(p[0].values()[0].to_bits());
            }
            out
        };
        assert_eq!(run(), run());
    }
}
