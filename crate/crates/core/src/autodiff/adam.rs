use super::params::NetworkParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        let m: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            step: 0,
            v: m.clone(),
            m,
        }
    }
}

/// One bias-corrected Adam update using the grads stored on `params`.
pub fn adam_step(params: &mut NetworkParams, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::Contract("optimizer state does not match parameters".into()));
    }
    if let Some((name, _)) = params.iter().find(|(_, t)| t.grad().is_none()) {
        return Err(Error::Contract(format!("parameter `{name}` has no gradient")));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, (_, tensor)) in params.iter_mut().enumerate() {
        let g = tensor.grad().expect("checked").to_vec();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((p, gi), mi), vi) in tensor.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *p -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};

    fn scalar_params(x: f64) -> NetworkParams {
        let mut p = NetworkParams::new();
        p.push("x", Tensor::scalar(x)).unwrap();
        p
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut p = scalar_params(1.5);
        let mut st = AdamState::new(&p);
        p.tensor_mut(0).set_grad(vec![0.0]).unwrap();
        adam_step(&mut p, &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p.tensor(0).item(), 1.5);
        assert_eq!(st.m[0], vec![0.0]);
        assert_eq!(st.v[0], vec![0.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn missing_grad_is_rejected() {
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        assert!(matches!(
            adam_step(&mut p, &mut st, &AdamConfig::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn constant_grad_moves_monotonically() {
        for g in [2.0, -0.5] {
            let mut p = scalar_params(0.0);
            let mut st = AdamState::new(&p);
            let mut prev = 0.0;
            for _ in 0..100 {
                p.tensor_mut(0).set_grad(vec![g]).unwrap();
                adam_step(&mut p, &mut st, &AdamConfig::with_lr(1e-2)).unwrap();
                let x = p.tensor(0).item();
                assert!((x - prev) * g < 0.0);
                prev = x;
            }
        }
    }

    #[test]
    fn quadratic_converges() {
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::with_lr(1e-1);
        for _ in 0..500 {
            let mut tape = Tape::new();
            let vars = p.bind(&mut tape);
            let three = tape.constant(Tensor::scalar(3.0));
            let d = tape.sub(vars[0], three).unwrap();
            let loss = tape.sum_squares(d);
            let g = tape.backward(loss).unwrap();
            p.load_grads(&g, &vars).unwrap();
            adam_step(&mut p, &mut st, &cfg).unwrap();
        }
        assert!((p.tensor(0).item() - 3.0).abs() < 1e-2, "{}", p.tensor(0).item());
    }
}
