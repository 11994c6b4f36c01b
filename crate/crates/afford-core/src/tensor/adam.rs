//! Bias-corrected Adam.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates, one pair per parameter tensor.
#[derive(Clone)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments matching the given parameter shapes.
    pub fn new(params: &[Tensor<T>]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.dims())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.dims())).collect(),
            step: 0,
        }
    }
}

/// One Adam step over a parameter list. `grads[i]` may be `None` for
/// parameters untouched by the loss; their moments still decay.
pub fn adam_update<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Option<Tensor<T>>],
    state: &mut AdamState<T>,
    hp: &AdamParams,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Usage(format!(
            "adam_update: {} params, {} grads, {} moment pairs",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as f64;
    let b1 = T::from_f64(hp.beta1);
    let b2 = T::from_f64(hp.beta2);
    let one_m_b1 = T::from_f64(1.0 - hp.beta1);
    let one_m_b2 = T::from_f64(1.0 - hp.beta2);
    let corr1 = T::from_f64(1.0 / (1.0 - hp.beta1.powf(t)));
    let corr2 = T::from_f64(1.0 / (1.0 - hp.beta2.powf(t)));
    let lr = T::from_f64(hp.lr);
    let eps = T::from_f64(hp.eps);

    for (i, p) in params.iter_mut().enumerate() {
        let zero;
        let g = match &grads[i] {
            Some(g) => {
                if g.dims() != p.dims() {
                    return Err(Error::shape(
                        "adam_update",
                        format!("param {:?} vs grad {:?}", p.dims(), g.dims()),
                    ));
                }
                g
            }
            None => {
                zero = Tensor::zeros(p.dims());
                &zero
            }
        };
        g.check_finite("adam gradient")?;
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let pd = p.data_mut();
        for j in 0..pd.len() {
            let gj = g.data()[j];
            m[j] = b1 * m[j] + one_m_b1 * gj;
            v[j] = b2 * v[j] + one_m_b2 * gj * gj;
            let mhat = m[j] * corr1;
            let vhat = v[j] * corr2;
            pd[j] = pd[j] - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut params = vec![Tensor::<f64>::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()];
        let before = params[0].clone();
        let mut st = AdamState::new(&params);
        let grads = vec![Some(Tensor::zeros(&[3]))];
        adam_update(&mut params, &grads, &mut st, &AdamParams::with_lr(0.1)).unwrap();
        assert_eq!(params[0], before);
    }

    /// Hand-evaluated single step: m̂ = g, v̂ = g², Δ = lr·g/(|g| + ε) ≈ lr.
    #[test]
    fn single_step_moves_by_learning_rate() {
        let mut params = vec![Tensor::<f64>::scalar(2.0)];
        let mut st = AdamState::new(&params);
        let grads = vec![Some(Tensor::scalar(1.0))];
        adam_update(&mut params, &grads, &mut st, &AdamParams::with_lr(0.1)).unwrap();
        let moved = 2.0 - params[0].item().unwrap();
        assert!((moved - 0.1).abs() < 1e-6, "step was {moved}");
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut params = vec![Tensor::<f32>::new(vec![2], vec![0.3, -0.8]).unwrap()];
            let mut st = AdamState::new(&params);
            for k in 0..5 {
                let g = Tensor::<f32>::new(vec![2], vec![0.1 * k as f32, -0.2]).unwrap();
                adam_update(&mut params, &[Some(g)], &mut st, &AdamParams::with_lr(0.01)).unwrap();
            }
            params[0].clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut params = vec![Tensor::<f64>::zeros(&[3])];
        let mut st = AdamState::new(&params);
        let grads = vec![Some(Tensor::<f64>::zeros(&[4]))];
        assert!(adam_update(&mut params, &grads, &mut st, &AdamParams::with_lr(0.1)).is_err());
    }
}
