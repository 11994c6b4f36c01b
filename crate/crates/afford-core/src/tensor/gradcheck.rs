//! Central finite-difference verification of analytic gradients.
//!
//! This is the independent oracle for the whole engine: it re-evaluates the
//! forward pass with perturbed inputs and never touches the backward code it
//! checks. Runs are expected at f64, where the truncation error of central
//! differences (h = 1e-5) sits far below the tolerances used by any test.

use super::graph::{Graph, Var};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Largest relative disagreement between analytic and numeric gradients.
///
/// The error of tensor `i` is `max |g_an - g_fd| / max(1e-6, max |g_fd|)`,
/// a per-tensor normalization that stays meaningful when individual entries
/// sit near zero.
pub fn max_relative_error<F>(inputs: &[Tensor<f64>], build: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new().strict_finite(true);
        let vars: Vec<Var> = tensors.iter().map(|t| g.input(t.clone(), true)).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.value(loss).item()?.as_f64())
    };

    // Analytic gradients once.
    let mut g = Graph::new().strict_finite(true);
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone(), true)).collect();
    let loss = build(&mut g, &vars)?;
    if g.value(loss).len() != 1 {
        return Err(Error::Usage("gradcheck needs a scalar loss".into()));
    }
    let grads = g.backward(loss)?;

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[ti])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.dims()));
        let mut numeric = vec![0.0f64; input.len()];
        for ei in 0..input.len() {
            let orig = input.data()[ei];
            work[ti].data_mut()[ei] = orig + DEFAULT_STEP;
            let up = eval(&work)?;
            work[ti].data_mut()[ei] = orig - DEFAULT_STEP;
            let down = eval(&work)?;
            work[ti].data_mut()[ei] = orig;
            numeric[ei] = (up - down) / (2.0 * DEFAULT_STEP);
        }
        let scale = numeric.iter().fold(1e-6f64, |m, v| m.max(v.abs()));
        for (a, n) in analytic.data().iter().zip(&numeric) {
            worst = worst.max((a - n).abs() / scale);
        }
    }
    Ok(worst)
}

/// Asserts the default op-level tolerance.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], build: F) -> Result<()>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    check_gradients_tol(inputs, DEFAULT_TOLERANCE, build)
}

pub fn check_gradients_tol<F>(inputs: &[Tensor<f64>], tol: f64, build: F) -> Result<()>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let err = max_relative_error(inputs, build)?;
    if err < tol {
        Ok(())
    } else {
        Err(Error::NonFinite(format!(
            "gradient check failed: max relative error {err:.3e} >= {tol:.1e}"
        )))
    }
}

/// f64 helper used by verification suites to perturb a single parameter of a
/// larger model and recompute a scalar loss.
pub fn central_difference<F>(f: F, x: &mut Tensor<f64>, index: usize, h: f64) -> Result<f64>
where
    F: Fn(&Tensor<f64>) -> Result<f64>,
{
    let orig = x.data()[index];
    x.data_mut()[index] = orig + h;
    let up = f(x)?;
    x.data_mut()[index] = orig - h;
    let down = f(x)?;
    x.data_mut()[index] = orig;
    Ok((up - down) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catches_a_wrong_gradient() {
        // Build a loss whose "analytic" gradient we sabotage by scaling the
        // input into the graph: d/dx of sum(2x) is 2, but comparing against
        // sum(x) numerics must fail.
        let x = Tensor::<f64>::new(vec![3], vec![0.3, -0.7, 1.1]).unwrap();
        let err = max_relative_error(&[x.clone()], |g, v| {
            let y = g.affine(v[0], 2.0, 0.0)?;
            g.sum_all(y)
        })
        .unwrap();
        assert!(err < 1e-8, "correct gradient should verify, got {err}");

        // Now the deliberately broken pairing: loss uses a detached copy, so
        // the analytic gradient is zero while numerics see the dependency.
        let broken = max_relative_error(&[x], |g, v| {
            let detached = g.constant(g.value(v[0]).clone());
            g.sum_all(detached)
        })
        .unwrap();
        assert!(broken > 0.5, "oracle must flag the broken graph, got {broken}");
    }
}
