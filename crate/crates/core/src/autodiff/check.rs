use alloc::vec::Vec;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Compares reverse-mode gradients of a scalar network against central
/// finite differences.
///
/// `network` receives a fresh tape and one trainable leaf per entry of
/// `params`, and returns the scalar loss. The result is the largest
/// `|analytic - numeric| / max(1, |numeric|)` over every parameter element.
pub fn grad_check<F>(network: F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = network(&mut tape, &vars)?;
    if tape.contains_gradient_reversal() {
        return Err(Error::GradientReversalPresent);
    }
    tape.backward(loss)?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|p| t.constant(p.clone())).collect();
        let l = network(&mut t, &vs)?;
        Ok(t.value(l).data()[0])
    };

    let mut worst: f64 = 0.0;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic: Vec<f64> = match tape.grad(*var) {
            Some(g) => g.to_vec(),
            None => alloc::vec![0.0; params[pi].len()],
        };
        for (ei, &a) in analytic.iter().enumerate() {
            let orig = params[pi].data()[ei];
            work[pi].data_mut()[ei] = orig + FD_STEP;
            let up = eval(&work)?;
            work[pi].data_mut()[ei] = orig - FD_STEP;
            let down = eval(&work)?;
            work[pi].data_mut()[ei] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let err = (a - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
