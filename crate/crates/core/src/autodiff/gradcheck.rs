use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Central finite-difference check of every leaf gradient; returns the
/// worst norm-wise relative error over leaves.
pub fn fd_relative_error<F>(leaves: &[Tensor], h: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ls: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ls.iter().map(|t| tape.constant(t.clone())).collect();
        let r = build(&mut tape, &vars)?;
        Ok(tape.value(r).item())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.variable(t.clone())).collect();
    let root = build(&mut tape, &vars)?;
    let grads = tape.backward(root)?;

    let mut worst: f64 = 0.0;
    for (li, leaf) in leaves.iter().enumerate() {
        let analytic = grads.wrt_or_zero(vars[li], leaf.len());
        let mut numeric = vec![0.0; leaf.len()];
        for (k, n) in numeric.iter_mut().enumerate() {
            let mut plus = leaves.to_vec();
            plus[li].data_mut()[k] += h;
            let mut minus = leaves.to_vec();
            minus[li].data_mut()[k] -= h;
            *n = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
        }
        let diff = norm(analytic.iter().zip(&numeric).map(|(a, n)| a - n));
        let scale = norm(analytic.iter().copied()).max(norm(numeric.iter().copied()));
        worst = worst.max(if scale > 0.0 { diff / scale } else { diff });
    }
    Ok(worst)
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}
