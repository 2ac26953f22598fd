use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::operators::ComplexImage;

/// Probes with i.i.d. standard normal real and imaginary parts. The stream
/// is selected by `epoch`, so each epoch gets fresh but reproducible draws.
pub fn gaussian_probes(seed: u64, epoch: u64, count: usize, height: usize, width: usize) -> Vec<ComplexImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    (0..count)
        .map(|_| {
            ComplexImage::from_fn(height, width, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            })
        })
        .collect()
}

/// `epsilon_scale · max|u|`.
pub fn divergence_epsilon(epsilon_scale: f64, u: &ComplexImage) -> Result<f64> {
    let eps = epsilon_scale * u.max_abs();
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Contract(format!("divergence step {eps} must be positive")));
    }
    Ok(eps)
}

/// `(1/ε) · mean_p ⟨p, f(u + εp) − f(u)⟩` for the given probes, where `fu`
/// is the already recorded `f(u)`.
pub fn mc_divergence_with_probes<F>(
    tape: &mut Tape,
    u: &ComplexImage,
    fu: Var,
    probes: &[ComplexImage],
    eps: f64,
    mut f: F,
) -> Result<Var>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    if probes.is_empty() {
        return Err(Error::Contract("at least one divergence probe required".into()));
    }
    let mut acc: Option<Var> = None;
    for p in probes {
        let shifted = tape.constant(u.add(&p.scaled(eps)).to_tensor());
        let fp = f(tape, shifted)?;
        let d = tape.sub(fp, fu)?;
        let pv = tape.constant(p.to_tensor());
        let term = tape.dot(pv, d)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
    }
    Ok(tape.scale(acc.expect("nonempty"), 1.0 / (eps * probes.len() as f64)))
}

/// Monte-Carlo divergence of `f` at `u` with standard normal probes.
pub fn mc_divergence<F>(
    tape: &mut Tape,
    u: &ComplexImage,
    epsilon_scale: f64,
    probes: usize,
    seed: u64,
    epoch: u64,
    mut f: F,
) -> Result<Var>
where
    F: FnMut(&mut Tape, Var) -> Result<Var>,
{
    let eps = divergence_epsilon(epsilon_scale, u)?;
    let b = gaussian_probes(seed, epoch, probes, u.height(), u.width());
    let uv = tape.constant(u.to_tensor());
    let fu = f(tape, uv)?;
    mc_divergence_with_probes(tape, u, fu, &b, eps, f)
}
