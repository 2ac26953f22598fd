//! Conjugate gradients for the Hermitian positive semidefinite systems
//! built from `AᴴA`, both as plain numerics and recorded on a tape.

use std::fmt;
use std::sync::Arc;

use super::forward::ForwardOperator;
use super::image::ComplexImage;
use crate::autodiff::{LinearMap, Tape, Var};
use crate::error::Result;

pub const DEFAULT_CG_TOL: f64 = 1e-8;
pub const DEFAULT_CG_ITERS: usize = 200;

/// Relative residual below which the recorded solver stops early; keeps
/// the recurrences away from 0/0 once the system is solved exactly.
const TAPE_BREAKDOWN: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgWarning {
    pub iterations: usize,
    pub relative_residual: f64,
}

impl fmt::Display for CgWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "conjugate gradients stopped after {} iterations at relative residual {:.3e}",
            self.iterations, self.relative_residual
        )
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub solution: ComplexImage,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

impl CgOutcome {
    pub fn warning(&self) -> Option<CgWarning> {
        (!self.converged).then_some(CgWarning {
            iterations: self.iterations,
            relative_residual: self.relative_residual,
        })
    }
}

fn re_inner(a: &ComplexImage, b: &ComplexImage) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

/// Solves `M w = rhs` from `w₀ = 0`; non-convergence is reported on the
/// outcome and logged, not raised.
pub fn conjugate_gradient<F>(apply: F, rhs: &ComplexImage, tol: f64, max_iter: usize) -> Result<CgOutcome>
where
    F: Fn(&ComplexImage) -> Result<ComplexImage>,
{
    let (h, w) = rhs.extents();
    let mut x = ComplexImage::zeros(h, w);
    let bnorm = rhs.norm();
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rs = re_inner(&r, &r);
    let mut iterations = 0;
    while iterations < max_iter && rs.sqrt() > tol * bnorm {
        let ap = apply(&p)?;
        let pap = re_inner(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rs / pap;
        x = x.zip_map(&p, |a, b| a + b * alpha);
        r = r.zip_map(&ap, |a, b| a - b * alpha);
        let rs_new = re_inner(&r, &r);
        p = r.zip_map(&p, |a, b| a + b * (rs_new / rs));
        rs = rs_new;
        iterations += 1;
    }
    let relative_residual = apply(&x)?.sub(rhs).norm() / bnorm;
    let converged = relative_residual <= tol * 1.01 || rs.sqrt() <= tol * bnorm;
    let out = CgOutcome {
        solution: x,
        iterations,
        relative_residual,
        converged,
    };
    if let Some(w) = out.warning() {
        log::warn!("{w}");
    }
    Ok(out)
}

/// `(AᴴA)† v` for `v` in the range of `AᴴA`.
///
/// Starting from zero keeps every iterate in the Krylov space of `v`, so
/// the limit is the minimum-norm solution.
pub fn pinv_normal(op: &ForwardOperator, v: &ComplexImage, tol: f64, max_iter: usize) -> Result<CgOutcome> {
    conjugate_gradient(|x| op.normal(x), v, tol, max_iter)
}

/// Orthogonal projection onto the range of `Aᴴ`: `P x = (AᴴA)† AᴴA x`.
pub fn project_range(op: &ForwardOperator, x: &ComplexImage, tol: f64) -> Result<CgOutcome> {
    pinv_normal(op, &op.normal(x)?, tol, DEFAULT_CG_ITERS)
}

/// Solves `(AᴴA + λI) x = rhs`.
pub fn regularized_solve(
    op: &ForwardOperator,
    rhs: &ComplexImage,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    conjugate_gradient(|x| Ok(op.normal(x)?.add(&x.scaled(lambda))), rhs, tol, max_iter)
}

/// Records `iterations` steps of CG for `map · x = rhs` (from `x₀ = 0`) so
/// the result is differentiable with respect to `rhs` and anything
/// upstream of it. `map` must be symmetric positive semidefinite.
pub fn cg_on_tape(tape: &mut Tape, map: &Arc<dyn LinearMap>, rhs: Var, iterations: usize) -> Result<Var> {
    let rs0 = {
        let d = tape.value(rhs).data();
        d.iter().map(|v| v * v).sum::<f64>()
    };
    if rs0 == 0.0 || iterations == 0 {
        return Ok(tape.scale(rhs, 0.0));
    }
    let mut r = rhs;
    let mut p = rhs;
    let mut rs = tape.dot(r, r)?;
    let mut x: Option<Var> = None;
    for _ in 0..iterations {
        let ap = tape.linear(p, map.clone())?;
        let pap = tape.dot(p, ap)?;
        if tape.value(pap).item() <= 0.0 {
            break;
        }
        let alpha = tape.div(rs, pap)?;
        let step = tape.mul_scalar(p, alpha)?;
        x = Some(match x {
            Some(prev) => tape.add(prev, step)?,
            None => step,
        });
        let ap_step = tape.mul_scalar(ap, alpha)?;
        r = tape.sub(r, ap_step)?;
        let rs_new = tape.dot(r, r)?;
        if tape.value(rs_new).item() <= TAPE_BREAKDOWN * TAPE_BREAKDOWN * rs0 {
            break;
        }
        let beta = tape.div(rs_new, rs)?;
        let p_beta = tape.mul_scalar(p, beta)?;
        p = tape.add(r, p_beta)?;
        rs = rs_new;
    }
    Ok(x.unwrap_or_else(|| tape.scale(rhs, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{
        fft2_centered, ifft2_centered, make_cartesian_mask, make_coils, CoilSensitivities, SamplingMask,
    };
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexImage::from_fn(h, w, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn cartesian_single(n: usize, seed: u64) -> ForwardOperator {
        let mask = make_cartesian_mask(n, n, 2.0, 2, seed).unwrap();
        ForwardOperator::new(mask, CoilSensitivities::single(n, n), 0.0).unwrap()
    }

    fn sampled_filter(op: &ForwardOperator, x: &ComplexImage) -> ComplexImage {
        let mut k = fft2_centered(x);
        for (v, &keep) in k.data_mut().iter_mut().zip(op.mask().kept()) {
            if !keep {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        ifft2_centered(&k)
    }

    #[test]
    fn identity_operator_is_its_own_pseudo_inverse() {
        let op = ForwardOperator::new(SamplingMask::full(8, 8), CoilSensitivities::single(8, 8), 0.0).unwrap();
        let v = random_image(8, 8, 1);
        let w = pinv_normal(&op, &v, DEFAULT_CG_TOL, DEFAULT_CG_ITERS).unwrap();
        assert!(w.converged);
        assert!(w.solution.sub(&v).norm() < 1e-12);
        let p = project_range(&op, &v, DEFAULT_CG_TOL).unwrap();
        assert!(p.solution.sub(&v).norm() < 1e-12);
    }

    #[test]
    fn cartesian_projection_is_frequency_filter() {
        let op = cartesian_single(16, 3);
        let x = random_image(16, 16, 2);
        let p = project_range(&op, &x, DEFAULT_CG_TOL).unwrap();
        assert!(p.solution.sub(&sampled_filter(&op, &x)).norm() < 1e-9 * x.norm());
        let w = pinv_normal(&op, &op.normal(&x).unwrap(), DEFAULT_CG_TOL, DEFAULT_CG_ITERS).unwrap();
        assert!(w.solution.sub(&sampled_filter(&op, &x)).norm() < 1e-8 * x.norm());
    }

    #[test]
    fn projection_is_idempotent_and_hermitian() {
        let op = cartesian_single(8, 1);
        let tol = 1e-8;
        for seed in 0..20 {
            let x = random_image(8, 8, 2 * seed);
            let z = random_image(8, 8, 2 * seed + 1);
            let px = project_range(&op, &x, tol).unwrap().solution;
            let ppx = project_range(&op, &px, tol).unwrap().solution;
            assert!(ppx.sub(&px).norm() <= 2.0 * tol * px.norm());
            let pz = project_range(&op, &z, tol).unwrap().solution;
            let (a, b) = (px.inner(&z), x.inner(&pz));
            assert!((a - b).norm() <= 2.0 * tol * x.norm() * z.norm());
        }
    }

    // With several coils AᴴA is ill-conditioned on its range: either the
    // residual meets the tolerance or the outcome carries a warning with the
    // true residual.
    #[test]
    fn multicoil_projection_reports_its_residual() {
        let mask = make_cartesian_mask(16, 16, 3.0, 2, 1).unwrap();
        let op = ForwardOperator::new(mask, make_coils(16, 16, 4).unwrap(), 0.0).unwrap();
        let tol = 1e-8;
        let x = random_image(16, 16, 4);
        let out = project_range(&op, &x, tol).unwrap();
        let nx = op.normal(&x).unwrap();
        let resid = op.normal(&out.solution).unwrap().sub(&nx).norm();
        let rel = resid / nx.norm();
        assert!((rel - out.relative_residual).abs() <= 1e-6 * rel.max(tol));
        if out.converged {
            assert!(rel <= tol * (1.0 + 1e-6));
        } else {
            assert!(out.warning().is_some());
        }
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let mask = make_cartesian_mask(16, 16, 3.0, 2, 1).unwrap();
        let op = ForwardOperator::new(mask, make_coils(16, 16, 4).unwrap(), 0.0).unwrap();
        let v = op.normal(&random_image(16, 16, 6)).unwrap();
        let out = pinv_normal(&op, &v, 1e-14, 2).unwrap();
        let w = out.warning().expect("two iterations cannot reach 1e-14");
        assert_eq!(w.iterations, 2);
        assert!(w.relative_residual > 1e-14);
    }

    #[test]
    fn regularized_solve_closed_form_for_identity() {
        let op = ForwardOperator::new(SamplingMask::full(8, 8), make_coils(8, 8, 3).unwrap(), 0.0).unwrap();
        let rhs = random_image(8, 8, 7);
        let out = regularized_solve(&op, &rhs, 1.0, 1e-10, 50).unwrap();
        assert!(out.solution.sub(&rhs.scaled(0.5)).norm() < 1e-9);
    }

    #[test]
    fn tape_cg_matches_numeric_cg() {
        let mask = make_cartesian_mask(8, 8, 2.0, 2, 2).unwrap();
        let op = Arc::new(ForwardOperator::new(mask, make_coils(8, 8, 2).unwrap(), 0.0).unwrap());
        let rhs = random_image(8, 8, 8);
        let map = op.normal_map(0.1);
        let mut tape = Tape::new();
        let r = tape.constant(rhs.to_tensor());
        let x = cg_on_tape(&mut tape, &map, r, 60).unwrap();
        let numeric = regularized_solve(&op, &rhs, 0.1, 1e-12, 200).unwrap().solution;
        let taped = ComplexImage::from_tensor(tape.value(x)).unwrap();
        assert!(taped.sub(&numeric).norm() < 1e-8 * numeric.norm());
    }

    #[test]
    fn tape_cg_survives_exact_convergence() {
        let op =
            Arc::new(ForwardOperator::new(SamplingMask::full(8, 8), CoilSensitivities::single(8, 8), 0.0).unwrap());
        let map = op.normal_map(1.0);
        let mut tape = Tape::new();
        let r = tape.variable(random_image(8, 8, 9).to_tensor());
        let x = cg_on_tape(&mut tape, &map, r, 10).unwrap();
        assert!(tape.value(x).is_finite());
        let loss = tape.sum_squares(x);
        let g = tape.backward(loss).unwrap();
        // x = r/2, loss = |r|²/4, grad = r/2
        for (gv, rv) in g.wrt(r).unwrap().iter().zip(tape.value(r).data()) {
            assert!((gv - rv / 2.0).abs() < 1e-12);
        }
    }
}
