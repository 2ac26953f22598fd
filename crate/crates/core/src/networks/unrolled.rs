use std::sync::Arc;

use super::direct::{DirectConfig, DirectInversionNet};
use crate::autodiff::{LinearMap, NetworkParams, Tape, Var};
use crate::error::{Error, Result};
use crate::operators::{cg_on_tape, regularized_solve, CgOutcome, ComplexImage, ForwardOperator};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnrolledConfig {
    pub denoiser: DirectConfig,
    pub unrolls: usize,
    /// Data-consistency weight λ in `(AᴴA + λI) x = u + λ z`.
    pub lambda: f64,
    /// CG iterations recorded per data-consistency solve.
    pub dc_iters: usize,
    /// Relative residual the recorded solves are checked against.
    pub dc_cg_tol: f64,
}

impl Default for UnrolledConfig {
    fn default() -> Self {
        Self {
            denoiser: DirectConfig::default(),
            unrolls: 3,
            lambda: 0.05,
            dc_iters: 10,
            dc_cg_tol: 5e-2,
        }
    }
}

/// Solves `(AᴴA + λI) x = u + λ z` to tolerance.
pub fn data_consistency(
    op: &ForwardOperator,
    u: &ComplexImage,
    z: &ComplexImage,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    if lambda <= 0.0 {
        return Err(Error::Contract(format!(
            "data-consistency weight {lambda} must be positive"
        )));
    }
    let rhs = u.add(&z.scaled(lambda));
    regularized_solve(op, &rhs, lambda, tol, max_iter)
}

/// Records a fixed number of CG steps for `(AᴴA + λI) x = u + λ z`.
/// `normal_map` must be `AᴴA + λI` for the same λ.
pub fn data_consistency_on_tape(
    tape: &mut Tape,
    normal_map: &Arc<dyn LinearMap>,
    u: Var,
    z: Var,
    lambda: f64,
    iters: usize,
) -> Result<Var> {
    let lz = tape.scale(z, lambda);
    let rhs = tape.add(u, lz)?;
    cg_on_tape(tape, normal_map, rhs, iters)
}

/// MoDL-style network: `x₀ = u`, then `K` rounds of denoise followed by
/// data consistency, with one denoiser shared by every round.
#[derive(Clone, Debug, PartialEq)]
pub struct UnrolledNet {
    config: UnrolledConfig,
    denoiser: DirectInversionNet,
}

impl UnrolledNet {
    pub fn new(config: UnrolledConfig, seed: u64) -> Result<Self> {
        Self::with_denoiser(config, DirectInversionNet::new(config.denoiser, seed)?)
    }

    pub fn with_denoiser(config: UnrolledConfig, denoiser: DirectInversionNet) -> Result<Self> {
        if config.unrolls == 0 || config.lambda <= 0.0 {
            return Err(Error::Contract("unrolled net needs unrolls >= 1 and lambda > 0".into()));
        }
        if denoiser.config() != config.denoiser {
            return Err(Error::Architecture("denoiser does not match unrolled config".into()));
        }
        Ok(Self { config, denoiser })
    }

    pub fn config(&self) -> UnrolledConfig {
        self.config
    }

    pub fn denoiser(&self) -> &DirectInversionNet {
        &self.denoiser
    }

    pub fn params(&self) -> &NetworkParams {
        self.denoiser.params()
    }

    pub fn params_mut(&mut self) -> &mut NetworkParams {
        self.denoiser.params_mut()
    }

    pub fn set_params(&mut self, params: NetworkParams) -> Result<()> {
        self.denoiser.set_params(params)
    }

    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &[Var], op: &Arc<ForwardOperator>, u: Var) -> Result<Var> {
        self.forward_with(tape, |_| vars, op, u)
    }

    /// Same computation with an independent parameter binding per unroll.
    pub fn forward_on_tape_untied(
        &self,
        tape: &mut Tape,
        vars: &[Vec<Var>],
        op: &Arc<ForwardOperator>,
        u: Var,
    ) -> Result<Var> {
        if vars.len() != self.config.unrolls {
            return Err(Error::dim("untied bindings", &[self.config.unrolls], &[vars.len()]));
        }
        self.forward_with(tape, |k| &vars[k], op, u)
    }

    fn forward_with<'v>(
        &self,
        tape: &mut Tape,
        vars: impl Fn(usize) -> &'v [Var],
        op: &Arc<ForwardOperator>,
        u: Var,
    ) -> Result<Var> {
        let map = op.normal_map(self.config.lambda);
        let mut x = u;
        for k in 0..self.config.unrolls {
            let z = self.denoiser.forward_on_tape(tape, vars(k), x)?;
            x = data_consistency_on_tape(tape, &map, u, z, self.config.lambda, self.config.dc_iters)?;
        }
        Ok(x)
    }

    pub fn forward(&self, op: &Arc<ForwardOperator>, u: &ComplexImage) -> Result<ComplexImage> {
        if !self.params().is_finite() {
            return Err(Error::NonFinite("unrolled network parameters".into()));
        }
        let mut tape = Tape::new();
        let vars = self.params().bind_frozen(&mut tape);
        let x = tape.constant(u.to_tensor());
        let y = self.forward_on_tape(&mut tape, &vars, op, x)?;
        ComplexImage::from_tensor(tape.value(y))
    }

    /// Relative residual of each recorded data-consistency solve; any
    /// above `dc_cg_tol` is logged.
    pub fn dc_residuals(&self, op: &Arc<ForwardOperator>, u: &ComplexImage) -> Result<Vec<f64>> {
        let mut x = u.clone();
        let mut out = Vec::with_capacity(self.config.unrolls);
        let map = op.normal_map(self.config.lambda);
        for _ in 0..self.config.unrolls {
            let z = self.denoiser.forward(&x)?;
            let mut tape = Tape::new();
            let uv = tape.constant(u.to_tensor());
            let zv = tape.constant(z.to_tensor());
            let xv = data_consistency_on_tape(&mut tape, &map, uv, zv, self.config.lambda, self.config.dc_iters)?;
            x = ComplexImage::from_tensor(tape.value(xv))?;
            let rhs = u.add(&z.scaled(self.config.lambda));
            let lhs = op.normal(&x)?.add(&x.scaled(self.config.lambda));
            let rel = lhs.sub(&rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
            if rel > self.config.dc_cg_tol {
                log::warn!(
                    "data-consistency residual {rel:.3e} above {:.1e}",
                    self.config.dc_cg_tol
                );
            }
            out.push(rel);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptation::psnr;
    use crate::autodiff::Tensor;
    use crate::operators::{make_coils, make_variable_density_mask, CoilSensitivities, SamplingMask};
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexImage::from_fn(h, w, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn small_config() -> UnrolledConfig {
        UnrolledConfig {
            denoiser: DirectConfig { blocks: 1, features: 3 },
            unrolls: 3,
            lambda: 0.05,
            dc_iters: 10,
            dc_cg_tol: 5e-2,
        }
    }

    fn vd_op(n: usize, coils: usize) -> Arc<ForwardOperator> {
        let mask = make_variable_density_mask(n, n, 3.0, 3.0, 0.1, 1).unwrap();
        Arc::new(ForwardOperator::new(mask, make_coils(n, n, coils).unwrap(), 0.0).unwrap())
    }

    #[test]
    fn huge_lambda_returns_the_prior() {
        let op = vd_op(8, 2);
        let (u, z) = (random_image(8, 8, 1), random_image(8, 8, 2));
        let x = data_consistency(&op, &u, &z, 1e6, 1e-12, 50).unwrap().solution;
        assert!(x.sub(&z).norm() < 1e-4 * z.norm());
    }

    #[test]
    fn full_mask_average() {
        let op = ForwardOperator::new(SamplingMask::full(8, 8), CoilSensitivities::single(8, 8), 0.0).unwrap();
        let (u, z) = (random_image(8, 8, 3), random_image(8, 8, 4));
        let x = data_consistency(&op, &u, &z, 1.0, 1e-10, 20).unwrap().solution;
        assert!(x.sub(&u.add(&z).scaled(0.5)).norm() < 1e-9);
    }

    #[test]
    fn matches_dense_linear_solve() {
        let n = 6;
        let op = vd_op(n, 2);
        let (u, z) = (random_image(n, n, 5), random_image(n, n, 6));
        let lambda = 0.3;
        let m = n * n;
        let mut mat = DMatrix::<Complex64>::zeros(m, m);
        for j in 0..m {
            let mut e = ComplexImage::zeros(n, n);
            e.data_mut()[j] = Complex64::new(1.0, 0.0);
            let col = op.normal(&e).unwrap().add(&e.scaled(lambda));
            for i in 0..m {
                mat[(i, j)] = col.data()[i];
            }
        }
        let rhs = DVector::from_column_slice(u.add(&z.scaled(lambda)).data());
        let dense = mat.lu().solve(&rhs).unwrap();
        let x = data_consistency(&op, &u, &z, lambda, 1e-12, 200).unwrap().solution;
        let diff: f64 = x
            .data()
            .iter()
            .zip(dense.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-6);
    }

    #[test]
    fn identity_denoiser_full_mask_reproduces_image() {
        let n = 16;
        let op = Arc::new(ForwardOperator::new(SamplingMask::full(n, n), make_coils(n, n, 4).unwrap(), 0.0).unwrap());
        let x = random_image(n, n, 7);
        let u = op.adjoint(&op.forward(&x).unwrap()).unwrap();
        let net = UnrolledNet::with_denoiser(
            UnrolledConfig::default(),
            DirectInversionNet::identity(DirectConfig::default()).unwrap(),
        )
        .unwrap();
        let out = net.forward(&op, &u).unwrap();
        assert!(out.sub(&x).norm() < 1e-10 * x.norm());
        assert!(psnr(&out, &x).unwrap() >= 100.0);
    }

    #[test]
    fn single_unroll_is_denoiser_then_dc() {
        let op = vd_op(8, 2);
        let cfg = UnrolledConfig {
            unrolls: 1,
            ..small_config()
        };
        let net = UnrolledNet::new(cfg, 3).unwrap();
        let u = random_image(8, 8, 8);
        let out = net.forward(&op, &u).unwrap();
        let z = net.denoiser().forward(&u).unwrap();
        let mut tape = Tape::new();
        let uv = tape.constant(u.to_tensor());
        let zv = tape.constant(z.to_tensor());
        let map = op.normal_map(cfg.lambda);
        let xv = data_consistency_on_tape(&mut tape, &map, uv, zv, cfg.lambda, cfg.dc_iters).unwrap();
        assert_eq!(out, ComplexImage::from_tensor(tape.value(xv)).unwrap());
    }

    #[test]
    fn shared_weight_gradient_equals_sum_over_untied_copies() {
        let op = vd_op(8, 2);
        let net = UnrolledNet::new(small_config(), 11).unwrap();
        let u = random_image(8, 8, 9);
        let target = random_image(8, 8, 10).to_tensor();

        let mut tape = Tape::new();
        let vars = net.params().bind(&mut tape);
        let uv = tape.constant(u.to_tensor());
        let out = net.forward_on_tape(&mut tape, &vars, &op, uv).unwrap();
        let t = tape.constant(target.clone());
        let d = tape.sub(out, t).unwrap();
        let loss = tape.sum_squares(d);
        let g = tape.backward(loss).unwrap();

        let mut tape2 = Tape::new();
        let copies: Vec<Vec<Var>> = (0..3).map(|_| net.params().bind(&mut tape2)).collect();
        let uv2 = tape2.constant(u.to_tensor());
        let out2 = net.forward_on_tape_untied(&mut tape2, &copies, &op, uv2).unwrap();
        let t2 = tape2.constant(target);
        let d2 = tape2.sub(out2, t2).unwrap();
        let loss2 = tape2.sum_squares(d2);
        let g2 = tape2.backward(loss2).unwrap();

        assert_eq!(tape.value(loss).item(), tape2.value(loss2).item());
        for (i, (_, p)) in net.params().iter().enumerate() {
            let shared = g.wrt_or_zero(vars[i], p.len());
            let per: Vec<Vec<f64>> = copies.iter().map(|c| g2.wrt_or_zero(c[i], p.len())).collect();
            for k in 0..p.len() {
                let summed: f64 = per.iter().map(|v| v[k]).sum();
                assert!((shared[k] - summed).abs() <= 1e-10 * (1.0 + shared[k].abs()));
            }
            // every unroll contributes to the conv weights
            if p.shape().len() == 4 {
                for v in &per {
                    assert!(v.iter().any(|x| x.abs() > 0.0));
                }
            }
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let op = vd_op(6, 2);
        let net = UnrolledNet::new(
            UnrolledConfig {
                unrolls: 2,
                ..small_config()
            },
            12,
        )
        .unwrap();
        let u = random_image(6, 6, 13);
        let leaves: Vec<Tensor> = net.params().iter().map(|(_, t)| t.clone()).collect();
        let err = crate::autodiff::tests_support::fd_check(&leaves, 1e-5, |t, v| {
            let x = t.constant(u.to_tensor());
            let y = net.forward_on_tape(t, v, &op, x).unwrap();
            t.sum_squares(y)
        });
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn input_directional_derivative_slope() {
        let op = vd_op(8, 2);
        let net = UnrolledNet::new(small_config(), 14).unwrap();
        let u = random_image(8, 8, 15);
        let b = random_image(8, 8, 16);
        let b = b.scaled(1.0 / b.norm());
        let c = random_image(8, 8, 17);

        let mut tape = Tape::new();
        let vars = net.params().bind_frozen(&mut tape);
        let uv = tape.variable(u.to_tensor());
        let y = net.forward_on_tape(&mut tape, &vars, &op, uv).unwrap();
        let cv = tape.constant(c.to_tensor());
        let s = tape.dot(y, cv).unwrap();
        let g = tape.backward(s).unwrap();
        let directional: f64 = g.wrt(uv).unwrap().iter().zip(b.to_channels()).map(|(a, b)| a * b).sum();

        let f0 = net.forward(&op, &u).unwrap();
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&eps| {
                let f1 = net.forward(&op, &u.add(&b.scaled(eps))).unwrap();
                let fd = c.inner(&f1.sub(&f0)).re / eps;
                (fd - directional).abs()
            })
            .collect();
        // first-order convergence: the error shrinks roughly tenfold per step
        assert!(errs[1] < errs[0] * 0.2 && errs[2] < errs[1] * 0.2, "{errs:?}");
        assert!(errs[2] < 1e-3 * directional.abs().max(1.0));
    }

    #[test]
    fn dc_solves_report_residuals() {
        let op = vd_op(8, 2);
        let net = UnrolledNet::new(small_config(), 15).unwrap();
        let u = random_image(8, 8, 18);
        let r = net.dc_residuals(&op, &u).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|v| *v < net.config().dc_cg_tol), "{r:?}");
        let deeper = UnrolledNet::with_denoiser(
            UnrolledConfig {
                dc_iters: 40,
                ..net.config()
            },
            net.denoiser().clone(),
        )
        .unwrap();
        let r2 = deeper.dc_residuals(&op, &u).unwrap();
        assert!(r2.iter().zip(&r).all(|(a, b)| a < b), "{r2:?} vs {r:?}");
    }
}
