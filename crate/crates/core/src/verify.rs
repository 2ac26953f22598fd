//! Fast invariant suite: operator adjointness, range projection against a
//! dense eigendecomposition, divergence traces, estimator bias and
//! gradient checks. Each check returns the measured quantity so callers can
//! apply their own tolerances; [`run_suite`] applies the defaults.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::gradcheck::fd_relative_error;
use crate::autodiff::{DenseMap, LinearMap, Tape, Tensor};
use crate::data::make_phantom;
use crate::error::{Error, Result};
use crate::losses::{loss_gsure, mc_divergence, GsureConfig, RangeMode};
use crate::networks::{DirectConfig, ReconNet, UnrolledConfig, UnrolledNet};
use crate::operators::{
    fft2_centered, make_cartesian_mask, make_coils, make_variable_density_mask, pinv_normal, project_range,
    CoilSensitivities, ComplexImage, ForwardOperator, KSpaceData, MaskKind, SamplingMask,
};

/// Test-only fault injection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VerifyHooks {
    /// Perturbs `Aᴴy` inside the adjoint check.
    pub corrupt_adjoint: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ComplexImage {
    ComplexImage::from_fn(h, w, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

fn random_kspace(coils: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Result<KSpaceData> {
    KSpaceData::new((0..coils).map(|_| random_image(h, w, rng)).collect(), 0.0)
}

/// Test operator for the adjoint and projection checks.
pub fn test_operator(
    size: usize,
    coils: usize,
    kind: MaskKind,
    acceleration: f64,
    seed: u64,
) -> Result<ForwardOperator> {
    let mask = match kind {
        MaskKind::Cartesian1d => make_cartesian_mask(size, size, acceleration, (size / 8).max(1), seed)?,
        MaskKind::VariableDensity2d => make_variable_density_mask(size, size, acceleration, 3.0, 0.1, seed)?,
    };
    let coils = if coils == 1 {
        CoilSensitivities::single(size, size)
    } else {
        make_coils(size, size, coils)?
    };
    ForwardOperator::new(mask, coils, 0.0)
}

/// Worst `|⟨Ax, y⟩ − ⟨x, Aᴴy⟩| / (|⟨Ax, y⟩| + |⟨x, Aᴴy⟩|)` over random pairs.
pub fn adjoint_mismatch(op: &ForwardOperator, pairs: usize, seed: u64, hooks: VerifyHooks) -> Result<f64> {
    let (h, w) = op.extents();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = random_image(h, w, &mut rng);
        let y = random_kspace(op.num_coils(), h, w, &mut rng)?.masked(op.mask());
        let mut ahy = op.adjoint(&y)?;
        if hooks.corrupt_adjoint {
            ahy = ahy.scaled(1.0 + 1e-3);
        }
        let lhs = op.forward(&x)?.inner(&y);
        let rhs = x.inner(&ahy);
        let rel = (lhs - rhs).norm() / (lhs.norm() + rhs.norm()).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Worst relative deviation of `‖F x‖` from `‖x‖` for the centered FFT.
pub fn fft_unitarity(size: usize, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            let x = random_image(size, size, &mut rng);
            (fft2_centered(&x).norm() - x.norm()).abs() / x.norm()
        })
        .fold(0.0, f64::max)
}

/// `AᴴA` as a real symmetric matrix over the (real, imaginary) channel layout.
pub fn dense_normal(op: &ForwardOperator) -> Result<DMatrix<f64>> {
    let (h, w) = op.extents();
    let d = 2 * h * w;
    let mut m = DMatrix::zeros(d, d);
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        let col = op.normal(&ComplexImage::from_channels(h, w, &e)?)?.to_channels();
        e[j] = 0.0;
        m.set_column(j, &DVector::from_vec(col));
    }
    Ok(m)
}

/// Dense pseudo-inverse and range projector of a symmetric PSD matrix.
pub struct DensePinv {
    pub pinv: DMatrix<f64>,
    pub projector: DMatrix<f64>,
    pub rank: usize,
}

pub fn dense_pinv(m: &DMatrix<f64>) -> DensePinv {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cut = 1e-10 * top.max(f64::MIN_POSITIVE);
    let d = m.nrows();
    let mut pinv = DMatrix::zeros(d, d);
    let mut projector = DMatrix::zeros(d, d);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cut {
            let v = eig.eigenvectors.column(k);
            let outer = v * v.transpose();
            pinv += &outer / lambda;
            projector += outer;
            rank += 1;
        }
    }
    DensePinv { pinv, projector, rank }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionReport {
    pub pinv_error: f64,
    pub projection_error: f64,
    pub idempotence: f64,
    pub hermitian: f64,
    pub tol: f64,
}

impl ProjectionReport {
    /// Dense agreement at `dense_tol`, structure at twice the CG tolerance.
    pub fn passes(&self, dense_tol: f64) -> bool {
        self.pinv_error <= dense_tol
            && self.projection_error <= dense_tol
            && self.idempotence <= 2.0 * self.tol
            && self.hermitian <= 2.0 * self.tol
    }
}

/// CG pseudo-inverse and projection on a single-coil Cartesian problem
/// against the dense eigendecomposition. All errors are relative.
pub fn projection_oracle(
    size: usize,
    acceleration: f64,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<ProjectionReport> {
    let op = test_operator(size, 1, MaskKind::Cartesian1d, acceleration, seed)?;
    let dense = dense_pinv(&dense_normal(&op)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut r = ProjectionReport {
        pinv_error: 0.0,
        projection_error: 0.0,
        idempotence: 0.0,
        hermitian: 0.0,
        tol,
    };
    let rel = |a: &ComplexImage, b: &ComplexImage| a.sub(b).norm() / b.norm().max(f64::MIN_POSITIVE);
    for _ in 0..trials {
        let x = random_image(size, size, &mut rng);
        let z = random_image(size, size, &mut rng);
        // pinv precondition: v in the range of AᴴA
        let v = op.normal(&z)?;
        let got = pinv_normal(&op, &v, tol, 500)?.solution;
        let want = ComplexImage::from_channels(
            size,
            size,
            (&dense.pinv * DVector::from_vec(v.to_channels())).as_slice(),
        )?;
        r.pinv_error = r.pinv_error.max(rel(&got, &want));

        let px = project_range(&op, &x, tol)?.solution;
        let want = ComplexImage::from_channels(
            size,
            size,
            (&dense.projector * DVector::from_vec(x.to_channels())).as_slice(),
        )?;
        r.projection_error = r.projection_error.max(rel(&px, &want));

        let ppx = project_range(&op, &px, tol)?.solution;
        r.idempotence = r.idempotence.max(rel(&ppx, &px));

        let pz = project_range(&op, &z, tol)?.solution;
        let (a, b) = (px.inner(&z), x.inner(&pz));
        r.hermitian = r.hermitian.max((a - b).norm() / (x.norm() * z.norm()));
    }
    Ok(r)
}

/// `f(u) = W u` with `W = alpha·I + beta·G/√d`.
pub fn random_dense_map(size: usize, alpha: f64, beta: f64, seed: u64) -> Result<Arc<DenseMap>> {
    let d = 2 * size * size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m: Vec<f64> = (0..d * d)
        .map(|k| {
            let g: f64 = rng.sample(StandardNormal);
            beta * g / (d as f64).sqrt() + if k / d == k % d { alpha } else { 0.0 }
        })
        .collect();
    Ok(Arc::new(DenseMap::new(&[1, 2, size, size], &[1, 2, size, size], m)?))
}

fn divergence_estimate(map: Option<Arc<dyn LinearMap>>, size: usize, probes: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_image(size, size, &mut rng);
    let mut tape = Tape::new();
    let div = mc_divergence(&mut tape, &u, 1e-3, probes, seed, 0, |t, v| match &map {
        Some(m) => t.linear(v, m.clone()),
        None => Ok(v),
    })?;
    Ok(tape.value(div).item())
}

/// `(estimate, trace W)` for a random dense linear map.
pub fn divergence_vs_trace(size: usize, probes: usize, seed: u64) -> Result<(f64, f64)> {
    let map = random_dense_map(size, 1.0, 0.5, seed)?;
    let tr = map.trace();
    Ok((divergence_estimate(Some(map), size, probes, seed + 1)?, tr))
}

/// `(estimate, 2HW)` for the identity map.
pub fn divergence_of_identity(size: usize, probes: usize, seed: u64) -> Result<(f64, f64)> {
    Ok((divergence_estimate(None, size, probes, seed)?, (2 * size * size) as f64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnbiasednessReport {
    pub correlation: f64,
    /// Sample mean of `projected MSE − GSURE`.
    pub mean_offset: f64,
    /// `‖Px‖² − E‖x_LS‖²` from the dense oracle.
    pub constant: f64,
    pub draws: usize,
}

impl UnbiasednessReport {
    pub fn relative_offset_error(&self) -> f64 {
        (self.mean_offset - self.constant).abs() / self.constant.abs()
    }
}

/// Fixed linear reconstruction `f(u) = W u` on an 8×8 single-coil Cartesian
/// problem, scored by GSURE and by the true projected error over repeated
/// noise draws. `W` stretches the signal direction so the error varies
/// strongly with the draw, which makes the correlation meaningful.
pub fn gsure_unbiasedness(draws: usize, seed: u64) -> Result<UnbiasednessReport> {
    let n = 8;
    let sigma = 0.1;
    let mask = make_cartesian_mask(n, n, 2.0, 2, 1)?;
    let op = Arc::new(ForwardOperator::new(mask, CoilSensitivities::single(n, n), sigma)?);
    let dense = dense_pinv(&dense_normal(&op)?);
    let project = |img: &ComplexImage| -> Result<ComplexImage> {
        ComplexImage::from_channels(
            n,
            n,
            (&dense.projector * DVector::from_vec(img.to_channels())).as_slice(),
        )
    };
    let x0 = project(&make_phantom(n, n, 3, 4)?.image)?;
    let x = x0.scaled(1.65 * sigma / x0.norm());
    let xh = x.scaled(1.0 / x.norm()).to_channels();

    let d = 2 * n * n;
    let (alpha, beta) = (4.0, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m: Vec<f64> = (0..d * d)
        .map(|k| {
            let g: f64 = rng.sample(StandardNormal);
            let (i, j) = (k / d, k % d);
            beta * g / (d as f64).sqrt() + (alpha - 0.5) * xh[i] * xh[j] + if i == j { 0.5 } else { 0.0 }
        })
        .collect();
    let w = Arc::new(DenseMap::new(&[1, 2, n, n], &[1, 2, n, n], m)?);

    let cfg = GsureConfig {
        mc_probes: 8,
        range: RangeMode::Exact,
        rng_seed: seed,
        ..GsureConfig::default()
    };
    let px = x.clone();
    let (mut g, mut p) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for dr in 0..draws as u64 {
        let y = op.simulate(&x, seed.wrapping_mul(1_000_003).wrapping_add(1000 + dr))?;
        let u = op.adjoint(&y)?;
        let mut tape = Tape::new();
        let l = loss_gsure(&mut tape, &op, &u, &cfg, dr, |t, _, v| t.linear(v, w.clone()))?;
        let xhat = ComplexImage::from_tensor(tape.value(l.reconstruction.expect("gsure records f(u)")))?;
        g.push(l.breakdown(&tape).total);
        p.push(project(&xhat)?.sub(&px).norm_sqr());
    }
    let k = draws as f64;
    let (mg, mp) = (g.iter().sum::<f64>() / k, p.iter().sum::<f64>() / k);
    let cov = g.iter().zip(&p).map(|(a, b)| (a - mg) * (b - mp)).sum::<f64>() / k;
    let vg = g.iter().map(|a| (a - mg).powi(2)).sum::<f64>() / k;
    let vp = p.iter().map(|b| (b - mp).powi(2)).sum::<f64>() / k;
    Ok(UnbiasednessReport {
        correlation: cov / (vg * vp).sqrt(),
        mean_offset: mp - mg,
        // real-channel trace; each real dimension carries σ²/2
        constant: -0.5 * sigma * sigma * dense.pinv.trace(),
        draws,
    })
}

/// Relative finite-difference error of every differentiable tape op.
pub fn op_gradient_errors(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = |shape: &[usize]| Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0));
    let h = 1e-5;
    let probe = r(&[2, 3, 4]);
    let op = Arc::new(test_operator(6, 2, MaskKind::VariableDensity2d, 2.0, seed)?);
    let (a, b, m, k) = (r(&[2, 3, 4]), r(&[2, 3, 4]), r(&[4, 3]), r(&[3, 5]));
    let (img, cw, cb, sc, sh) = (r(&[1, 3, 5, 5]), r(&[2, 3, 3, 3]), r(&[2]), r(&[3]), r(&[3]));
    let (s1, s2) = (Tensor::scalar(0.7), Tensor::scalar(-1.3));
    let u = r(&[1, 2, 6, 6]);
    let pr = probe.clone();

    let mut out = Vec::new();
    out.push((
        "add",
        fd_relative_error(&[a.clone(), b.clone()], h, |t, v| {
            let s = t.add(v[0], v[1])?;
            Ok(t.sum_squares(s))
        })?,
    ));
    out.push((
        "sub",
        fd_relative_error(&[a.clone(), b.clone()], h, |t, v| {
            let s = t.sub(v[0], v[1])?;
            let p = t.constant(pr.clone());
            t.dot(s, p)
        })?,
    ));
    out.push((
        "scale",
        fd_relative_error(std::slice::from_ref(&a), h, |t, v| {
            let s = t.scale(v[0], -2.5);
            Ok(t.sum_squares(s))
        })?,
    ));
    out.push((
        "mul_scalar",
        fd_relative_error(&[a.clone(), s1.clone()], h, |t, v| {
            let s = t.mul_scalar(v[0], v[1])?;
            Ok(t.sum_squares(s))
        })?,
    ));
    out.push((
        "div",
        fd_relative_error(&[s1.clone(), s2.clone()], h, |t, v| t.div(v[0], v[1]))?,
    ));
    out.push((
        "dot",
        fd_relative_error(&[a.clone(), b.clone()], h, |t, v| t.dot(v[0], v[1]))?,
    ));
    out.push((
        "sum",
        fd_relative_error(std::slice::from_ref(&a), h, |t, v| {
            let s = t.relu(v[0]);
            Ok(t.sum(s))
        })?,
    ));
    out.push((
        "relu",
        fd_relative_error(std::slice::from_ref(&a), h, |t, v| {
            let s = t.relu(v[0]);
            Ok(t.sum_squares(s))
        })?,
    ));
    out.push((
        "matmul",
        fd_relative_error(&[m, k], h, |t, v| {
            let s = t.matmul(v[0], v[1])?;
            Ok(t.sum_squares(s))
        })?,
    ));
    out.push((
        "conv2d",
        fd_relative_error(&[img.clone(), cw, cb], h, |t, v| {
            let s = t.conv2d(v[0], v[1], v[2])?;
            Ok(t.sum_squares(s))
        })?,
    ));
    out.push((
        "channel_affine",
        fd_relative_error(&[img, sc, sh], h, |t, v| {
            let s = t.channel_affine(v[0], v[1], v[2])?;
            Ok(t.sum_squares(s))
        })?,
    ));
    let fwd = op.forward_map();
    out.push((
        "linear(forward)",
        fd_relative_error(std::slice::from_ref(&u), h, |t, v| {
            let s = t.linear(v[0], fwd.clone())?;
            Ok(t.sum_squares(s))
        })?,
    ));
    let normal = op.normal_map(0.3);
    out.push((
        "linear(normal)",
        fd_relative_error(&[u], h, |t, v| {
            let s = t.linear(v[0], normal.clone())?;
            Ok(t.sum_squares(s))
        })?,
    ));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientProbe {
    pub parameter: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradientProbe {
    pub fn relative_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(f64::MIN_POSITIVE)
    }
}

/// The standard small GSURE gradient configuration: unrolled net with a
/// 2-block, 8-feature denoiser on a 16×16, 4-coil, 4x problem.
pub fn gsure_gradient_setup(seed: u64) -> Result<(ReconNet, Arc<ForwardOperator>, ComplexImage)> {
    let n = 16;
    let cfg = UnrolledConfig {
        denoiser: DirectConfig { blocks: 2, features: 8 },
        unrolls: 2,
        ..UnrolledConfig::default()
    };
    let net = ReconNet::Unrolled(UnrolledNet::new(cfg, seed)?);
    let op = Arc::new(test_operator(n, 4, MaskKind::VariableDensity2d, 4.0, seed)?.with_noise_sigma(0.02)?);
    let x = make_phantom(n, n, 4, seed)?.image;
    let u = op.adjoint(&op.simulate(&x, seed)?)?;
    Ok((net, op, u))
}

fn gsure_value(net: &ReconNet, op: &Arc<ForwardOperator>, u: &ComplexImage, cfg: &GsureConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = net.params().bind_frozen(&mut tape);
    let l = loss_gsure(&mut tape, op, u, cfg, 0, |t, op, v| {
        net.forward_on_tape(t, &vars, op, v)
    })?;
    Ok(l.breakdown(&tape).total)
}

/// Central difference of the GSURE loss along `probes` random parameter
/// scalars, compared with the backward pass.
pub fn gsure_gradient_probes(probes: usize, seed: u64) -> Result<Vec<GradientProbe>> {
    let (net, op, u) = gsure_gradient_setup(seed)?;
    // The loss holds its own finite difference, which amplifies rounding by
    // 1/ε; at ε = 1e-3 that floor alone reaches ~1e-4 on some probes.
    let cfg = GsureConfig {
        epsilon_scale: 1e-2,
        ..GsureConfig::default()
    };
    let mut tape = Tape::new();
    let vars = net.params().bind(&mut tape);
    let l = loss_gsure(&mut tape, &op, &u, &cfg, 0, |t, op, v| {
        net.forward_on_tape(t, &vars, op, v)
    })?;
    let grads = tape.backward(l.total)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut out = Vec::with_capacity(probes);
    for _ in 0..probes {
        let ti = rng.random_range(0..net.params().len());
        let (name, tensor) = net.params().iter().nth(ti).expect("in range");
        let index = rng.random_range(0..tensor.len());
        let analytic = grads.wrt_or_zero(vars[ti], tensor.len())[index];
        let value = tensor.data()[index];
        let h = 1e-4 * value.abs().max(1e-2);
        let at = |delta: f64| -> Result<f64> {
            let mut moved = net.clone();
            moved.params_mut().tensor_mut(ti).data_mut()[index] = value + delta;
            gsure_value(&moved, &op, &u, &cfg)
        };
        let numeric = (at(h)? - at(-h)?) / (2.0 * h);
        out.push(GradientProbe {
            parameter: name.to_string(),
            index,
            analytic,
            numeric,
        });
    }
    Ok(out)
}

/// Builds a check result from a closure that may error.
fn check(name: &str, body: impl FnOnce() -> Result<(bool, String)>) -> PropertyResult {
    let start = Instant::now();
    let (passed, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    PropertyResult {
        name: name.to_string(),
        passed,
        detail: format!("{detail} ({:.1?})", start.elapsed()),
    }
}

/// Runs every check at its default tolerance.
pub fn run_suite(hooks: VerifyHooks) -> Vec<PropertyResult> {
    let mut results = Vec::new();
    results.push(check("adjoint", || {
        let mut worst: f64 = 0.0;
        for coils in [1, 4] {
            for kind in [MaskKind::Cartesian1d, MaskKind::VariableDensity2d] {
                let op = test_operator(32, coils, kind, 4.0, 1)?;
                worst = worst.max(adjoint_mismatch(&op, 20, 2, hooks)?);
            }
        }
        Ok((
            worst <= 1e-10,
            format!("worst relative mismatch {worst:.2e} (tol 1e-10)"),
        ))
    }));
    results.push(check("fft-unitary", || {
        let e = fft_unitarity(32, 10, 3);
        Ok((e <= 1e-12, format!("worst norm deviation {e:.2e} (tol 1e-12)")))
    }));
    results.push(check("projection-oracle", || {
        let r = projection_oracle(8, 2.0, 5, 1e-10, 4)?;
        Ok((
            r.passes(1e-6),
            format!(
                "pinv {:.1e}, projection {:.1e}, idempotence {:.1e}, hermitian {:.1e}",
                r.pinv_error, r.projection_error, r.idempotence, r.hermitian
            ),
        ))
    }));
    results.push(check("divergence-trace", || {
        let (est, tr) = divergence_vs_trace(8, 64, 1)?;
        let (id, dim) = divergence_of_identity(32, 8, 0)?;
        let (e1, e2) = ((est - tr).abs() / tr.abs(), (id - dim).abs() / dim);
        Ok((
            e1 <= 0.03 && e2 <= 0.02,
            format!("dense {est:.2} vs trace {tr:.2} ({e1:.3}); identity {id:.1} vs {dim} ({e2:.4})"),
        ))
    }));
    results.push(check("gsure-unbiased", || {
        let r = gsure_unbiasedness(500, 0)?;
        let e = r.relative_offset_error();
        Ok((
            r.correlation >= 0.95 && e <= 0.05,
            format!(
                "corr {:.3}, offset {:.4} vs {:.4} ({e:.3}) over {} draws",
                r.correlation, r.mean_offset, r.constant, r.draws
            ),
        ))
    }));
    results.push(check("op-gradients", || {
        let errs = op_gradient_errors(6)?;
        let (worst_name, worst) = errs
            .iter()
            .cloned()
            .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
        Ok((
            worst <= 1e-5,
            format!("{} ops, worst {worst:.1e} ({worst_name})", errs.len()),
        ))
    }));
    results.push(check("gsure-gradient", || {
        let probes = gsure_gradient_probes(2, 7)?;
        let worst = probes.iter().map(GradientProbe::relative_error).fold(0.0, f64::max);
        Ok((
            worst <= 1e-4,
            format!("{} parameter probes, worst {worst:.1e}", probes.len()),
        ))
    }));
    results
}

/// Errors unless every property passed.
pub fn require_all(results: &[PropertyResult]) -> Result<()> {
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Property(failed.join(", ")))
    }
}

/// Full mask variant of [`test_operator`], used by callers that want an
/// invertible operator.
pub fn full_operator(size: usize, coils: usize) -> Result<ForwardOperator> {
    let coils = if coils == 1 {
        CoilSensitivities::single(size, size)
    } else {
        make_coils(size, size, coils)?
    };
    ForwardOperator::new(SamplingMask::full(size, size), coils, 0.0)
}
