use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{DenseMap, LinearMap, Tape};
use crate::error::Error;
use crate::operators::{
    make_cartesian_mask, make_coils, make_variable_density_mask, CoilSensitivities, SamplingMask, SpectralFilter,
};

fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexImage::from_fn(h, w, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn multicoil(n: usize, sigma: f64) -> Arc<ForwardOperator> {
    let mask = make_variable_density_mask(n, n, 3.0, 3.0, 0.1, 4).unwrap();
    Arc::new(ForwardOperator::new(mask, make_coils(n, n, 4).unwrap(), sigma).unwrap())
}

fn identity(_: &mut Tape, _: &Arc<ForwardOperator>, v: Var) -> Result<Var> {
    Ok(v)
}

/// `αI + β G` on the real representation of an `n×n` image.
fn dense_map(n: usize, alpha: f64, beta: f64, seed: u64) -> Arc<DenseMap> {
    let d = 2 * n * n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m: Vec<f64> = (0..d * d)
        .map(|k| {
            let g: f64 = rng.sample(rand_distr::StandardNormal);
            beta * g / (d as f64).sqrt() + if k / d == k % d { alpha } else { 0.0 }
        })
        .collect();
    Arc::new(DenseMap::new(&[1, 2, n, n], &[1, 2, n, n], m).unwrap())
}

#[test]
fn supervised_zero_and_unit_pixel() {
    let x = random_image(6, 6, 1);
    let mut tape = Tape::new();
    let xv = tape.constant(x.to_tensor());
    let l = loss_supervised_mse(&mut tape, xv, &x).unwrap();
    assert_eq!(l.breakdown(&tape).total, 0.0);

    let mut bumped = x.clone();
    bumped.data_mut()[7] += Complex64::new(1.0, 0.0);
    let bv = tape.constant(bumped.to_tensor());
    let l = loss_supervised_mse(&mut tape, bv, &x).unwrap();
    assert!((l.breakdown(&tape).total - 1.0).abs() < 1e-12);
}

#[test]
fn supervised_matches_elementwise_sum() {
    let (a, b) = (random_image(5, 7, 2), random_image(5, 7, 3));
    let mut tape = Tape::new();
    let av = tape.constant(a.to_tensor());
    let l = loss_supervised_mse(&mut tape, av, &b).unwrap();
    let oracle: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (p.re - q.re).powi(2) + (p.im - q.im).powi(2))
        .sum();
    assert!((l.breakdown(&tape).total - oracle).abs() <= 1e-12 * oracle);
    let bad = random_image(5, 6, 3);
    assert!(loss_supervised_mse(&mut tape, av, &bad).is_err());
}

#[test]
fn dip_zero_for_perfect_inverse_and_norm_for_zero_net() {
    let n = 8;
    let op = Arc::new(ForwardOperator::new(SamplingMask::full(n, n), CoilSensitivities::single(n, n), 0.0).unwrap());
    let x = random_image(n, n, 4);
    let y = op.simulate(&x, 1).unwrap();
    let u = op.adjoint(&y).unwrap();
    let mut tape = Tape::new();
    let l = loss_dip_ma(&mut tape, &op, &u, &y, identity).unwrap();
    assert!(l.breakdown(&tape).total < 1e-24);

    let op = multicoil(n, 0.1);
    let y = op.simulate(&x, 2).unwrap();
    let u = op.adjoint(&y).unwrap();
    let l = loss_dip_ma(&mut tape, &op, &u, &y, |t, _, v| Ok(t.scale(v, 0.0))).unwrap();
    assert!((l.breakdown(&tape).total - y.norm_sqr()).abs() <= 1e-12 * y.norm_sqr());
}

#[test]
fn dip_at_truth_concentrates_at_noise_energy() {
    let n = 8;
    let sigma = 0.3;
    let op = multicoil(n, sigma);
    let x = random_image(n, n, 5);
    let draws = 1000;
    let mut mean = 0.0;
    for seed in 0..draws {
        let y = op.simulate(&x, seed).unwrap();
        let u = op.adjoint(&y).unwrap();
        let mut tape = Tape::new();
        let l = loss_dip_ma(&mut tape, &op, &u, &y, |t, _, _| Ok(t.constant(x.to_tensor()))).unwrap();
        mean += l.breakdown(&tape).total / draws as f64;
    }
    let expected = op.num_measurements() as f64 * sigma * sigma;
    assert!((mean - expected).abs() < 0.05 * expected, "{mean} vs {expected}");
}

#[test]
fn ssdu_split_partitions_acquired_locations() {
    let mask = make_variable_density_mask(32, 32, 4.0, 3.0, 0.1, 7).unwrap();
    for seed in 0..10 {
        let s = make_ssdu_split(&mask, 0.6, seed).unwrap();
        let (dc, loss) = (s.dc_mask().kept(), s.loss_mask().kept());
        for i in 0..dc.len() {
            assert!(!(dc[i] && loss[i]));
            assert_eq!(dc[i] || loss[i], mask.kept()[i]);
        }
        let frac = s.dc_mask().count() as f64 / mask.count() as f64;
        assert!((frac - 0.6).abs() * mask.count() as f64 <= 1.0);
    }
    assert_ne!(
        make_ssdu_split(&mask, 0.6, 0).unwrap(),
        make_ssdu_split(&mask, 0.6, 1).unwrap()
    );
}

#[test]
fn ssdu_rejects_degenerate_splits() {
    let mask = make_cartesian_mask(8, 8, 2.0, 2, 1).unwrap();
    let dc = mask.kept().to_vec();
    let loss = vec![false; 64];
    assert!(matches!(
        SsduSplit::new(&mask, dc.clone(), loss),
        Err(Error::Contract(_))
    ));
    let overlap = dc.clone();
    assert!(SsduSplit::new(&mask, dc, overlap).is_err());
    assert!(make_ssdu_split(&mask, 1.0, 0).is_err());
}

#[test]
fn ssdu_exact_reconstruction_gives_zero() {
    let n = 8;
    let op = Arc::new(ForwardOperator::new(SamplingMask::full(n, n), CoilSensitivities::single(n, n), 0.0).unwrap());
    let x = random_image(n, n, 6);
    let y = op.simulate(&x, 0).unwrap();
    let split = make_ssdu_split(op.mask(), 0.6, 3).unwrap();
    let mut tape = Tape::new();
    let l = loss_ssdu_ma(&mut tape, &op, &split, &y, |t, _, _| Ok(t.constant(x.to_tensor()))).unwrap();
    assert!(l.breakdown(&tape).total < 1e-24);
}

#[test]
fn ssdu_residual_is_dip_minus_dc_residual() {
    let n = 12;
    let op = multicoil(n, 0.2);
    let x = random_image(n, n, 7);
    let xhat = random_image(n, n, 8);
    let y = op.simulate(&x, 4).unwrap();
    let split = make_ssdu_split(op.mask(), 0.6, 5).unwrap();
    let mut tape = Tape::new();
    let fixed = |t: &mut Tape, _: &Arc<ForwardOperator>, _: Var| Ok(t.constant(xhat.to_tensor()));
    let ssdu = loss_ssdu_ma(&mut tape, &op, &split, &y, fixed)
        .unwrap()
        .breakdown(&tape)
        .total;
    let u = op.adjoint(&y).unwrap();
    let dip = loss_dip_ma(&mut tape, &op, &u, &y, fixed)
        .unwrap()
        .breakdown(&tape)
        .total;
    let dc_op = Arc::new(op.with_mask(split.dc_mask().clone()).unwrap());
    let dc = loss_dip_ma(&mut tape, &dc_op, &u, &y, fixed)
        .unwrap()
        .breakdown(&tape)
        .total;
    assert!((ssdu - (dip - dc)).abs() <= 1e-10 * dip);
}

#[test]
fn ssdu_network_sees_only_dc_data() {
    let n = 8;
    let op = multicoil(n, 0.1);
    let y = op.simulate(&random_image(n, n, 9), 1).unwrap();
    let split = make_ssdu_split(op.mask(), 0.6, 2).unwrap();
    let mut tape = Tape::new();
    let mut seen = None;
    loss_ssdu_ma(&mut tape, &op, &split, &y, |t, o, v| {
        seen = Some((o.mask().count(), ComplexImage::from_tensor(t.value(v)).unwrap()));
        Ok(v)
    })
    .unwrap();
    let (count, u_dc) = seen.unwrap();
    assert_eq!(count, split.dc_mask().count());
    let expect = op.adjoint(&y.masked(split.dc_mask())).unwrap();
    assert!(u_dc.sub(&expect).norm() < 1e-12 * expect.norm());
}

fn divergence_of(map: Arc<dyn LinearMap>, u: &ComplexImage, probes: usize, seed: u64) -> f64 {
    let mut tape = Tape::new();
    let d = mc_divergence(&mut tape, u, 1e-3, probes, seed, 0, |t, v| t.linear(v, map.clone())).unwrap();
    tape.value(d).item()
}

#[test]
fn identity_divergence_is_dimension() {
    let n = 32;
    let u = random_image(n, n, 10);
    let mut tape = Tape::new();
    let d = mc_divergence(&mut tape, &u, 1e-3, 8, 0, 0, |_, v| Ok(v)).unwrap();
    let dim = (2 * n * n) as f64;
    assert!((tape.value(d).item() - dim).abs() < 0.02 * dim);
}

#[test]
fn constant_map_has_zero_divergence() {
    let u = random_image(8, 8, 11);
    let c = random_image(8, 8, 12);
    let mut tape = Tape::new();
    let d = mc_divergence(&mut tape, &u, 1e-3, 4, 1, 0, |t, _| Ok(t.constant(c.to_tensor()))).unwrap();
    assert_eq!(tape.value(d).item(), 0.0);
}

#[test]
fn dense_divergence_tracks_trace() {
    let n = 8;
    let map = dense_map(n, 1.0, 0.5, 13);
    let est = divergence_of(map.clone(), &random_image(n, n, 14), 64, 2);
    let tr = map.trace();
    assert!((est - tr).abs() < 0.03 * tr.abs(), "{est} vs {tr}");
}

#[test]
fn divergence_is_linear_in_f() {
    let n = 6;
    let (f, g) = (dense_map(n, 0.3, 1.0, 15), dense_map(n, -0.2, 1.0, 16));
    let u = random_image(n, n, 17);
    let (a, b) = (2.5, -0.7);
    let mut tape = Tape::new();
    let d = mc_divergence(&mut tape, &u, 1e-3, 3, 9, 4, |t, v| {
        let fv = t.linear(v, f.clone())?;
        let gv = t.linear(v, g.clone())?;
        let fa = t.scale(fv, a);
        let gb = t.scale(gv, b);
        t.add(fa, gb)
    })
    .unwrap();
    let combined = tape.value(d).item();
    let mut tape = Tape::new();
    let df = mc_divergence(&mut tape, &u, 1e-3, 3, 9, 4, |t, v| t.linear(v, f.clone())).unwrap();
    let dg = mc_divergence(&mut tape, &u, 1e-3, 3, 9, 4, |t, v| t.linear(v, g.clone())).unwrap();
    let split = a * tape.value(df).item() + b * tape.value(dg).item();
    assert!((combined - split).abs() < 1e-8 * (1.0 + split.abs()));
}

#[test]
fn probes_are_reproducible_per_epoch() {
    let a = gaussian_probes(3, 7, 2, 4, 4);
    assert_eq!(a, gaussian_probes(3, 7, 2, 4, 4));
    assert_ne!(a, gaussian_probes(3, 8, 2, 4, 4));
    assert_ne!(a, gaussian_probes(4, 7, 2, 4, 4));
    assert!(divergence_epsilon(1e-3, &ComplexImage::zeros(4, 4)).is_err());
}

#[test]
fn gsure_full_mask_identity() {
    let n = 16;
    let op = Arc::new(ForwardOperator::new(SamplingMask::full(n, n), CoilSensitivities::single(n, n), 0.0).unwrap());
    let x = random_image(n, n, 18);
    let u = op.adjoint(&op.simulate(&x, 0).unwrap()).unwrap();
    for range in [RangeMode::Exact, RangeMode::Polynomial(4)] {
        let cfg = GsureConfig {
            divergence_weight_sigma2: false,
            mc_probes: 8,
            range,
            ..GsureConfig::default()
        };
        let mut tape = Tape::new();
        let b = loss_gsure(&mut tape, &op, &u, &cfg, 0, identity)
            .unwrap()
            .breakdown(&tape);
        assert!(b.data_term < 1e-20);
        let dim = (2 * n * n) as f64;
        assert!((b.divergence_term - 2.0 * dim).abs() < 0.02 * 2.0 * dim);
        assert!((b.total - (b.data_term + b.divergence_term)).abs() <= 1e-12 * b.total.abs());

        let weighted = GsureConfig {
            divergence_weight_sigma2: true,
            ..cfg
        };
        let b = loss_gsure(&mut tape, &op, &u, &weighted, 0, identity)
            .unwrap()
            .breakdown(&tape);
        assert_eq!(b.divergence_term, 0.0);
    }
}

#[test]
fn gsure_zero_network_scores_least_squares_energy() {
    let n = 12;
    let op = multicoil(n, 0.05);
    let u = op.adjoint(&op.simulate(&random_image(n, n, 19), 3).unwrap()).unwrap();
    let g = Gsure::new(op.clone(), u, GsureConfig::default()).unwrap();
    let mut tape = Tape::new();
    let b = g
        .loss(&mut tape, 0, |t, _, v| Ok(t.scale(v, 0.0)))
        .unwrap()
        .breakdown(&tape);
    assert!((b.data_term - g.x_ls().norm_sqr()).abs() <= 1e-12 * b.data_term);
    assert_eq!(b.divergence_term, 0.0);
}

#[test]
fn gsure_data_term_ignores_null_space() {
    let n = 12;
    let mask = make_cartesian_mask(n, n, 2.0, 2, 3).unwrap();
    let op = Arc::new(ForwardOperator::new(mask, CoilSensitivities::single(n, n), 0.1).unwrap());
    let x = random_image(n, n, 20);
    let u = op.adjoint(&op.simulate(&x, 1).unwrap()).unwrap();
    let z = random_image(n, n, 21);
    let null = z.sub(&crate::operators::project_range(&op, &z, 1e-12).unwrap().solution);
    let xhat = random_image(n, n, 22);
    for range in [RangeMode::Exact, RangeMode::Polynomial(8)] {
        let g = Gsure::new(
            op.clone(),
            u.clone(),
            GsureConfig {
                range,
                ..GsureConfig::default()
            },
        )
        .unwrap();
        let score = |img: &ComplexImage| {
            let mut tape = Tape::new();
            let l = g.loss(&mut tape, 0, |t, _, _| Ok(t.constant(img.to_tensor()))).unwrap();
            l.breakdown(&tape).data_term
        };
        let (a, b) = (score(&xhat), score(&xhat.add(&null)));
        assert!((a - b).abs() < 1e-8 * a, "{a} {b}");
    }
}

#[test]
fn gsure_projection_uses_filter() {
    let n = 12;
    let op = multicoil(n, 0.05);
    let u = op.adjoint(&op.simulate(&random_image(n, n, 23), 2).unwrap()).unwrap();
    let g = Gsure::new(op.clone(), u, GsureConfig::default()).unwrap();
    let filter = SpectralFilter::new(op.clone(), 16).unwrap();
    let z = random_image(n, n, 24);
    let proj = g.project(&z).unwrap();
    assert!(proj.sub(&filter.project(&z).unwrap()).norm() < 1e-12 * z.norm());
}

#[test]
fn gsure_breakdown_is_reproducible() {
    let n = 8;
    let op = multicoil(n, 0.1);
    let u = op.adjoint(&op.simulate(&random_image(n, n, 25), 2).unwrap()).unwrap();
    let map = dense_map(n, 0.8, 0.3, 26);
    let run = |epoch| {
        let mut tape = Tape::new();
        let cfg = GsureConfig {
            rng_seed: 5,
            ..GsureConfig::default()
        };
        let l = loss_gsure(&mut tape, &op, &u, &cfg, epoch, |t, _, v| t.linear(v, map.clone())).unwrap();
        l.breakdown(&tape)
    };
    let a = run(3);
    assert_eq!(a, run(3));
    assert_ne!(a.divergence_term, run(4).divergence_term);
}

#[test]
fn gsure_gradient_reaches_parameters() {
    // f(u) = s·u with a trainable scalar s
    let n = 8;
    let op = multicoil(n, 0.1);
    let u = op.adjoint(&op.simulate(&random_image(n, n, 27), 2).unwrap()).unwrap();
    let g = Gsure::new(op.clone(), u, GsureConfig::default()).unwrap();
    let value = |s: f64| {
        let mut tape = Tape::new();
        let sv = tape.variable(crate::autodiff::Tensor::scalar(s));
        let l = g.loss(&mut tape, 1, |t, _, v| t.mul_scalar(v, sv)).unwrap();
        let grad = tape.backward(l.total).unwrap().wrt(sv).unwrap()[0];
        (tape.value(l.total).item(), grad)
    };
    let (_, grad) = value(0.7);
    let h = 1e-5;
    let fd = (value(0.7 + h).0 - value(0.7 - h).0) / (2.0 * h);
    assert!((grad - fd).abs() < 1e-6 * fd.abs().max(1.0), "{grad} vs {fd}");
}
