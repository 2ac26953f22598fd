use std::fmt::Write as _;
use std::sync::Arc;

use super::config::{derive_seed, AdaptationConfig, Strategy};
use super::metrics::psnr;
use super::train::{adapt, AdaptationRecord};
use crate::error::{Error, Result};
use crate::networks::ReconNet;
use crate::operators::{ComplexImage, ForwardOperator, MaskKind};
use crate::parallel::map_par;

/// One acquisition setting of a sweep. `operators[i]` measures test image
/// `i`, so per-image noise levels are allowed.
#[derive(Clone, Debug)]
pub struct SweepScenario {
    pub acceleration: f64,
    pub operators: Vec<Arc<ForwardOperator>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixCell {
    pub acceleration: f64,
    pub mask_kind: MaskKind,
    /// `None` for a Before-MA-only row.
    pub strategy: Option<Strategy>,
    /// PSNR of the regridded input `Aᴴy`.
    pub psnr_input_db: f64,
    pub psnr_before_db: f64,
    pub psnr_after_db: Option<f64>,
    pub n_images: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentMatrix {
    pub cells: Vec<MatrixCell>,
}

pub const MATRIX_CSV_HEADER: &str = "acceleration,strategy,psnr_before_db,psnr_after_db,n_images,seed";

impl ExperimentMatrix {
    pub fn cell(&self, acceleration: f64, strategy: Strategy) -> Option<&MatrixCell> {
        self.cells
            .iter()
            .find(|c| c.acceleration == acceleration && c.strategy == Some(strategy))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{MATRIX_CSV_HEADER}\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{},{}",
                c.acceleration,
                c.strategy.map_or("before", |s| s.as_str()),
                c.psnr_before_db,
                c.psnr_after_db.map(|v| format!("{v:.6}")).unwrap_or_default(),
                c.n_images,
                c.seed
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>6}  {:<12}  {:<8}  {:>10}  {:>10}  {:>10}  {:>3}\n",
            "accel", "mask", "strategy", "input_dB", "before_dB", "after_dB", "n"
        );
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:>5}x  {:<12}  {:<8}  {:>10.2}  {:>10.2}  {:>10}  {:>3}",
                c.acceleration,
                c.mask_kind.as_str(),
                c.strategy.map_or("-", |s| s.as_str()),
                c.psnr_input_db,
                c.psnr_before_db,
                c.psnr_after_db.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
                c.n_images
            );
        }
        out
    }
}

/// Before/after PSNR of `net` for every (scenario, strategy) pair, averaged
/// over `images`. Each image's measurement noise is seeded from `seed`, the
/// scenario index, and the image index; adaptation runs fan out in parallel.
pub fn evaluate_matrix(
    net: &ReconNet,
    scenarios: &[SweepScenario],
    images: &[ComplexImage],
    strategies: &[Strategy],
    base: &AdaptationConfig,
    seed: u64,
) -> Result<ExperimentMatrix> {
    if scenarios.is_empty() || images.is_empty() {
        return Err(Error::Contract("evaluation needs scenarios and images".into()));
    }
    for s in scenarios {
        if s.operators.len() != images.len() {
            return Err(Error::dim("scenario operators", &[images.len()], &[s.operators.len()]));
        }
    }
    let mut jobs = Vec::new();
    for si in 0..scenarios.len() {
        for ii in 0..images.len() {
            jobs.push((si, ii, None));
            for &st in strategies {
                jobs.push((si, ii, Some(st)));
            }
        }
    }
    // (psnr, input psnr); the second entry is only filled for Before-MA jobs
    let results = map_par(&jobs, |&(si, ii, st)| -> Result<(f64, f64)> {
        let op = &scenarios[si].operators[ii];
        let x = &images[ii];
        let y = op.simulate(x, derive_seed(seed, &[si as u64, ii as u64]))?;
        match st {
            None => {
                let u = op.adjoint(&y)?;
                Ok((psnr(&net.forward(op, &u)?, x)?, psnr(&u, x)?))
            }
            Some(strategy) => {
                let cfg = AdaptationConfig {
                    strategy,
                    track_oracle_psnr: true,
                    ..*base
                };
                let out = adapt(net, op, &y, &cfg, Some(x))?;
                if let Some(reason) = out.aborted {
                    return Err(Error::NonFinite(reason));
                }
                Ok((out.final_psnr.expect("oracle given"), f64::NAN))
            }
        }
    });
    let results = results.into_iter().collect::<Result<Vec<(f64, f64)>>>()?;
    let n = images.len() as f64;
    let mean = |si: usize, st: Option<Strategy>, pick: fn(&(f64, f64)) -> f64| {
        jobs.iter()
            .zip(&results)
            .filter(|((s, _, t), _)| *s == si && *t == st)
            .map(|(_, v)| pick(v))
            .sum::<f64>()
            / n
    };
    let mut cells = Vec::new();
    for (si, s) in scenarios.iter().enumerate() {
        let before = mean(si, None, |v| v.0);
        let input = mean(si, None, |v| v.1);
        let mask_kind = s.operators[0].mask().kind();
        let cell = |strategy, after| MatrixCell {
            acceleration: s.acceleration,
            mask_kind,
            strategy,
            psnr_input_db: input,
            psnr_before_db: before,
            psnr_after_db: after,
            n_images: images.len(),
            seed,
        };
        if strategies.is_empty() {
            cells.push(cell(None, None));
        }
        for &st in strategies {
            cells.push(cell(Some(st), Some(mean(si, Some(st), |v| v.0))));
        }
    }
    Ok(ExperimentMatrix { cells })
}

pub const RECORD_CSV_HEADER: &str = "epoch,total_loss,data_term,divergence_term,oracle_psnr_db";

/// One row per epoch; the PSNR column is empty when no oracle was given.
pub fn records_to_csv(records: &[AdaptationRecord]) -> String {
    let mut out = format!("{RECORD_CSV_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.10e},{:.10e},{:.10e},{}",
            r.epoch,
            r.loss.total,
            r.loss.data_term,
            r.loss.divergence_term,
            r.oracle_psnr.map(|v| format!("{v:.6}")).unwrap_or_default()
        );
    }
    out
}

/// `epoch,loss` rows.
pub fn losses_to_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(out, "{i},{l:.10e}");
    }
    out
}
