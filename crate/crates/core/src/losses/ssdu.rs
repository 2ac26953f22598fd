use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{kspace_residual, LossNodes};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::operators::{ForwardOperator, KSpaceData, SamplingMask};

/// Partition of the acquired locations into a data-consistency subset and
/// a held-out loss subset.
#[derive(Clone, Debug, PartialEq)]
pub struct SsduSplit {
    dc_mask: SamplingMask,
    loss_mask: SamplingMask,
}

impl SsduSplit {
    pub fn new(acquired: &SamplingMask, dc: Vec<bool>, loss: Vec<bool>) -> Result<Self> {
        if dc.len() != acquired.kept().len() || loss.len() != acquired.kept().len() {
            return Err(Error::dim(
                "ssdu split",
                &[acquired.kept().len()],
                &[dc.len(), loss.len()],
            ));
        }
        for ((&d, &l), &a) in dc.iter().zip(&loss).zip(acquired.kept()) {
            if (d && l) || (d || l) != a {
                return Err(Error::Contract(
                    "ssdu masks must partition the acquired locations".into(),
                ));
            }
        }
        if !loss.iter().any(|&l| l) || !dc.iter().any(|&d| d) {
            return Err(Error::Contract("ssdu split needs nonempty dc and loss sets".into()));
        }
        Ok(Self {
            dc_mask: acquired.restricted(dc)?,
            loss_mask: acquired.restricted(loss)?,
        })
    }

    pub fn dc_mask(&self) -> &SamplingMask {
        &self.dc_mask
    }

    pub fn loss_mask(&self) -> &SamplingMask {
        &self.loss_mask
    }
}

/// Uniformly random split with `round(dc_fraction · n)` data-consistency
/// locations.
pub fn make_ssdu_split(acquired: &SamplingMask, dc_fraction: f64, seed: u64) -> Result<SsduSplit> {
    if !(dc_fraction > 0.0 && dc_fraction < 1.0) {
        return Err(Error::Contract(format!("dc fraction {dc_fraction} must lie in (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..acquired.kept().len()).filter(|&i| acquired.kept()[i]).collect();
    let n_dc = (dc_fraction * idx.len() as f64).round() as usize;
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut dc = vec![false; acquired.kept().len()];
    for &i in &idx[..n_dc] {
        dc[i] = true;
    }
    let loss = acquired.kept().iter().zip(&dc).map(|(&a, &d)| a && !d).collect();
    SsduSplit::new(acquired, dc, loss)
}

/// Reconstructs from the data-consistency subset alone and scores the
/// result on the held-out subset.
pub fn loss_ssdu_ma<F>(
    tape: &mut Tape,
    op: &Arc<ForwardOperator>,
    split: &SsduSplit,
    y: &KSpaceData,
    mut f: F,
) -> Result<LossNodes>
where
    F: FnMut(&mut Tape, &Arc<ForwardOperator>, Var) -> Result<Var>,
{
    let acquired = op.mask().kept();
    let covered = split
        .dc_mask
        .kept()
        .iter()
        .zip(split.loss_mask.kept())
        .map(|(&d, &l)| d || l);
    if acquired.len() != split.dc_mask.kept().len() || !covered.eq(acquired.iter().copied()) {
        return Err(Error::Contract("ssdu split does not match the operator mask".into()));
    }
    let dc_op = Arc::new(op.with_mask(split.dc_mask.clone())?);
    let loss_op = Arc::new(op.with_mask(split.loss_mask.clone())?);
    let u_dc = dc_op.adjoint(&y.masked(&split.dc_mask))?;
    let uv = tape.constant(u_dc.to_tensor());
    let xhat = f(tape, &dc_op, uv)?;
    let residual = kspace_residual(tape, &loss_op, xhat, y)?;
    Ok(LossNodes::data_only(residual, None))
}
