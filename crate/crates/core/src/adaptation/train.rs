use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{derive_seed, AdaptationConfig, PretrainConfig, Strategy};
use super::metrics::psnr;
use crate::autodiff::{adam_step, AdamConfig, AdamState, NetworkParams, Tape};
use crate::error::{Error, Result};
use crate::losses::{loss_dip_ma, loss_ssdu_ma, loss_supervised_mse, make_ssdu_split, Gsure, LossBreakdown, LossNodes};
use crate::networks::ReconNet;
use crate::operators::{ComplexImage, ForwardOperator, KSpaceData};
use crate::parallel::map_par;

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub net: ReconNet,
    /// Mean supervised loss per epoch.
    pub losses: Vec<f64>,
}

/// Supervised training on `‖f(u) − x‖²` with fresh measurement noise for
/// every image and epoch.
pub fn pretrain(
    net: &ReconNet,
    dataset: &[ComplexImage],
    op: &Arc<ForwardOperator>,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Contract("pretraining dataset is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Contract("batch_size must be at least 1".into()));
    }
    let mut net = net.clone();
    let mut state = AdamState::new(net.params());
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let current = &net;
            let results = map_par(batch, |&i| {
                let y = op.simulate(&dataset[i], derive_seed(cfg.seed, &[epoch as u64, i as u64]))?;
                let u = op.adjoint(&y)?;
                let mut tape = Tape::new();
                let vars = current.params().bind(&mut tape);
                let uv = tape.constant(u.to_tensor());
                let xhat = current.forward_on_tape(&mut tape, &vars, op, uv)?;
                let l = loss_supervised_mse(&mut tape, xhat, &dataset[i])?;
                let value = tape.value(l.total).item();
                let grads = tape.backward(l.total)?;
                let mut g = current.params().clone();
                g.load_grads(&grads, &vars)?;
                Ok((value, g.flatten_grads()))
            });
            let mut total = vec![0.0; net.params().num_scalars()];
            for r in results {
                let (value, g): (f64, Vec<f64>) = r?;
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!("pretraining loss at epoch {epoch}")));
                }
                epoch_loss += value;
                total.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            set_flat_grads(net.params_mut(), &total)?;
            adam_step(net.params_mut(), &mut state, &adam)?;
        }
        losses.push(epoch_loss / dataset.len() as f64);
        log::debug!("pretrain epoch {epoch}: loss {:.6e}", losses[epoch]);
    }
    net.params_mut().clear_grads();
    Ok(PretrainOutcome { net, losses })
}

fn set_flat_grads(params: &mut NetworkParams, flat: &[f64]) -> Result<()> {
    let mut offset = 0;
    for (_, t) in params.iter_mut() {
        let n = t.len();
        t.set_grad(flat[offset..offset + n].to_vec())?;
        offset += n;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptationRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    /// PSNR of the reconstruction at this epoch's parameters, before the
    /// update; computed outside the tape.
    pub oracle_psnr: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct AdaptationOutcome {
    pub net: ReconNet,
    pub records: Vec<AdaptationRecord>,
    /// PSNR of the returned parameters.
    pub final_psnr: Option<f64>,
    /// Set when a non-finite loss stopped the run; `net` then holds the
    /// last finite parameters.
    pub aborted: Option<String>,
}

impl AdaptationOutcome {
    /// Per-epoch oracle PSNR followed by the final PSNR.
    pub fn psnr_trajectory(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.oracle_psnr)
            .chain(self.final_psnr)
            .collect()
    }
}

/// Fine-tunes a pre-trained network on a single measurement set.
pub fn adapt(
    net: &ReconNet,
    op: &Arc<ForwardOperator>,
    y: &KSpaceData,
    cfg: &AdaptationConfig,
    oracle: Option<&ComplexImage>,
) -> Result<AdaptationOutcome> {
    cfg.validate()?;
    let u = op.adjoint(y)?;
    let gsure = match cfg.strategy {
        Strategy::Gsure => Some(Gsure::new(op.clone(), u.clone(), cfg.gsure)?),
        _ => None,
    };
    let split = match cfg.strategy {
        Strategy::Ssdu => Some(make_ssdu_split(op.mask(), cfg.ssdu_dc_fraction, cfg.seed)?),
        _ => None,
    };
    let track = |tape: &Tape, nodes: &LossNodes, current: &ReconNet| -> Result<Option<f64>> {
        let Some(x) = oracle.filter(|_| cfg.track_oracle_psnr) else {
            return Ok(None);
        };
        let xhat = match nodes.reconstruction {
            Some(v) => ComplexImage::from_tensor(tape.value(v))?,
            None => current.forward(op, &u)?,
        };
        psnr(&xhat, x).map(Some)
    };

    let mut net = net.clone();
    let mut state = AdamState::new(net.params());
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut aborted = None;
    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let vars = net.params().bind(&mut tape);
        let current = &net;
        let f = |t: &mut Tape, o: &Arc<ForwardOperator>, v| current.forward_on_tape(t, &vars, o, v);
        let nodes = match cfg.strategy {
            Strategy::Dip => loss_dip_ma(&mut tape, op, &u, y, f)?,
            Strategy::Ssdu => loss_ssdu_ma(&mut tape, op, split.as_ref().expect("ssdu split"), y, f)?,
            Strategy::Gsure => gsure.as_ref().expect("gsure").loss(&mut tape, epoch as u64, f)?,
        };
        let loss = nodes.breakdown(&tape);
        if !loss.total.is_finite() {
            aborted = Some(format!("non-finite {} loss at epoch {epoch}", cfg.strategy));
            log::error!("{}", aborted.as_deref().unwrap_or_default());
            break;
        }
        let oracle_psnr = track(&tape, &nodes, &net)?;
        records.push(AdaptationRecord {
            epoch,
            loss,
            oracle_psnr,
        });
        let grads = tape.backward(nodes.total)?;
        let mut next = net.params().clone();
        next.load_grads(&grads, &vars)?;
        adam_step(&mut next, &mut state, &adam)?;
        if !next.is_finite() {
            aborted = Some(format!("non-finite parameters after epoch {epoch}"));
            log::error!("{}", aborted.as_deref().unwrap_or_default());
            break;
        }
        next.clear_grads();
        net.set_params(next)?;
    }
    let final_psnr = match oracle.filter(|_| cfg.track_oracle_psnr) {
        Some(x) => Some(psnr(&net.forward(op, &u)?, x)?),
        None => None,
    };
    Ok(AdaptationOutcome {
        net,
        records,
        final_psnr,
        aborted,
    })
}
