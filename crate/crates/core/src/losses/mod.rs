//! Training and adaptation objectives recorded on a [`Tape`].
//!
//! Reconstruction functions are passed as closures
//! `FnMut(&mut Tape, &Arc<ForwardOperator>, Var) -> Result<Var>` mapping a
//! `[1, 2, H, W]` input node to an output node of the same shape.

mod divergence;
mod gsure;
mod ssdu;

use std::sync::Arc;

pub use divergence::{divergence_epsilon, gaussian_probes, mc_divergence, mc_divergence_with_probes};
pub use gsure::{loss_gsure, Gsure, GsureConfig, RangeMode};
pub use ssdu::{loss_ssdu_ma, make_ssdu_split, SsduSplit};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::operators::{ComplexImage, ForwardOperator, KSpaceData};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub data_term: f64,
    pub divergence_term: f64,
}

/// Scalar nodes of a recorded loss. `reconstruction` is the network output
/// on the full measurement set when the loss computes it.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub total: Var,
    pub data_term: Var,
    pub divergence_term: Option<Var>,
    pub reconstruction: Option<Var>,
}

impl LossNodes {
    fn data_only(data_term: Var, reconstruction: Option<Var>) -> Self {
        Self {
            total: data_term,
            data_term,
            divergence_term: None,
            reconstruction,
        }
    }

    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            total: tape.value(self.total).item(),
            data_term: tape.value(self.data_term).item(),
            divergence_term: self.divergence_term.map_or(0.0, |v| tape.value(v).item()),
        }
    }
}

/// `‖x̂ − x‖²` over both real channels.
pub fn loss_supervised_mse(tape: &mut Tape, estimate: Var, truth: &ComplexImage) -> Result<LossNodes> {
    let t = tape.constant(truth.to_tensor());
    let d = tape.sub(estimate, t)?;
    Ok(LossNodes::data_only(tape.sum_squares(d), Some(estimate)))
}

/// `‖A f(u) − y‖²` over the acquired locations.
pub fn loss_dip_ma<F>(
    tape: &mut Tape,
    op: &Arc<ForwardOperator>,
    u: &ComplexImage,
    y: &KSpaceData,
    mut f: F,
) -> Result<LossNodes>
where
    F: FnMut(&mut Tape, &Arc<ForwardOperator>, Var) -> Result<Var>,
{
    let (h, w) = op.extents();
    u.check_extents("dip loss input", h, w)?;
    let uv = tape.constant(u.to_tensor());
    let xhat = f(tape, op, uv)?;
    let residual = kspace_residual(tape, op, xhat, y)?;
    Ok(LossNodes::data_only(residual, Some(xhat)))
}

/// `‖A x̂ − y‖²` with `y` restricted to the operator's mask.
fn kspace_residual(tape: &mut Tape, op: &Arc<ForwardOperator>, xhat: Var, y: &KSpaceData) -> Result<Var> {
    let (h, w) = op.extents();
    let (yh, yw) = y.extents();
    if (yh, yw) != (h, w) || y.num_coils() != op.num_coils() {
        return Err(crate::error::Error::dim(
            "k-space data",
            &[op.num_coils(), h, w],
            &[y.num_coils(), yh, yw],
        ));
    }
    let ax = tape.linear(xhat, op.forward_map())?;
    let yv = tape.constant(crate::autodiff::Tensor::new(
        &[op.num_coils(), 2, h, w],
        y.masked(op.mask()).to_channels(),
    )?);
    let d = tape.sub(ax, yv)?;
    Ok(tape.sum_squares(d))
}

#[cfg(test)]
mod tests;
