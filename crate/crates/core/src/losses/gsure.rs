use std::sync::Arc;

use super::divergence::{divergence_epsilon, gaussian_probes, mc_divergence_with_probes};
use super::LossNodes;
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::operators::{
    cg_on_tape, pinv_normal, project_range, ComplexImage, ForwardOperator, SpectralFilter, DEFAULT_CG_ITERS,
    DEFAULT_CG_TOL,
};

/// How the range projector `P` and the least-squares estimate are formed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RangeMode {
    /// `P = (AᴴA)†AᴴA` by CG: tolerance-driven outside the tape and a fixed
    /// number of recorded iterations on it.
    Exact,
    /// The order-`K` polynomial filter of [`SpectralFilter`].
    Polynomial(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GsureConfig {
    pub mc_probes: usize,
    /// Finite-difference step relative to `max|u|`.
    pub epsilon_scale: f64,
    /// Weight the divergence by the per-component noise variance `σ²/2`;
    /// when false the weight is 1.
    pub divergence_weight_sigma2: bool,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub tape_cg_iters: usize,
    pub range: RangeMode,
    pub rng_seed: u64,
}

impl Default for GsureConfig {
    fn default() -> Self {
        Self {
            mc_probes: 1,
            epsilon_scale: 1e-3,
            divergence_weight_sigma2: true,
            cg_tol: DEFAULT_CG_TOL,
            cg_max_iter: DEFAULT_CG_ITERS,
            tape_cg_iters: 10,
            range: RangeMode::Polynomial(16),
            rng_seed: 0,
        }
    }
}

/// GSURE for one measurement set: `‖P f(u) − x_LS‖² + 2w · tr(P ∂f/∂u)`,
/// with the trace estimated by finite differences along probes `P b`.
#[derive(Clone, Debug)]
pub struct Gsure {
    op: Arc<ForwardOperator>,
    u: ComplexImage,
    x_ls: ComplexImage,
    cfg: GsureConfig,
    eps: f64,
    filter: Option<SpectralFilter>,
}

impl Gsure {
    pub fn new(op: Arc<ForwardOperator>, u: ComplexImage, cfg: GsureConfig) -> Result<Self> {
        let (h, w) = op.extents();
        u.check_extents("gsure input", h, w)?;
        let eps = divergence_epsilon(cfg.epsilon_scale, &u)?;
        let (x_ls, filter) = match cfg.range {
            RangeMode::Exact => (pinv_normal(&op, &u, cfg.cg_tol, cfg.cg_max_iter)?.solution, None),
            RangeMode::Polynomial(k) => {
                let filter = SpectralFilter::new(op.clone(), k)?;
                (filter.pinv(&u)?, Some(filter))
            }
        };
        Ok(Self {
            op,
            u,
            x_ls,
            cfg,
            eps,
            filter,
        })
    }

    pub fn x_ls(&self) -> &ComplexImage {
        &self.x_ls
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    pub fn config(&self) -> &GsureConfig {
        &self.cfg
    }

    /// Weight `w` in the `2w · div` term.
    pub fn weight(&self) -> f64 {
        if self.cfg.divergence_weight_sigma2 {
            let s = self.op.noise_sigma();
            0.5 * s * s
        } else {
            1.0
        }
    }

    /// `P x` evaluated outside the tape.
    pub fn project(&self, x: &ComplexImage) -> Result<ComplexImage> {
        match &self.filter {
            Some(f) => f.project(x),
            None => Ok(project_range(&self.op, x, self.cfg.cg_tol)?.solution),
        }
    }

    /// Projected probes for `epoch`.
    pub fn probes(&self, epoch: u64) -> Result<Vec<ComplexImage>> {
        let (h, w) = self.op.extents();
        gaussian_probes(self.cfg.rng_seed, epoch, self.cfg.mc_probes, h, w)
            .iter()
            .map(|b| self.project(b))
            .collect()
    }

    fn project_on_tape(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        match &self.filter {
            Some(f) => tape.linear(x, f.projection_map()),
            None => {
                let normal = self.op.normal_map(0.0);
                let nx = tape.linear(x, normal.clone())?;
                cg_on_tape(tape, &normal, nx, self.cfg.tape_cg_iters)
            }
        }
    }

    pub fn loss<F>(&self, tape: &mut Tape, epoch: u64, mut f: F) -> Result<LossNodes>
    where
        F: FnMut(&mut Tape, &Arc<ForwardOperator>, Var) -> Result<Var>,
    {
        let uv = tape.constant(self.u.to_tensor());
        let xhat = f(tape, &self.op, uv)?;
        let px = self.project_on_tape(tape, xhat)?;
        let xls = tape.constant(self.x_ls.to_tensor());
        let d = tape.sub(px, xls)?;
        let data_term = tape.sum_squares(d);
        let probes = self.probes(epoch)?;
        let op = self.op.clone();
        let div = mc_divergence_with_probes(tape, &self.u, xhat, &probes, self.eps, |t, v| f(t, &op, v))?;
        let divergence_term = tape.scale(div, 2.0 * self.weight());
        let total = tape.add(data_term, divergence_term)?;
        Ok(LossNodes {
            total,
            data_term,
            divergence_term: Some(divergence_term),
            reconstruction: Some(xhat),
        })
    }
}

/// One-shot form of [`Gsure::loss`].
pub fn loss_gsure<F>(
    tape: &mut Tape,
    op: &Arc<ForwardOperator>,
    u: &ComplexImage,
    cfg: &GsureConfig,
    epoch: u64,
    f: F,
) -> Result<LossNodes>
where
    F: FnMut(&mut Tape, &Arc<ForwardOperator>, Var) -> Result<Var>,
{
    Gsure::new(op.clone(), u.clone(), *cfg)?.loss(tape, epoch, f)
}
