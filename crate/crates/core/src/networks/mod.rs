//! Reconstruction networks and their parameter files.

mod direct;
mod unrolled;

use std::path::Path;
use std::sync::Arc;

pub use direct::{residual_block, DirectConfig, DirectInversionNet};
pub use unrolled::{data_consistency, data_consistency_on_tape, UnrolledConfig, UnrolledNet};

use crate::autodiff::{NetworkParams, Tape, Tensor, Var};
use crate::data::{read_tnsr, write_tnsr, Record};
use crate::error::{Error, Result};
use crate::operators::{ComplexImage, ForwardOperator};

const MANIFEST: &str = "__manifest__";

#[derive(Clone, Debug, PartialEq)]
pub enum ReconNet {
    Direct(DirectInversionNet),
    Unrolled(UnrolledNet),
}

impl ReconNet {
    pub fn arch_name(&self) -> &'static str {
        match self {
            ReconNet::Direct(_) => "direct",
            ReconNet::Unrolled(_) => "unrolled",
        }
    }

    pub fn params(&self) -> &NetworkParams {
        match self {
            ReconNet::Direct(n) => n.params(),
            ReconNet::Unrolled(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut NetworkParams {
        match self {
            ReconNet::Direct(n) => n.params_mut(),
            ReconNet::Unrolled(n) => n.params_mut(),
        }
    }

    pub fn set_params(&mut self, params: NetworkParams) -> Result<()> {
        match self {
            ReconNet::Direct(n) => n.set_params(params),
            ReconNet::Unrolled(n) => n.set_params(params),
        }
    }

    /// Records `f(u)`; the direct network ignores `op`.
    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &[Var], op: &Arc<ForwardOperator>, u: Var) -> Result<Var> {
        match self {
            ReconNet::Direct(n) => n.forward_on_tape(tape, vars, u),
            ReconNet::Unrolled(n) => n.forward_on_tape(tape, vars, op, u),
        }
    }

    pub fn forward(&self, op: &Arc<ForwardOperator>, u: &ComplexImage) -> Result<ComplexImage> {
        match self {
            ReconNet::Direct(n) => n.forward(u),
            ReconNet::Unrolled(n) => n.forward(op, u),
        }
    }

    fn manifest(&self) -> String {
        let (d, extra) = match self {
            ReconNet::Direct(n) => (n.config(), String::new()),
            ReconNet::Unrolled(n) => {
                let c = n.config();
                (
                    c.denoiser,
                    format!(
                        "unrolls={}\nlambda={}\ndc_iters={}\ndc_cg_tol={}\n",
                        c.unrolls, c.lambda, c.dc_iters, c.dc_cg_tol
                    ),
                )
            }
        };
        format!(
            "arch={}\nblocks={}\nfeatures={}\n{extra}",
            self.arch_name(),
            d.blocks,
            d.features
        )
    }

    fn from_manifest(text: &str) -> Result<Self> {
        let mut arch = None;
        let mut d = DirectConfig::default();
        let mut u = UnrolledConfig::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("manifest line `{line}`")))?;
            let bad = |_| Error::Format(format!("manifest value `{line}`"));
            match k {
                "arch" => arch = Some(v.to_string()),
                "blocks" => d.blocks = v.parse().map_err(bad)?,
                "features" => d.features = v.parse().map_err(bad)?,
                "unrolls" => u.unrolls = v.parse().map_err(bad)?,
                "lambda" => {
                    u.lambda = v
                        .parse()
                        .map_err(|_| Error::Format(format!("manifest value `{line}`")))?
                }
                "dc_iters" => u.dc_iters = v.parse().map_err(bad)?,
                "dc_cg_tol" => {
                    u.dc_cg_tol = v
                        .parse()
                        .map_err(|_| Error::Format(format!("manifest value `{line}`")))?
                }
                _ => return Err(Error::Format(format!("unknown manifest key `{k}`"))),
            }
        }
        match arch.as_deref() {
            Some("direct") => Ok(ReconNet::Direct(DirectInversionNet::identity(d)?)),
            Some("unrolled") => {
                u.denoiser = d;
                Ok(ReconNet::Unrolled(UnrolledNet::with_denoiser(
                    u,
                    DirectInversionNet::identity(d)?,
                )?))
            }
            other => Err(Error::Architecture(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Writes parameters plus an architecture manifest.
pub fn save_params(net: &ReconNet, path: impl AsRef<Path>) -> Result<()> {
    let mut records = vec![Record::text(MANIFEST, &net.manifest())];
    for (name, t) in net.params().iter() {
        records.push(Record::f64(name, t.shape(), t.data().to_vec()));
    }
    write_tnsr(path, &records)
}

fn read_file(path: &Path) -> Result<(ReconNet, NetworkParams)> {
    let records = read_tnsr(path)?;
    let manifest = records
        .iter()
        .find(|r| r.name == MANIFEST)
        .and_then(|r| r.as_text())
        .ok_or_else(|| Error::Format(format!("{} has no manifest", path.display())))?;
    let template = ReconNet::from_manifest(manifest)?;
    let mut params = NetworkParams::new();
    for r in records.iter().filter(|r| r.name != MANIFEST) {
        let data = r
            .as_f64()
            .ok_or_else(|| Error::Format(format!("parameter `{}` is not f64", r.name)))?;
        params.push(r.name.clone(), Tensor::new(&r.shape, data.to_vec())?)?;
    }
    Ok((template, params))
}

/// Replaces `net`'s parameters with those stored at `path`.
pub fn load_params(net: &mut ReconNet, path: impl AsRef<Path>) -> Result<()> {
    let (stored, params) = read_file(path.as_ref())?;
    if stored.arch_name() != net.arch_name() {
        return Err(Error::Architecture(format!(
            "file holds a {} network, expected {}",
            stored.arch_name(),
            net.arch_name()
        )));
    }
    let aligned = net.params().aligned_from(&params)?;
    if stored.manifest() != net.manifest() {
        return Err(Error::Architecture(format!(
            "manifest mismatch:\n{}\nvs\n{}",
            stored.manifest(),
            net.manifest()
        )));
    }
    net.set_params(aligned)
}

/// Builds a network from the manifest and parameters stored at `path`.
pub fn load_network(path: impl AsRef<Path>) -> Result<ReconNet> {
    let (mut net, params) = read_file(path.as_ref())?;
    let aligned = net.params().aligned_from(&params)?;
    net.set_params(aligned)?;
    Ok(net)
}
