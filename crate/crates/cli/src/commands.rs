use std::fs;
use std::path::Path;
use std::time::Instant;

use gsure_core::adaptation::{losses_to_csv, records_to_csv};
use gsure_core::data::pgm::write_scaled_pgm;
use gsure_core::networks::{load_params, save_params};
use gsure_core::operators::ComplexImage;
use gsure_core::verify::{run_suite, VerifyHooks};
use gsure_core::Error;

use crate::config::RunConfig;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numeric(String),
    Property(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numeric(_) => 2,
            Failure::Property(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
            Failure::Property(m) => write!(f, "property failure: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_) | Error::Dimension { .. } | Error::Contract(_) => Failure::Numeric(e.to_string()),
            Error::Property(_) => Failure::Property(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn prepare(cfg: &RunConfig, command: &str) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    write(&cfg.out_dir.join(format!("{command}.conf")), cfg.to_text())
}

fn magnitude_pgm(path: &Path, img: &ComplexImage) -> Result<()> {
    write_scaled_pgm(path, img.width(), img.height(), &img.magnitude())?;
    Ok(())
}

pub fn pretrain(cfg: &RunConfig) -> Result<()> {
    prepare(cfg, "pretrain")?;
    let start = Instant::now();
    let e = &cfg.experiment;
    log::info!(
        "pretraining {} net on {} images at {}x for {} epochs",
        e.net.arch.as_str(),
        e.train_images,
        e.pretrain_acceleration,
        e.pretrain.epochs
    );
    let out = e.run_pretrain()?;
    save_params(&out.net, cfg.out_dir.join("pretrained.tnsr"))?;
    write(&cfg.out_dir.join("pretrain_loss.csv"), losses_to_csv(&out.losses))?;
    println!(
        "pretrained in {:.1?}; final training loss {}",
        start.elapsed(),
        out.losses.last().map_or("n/a".into(), |l| format!("{l:.6e}"))
    );
    Ok(())
}

fn load_net(cfg: &RunConfig) -> Result<gsure_core::networks::ReconNet> {
    let mut net = cfg.experiment.initial_net()?;
    load_params(&mut net, cfg.params_path())?;
    Ok(net)
}

pub fn adapt(cfg: &RunConfig) -> Result<()> {
    prepare(cfg, "adapt")?;
    let net = load_net(cfg)?;
    let e = &cfg.experiment;
    let strategy = e.adaptation.strategy;
    log::info!(
        "adapting with {strategy} at {}x for {} epochs",
        e.adapt_acceleration,
        e.adaptation.epochs
    );
    let run = e.run_adapt(&net, strategy)?;
    if let Some(reason) = &run.outcome.aborted {
        return Err(Failure::Numeric(reason.clone()));
    }
    let dir = &cfg.out_dir;
    save_params(&run.outcome.net, dir.join(format!("adapted_{strategy}.tnsr")))?;
    write(
        &dir.join(format!("adapt_{strategy}.csv")),
        records_to_csv(&run.outcome.records),
    )?;
    magnitude_pgm(&dir.join("truth.pgm"), &run.truth)?;
    magnitude_pgm(&dir.join("input.pgm"), &run.input)?;
    magnitude_pgm(&dir.join("before.pgm"), &run.before)?;
    magnitude_pgm(&dir.join(format!("after_{strategy}.pgm")), &run.after)?;
    let mask = run.operator.mask();
    gsure_core::data::pgm::write_pgm(dir.join("mask.pgm"), mask.width(), mask.height(), &mask.to_gray())?;

    let traj = run.outcome.psnr_trajectory();
    let (best_epoch, best) = traj
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    println!(
        "{strategy}: input {:.2} dB, before {:.2} dB, after {:.2} dB (max {best:.2} dB at epoch {best_epoch})",
        run.psnr_input_db,
        run.psnr_before_db,
        run.outcome.final_psnr.unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    prepare(cfg, "sweep")?;
    let net = load_net(cfg)?;
    let start = Instant::now();
    let matrix = cfg.experiment.run_sweep(&net)?;
    write(&cfg.out_dir.join("sweep.csv"), matrix.to_csv())?;
    print!("{}", matrix.to_table());
    log::info!("sweep finished in {:.1?}", start.elapsed());
    Ok(())
}

pub fn verify(hooks: VerifyHooks) -> Result<()> {
    let results = run_suite(hooks);
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Property(failed.join(", ")))
    }
}
