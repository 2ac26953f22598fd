use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gsure_cli::commands::{self, Failure};
use gsure_cli::config::RunConfig;
use gsure_core::verify::VerifyHooks;

#[derive(Parser, Debug)]
#[command(
    name = "gsure-ma",
    version,
    about = "Noise-aware model adaptation for undersampled MRI reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// `key = value` config file; keys may also come from GSURE_MA_<KEY>
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides `seed`)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Dip,
    Ssdu,
    Gsure,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Supervised training at the nominal acceleration
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Adapt a pre-trained net to one test measurement
    Adapt {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        /// Pre-trained parameter file (default `<out>/pretrained.tnsr`)
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Before/after PSNR over accelerations and strategies
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Run the invariant suite
    Verify {
        /// Test hook: perturb the adjoint so the suite must fail
        #[arg(long, hide = true)]
        corrupt_adjoint: bool,
    },
}

fn load(common: &Common, mut flags: BTreeMap<String, String>) -> Result<RunConfig, Failure> {
    if let Some(out) = &common.out {
        flags.insert("out_dir".into(), out.display().to_string());
    }
    if let Some(seed) = common.seed {
        flags.insert("seed".into(), seed.to_string());
    }
    RunConfig::load(common.config.as_deref(), std::env::vars(), &flags).map_err(|e| Failure::Config(e.0))
}

fn params_flag(params: &Option<PathBuf>) -> BTreeMap<String, String> {
    params
        .iter()
        .map(|p| ("params".to_string(), p.display().to_string()))
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Pretrain { common } => commands::pretrain(&load(&common, BTreeMap::new())?),
        Command::Adapt {
            common,
            strategy,
            params,
        } => {
            let mut flags = params_flag(&params);
            if let Some(s) = strategy {
                let name = match s {
                    StrategyArg::Dip => "dip",
                    StrategyArg::Ssdu => "ssdu",
                    StrategyArg::Gsure => "gsure",
                };
                flags.insert("strategy".into(), name.into());
            }
            commands::adapt(&load(&common, flags)?)
        }
        Command::Sweep { common, params } => commands::sweep(&load(&common, params_flag(&params))?),
        Command::Verify { corrupt_adjoint } => commands::verify(VerifyHooks { corrupt_adjoint }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
