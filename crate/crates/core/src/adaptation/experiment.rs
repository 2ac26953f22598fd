use std::sync::Arc;

use super::config::{derive_seed, AdaptationConfig, PretrainConfig, Strategy};
use super::matrix::{evaluate_matrix, ExperimentMatrix, SweepScenario};
use super::metrics::psnr;
use super::scenario::DeskSetup;
use super::train::{adapt, pretrain, AdaptationOutcome, PretrainOutcome};
use crate::data::{make_split, DatasetSplit};
use crate::error::{Error, Result};
use crate::losses::{GsureConfig, RangeMode};
use crate::networks::{DirectConfig, DirectInversionNet, ReconNet, UnrolledConfig, UnrolledNet};
use crate::operators::{ComplexImage, ForwardOperator, KSpaceData};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    Direct,
    Unrolled,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Direct => "direct",
            Architecture::Unrolled => "unrolled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "direct" | "resnet" => Some(Architecture::Direct),
            "unrolled" | "modl" => Some(Architecture::Unrolled),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetSpec {
    pub arch: Architecture,
    pub unrolled: UnrolledConfig,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self {
            arch: Architecture::Unrolled,
            unrolled: UnrolledConfig {
                denoiser: DirectConfig { blocks: 2, features: 8 },
                ..UnrolledConfig::default()
            },
        }
    }
}

impl NetSpec {
    pub fn build(&self, seed: u64) -> Result<ReconNet> {
        Ok(match self.arch {
            Architecture::Direct => ReconNet::Direct(DirectInversionNet::new(self.unrolled.denoiser, seed)?),
            Architecture::Unrolled => ReconNet::Unrolled(UnrolledNet::new(self.unrolled, seed)?),
        })
    }
}

/// The whole pretrain, adapt and sweep protocol as a pure function of its
/// fields. Every seed used downstream is derived from `seed`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub setup: DeskSetup,
    pub net: NetSpec,
    pub train_images: usize,
    pub validation_images: usize,
    pub test_images: usize,
    /// Phantom seeds are `data_seed + global index`.
    pub data_seed: u64,
    pub pretrain_acceleration: f64,
    pub pretrain: PretrainConfig,
    pub adapt_acceleration: f64,
    /// Test image used by single-image adaptation.
    pub test_index: usize,
    pub adaptation: AdaptationConfig,
    pub sweep_accelerations: Vec<f64>,
    pub sweep_strategies: Vec<Strategy>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            setup: DeskSetup::default(),
            net: NetSpec::default(),
            train_images: 8,
            validation_images: 2,
            test_images: 4,
            data_seed: 100,
            pretrain_acceleration: 6.0,
            pretrain: PretrainConfig {
                epochs: 60,
                ..PretrainConfig::default()
            },
            adapt_acceleration: 4.0,
            test_index: 0,
            // 200 epochs keeps the 16-cell sweep inside its time budget; the
            // lr is doubled to cover the same ground as 400 epochs at 3e-5.
            adaptation: AdaptationConfig {
                epochs: 200,
                lr: 6e-5,
                gsure: GsureConfig {
                    range: RangeMode::Polynomial(32),
                    ..GsureConfig::default()
                },
                ..AdaptationConfig::default()
            },
            sweep_accelerations: vec![2.0, 4.0, 6.0, 8.0],
            sweep_strategies: Strategy::ALL.to_vec(),
            seed: 0,
        }
    }
}

const TAG_INIT: u64 = 0;
const TAG_PRETRAIN_MASK: u64 = 1;
const TAG_TEST_MASK: u64 = 2;
const TAG_TEST_NOISE: u64 = 3;
const TAG_PRETRAIN: u64 = 4;
const TAG_ADAPT: u64 = 5;
const TAG_SWEEP: u64 = 6;

/// One adapted test image with everything needed for reporting.
#[derive(Clone, Debug)]
pub struct AdaptationRun {
    pub truth: ComplexImage,
    pub input: ComplexImage,
    pub before: ComplexImage,
    pub after: ComplexImage,
    pub operator: Arc<ForwardOperator>,
    pub psnr_input_db: f64,
    pub psnr_before_db: f64,
    pub outcome: AdaptationOutcome,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_images == 0 {
            return Err(Error::Contract("train_images must be at least 1".into()));
        }
        if self.test_index >= self.test_images {
            return Err(Error::Contract(format!(
                "test_index {} outside the {} test images",
                self.test_index, self.test_images
            )));
        }
        if self.sweep_accelerations.is_empty() {
            return Err(Error::Contract("sweep_accelerations is empty".into()));
        }
        self.adaptation.validate()
    }

    pub fn split(&self) -> DatasetSplit {
        make_split(
            self.train_images,
            self.validation_images,
            self.test_images,
            self.data_seed,
        )
    }

    fn images(&self, specs: &[crate::data::PhantomSpec]) -> Result<Vec<ComplexImage>> {
        self.setup.phantoms(&specs.iter().map(|s| s.seed).collect::<Vec<_>>())
    }

    pub fn train_set(&self) -> Result<Vec<ComplexImage>> {
        self.images(&self.split().train)
    }

    pub fn test_set(&self) -> Result<Vec<ComplexImage>> {
        self.images(&self.split().test)
    }

    pub fn initial_net(&self) -> Result<ReconNet> {
        self.net.build(derive_seed(self.seed, &[TAG_INIT]))
    }

    /// Training operator: one mask for the whole set, noise matched to the
    /// mean SNR of the training images.
    pub fn pretrain_operator(&self, train: &[ComplexImage]) -> Result<Arc<ForwardOperator>> {
        self.setup.shared_operator(
            train,
            self.pretrain_acceleration,
            derive_seed(self.seed, &[TAG_PRETRAIN_MASK]),
        )
    }

    /// Test operator for image `x` at `acceleration`; the mask depends only
    /// on the acceleration, the noise level on the image.
    pub fn test_operator(&self, x: &ComplexImage, acceleration: f64) -> Result<Arc<ForwardOperator>> {
        let mask_seed = derive_seed(self.seed, &[TAG_TEST_MASK, acceleration.to_bits()]);
        self.setup.operator_for(x, acceleration, mask_seed)
    }

    pub fn measure(&self, op: &ForwardOperator, x: &ComplexImage, image_index: usize) -> Result<KSpaceData> {
        op.simulate(x, derive_seed(self.seed, &[TAG_TEST_NOISE, image_index as u64]))
    }

    pub fn run_pretrain(&self) -> Result<PretrainOutcome> {
        let train = self.train_set()?;
        let op = self.pretrain_operator(&train)?;
        let cfg = PretrainConfig {
            seed: derive_seed(self.seed, &[TAG_PRETRAIN]),
            ..self.pretrain
        };
        pretrain(&self.initial_net()?, &train, &op, &cfg)
    }

    pub fn adaptation_config(&self, strategy: Strategy, tag: u64) -> AdaptationConfig {
        let seed = derive_seed(self.seed, &[tag]);
        AdaptationConfig {
            strategy,
            seed,
            gsure: GsureConfig {
                rng_seed: derive_seed(seed, &[0]),
                ..self.adaptation.gsure
            },
            ..self.adaptation
        }
    }

    /// Adapts `net` on test image `test_index` at `adapt_acceleration`.
    pub fn run_adapt(&self, net: &ReconNet, strategy: Strategy) -> Result<AdaptationRun> {
        let tests = self.test_set()?;
        let truth = tests
            .get(self.test_index)
            .cloned()
            .ok_or_else(|| Error::Contract(format!("no test image {}", self.test_index)))?;
        let op = self.test_operator(&truth, self.adapt_acceleration)?;
        let y = self.measure(&op, &truth, self.test_index)?;
        let input = op.adjoint(&y)?;
        let before = net.forward(&op, &input)?;
        let outcome = adapt(net, &op, &y, &self.adaptation_config(strategy, TAG_ADAPT), Some(&truth))?;
        let after = outcome.net.forward(&op, &input)?;
        Ok(AdaptationRun {
            psnr_input_db: psnr(&input, &truth)?,
            psnr_before_db: psnr(&before, &truth)?,
            truth,
            input,
            before,
            after,
            operator: op,
            outcome,
        })
    }

    /// Before/after matrix over the sweep accelerations and strategies.
    pub fn run_sweep(&self, net: &ReconNet) -> Result<ExperimentMatrix> {
        let tests = self.test_set()?;
        let scenarios = self
            .sweep_accelerations
            .iter()
            .map(|&acc| {
                Ok(SweepScenario {
                    acceleration: acc,
                    operators: tests
                        .iter()
                        .map(|x| self.test_operator(x, acc))
                        .collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let base = self.adaptation_config(self.adaptation.strategy, TAG_SWEEP);
        evaluate_matrix(
            net,
            &scenarios,
            &tests,
            &self.sweep_strategies,
            &base,
            derive_seed(self.seed, &[TAG_SWEEP]),
        )
    }
}
