use crate::error::Result;

use super::phantom::{make_phantom, Phantom};

/// Seed-addressed phantom slot in a dataset split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PhantomSpec {
    pub index: usize,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn generate(&self, height: usize, width: usize, num_ellipses: usize) -> Result<Phantom> {
        make_phantom(height, width, num_ellipses, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<PhantomSpec>,
    pub validation: Vec<PhantomSpec>,
    pub test: Vec<PhantomSpec>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = &PhantomSpec> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }
}

/// Train, validation and test slots with seeds `base_seed + global index`.
pub fn make_split(n_train: usize, n_val: usize, n_test: usize, base_seed: u64) -> DatasetSplit {
    let spec = |index: usize| PhantomSpec {
        index,
        seed: base_seed.wrapping_add(index as u64),
    };
    DatasetSplit {
        train: (0..n_train).map(spec).collect(),
        validation: (n_train..n_train + n_val).map(spec).collect(),
        test: (n_train + n_val..n_train + n_val + n_test).map(spec).collect(),
    }
}
