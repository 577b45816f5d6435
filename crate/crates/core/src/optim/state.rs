//! Hyperparameters and mutable state of a search run.

use std::collections::BTreeMap;

use stretchnas_autodiff::{Precision, Tensor};

use crate::error::{Error, Result};
use crate::search_space::Supernet;

/// Which bi-level update rule drives the architecture scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerMode {
    /// Alternating first-order updates: scores on validation loss, weights
    /// on training loss.
    Darts,
    /// Mixed-level updates: scores follow the training loss plus a weighted
    /// validation loss, with a separate validation stream per score group.
    Milenas,
}

impl OptimizerMode {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerMode::Darts => "darts",
            OptimizerMode::Milenas => "milenas",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "darts" => Some(OptimizerMode::Darts),
            "milenas" => Some(OptimizerMode::Milenas),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerMode,
    /// Base weight learning rate; cosine-annealed per epoch.
    pub lr_w: f64,
    pub momentum_w: f64,
    pub weight_decay_w: f64,
    pub lr_arch: f64,
    /// Strength of the starvation penalty on topology scores.
    pub lambda: f64,
    /// Validation-loss weight of the mixed-level rule; required there,
    /// meaningless otherwise.
    pub lambda_prime: Option<f64>,
    pub precision: Precision,
}

impl SearchHyper {
    /// Desk-scale defaults used by tests and the command line.
    pub fn default_desk() -> Self {
        SearchHyper {
            epochs: 10,
            batch_size: 16,
            optimizer: OptimizerMode::Darts,
            lr_w: 0.025,
            momentum_w: 0.9,
            weight_decay_w: 3e-4,
            lr_arch: 3e-4,
            lambda: 10.0,
            lambda_prime: None,
            precision: Precision::F64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.lr_w <= 0.0 || !self.lr_w.is_finite() {
            return Err(Error::config(format!("lr_w must be positive, got {}", self.lr_w)));
        }
        if self.lr_arch < 0.0 || !self.lr_arch.is_finite() {
            return Err(Error::config(format!(
                "lr_arch must be non-negative, got {}",
                self.lr_arch
            )));
        }
        if !(0.0..1.0).contains(&self.momentum_w) {
            return Err(Error::config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum_w
            )));
        }
        if self.weight_decay_w < 0.0 {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        match (self.optimizer, self.lambda_prime) {
            (OptimizerMode::Milenas, None) => {
                return Err(Error::config(
                    "the mixed-level optimizer needs lambda_prime",
                ));
            }
            (_, Some(lp)) if lp < 0.0 || !lp.is_finite() => {
                return Err(Error::config(format!(
                    "lambda_prime must be non-negative, got {lp}"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Everything that evolves during search: the network, optimizer moments,
/// and progress counters. Checkpoints capture this exactly.
pub struct SearchState {
    pub net: Supernet,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    /// 1-based count of applied architecture updates.
    pub adam_t: u64,
    pub adam_m: BTreeMap<String, Tensor>,
    pub adam_v: BTreeMap<String, Tensor>,
    pub sgd_vel: BTreeMap<String, Tensor>,
}

/// Architecture scores are every `a.*` and `b.*` entry.
pub fn is_arch_param(name: &str) -> bool {
    name.starts_with("a.") || name.starts_with("b.")
}

impl SearchState {
    /// Fresh state with zeroed moments for every parameter group.
    pub fn new(net: Supernet, seed: u64) -> Self {
        let mut adam_m = BTreeMap::new();
        let mut adam_v = BTreeMap::new();
        let mut sgd_vel = BTreeMap::new();
        for (name, t) in net.params.iter() {
            let zero = Tensor::zeros(t.shape());
            if is_arch_param(name) {
                adam_m.insert(name.clone(), zero.clone());
                adam_v.insert(name.clone(), zero);
            } else {
                sgd_vel.insert(name.clone(), zero);
            }
        }
        SearchState {
            net,
            seed,
            epoch: 0,
            adam_t: 0,
            adam_m,
            adam_v,
            sgd_vel,
        }
    }

    pub fn arch_names(&self) -> Vec<String> {
        self.adam_m.keys().cloned().collect()
    }

    pub fn weight_names(&self) -> Vec<String> {
        self.sgd_vel.keys().cloned().collect()
    }
}
