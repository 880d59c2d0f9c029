//! Cross-validation fold assignment.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, SampleRef};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldStrategy {
    /// Whole configurations are assigned to folds.
    #[default]
    PerConfiguration,
    /// Every fold receives an equal share (±1) of every configuration.
    ProportionalStratified,
}

impl std::str::FromStr for FoldStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_configuration" | "per-configuration" => Ok(Self::PerConfiguration),
            "proportional_stratified" | "proportional-stratified" => Ok(Self::ProportionalStratified),
            other => Err(Error::config(format!("unknown fold strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub sample: SampleRef,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub strategy: FoldStrategy,
    pub seed: u64,
    pub holdout_label: Option<String>,
    /// One entry per non-holdout sample, in manifest order.
    pub assignments: Vec<FoldAssignment>,
}

impl FoldPlan {
    /// Samples of each fold, in manifest order.
    pub fn folds(&self) -> Vec<Vec<SampleRef>> {
        let mut out = vec![Vec::new(); self.k];
        for a in &self.assignments {
            out[a.fold].push(a.sample);
        }
        out
    }

    pub fn fold_of(&self, sample: SampleRef) -> Option<usize> {
        self.assignments.iter().find(|a| a.sample == sample).map(|a| a.fold)
    }

    /// Configuration indices present in fold `f`.
    pub fn configurations_in(&self, f: usize) -> BTreeSet<usize> {
        self.assignments
            .iter()
            .filter(|a| a.fold == f)
            .map(|a| a.sample.configuration)
            .collect()
    }
}

/// Splits the non-holdout samples of `manifest` into `k` folds.
///
/// With [`FoldStrategy::PerConfiguration`] the configurations are shuffled
/// and dealt round-robin, so each fold holds exactly one configuration when
/// `k` equals the configuration count. With
/// [`FoldStrategy::ProportionalStratified`] each configuration's samples are
/// shuffled and dealt round-robin across all folds.
pub fn plan_folds(
    manifest: &DatasetManifest,
    k: usize,
    strategy: FoldStrategy,
    holdout_label: Option<&str>,
    seed: u64,
) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::config("fold count must be positive"));
    }
    let holdout = match holdout_label {
        Some(label) => Some(
            manifest
                .index_of(label)
                .ok_or_else(|| Error::config(format!("unknown holdout configuration `{label}`")))?,
        ),
        None => None,
    };
    let configs: Vec<usize> = (0..manifest.configurations.len())
        .filter(|&c| Some(c) != holdout)
        .collect();
    let mut fold_of: Vec<Vec<usize>> = manifest
        .configurations
        .iter()
        .map(|c| vec![usize::MAX; c.sample_paths.len()])
        .collect();

    match strategy {
        FoldStrategy::PerConfiguration => {
            if k > configs.len() {
                return Err(Error::config(format!(
                    "per-configuration folds need k ≤ {} configurations, got k = {k}",
                    configs.len()
                )));
            }
            let mut order = configs.clone();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0])));
            for (j, &c) in order.iter().enumerate() {
                fold_of[c].iter_mut().for_each(|f| *f = j % k);
            }
        }
        FoldStrategy::ProportionalStratified => {
            for (n, &c) in configs.iter().enumerate() {
                let mut idx: Vec<usize> = (0..fold_of[c].len()).collect();
                idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1, c as u64])));
                for (i, &s) in idx.iter().enumerate() {
                    // rotating the start keeps fold totals balanced too
                    fold_of[c][s] = (i + n) % k;
                }
            }
        }
    }

    let assignments: Vec<FoldAssignment> = configs
        .iter()
        .flat_map(|&c| {
            fold_of[c].iter().enumerate().map(move |(index, &fold)| FoldAssignment {
                sample: SampleRef { configuration: c, index },
                fold,
            })
        })
        .collect();
    let plan = FoldPlan {
        k,
        strategy,
        seed,
        holdout_label: holdout_label.map(str::to_owned),
        assignments,
    };
    if let Some(f) = plan.folds().iter().position(Vec::is_empty) {
        return Err(Error::config(format!("fold {f} would be empty")));
    }
    Ok(plan)
}
