//! Masked-loss training with Adam.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{ConvGrad, Real};
use super::masking::{build_masked_batch, extract_patches, MaskedBatch};
use super::net::{Gradients, Network};
use super::BlindSpotConfig;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::serde_float;
use crate::sinogram::Sinogram;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Trained parameters plus the normalization applied around the network.
#[derive(Debug, Clone, PartialEq)]
pub struct BlindSpotModel {
    pub config: BlindSpotConfig,
    /// Train-set mean subtracted from inputs and added back to outputs.
    pub norm_mean: f64,
    /// Train-set standard deviation dividing inputs and scaling outputs.
    pub norm_std: f64,
    pub network: Network<f32>,
}

impl BlindSpotModel {
    /// Freshly initialized model for `config` with the given normalization.
    pub fn initialized(config: BlindSpotConfig, norm_mean: f64, norm_std: f64) -> Self {
        Self {
            config,
            norm_mean,
            norm_std,
            network: Network::initialized(config.architecture(), derive_seed(config.seed, &[4])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean masked loss over the epoch's steps; absent for the initial entry.
    pub train_loss: Option<f64>,
    #[serde(with = "serde_float")]
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Entry 0 is the initialized model, entry `e` follows epoch `e`.
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub train_sinograms: Vec<usize>,
    pub validation_sinograms: Vec<usize>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,validation_loss\n");
        for e in &self.epochs {
            let train = e.train_loss.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{}\n", e.epoch, train, e.validation_loss));
        }
        s
    }
}

struct Adam<T> {
    m: Gradients<T>,
    v: Gradients<T>,
    t: i32,
    lr: f64,
}

impl<T: Real> Adam<T> {
    fn new(net: &Network<T>, lr: f64) -> Self {
        let zeros: Gradients<T> = net.layers.iter().map(ConvGrad::zeros_like).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
        }
    }

    fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let (b1, b2) = (T::of(BETA1), T::of(BETA2));
        let (ob1, ob2) = (T::of(1.0 - BETA1), T::of(1.0 - BETA2));
        let step = T::of(self.lr / c1);
        let c2s = T::of(c2.sqrt());
        let eps = T::of(ADAM_EPS);
        let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + ob1 * g;
            *v = b2 * *v + ob2 * g * g;
            *p = *p - step * *m / ((*v).sqrt() / c2s + eps);
        };
        for (li, layer) in net.layers.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[li], &mut self.v[li], &grads[li]);
            ndarray::Zip::from(&mut layer.weight)
                .and(&g.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

/// Mean masked loss and summed gradients of a batch. Per-patch work may run
/// in parallel; the reduction is always in patch order.
fn batch_gradients(net: &Network<f32>, batch: &MaskedBatch, config: &BlindSpotConfig) -> (f64, Gradients<f32>) {
    let scale = 1.0 / batch.total_masked() as f32;
    let parts = config.exec.map(batch.len(), |k| {
        net.masked_loss_and_grad(&batch.patches[k], &batch.mask_coords[k], &batch.original_values[k], scale)
    });
    let mut iter = parts.into_iter();
    let (mut loss, mut total) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        total.iter_mut().zip(&g).for_each(|(t, g)| t.add(g));
    }
    (loss, total)
}

fn batch_loss(net: &Network<f32>, batch: &MaskedBatch, config: &BlindSpotConfig) -> f64 {
    let scale = 1.0 / batch.total_masked() as f32;
    config
        .exec
        .map(batch.len(), |k| {
            net.masked_loss(&batch.patches[k], &batch.mask_coords[k], &batch.original_values[k], scale)
        })
        .into_iter()
        .sum()
}

fn normalized(data: &Array2<f64>, mean: f64, std: f64) -> Array2<f32> {
    data.mapv(|v| ((v - mean) / std) as f32)
}

/// Trains a blind-spot denoiser on noisy sinograms only. A seeded share of
/// the sinograms (`validation_fraction`, at least one) is held out for
/// validation; the returned model is the one with the lowest validation
/// masked loss, the initialized model included.
pub fn train_blind_spot(dataset: &[Sinogram], config: &BlindSpotConfig) -> Result<(BlindSpotModel, TrainingLog)> {
    config.validate()?;
    let n = dataset.len();
    if n < 2 {
        return Err(Error::config(format!(
            "blind-spot training needs at least 2 sinograms, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[1])));
    let n_val = ((config.validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut validation_idx = order[..n_val].to_vec();
    let mut train_idx = order[n_val..].to_vec();
    validation_idx.sort_unstable();
    train_idx.sort_unstable();
    let train: Vec<Sinogram> = train_idx.iter().map(|&i| dataset[i].clone()).collect();
    let validation: Vec<Sinogram> = validation_idx.iter().map(|&i| dataset[i].clone()).collect();

    let count: usize = train.iter().map(|s| s.data.len()).sum();
    let mean = train.iter().map(|s| s.data.sum()).sum::<f64>() / count as f64;
    let var = train
        .iter()
        .flat_map(|s| s.data.iter())
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / count as f64;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };

    let p = config.patch_size;
    let train_patches: Vec<Array2<f32>> =
        extract_patches(&train, p, config.patches_per_sinogram, derive_seed(config.seed, &[2]))?
            .into_iter()
            .map(|q| normalized(&q.data, mean, std))
            .collect();
    let per_val = config.validation_patches.div_ceil(validation.len());
    let mut val_patches: Vec<Array2<f32>> = extract_patches(&validation, p, per_val, derive_seed(config.seed, &[3]))?
        .into_iter()
        .map(|q| normalized(&q.data, mean, std))
        .collect();
    val_patches.truncate(config.validation_patches);
    let val_batch = build_masked_batch(
        &val_patches,
        config,
        &mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[6])),
    );

    let mut model = BlindSpotModel::initialized(*config, mean, std);
    let mut best = model.network.clone();
    let initial = batch_loss(&model.network, &val_batch, config);
    if !initial.is_finite() {
        return Err(Error::Numerical("initial validation loss is not finite".into()));
    }
    let mut log = TrainingLog {
        epochs: vec![EpochLog {
            epoch: 0,
            train_loss: None,
            validation_loss: initial,
        }],
        best_epoch: 0,
        train_sinograms: train_idx,
        validation_sinograms: validation_idx,
    };
    let mut best_loss = initial;

    let mut adam = Adam::new(&model.network, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[5]));
    let batch_size = config.batch_size.min(train_patches.len());
    let steps = config
        .steps_per_epoch
        .unwrap_or_else(|| train_patches.len().div_ceil(batch_size));
    let mut perm: Vec<usize> = (0..train_patches.len()).collect();
    let mut cursor = perm.len();

    for epoch in 1..=config.epochs {
        let mut epoch_loss = 0.0;
        for step in 0..steps {
            let mut chosen = Vec::with_capacity(batch_size);
            while chosen.len() < batch_size {
                if cursor == perm.len() {
                    perm.shuffle(&mut rng);
                    cursor = 0;
                }
                chosen.push(train_patches[perm[cursor]].clone());
                cursor += 1;
            }
            let batch = build_masked_batch(&chosen, config, &mut rng);
            let (loss, grads) = batch_gradients(&model.network, &batch, config);
            if !loss.is_finite() || grads.iter().any(|g| g.weight.iter().any(|v| !v.is_finite())) {
                return Err(Error::Numerical(format!(
                    "non-finite training loss at epoch {epoch}, step {step} (loss = {loss})"
                )));
            }
            adam.step(&mut model.network, &grads);
            epoch_loss += loss;
        }
        let train_loss = epoch_loss / steps as f64;
        let validation_loss = batch_loss(&model.network, &val_batch, config);
        if !validation_loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite validation loss at epoch {epoch}")));
        }
        log::debug!("epoch {epoch}: train {train_loss:.5}, validation {validation_loss:.5}");
        if validation_loss < best_loss {
            best_loss = validation_loss;
            best = model.network.clone();
            log.best_epoch = epoch;
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss: Some(train_loss),
            validation_loss,
        });
    }
    model.network = best;
    Ok((model, log))
}
