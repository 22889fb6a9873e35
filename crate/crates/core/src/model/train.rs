//! The training pipeline: split → augment → scale → batches → epochs.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{cross_entropy, Network, NetworkSpec};
use super::optim::{AdamConfig, AdamState};
use super::{ResidualMlpModel, TrainingMetadata};
use crate::augment::{expand_dataset, one_hot_batch, AugmentConfig, BatchGenerator, TrainingSet};
use crate::error::{Error, Result};
use crate::landmarks::{extract_features, LabeledSample};
use crate::preprocess::{fit_scaler, stratified_split, LabelCodec, SplitSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub bn_momentum: f64,
    pub train_fraction: f64,
    pub seed: u64,
    /// Offline 3x expansion of the training split.
    pub augment: bool,
    /// Per-batch dropout on top of (or instead of) offline expansion.
    pub on_the_fly_dropout: bool,
    pub network: NetworkSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 40,
            batch_size: 64,
            bn_momentum: 0.9,
            train_fraction: 0.8,
            seed: 0,
            augment: true,
            on_the_fly_dropout: false,
            network: NetworkSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2), ("bn_momentum", self.bn_momentum)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        self.network.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Per-epoch metrics. Row 0 is measured before the first update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub records: Vec<EpochRecord>,
}

impl EpochLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Training epochs completed (excludes the initial row).
    pub fn epochs_completed(&self) -> usize {
        self.records.iter().filter(|r| r.epoch > 0).count()
    }
}

/// Inference-mode mean loss and accuracy over a standardized set.
pub fn evaluate_set(net: &Network<f32>, data: &TrainingSet) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    const CHUNK: usize = 1024;
    let (mut loss, mut correct) = (0.0, 0usize);
    for start in (0..data.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(data.len());
        let x = data.features.slice(s![start..end, ..]).mapv(|v| v as f32);
        let labels = &data.labels[start..end];
        let logits = net.logits(&x)?;
        let targets = one_hot_batch(labels).mapv(|v| v as f32);
        loss += cross_entropy(&logits, &targets) * labels.len() as f64;
        correct += count_correct(&logits, labels);
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn count_correct(scores: &Array2<f32>, labels: &[usize]) -> usize {
    scores
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &l)| LabelCodec::argmax(row.as_slice().expect("row-major")) == l)
        .count()
}

/// Runs the full pipeline and returns the trained model with its epoch log.
///
/// The 20% test split doubles as the validation set. The scaler is fitted on
/// the (possibly augmented) training split only.
pub fn train(
    dataset: &[LabeledSample],
    cfg: &TrainConfig,
    aug: &AugmentConfig,
) -> Result<(ResidualMlpModel, EpochLog)> {
    cfg.validate()?;
    aug.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    let split = SplitSpec {
        train_fraction: cfg.train_fraction,
        seed: cfg.seed,
    };
    let (train_split, val_split) = stratified_split(dataset, &split)?;
    let train_samples = if cfg.augment {
        let aug = AugmentConfig {
            seed: aug.seed ^ cfg.seed,
            ..*aug
        };
        expand_dataset(&train_split, &aug)?
    } else {
        train_split
    };

    let features = train_samples
        .iter()
        .map(|s| extract_features(&s.frame))
        .collect::<Result<Vec<_>>>()?;
    let mut scaler = fit_scaler(&features)?;
    scaler.round_to_f32();
    drop(features);
    let train_set = TrainingSet::from_samples(&train_samples, &scaler)?;
    let val_set = TrainingSet::from_samples(&val_split, &scaler)?;

    let mut net = Network::<f32>::init(cfg.network, cfg.seed)?;
    let mut log = EpochLog::default();
    let (train_loss, train_acc) = evaluate_set(&net, &train_set)?;
    let (val_loss, val_acc) = evaluate_set(&net, &val_set)?;
    log.records.push(EpochRecord {
        epoch: 0,
        train_loss,
        train_acc,
        val_loss,
        val_acc,
    });

    let adam = cfg.adam();
    let shapes: Vec<Vec<usize>> = net.trainable_mut().iter().map(|t| t.shape().to_vec()).collect();
    let mut state = AdamState::for_shapes(&shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut gen = BatchGenerator::new(&train_set, cfg.batch_size)?;
    if cfg.on_the_fly_dropout {
        gen = gen.with_on_the_fly(aug, &scaler);
    }

    for epoch in 1..=cfg.epochs {
        let mut batch_rng = ChaCha8Rng::seed_from_u64(rng_seed(&mut rng));
        let mut mask_rng = ChaCha8Rng::seed_from_u64(rng_seed(&mut rng));
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for batch in gen.epoch(&mut batch_rng) {
            let x = batch.features.mapv(|v| v as f32);
            let targets = batch.targets.mapv(|v| v as f32);
            let cache = net.forward_train(&x, &mut mask_rng)?;
            let grads = net.backward(&cache, &targets)?;
            let n = batch.labels.len();
            loss_sum += cross_entropy(&cache.logits, &targets) * n as f64;
            correct += count_correct(&cache.probs, &batch.labels);
            seen += n;
            net.update_running_stats(&cache, cfg.bn_momentum);
            state.step(&mut net.trainable_mut(), &grads.tensors, &adam)?;
        }
        let (val_loss, val_acc) = evaluate_set(&net, &val_set)?;
        log.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_loss,
            val_acc,
        });
    }

    let model = ResidualMlpModel {
        network: net,
        scaler,
        codec: LabelCodec::default(),
        metadata: TrainingMetadata {
            epochs: cfg.epochs,
            seed: cfg.seed,
            augmented: cfg.augment,
            train_samples: train_set.len(),
            validation_samples: val_set.len(),
        },
    };
    Ok((model, log))
}

fn rng_seed(rng: &mut ChaCha8Rng) -> u64 {
    use rand::Rng;
    rng.random()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows() {
        let log = EpochLog {
            records: vec![EpochRecord {
                epoch: 0,
                train_loss: 3.5,
                train_acc: 0.1,
                val_loss: 3.6,
                val_acc: 0.05,
            }],
        };
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("epoch,train_loss,train_acc,val_loss,val_acc"));
        assert_eq!(lines.next(), Some("0,3.500000,0.100000,3.600000,0.050000"));
        assert_eq!(log.epochs_completed(), 0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { learning_rate: -1.0, ..Default::default() },
            TrainConfig { beta1: 1.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { adam_epsilon: 0.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
