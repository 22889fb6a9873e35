//! Landmark-space augmentation and training batch generation.
//!
//! All operators work on landmark coordinates, so features (including the
//! distance block) are always recomputed from the augmented geometry.

use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::{
    extract_features, Hand, LabeledSample, LandmarkFrame, FEATURE_DIM, KEYPOINTS_PER_HAND,
    NUM_CLASSES,
};
use crate::preprocess::ScalerParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Std of the additive coordinate noise, in normalized image units.
    pub noise_sigma: f64,
    /// Per-sample probability of dropout in on-the-fly batching.
    pub dropout_apply_prob: f64,
    pub dropout_min_keypoints: usize,
    pub dropout_max_keypoints: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.02,
            dropout_apply_prob: 0.15,
            dropout_min_keypoints: 1,
            dropout_max_keypoints: 6,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma must be positive, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.dropout_apply_prob) {
            return Err(Error::InvalidConfig(format!(
                "dropout_apply_prob must be in [0, 1], got {}",
                self.dropout_apply_prob
            )));
        }
        let (lo, hi) = (self.dropout_min_keypoints, self.dropout_max_keypoints);
        if !(1 <= lo && lo <= hi && hi <= KEYPOINTS_PER_HAND) {
            return Err(Error::InvalidConfig(format!(
                "dropout keypoint range {lo}..={hi} must satisfy 1 <= min <= max <= 21"
            )));
        }
        Ok(())
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every coordinate of every present keypoint.
pub fn gaussian_noise<R: Rng + ?Sized>(
    frame: &LandmarkFrame,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> LandmarkFrame {
    let normal = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    let mut perturb = |hand: Hand| {
        let mut hand = hand;
        for k in hand.keypoints_mut() {
            k.x += normal.sample(rng);
            k.y += normal.sample(rng);
            k.z += normal.sample(rng);
        }
        hand
    };
    let left = frame.left.map(&mut perturb);
    let right = frame.right.map(&mut perturb);
    LandmarkFrame { left, right }
}

/// Zeroes `k ~ U{min..=max}` distinct keypoints of each present hand.
pub fn landmark_dropout<R: Rng + ?Sized>(
    frame: &LandmarkFrame,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> LandmarkFrame {
    let mut drop = |hand: Hand| {
        let mut hand = hand;
        let k = rng.random_range(cfg.dropout_min_keypoints..=cfg.dropout_max_keypoints);
        for i in index::sample(rng, KEYPOINTS_PER_HAND, k) {
            hand.keypoints_mut()[i] = Default::default();
        }
        hand
    };
    let left = frame.left.map(&mut drop);
    let right = frame.right.map(&mut drop);
    LandmarkFrame { left, right }
}

/// Offline 3x expansion: each sample is followed by its noise variant and
/// its dropout variant.
pub fn expand_dataset(samples: &[LabeledSample], cfg: &AugmentConfig) -> Result<Vec<LabeledSample>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("expand_dataset needs at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(samples.len() * 3);
    for s in samples {
        let noisy = gaussian_noise(&s.frame, cfg, &mut rng);
        let dropped = landmark_dropout(&s.frame, cfg, &mut rng);
        out.push(s.clone());
        out.push(LabeledSample::new(noisy, s.label));
        out.push(LabeledSample::new(dropped, s.label));
    }
    Ok(out)
}

/// Standardized training rows with their class indices. Frames are kept for
/// on-the-fly augmentation.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub frames: Vec<LandmarkFrame>,
}

impl TrainingSet {
    pub fn from_samples(samples: &[LabeledSample], scaler: &ScalerParams) -> Result<Self> {
        let mut features = Array2::zeros((samples.len(), FEATURE_DIM));
        for (mut row, s) in features.rows_mut().into_iter().zip(samples) {
            let f = extract_features(&s.frame)?;
            scaler.transform_into(f.values(), row.as_slice_mut().expect("standard layout"));
        }
        Ok(Self {
            features,
            labels: samples.iter().map(|s| s.label.index()).collect(),
            frames: samples.iter().map(|s| s.frame).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Array2<f64>,
    pub targets: Array2<f64>,
    pub labels: Vec<usize>,
    /// Rows that received on-the-fly dropout.
    pub augmented: usize,
}

/// One-hot rows for class indices.
pub fn one_hot_batch(labels: &[usize]) -> Array2<f64> {
    let mut t = Array2::zeros((labels.len(), NUM_CLASSES));
    for (r, &c) in labels.iter().enumerate() {
        t[[r, c]] = 1.0;
    }
    t
}

/// Produces shuffled mini-batches, one epoch at a time.
pub struct BatchGenerator<'a> {
    data: &'a TrainingSet,
    batch_size: usize,
    on_the_fly: Option<(&'a AugmentConfig, &'a ScalerParams)>,
}

impl<'a> BatchGenerator<'a> {
    pub fn new(data: &'a TrainingSet, batch_size: usize) -> Result<Self> {
        if batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(Self {
            data,
            batch_size,
            on_the_fly: None,
        })
    }

    /// Enables per-sample dropout with probability `cfg.dropout_apply_prob`.
    pub fn with_on_the_fly(mut self, cfg: &'a AugmentConfig, scaler: &'a ScalerParams) -> Self {
        self.on_the_fly = Some((cfg, scaler));
        self
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.batch_size)
    }

    /// Shuffles with `rng` and returns the epoch's batches lazily. The final
    /// batch may be short.
    pub fn epoch<'g, R: Rng>(&'g self, rng: &'g mut R) -> impl Iterator<Item = Batch> + 'g {
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(rng);
        let order = order;
        let chunks: Vec<Vec<usize>> = order.chunks(self.batch_size).map(<[usize]>::to_vec).collect();
        chunks.into_iter().map(move |idx| self.assemble(&idx, rng))
    }

    fn assemble<R: Rng>(&self, idx: &[usize], rng: &mut R) -> Batch {
        let mut features = Array2::zeros((idx.len(), FEATURE_DIM));
        let mut augmented = 0;
        for (mut row, &i) in features.rows_mut().into_iter().zip(idx) {
            if let Some((cfg, scaler)) = self.on_the_fly {
                if rng.random_bool(cfg.dropout_apply_prob) {
                    let dropped = landmark_dropout(&self.data.frames[i], cfg, rng);
                    let f = extract_features(&dropped).expect("frame validated when loaded");
                    scaler.transform_into(f.values(), row.as_slice_mut().expect("standard layout"));
                    augmented += 1;
                    continue;
                }
            }
            row.assign(&self.data.features.row(i));
        }
        let labels: Vec<usize> = idx.iter().map(|&i| self.data.labels[i]).collect();
        Batch {
            targets: one_hot_batch(&labels),
            features,
            labels,
            augmented,
        }
    }
}
