//! Feature standardization, label encoding and stratified splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::{FeatureVector, Label, LabeledSample, FEATURE_DIM, LABELS, NUM_CLASSES};

/// Variance floor: dimensions whose std does not exceed this map to zero.
pub const STD_EPSILON: f64 = 1e-8;

/// Per-dimension z-score parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalerParams {
    /// Parameters that leave features unchanged.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, v: &FeatureVector) -> Vec<f64> {
        let mut out = vec![0.0; FEATURE_DIM];
        self.transform_into(v.values(), &mut out);
        out
    }

    /// Writes `(v - mean) / std` into `out`; zero-variance dimensions become 0.
    pub fn transform_into(&self, v: &[f64], out: &mut [f64]) {
        for (((o, &x), &m), &s) in out.iter_mut().zip(v).zip(&self.mean).zip(&self.std) {
            *o = if s > STD_EPSILON { (x - m) / s } else { 0.0 };
        }
    }

    pub(crate) fn round_to_f32(&mut self) {
        for v in self.mean.iter_mut().chain(self.std.iter_mut()) {
            *v = *v as f32 as f64;
        }
    }
}

/// Fits mean and population std with a single Welford pass.
pub fn fit_scaler(features: &[FeatureVector]) -> Result<ScalerParams> {
    if features.is_empty() {
        return Err(Error::EmptyInput("fit_scaler needs at least one feature vector"));
    }
    let mut mean = vec![0.0; FEATURE_DIM];
    let mut m2 = vec![0.0; FEATURE_DIM];
    for (n, f) in features.iter().enumerate() {
        let count = (n + 1) as f64;
        for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(f.values()) {
            let delta = x - *m;
            *m += delta / count;
            *s += delta * (x - *m);
        }
    }
    let n = features.len() as f64;
    let std = m2.into_iter().map(|s| (s / n).max(0.0).sqrt()).collect();
    Ok(ScalerParams { mean, std })
}

/// Bidirectional map between labels and one-hot indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelCodec {
    classes: Vec<Label>,
}

impl Default for LabelCodec {
    fn default() -> Self {
        Self {
            classes: Label::all().collect(),
        }
    }
}

impl LabelCodec {
    /// Rebuilds a codec from stored class names; only the canonical order is accepted.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let ok = names.len() == NUM_CLASSES
            && names.iter().zip(LABELS).all(|(n, l)| n.as_ref() == l);
        if !ok {
            return Err(Error::InvalidConfig(
                "label codec must list the 35 classes in canonical order".into(),
            ));
        }
        Ok(Self::default())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.classes.iter().map(|l| l.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn encode(&self, label: Label) -> usize {
        label.index()
    }

    pub fn decode(&self, index: usize) -> Option<Label> {
        self.classes.get(index).copied()
    }

    pub fn one_hot(&self, label: Label) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        v[self.encode(label)] = 1.0;
        v
    }

    /// Parses a symbol and one-hot encodes it.
    pub fn one_hot_symbol(&self, symbol: &str) -> Result<Vec<f64>> {
        Ok(self.one_hot(symbol.parse()?))
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax<T: PartialOrd>(values: &[T]) -> usize {
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Splits per class: `round(train_fraction * n_c)` samples to train after a
/// seeded within-class shuffle, the rest to test.
pub fn stratified_split(
    samples: &[LabeledSample],
    spec: &SplitSpec,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, s) in samples.iter().enumerate() {
        by_class[s.label.index()].push(i);
    }
    if let Some((c, idx)) = by_class
        .iter()
        .enumerate()
        .find(|(_, idx)| idx.len() == 1)
    {
        return Err(Error::ClassTooSmall {
            label: LABELS[c].to_string(),
            count: idx.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut idx in by_class {
        idx.shuffle(&mut rng);
        let n_train = (spec.train_fraction * idx.len() as f64).round() as usize;
        train.extend(idx[..n_train].iter().map(|&i| samples[i].clone()));
        test.extend(idx[n_train..].iter().map(|&i| samples[i].clone()));
    }
    Ok((train, test))
}
