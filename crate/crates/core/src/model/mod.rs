//! The residual MLP classifier: network math, optimizer, training and
//! single-frame prediction.

pub mod network;
pub mod optim;
pub mod train;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use network::{
    cross_entropy, softmax, BatchNorm, Dense, DropoutMasks, ForwardCache, Gradients, Network,
    NetworkSpec, Scalar, Stage,
};
pub use optim::{AdamConfig, AdamState};
pub use train::{evaluate_set, train, EpochLog, EpochRecord, TrainConfig};

use crate::error::{Error, Result};
use crate::landmarks::{extract_features, Label, LandmarkFrame, FEATURE_DIM};
use crate::preprocess::{LabelCodec, ScalerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs: usize,
    pub seed: u64,
    pub augmented: bool,
    pub train_samples: usize,
    pub validation_samples: usize,
}

/// A trained classifier with everything needed to go from landmarks to a label.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMlpModel {
    pub network: Network<f32>,
    pub scaler: ScalerParams,
    pub codec: LabelCodec,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub confidence: f64,
    /// `(label, probability)` pairs, most probable first.
    pub top_k: Vec<(Label, f64)>,
}

impl ResidualMlpModel {
    /// An untrained model over raw (unscaled) features.
    pub fn untrained(spec: NetworkSpec, seed: u64) -> Result<Self> {
        Ok(Self {
            network: Network::init(spec, seed)?,
            scaler: ScalerParams::identity(FEATURE_DIM),
            codec: LabelCodec::default(),
            metadata: TrainingMetadata {
                seed,
                ..Default::default()
            },
        })
    }

    /// Standardized features for a batch of frames.
    pub fn standardize(&self, frames: &[LandmarkFrame]) -> Result<Array2<f64>> {
        let mut x = Array2::zeros((frames.len(), FEATURE_DIM));
        for (mut row, frame) in x.rows_mut().into_iter().zip(frames) {
            let f = extract_features(frame)?;
            self.scaler
                .transform_into(f.values(), row.as_slice_mut().expect("standard layout"));
        }
        Ok(x)
    }

    /// Class probabilities for each frame, in codec order.
    pub fn predict_proba(&self, frames: &[LandmarkFrame]) -> Result<Array2<f64>> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("no frames to classify"));
        }
        let x = self.standardize(frames)?.mapv(|v| v as f32);
        Ok(self.network.predict_proba(&x)?.mapv(f64::from))
    }

    pub fn predict(&self, frame: &LandmarkFrame, top_k: usize) -> Result<Prediction> {
        let probs = self.predict_proba(std::slice::from_ref(frame))?;
        self.decode(probs.row(0).as_slice().expect("row-major"), top_k)
    }

    pub fn predict_batch(&self, frames: &[LandmarkFrame], top_k: usize) -> Result<Vec<Prediction>> {
        let probs = self.predict_proba(frames)?;
        probs
            .rows()
            .into_iter()
            .map(|row| self.decode(row.as_slice().expect("row-major"), top_k))
            .collect()
    }

    /// Argmax decode of a probability row plus the `k` most probable labels.
    pub fn decode(&self, probs: &[f64], top_k: usize) -> Result<Prediction> {
        let best = LabelCodec::argmax(probs);
        let label = self.codec.decode(best).ok_or_else(|| Error::ShapeMismatch {
            expected: format!("{} classes", self.codec.len()),
            found: probs.len().to_string(),
        })?;
        let mut ranked: Vec<usize> = (0..probs.len()).collect();
        ranked.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        let top_k = ranked
            .into_iter()
            .take(top_k)
            .filter_map(|i| self.codec.decode(i).map(|l| (l, probs[i])))
            .collect();
        Ok(Prediction {
            label,
            confidence: probs[best],
            top_k,
        })
    }
}
