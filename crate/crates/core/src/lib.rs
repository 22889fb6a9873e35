//! Sanvaad core: Indian Sign Language alphabet/numeral classification from
//! hand landmarks, text-to-sign planning, and spoken news summaries.
//!
//! The classification path is
//! [`LandmarkFrame`] → [`extract_features`] → [`ScalerParams::transform`] →
//! [`Network`] forward → [`LabelCodec`] decode, all wrapped by
//! [`ResidualMlpModel::predict`].

pub mod augment;
pub mod content;
pub mod error;
pub mod eval;
pub mod landmarks;
pub mod model;
pub mod preprocess;
pub mod quantize;
pub mod signplan;
pub mod synthetic;

pub use augment::{expand_dataset, gaussian_noise, landmark_dropout, AugmentConfig};
pub use error::{ContainerError, Error, Result};
pub use landmarks::{
    extract_features, FeatureVector, Hand, Keypoint, Label, LabeledSample, LandmarkFrame,
    FEATURE_DIM, NUM_CLASSES,
};
pub use model::{
    train, EpochLog, Network, NetworkSpec, Prediction, ResidualMlpModel, TrainConfig,
};
pub use preprocess::{fit_scaler, stratified_split, LabelCodec, ScalerParams, SplitSpec};
pub use quantize::{load_model, quantize_model, save_model, ModelContainer, Precision};
