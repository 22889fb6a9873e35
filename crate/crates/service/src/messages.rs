//! JSON wire types shared by the HTTP endpoints and the stream.

use sanvaad::{Hand, LandmarkFrame, Prediction};
use serde::{Deserialize, Serialize};

/// One landmark frame. `seq` is echoed back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMessage {
    #[serde(default)]
    pub seq: u64,
    #[serde(default)]
    pub left: Option<Hand>,
    #[serde(default)]
    pub right: Option<Hand>,
}

impl FrameMessage {
    pub fn new(seq: u64, frame: &LandmarkFrame) -> Self {
        Self {
            seq,
            left: frame.left,
            right: frame.right,
        }
    }

    pub fn frame(&self) -> LandmarkFrame {
        LandmarkFrame::new(self.left, self.right)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMessage {
    pub seq: u64,
    pub label: String,
    pub confidence: f64,
    /// `[label, probability]` pairs, most probable first.
    pub top_k: Vec<(String, f64)>,
}

impl PredictionMessage {
    pub fn new(seq: u64, p: &Prediction) -> Self {
        Self {
            seq,
            label: p.label.as_str().to_string(),
            confidence: p.confidence,
            top_k: p
                .top_k
                .iter()
                .map(|(l, prob)| (l.as_str().to_string(), *prob))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMessage {
    /// Present when the offending message carried a readable `seq`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropNotice {
    pub seq: Option<u64>,
    pub reason: String,
}

/// Everything the stream sends back, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StreamReply {
    Prediction(PredictionMessage),
    Error(ErrorMessage),
    Dropped(DropNotice),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentQuery {
    #[serde(default)]
    pub lang: Option<String>,
    pub topic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub classes: usize,
    pub input_dim: usize,
    pub width: usize,
    pub residual_blocks: usize,
    pub residual: bool,
    pub parameters: usize,
    pub training: sanvaad::model::TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model: ModelInfo,
    pub phrases: usize,
    pub languages: Vec<sanvaad::content::Language>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replies_are_tagged() {
        let r = StreamReply::Error(ErrorMessage {
            seq: Some(4),
            error: "no hands".into(),
        });
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["type"], "error");
        assert_eq!(v["seq"], 4);
        assert_eq!(v["error"], "no hands");
        let back: StreamReply = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn frame_fields_default() {
        let m: FrameMessage = serde_json::from_str("{}").unwrap();
        assert_eq!(m.seq, 0);
        assert!(m.left.is_none() && m.right.is_none());
        assert!(serde_json::from_str::<FrameMessage>(r#"{"left": [[0,0,0]]}"#).is_err());
    }
}
