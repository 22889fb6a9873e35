//! Weight-only int8 post-training quantization and the `SNVD` model container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "SNVD" | u32 version | u64 metadata length | metadata JSON (UTF-8)
//!        | tensor blobs in metadata order    | u32 CRC32 of all blobs
//! ```
//!
//! Dense weight matrices are stored as f32, or as i8 with one symmetric
//! per-tensor scale. Everything else (biases, batch-norm parameters and
//! running statistics, scaler) stays f32.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{ContainerError, Error, Result};
use crate::model::{BatchNorm, Dense, Network, NetworkSpec, ResidualMlpModel, Stage, TrainingMetadata};
use crate::preprocess::{LabelCodec, ScalerParams};

pub const MAGIC: &[u8; 4] = b"SNVD";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    Int8,
}

/// Symmetric int8 tensor: `value ≈ q * scale`, zero point 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub values: Vec<i8>,
    pub scale: f32,
}

impl QuantizedTensor {
    /// `scale = max|w| / 127`; an all-zero tensor gets scale 1.
    pub fn quantize(weights: &[f32]) -> Self {
        let max_abs = weights.iter().fold(0.0f32, |m, w| m.max(w.abs()));
        let scale = if max_abs > 0.0 { max_abs / 127.0 } else { 1.0 };
        let values = weights
            .iter()
            .map(|&w| (w / scale).round().clamp(-127.0, 127.0) as i8)
            .collect();
        Self { values, scale }
    }

    pub fn dequantize(&self) -> Vec<f32> {
        self.values.iter().map(|&q| q as f32 * self.scale).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    I8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f32>,
}

impl TensorInfo {
    fn elements(&self) -> usize {
        self.shape.iter().product()
    }

    fn byte_len(&self) -> usize {
        match self.dtype {
            DType::F32 => 4 * self.elements(),
            DType::I8 => self.elements(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerMetadata {
    pub network: NetworkSpec,
    pub labels: Vec<String>,
    pub precision: Precision,
    pub training: TrainingMetadata,
    pub tensors: Vec<TensorInfo>,
}

/// An in-memory container: metadata plus raw tensor blobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelContainer {
    pub metadata: ContainerMetadata,
    pub blobs: Vec<Vec<u8>>,
}

fn f32_blob(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

fn read_f32(blob: &[u8]) -> Vec<f32> {
    blob.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect()
}

struct Builder {
    precision: Precision,
    tensors: Vec<TensorInfo>,
    blobs: Vec<Vec<u8>>,
}

impl Builder {
    fn vector(&mut self, name: String, v: &Array1<f32>) {
        self.tensors.push(TensorInfo {
            name,
            dtype: DType::F32,
            shape: vec![v.len()],
            scale: None,
        });
        self.blobs.push(f32_blob(v.iter().copied()));
    }

    fn matrix(&mut self, name: String, m: &Array2<f32>) {
        let shape = vec![m.nrows(), m.ncols()];
        match self.precision {
            Precision::F32 => {
                self.tensors.push(TensorInfo {
                    name,
                    dtype: DType::F32,
                    shape,
                    scale: None,
                });
                self.blobs.push(f32_blob(m.iter().copied()));
            }
            Precision::Int8 => {
                let w: Vec<f32> = m.iter().copied().collect();
                let q = QuantizedTensor::quantize(&w);
                self.tensors.push(TensorInfo {
                    name,
                    dtype: DType::I8,
                    shape,
                    scale: Some(q.scale),
                });
                self.blobs.push(q.values.iter().map(|&v| v as u8).collect());
            }
        }
    }

    fn stage(&mut self, name: &str, s: &Stage<f32>) {
        self.matrix(format!("{name}.weight"), &s.dense.weight);
        self.vector(format!("{name}.bias"), &s.dense.bias);
        self.vector(format!("{name}.gamma"), &s.norm.gamma);
        self.vector(format!("{name}.beta"), &s.norm.beta);
        self.vector(format!("{name}.running_mean"), &s.norm.running_mean);
        self.vector(format!("{name}.running_var"), &s.norm.running_var);
    }
}

impl ModelContainer {
    pub fn from_model(model: &ResidualMlpModel, precision: Precision) -> Self {
        let mut b = Builder {
            precision,
            tensors: Vec::new(),
            blobs: Vec::new(),
        };
        let net = &model.network;
        for (name, stage) in net.stage_names().iter().zip(net.stages()) {
            b.stage(name, stage);
        }
        b.matrix("output.weight".into(), &net.output.weight);
        b.vector("output.bias".into(), &net.output.bias);
        let as_f32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Array1<f32>>();
        b.vector("scaler.mean".into(), &as_f32(&model.scaler.mean));
        b.vector("scaler.std".into(), &as_f32(&model.scaler.std));
        Self {
            metadata: ContainerMetadata {
                network: net.spec,
                labels: model.codec.names().iter().map(|s| s.to_string()).collect(),
                precision,
                training: model.metadata,
                tensors: b.tensors,
            },
            blobs: b.blobs,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.metadata).expect("metadata is serializable");
        let blob_len: usize = self.blobs.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(20 + meta.len() + blob_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        let mut crc = crc32fast::Hasher::new();
        for blob in &self.blobs {
            crc.update(blob);
            out.extend_from_slice(blob);
        }
        out.extend_from_slice(&crc.finalize().to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        if bytes.len() < 4 {
            return Err(ContainerError::Truncated);
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if &magic != MAGIC {
            return Err(ContainerError::BadMagic(magic));
        }
        if bytes.len() < 16 {
            return Err(ContainerError::Truncated);
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(ContainerError::UnsupportedVersion {
                found: version,
                supported: VERSION,
            });
        }
        let meta_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let meta_end = usize::try_from(meta_len)
            .ok()
            .and_then(|n| n.checked_add(16))
            .filter(|&end| end <= bytes.len())
            .ok_or(ContainerError::Truncated)?;
        let metadata: ContainerMetadata = serde_json::from_slice(&bytes[16..meta_end])
            .map_err(|e| ContainerError::Metadata(e.to_string()))?;

        let declared = metadata
            .tensors
            .iter()
            .try_fold(0usize, |acc, t| acc.checked_add(t.byte_len()))
            .ok_or_else(|| ContainerError::Metadata("tensor sizes overflow".into()))?;
        let available = bytes.len() - meta_end;
        if available != declared + 4 {
            return Err(ContainerError::Checksum(format!(
                "blob section holds {available} bytes, metadata declares {} plus checksum",
                declared
            )));
        }
        let blob_bytes = &bytes[meta_end..meta_end + declared];
        let stored = u32::from_le_bytes(bytes[meta_end + declared..].try_into().expect("4 bytes"));
        let actual = crc32fast::hash(blob_bytes);
        if stored != actual {
            return Err(ContainerError::Checksum(format!(
                "stored {stored:08x}, computed {actual:08x}"
            )));
        }
        let mut blobs = Vec::with_capacity(metadata.tensors.len());
        let mut offset = 0;
        for t in &metadata.tensors {
            blobs.push(blob_bytes[offset..offset + t.byte_len()].to_vec());
            offset += t.byte_len();
        }
        Ok(Self { metadata, blobs })
    }

    /// Rebuilds the model, dequantizing int8 weights.
    pub fn to_model(&self) -> Result<ResidualMlpModel, ContainerError> {
        let meta = &self.metadata;
        let spec = meta.network;
        spec.validate()
            .map_err(|e| ContainerError::Metadata(e.to_string()))?;
        let codec = LabelCodec::from_names(&meta.labels)
            .map_err(|e| ContainerError::Metadata(e.to_string()))?;
        let mut reader = TensorReader {
            container: self,
            next: 0,
        };

        let mut read_stage = |name: &str, fan_in: usize, fan_out: usize| -> Result<Stage<f32>, ContainerError> {
            Ok(Stage {
                dense: Dense {
                    weight: reader.matrix(&format!("{name}.weight"), fan_in, fan_out)?,
                    bias: reader.vector(&format!("{name}.bias"), fan_out)?,
                },
                norm: BatchNorm {
                    gamma: reader.vector(&format!("{name}.gamma"), fan_out)?,
                    beta: reader.vector(&format!("{name}.beta"), fan_out)?,
                    running_mean: reader.vector(&format!("{name}.running_mean"), fan_out)?,
                    running_var: reader.vector(&format!("{name}.running_var"), fan_out)?,
                },
            })
        };
        let stem = read_stage("stem", spec.input_dim, spec.width)?;
        let blocks = (0..spec.residual_blocks)
            .map(|i| read_stage(&format!("block{i}"), spec.width, spec.width))
            .collect::<Result<Vec<_>, _>>()?;
        let head = read_stage("head", spec.width, spec.compression_width)?;
        let output = Dense {
            weight: reader.matrix("output.weight", spec.compression_width, spec.num_classes)?,
            bias: reader.vector("output.bias", spec.num_classes)?,
        };
        let scaler = ScalerParams {
            mean: reader.vector("scaler.mean", spec.input_dim)?.iter().map(|&v| f64::from(v)).collect(),
            std: reader.vector("scaler.std", spec.input_dim)?.iter().map(|&v| f64::from(v)).collect(),
        };
        if reader.next != self.blobs.len() {
            return Err(ContainerError::Metadata(format!(
                "{} unexpected trailing tensors",
                self.blobs.len() - reader.next
            )));
        }
        if scaler.std.iter().any(|&s| s < 0.0) {
            return Err(ContainerError::Metadata("negative scaler std".into()));
        }
        Ok(ResidualMlpModel {
            network: Network {
                spec,
                stem,
                blocks,
                head,
                output,
            },
            scaler,
            codec,
            metadata: meta.training,
        })
    }

    pub fn byte_size(&self) -> usize {
        self.to_bytes().len()
    }
}

struct TensorReader<'a> {
    container: &'a ModelContainer,
    next: usize,
}

impl TensorReader<'_> {
    fn take(&mut self, name: &str, shape: &[usize]) -> Result<Vec<f32>, ContainerError> {
        let i = self.next;
        let info = self
            .container
            .metadata
            .tensors
            .get(i)
            .ok_or_else(|| ContainerError::Metadata(format!("missing tensor {name}")))?;
        if info.name != name || info.shape != shape {
            return Err(ContainerError::Metadata(format!(
                "tensor {i}: expected {name} {shape:?}, found {} {:?}",
                info.name, info.shape
            )));
        }
        self.next += 1;
        let blob = &self.container.blobs[i];
        let values = match info.dtype {
            DType::F32 => read_f32(blob),
            DType::I8 => {
                let scale = info
                    .scale
                    .filter(|s| s.is_finite() && *s > 0.0)
                    .ok_or_else(|| ContainerError::Metadata(format!("{name}: invalid scale")))?;
                let q = QuantizedTensor {
                    values: blob.iter().map(|&b| b as i8).collect(),
                    scale,
                };
                q.dequantize()
            }
        };
        Ok(values)
    }

    fn vector(&mut self, name: &str, n: usize) -> Result<Array1<f32>, ContainerError> {
        Ok(Array1::from(self.take(name, &[n])?))
    }

    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<Array2<f32>, ContainerError> {
        let v = self.take(name, &[rows, cols])?;
        Ok(Array2::from_shape_vec((rows, cols), v).expect("shape checked"))
    }
}

/// Quantizes every dense weight matrix to int8.
pub fn quantize_model(model: &ResidualMlpModel) -> ModelContainer {
    ModelContainer::from_model(model, Precision::Int8)
}

pub fn save_model(container: &ModelContainer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, container.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_container(path: impl AsRef<Path>) -> Result<ModelContainer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(ModelContainer::from_bytes(&bytes)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ResidualMlpModel> {
    Ok(load_container(path)?.to_model()?)
}
