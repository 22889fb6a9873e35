use std::path::PathBuf;

/// Errors produced by the sanvaad core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("frame contains no hands")]
    NoHands,

    #[error("non-finite coordinate in {hand} hand, keypoint {keypoint}")]
    NonFiniteCoordinate { hand: &'static str, keypoint: usize },

    #[error("hand must have exactly 21 keypoints, found {0}")]
    KeypointCount(usize),

    #[error("unmapped label {0:?}")]
    UnmappedLabel(String),

    #[error("{path}:{line}: {message}")]
    DatasetLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("feature dump: {0}")]
    FeatureDump(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("class {label} has {count} sample(s); stratified split needs at least 2")]
    ClassTooSmall { label: String, count: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error(transparent)]
    Container(#[from] ContainerError),

    #[error("duplicate phrase {0:?} in dictionary")]
    DuplicatePhrase(String),

    #[error("phrase {0:?} maps to an empty asset id")]
    EmptyAssetId(String),

    #[error("dictionary: {0}")]
    Dictionary(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// Failures when decoding a serialized model container.
#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("bad magic bytes {0:?}, expected \"SNVD\"")]
    BadMagic([u8; 4]),

    #[error("unsupported container version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("container truncated before the end of its header")]
    Truncated,

    #[error("checksum mismatch: {0}")]
    Checksum(String),

    #[error("invalid metadata: {0}")]
    Metadata(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
