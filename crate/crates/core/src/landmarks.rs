//! Hand landmark types, the 141-D feature vector, and landmark datasets.
//!
//! A hand is 21 keypoints in the usual hand-tracker order: 0 is the wrist,
//! 4/8/12/16/20 are the thumb, index, middle, ring and little fingertips.
//! The feature vector layout is
//!
//! | range     | content                                      |
//! |-----------|----------------------------------------------|
//! | 0..63     | left hand, 21 × (x, y, z)                    |
//! | 63..126   | right hand, 21 × (x, y, z)                   |
//! | 126..131  | left wrist→fingertip distances               |
//! | 131..136  | right wrist→fingertip distances              |
//! | 136..141  | left/right distances between matching tips   |
//!
//! An absent hand is zero-filled when features are computed, never earlier.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KEYPOINTS_PER_HAND: usize = 21;
pub const WRIST: usize = 0;
pub const FINGERTIPS: [usize; 5] = [4, 8, 12, 16, 20];
pub const COORDS_PER_HAND: usize = KEYPOINTS_PER_HAND * 3;
pub const FEATURE_DIM: usize = 2 * COORDS_PER_HAND + 3 * FINGERTIPS.len();
pub const NUM_CLASSES: usize = 35;

/// Start of the 15 distance entries within a feature vector.
pub const DISTANCE_OFFSET: usize = 2 * COORDS_PER_HAND;

/// Canonical class order. One-hot index `i` is `LABELS[i]`.
pub const LABELS: [&str; NUM_CLASSES] = [
    "1", "2", "3", "4", "5", "6", "7", "8", "9", "A", "B", "C", "D", "E", "F", "G", "H", "I",
    "J", "K", "L", "M", "N", "O", "P", "Q", "R", "S", "T", "U", "V", "W", "X", "Y", "Z",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Keypoint {
    pub const ORIGIN: Keypoint = Keypoint {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Keypoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

impl From<[f64; 3]> for Keypoint {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Self { x, y, z }
    }
}

impl From<Keypoint> for [f64; 3] {
    fn from(k: Keypoint) -> Self {
        [k.x, k.y, k.z]
    }
}

/// Exactly 21 keypoints of one hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Keypoint>", into = "Vec<Keypoint>")]
pub struct Hand {
    keypoints: [Keypoint; KEYPOINTS_PER_HAND],
}

impl Hand {
    pub fn new(keypoints: [Keypoint; KEYPOINTS_PER_HAND]) -> Self {
        Self { keypoints }
    }

    pub fn zeros() -> Self {
        Self {
            keypoints: [Keypoint::ORIGIN; KEYPOINTS_PER_HAND],
        }
    }

    pub fn keypoints(&self) -> &[Keypoint; KEYPOINTS_PER_HAND] {
        &self.keypoints
    }

    pub fn keypoints_mut(&mut self) -> &mut [Keypoint; KEYPOINTS_PER_HAND] {
        &mut self.keypoints
    }

    pub fn mean_x(&self) -> f64 {
        self.keypoints.iter().map(|k| k.x).sum::<f64>() / KEYPOINTS_PER_HAND as f64
    }

    fn first_non_finite(&self) -> Option<usize> {
        self.keypoints.iter().position(|k| !k.is_finite())
    }
}

impl TryFrom<Vec<Keypoint>> for Hand {
    type Error = Error;

    fn try_from(v: Vec<Keypoint>) -> Result<Self> {
        let keypoints: [Keypoint; KEYPOINTS_PER_HAND] =
            v.try_into().map_err(|v: Vec<Keypoint>| Error::KeypointCount(v.len()))?;
        Ok(Self { keypoints })
    }
}

impl From<Hand> for Vec<Keypoint> {
    fn from(h: Hand) -> Self {
        h.keypoints.to_vec()
    }
}

/// Which physical hand a tracker reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
}

/// Up to two hands observed in one camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LandmarkFrame {
    pub left: Option<Hand>,
    pub right: Option<Hand>,
}

impl LandmarkFrame {
    pub fn new(left: Option<Hand>, right: Option<Hand>) -> Self {
        Self { left, right }
    }

    pub fn hand_count(&self) -> usize {
        self.left.is_some() as usize + self.right.is_some() as usize
    }

    /// Places tracker detections into the left/right slots.
    ///
    /// Reported handedness wins. Detections without handedness fill the
    /// remaining slots by mean x: the smaller mean x goes left. At most two
    /// detections are used.
    pub fn from_detections(detections: &[(Option<Handedness>, Hand)]) -> Self {
        let mut frame = LandmarkFrame::default();
        let mut unknown: Vec<&Hand> = Vec::new();
        for (handedness, hand) in detections.iter().take(2) {
            match handedness {
                Some(Handedness::Left) if frame.left.is_none() => frame.left = Some(*hand),
                Some(Handedness::Right) if frame.right.is_none() => frame.right = Some(*hand),
                _ => unknown.push(hand),
            }
        }
        unknown.sort_by(|a, b| a.mean_x().total_cmp(&b.mean_x()));
        for hand in unknown {
            if frame.left.is_none() {
                frame.left = Some(*hand);
            } else if frame.right.is_none() {
                frame.right = Some(*hand);
            }
        }
        frame
    }

    /// Checks the classification-input invariants.
    pub fn validate(&self) -> Result<()> {
        if self.hand_count() == 0 {
            return Err(Error::NoHands);
        }
        for (name, hand) in [("left", &self.left), ("right", &self.right)] {
            if let Some(k) = hand.as_ref().and_then(Hand::first_non_finite) {
                return Err(Error::NonFiniteCoordinate {
                    hand: name,
                    keypoint: k,
                });
            }
        }
        Ok(())
    }

    /// Returns the frame with the left and right slots exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            left: self.right,
            right: self.left,
        }
    }

    pub fn translated(&self, offset: Keypoint) -> Self {
        let shift = |h: Hand| {
            let mut h = h;
            for k in h.keypoints_mut() {
                k.x += offset.x;
                k.y += offset.y;
                k.z += offset.z;
            }
            h
        };
        Self {
            left: self.left.map(shift),
            right: self.right.map(shift),
        }
    }
}

/// The 141-entry classifier input.
#[derive(Clone, PartialEq)]
pub struct FeatureVector([f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn zeros() -> Self {
        Self([0.0; FEATURE_DIM])
    }

    /// Wraps raw values; the caller is responsible for the layout.
    pub fn from_values(values: [f64; FEATURE_DIM]) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }

    pub fn coordinates(&self) -> &[f64] {
        &self.0[..DISTANCE_OFFSET]
    }

    pub fn distances(&self) -> &[f64] {
        &self.0[DISTANCE_OFFSET..]
    }
}

impl fmt::Debug for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("FeatureVector").field(&&self.0[..]).finish()
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Computes the 141-D feature vector of a frame.
pub fn extract_features(frame: &LandmarkFrame) -> Result<FeatureVector> {
    frame.validate()?;
    let left = frame.left.unwrap_or_else(Hand::zeros);
    let right = frame.right.unwrap_or_else(Hand::zeros);

    let mut out = [0.0; FEATURE_DIM];
    for (slot, hand) in [&left, &right].into_iter().enumerate() {
        let base = slot * COORDS_PER_HAND;
        for (i, k) in hand.keypoints().iter().enumerate() {
            out[base + 3 * i] = k.x;
            out[base + 3 * i + 1] = k.y;
            out[base + 3 * i + 2] = k.z;
        }
    }

    let n = FINGERTIPS.len();
    for (i, &tip) in FINGERTIPS.iter().enumerate() {
        let l = &left.keypoints()[tip];
        let r = &right.keypoints()[tip];
        out[DISTANCE_OFFSET + i] = left.keypoints()[WRIST].distance(l);
        out[DISTANCE_OFFSET + n + i] = right.keypoints()[WRIST].distance(r);
        out[DISTANCE_OFFSET + 2 * n + i] = l.distance(r);
    }
    Ok(FeatureVector(out))
}

/// One of the 35 gesture classes, stored as its index in [`LABELS`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(u8);

impl Label {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < NUM_CLASSES).then_some(Self(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn as_str(self) -> &'static str {
        LABELS[self.0 as usize]
    }

    pub fn all() -> impl Iterator<Item = Label> {
        (0..NUM_CLASSES as u8).map(Label)
    }

    /// Case-insensitive lookup of a canonical symbol.
    pub fn from_symbol(s: &str) -> Option<Self> {
        let s = s.trim();
        LABELS
            .iter()
            .position(|l| l.eq_ignore_ascii_case(s))
            .map(|i| Self(i as u8))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Label::from_symbol(s).ok_or_else(|| Error::UnmappedLabel(s.to_string()))
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Maps dataset folder names to canonical labels.
#[derive(Debug, Clone, Default)]
pub struct LabelNormalizer {
    aliases: HashMap<String, Label>,
}

impl LabelNormalizer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds aliases such as `"letter_Q" -> "Q"`. Keys match case-insensitively.
    pub fn with_aliases<'a>(
        aliases: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let mut map = HashMap::new();
        for (alias, target) in aliases {
            let label: Label = target.parse()?;
            map.insert(alias.trim().to_lowercase(), label);
        }
        Ok(Self { aliases: map })
    }

    pub fn normalize(&self, raw: &str) -> Result<Label> {
        let key = raw.trim();
        if key.is_empty() {
            return Err(Error::UnmappedLabel(raw.to_string()));
        }
        if let Some(&label) = self.aliases.get(&key.to_lowercase()) {
            return Ok(label);
        }
        Label::from_symbol(key).ok_or_else(|| Error::UnmappedLabel(raw.to_string()))
    }
}

/// Case-insensitive folder-name normalization with no aliases.
pub fn normalize_label(raw: &str) -> Result<Label> {
    LabelNormalizer::default().normalize(raw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub frame: LandmarkFrame,
    pub label: Label,
}

impl LabeledSample {
    pub fn new(frame: LandmarkFrame, label: Label) -> Self {
        Self { frame, label }
    }
}

#[derive(Serialize)]
struct SampleLineOut<'a> {
    label: &'a str,
    left: &'a Option<Hand>,
    right: &'a Option<Hand>,
}

#[derive(Deserialize)]
struct SampleLineIn {
    label: String,
    left: Option<Hand>,
    right: Option<Hand>,
}

/// Reads a JSONL landmark dataset. Blank lines are skipped.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>> {
    load_dataset_with(path, &LabelNormalizer::default())
}

pub fn load_dataset_with(
    path: impl AsRef<Path>,
    normalizer: &LabelNormalizer,
) -> Result<Vec<LabeledSample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let line_err = |message: String| Error::DatasetLine {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let parsed: SampleLineIn =
            serde_json::from_str(&line).map_err(|e| line_err(e.to_string()))?;
        let label = normalizer
            .normalize(&parsed.label)
            .map_err(|e| line_err(e.to_string()))?;
        samples.push(LabeledSample {
            frame: LandmarkFrame::new(parsed.left, parsed.right),
            label,
        });
    }
    Ok(samples)
}

pub fn save_dataset(samples: &[LabeledSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let line = SampleLineOut {
            label: s.label.as_str(),
            left: &s.frame.left,
            right: &s.frame.right,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-class sample counts in [`LABELS`] order.
pub fn class_histogram(samples: &[LabeledSample]) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for s in samples {
        counts[s.label.index()] += 1;
    }
    counts
}

/// Renders a histogram as `label count bar` lines.
pub fn format_histogram(counts: &[usize; NUM_CLASSES]) -> String {
    let max = counts.iter().copied().max().unwrap_or(0).max(1);
    let mut out = String::new();
    for (label, &n) in LABELS.iter().zip(counts) {
        let bar = "#".repeat((n * 40).div_ceil(max));
        out.push_str(&format!("{label:>2} {n:>7} {bar}\n"));
    }
    out
}

const FEATURE_MAGIC: &[u8; 4] = b"SNVF";
const FEATURE_VERSION: u32 = 1;

/// Writes features as a `SNVF` dump: magic, u32 version, u64 row count,
/// 141 little-endian f32 per row, then one label index byte per row.
pub fn write_feature_dump(
    rows: &[(FeatureVector, Label)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(FEATURE_MAGIC).map_err(io)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(rows.len() as u64).to_le_bytes()).map_err(io)?;
    for (features, _) in rows {
        for &v in features.values() {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
        }
    }
    let labels: Vec<u8> = rows.iter().map(|(_, l)| l.0).collect();
    w.write_all(&labels).map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_feature_dump(path: impl AsRef<Path>) -> Result<Vec<(FeatureVector, Label)>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_feature_dump(&bytes)
}

pub fn decode_feature_dump(bytes: &[u8]) -> Result<Vec<(FeatureVector, Label)>> {
    let bad = |m: &str| Error::FeatureDump(m.to_string());
    if bytes.len() < 16 {
        return Err(bad("file shorter than header"));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(Error::FeatureDump(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let row_bytes = FEATURE_DIM * 4;
    let expected = rows
        .checked_mul(row_bytes + 1)
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| bad("row count overflow"))?;
    if bytes.len() != expected {
        return Err(Error::FeatureDump(format!(
            "expected {expected} bytes for {rows} rows, found {}",
            bytes.len()
        )));
    }
    let body = &bytes[16..16 + rows * row_bytes];
    let labels = &bytes[16 + rows * row_bytes..];
    let mut out = Vec::with_capacity(rows);
    for (row, &label) in body.chunks_exact(row_bytes).zip(labels) {
        let mut values = [0.0; FEATURE_DIM];
        for (v, chunk) in values.iter_mut().zip(row.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        }
        let label = Label::from_index(label as usize)
            .ok_or_else(|| Error::FeatureDump(format!("label index {label} out of range")))?;
        out.push((FeatureVector(values), label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_with(points: &[(usize, [f64; 3])]) -> Hand {
        let mut h = Hand::zeros();
        for &(i, p) in points {
            h.keypoints_mut()[i] = p.into();
        }
        h
    }

    #[test]
    fn zero_geometry_gives_zero_vector() {
        let f = extract_features(&LandmarkFrame::new(Some(Hand::zeros()), Some(Hand::zeros())))
            .unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrist_to_index_tip_is_three_four_five() {
        let frame = LandmarkFrame::new(Some(hand_with(&[(8, [0.0, 3.0, 4.0])])), None);
        let f = extract_features(&frame).unwrap();
        assert_eq!(f[DISTANCE_OFFSET + 1], 5.0);
        // right slot is zero-filled, so the index-tip pair distance is 5 as well
        assert_eq!(f[DISTANCE_OFFSET + 11], 5.0);
        assert!(f.values()[COORDS_PER_HAND..DISTANCE_OFFSET].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_empty_and_non_finite_frames() {
        assert!(matches!(
            extract_features(&LandmarkFrame::default()),
            Err(Error::NoHands)
        ));
        let frame = LandmarkFrame::new(None, Some(hand_with(&[(3, [f64::NAN, 0.0, 0.0])])));
        assert!(matches!(
            extract_features(&frame),
            Err(Error::NonFiniteCoordinate { hand: "right", keypoint: 3 })
        ));
    }

    #[test]
    fn label_normalization() {
        assert_eq!(normalize_label("a").unwrap().as_str(), "A");
        assert_eq!(normalize_label("9").unwrap().as_str(), "9");
        assert_eq!(normalize_label(" z ").unwrap().as_str(), "Z");
        let err = normalize_label("0").unwrap_err();
        assert!(err.to_string().contains("\"0\""));
        assert!(normalize_label("").is_err());

        let n = LabelNormalizer::with_aliases([("letter_Q", "Q"), ("nine", "9")]).unwrap();
        assert_eq!(n.normalize("letter_Q").unwrap().as_str(), "Q");
        assert_eq!(n.normalize("LETTER_q").unwrap().as_str(), "Q");
        assert_eq!(n.normalize("Nine").unwrap().as_str(), "9");
        assert!(LabelNormalizer::with_aliases([("x", "unknown")]).is_err());
    }

    #[test]
    fn label_order_is_digits_then_letters() {
        assert_eq!(Label::from_index(0).unwrap().as_str(), "1");
        assert_eq!(Label::from_index(8).unwrap().as_str(), "9");
        assert_eq!(Label::from_index(9).unwrap().as_str(), "A");
        assert_eq!(Label::from_index(34).unwrap().as_str(), "Z");
        assert!(Label::from_index(35).is_none());
        let distinct: std::collections::HashSet<_> = LABELS.iter().collect();
        assert_eq!(distinct.len(), NUM_CLASSES);
    }

    #[test]
    fn hand_slots_follow_handedness_then_mean_x() {
        let a = hand_with(&[(0, [0.8, 0.0, 0.0])]);
        let b = hand_with(&[(0, [0.2, 0.0, 0.0])]);
        let f = LandmarkFrame::from_detections(&[(None, a), (None, b)]);
        assert_eq!(f.left, Some(b));
        assert_eq!(f.right, Some(a));

        let f = LandmarkFrame::from_detections(&[(Some(Handedness::Left), a), (None, b)]);
        assert_eq!(f.left, Some(a));
        assert_eq!(f.right, Some(b));

        let f = LandmarkFrame::from_detections(&[(Some(Handedness::Right), b)]);
        assert_eq!(f.left, None);
        assert_eq!(f.right, Some(b));
    }

    #[test]
    fn hand_requires_21_keypoints() {
        let err = serde_json::from_str::<Hand>("[[0,0,0],[1,1,1]]").unwrap_err();
        assert!(err.to_string().contains("21"));
    }

    #[test]
    fn feature_dump_rejects_garbage() {
        assert!(decode_feature_dump(b"SNVF").is_err());
        assert!(decode_feature_dump(b"XXXX\x01\0\0\0\0\0\0\0\0\0\0\0").is_err());
        let mut header = b"SNVF\x01\0\0\0".to_vec();
        header.extend_from_slice(&5u64.to_le_bytes());
        assert!(decode_feature_dump(&header).is_err());
    }
}
