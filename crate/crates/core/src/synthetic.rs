//! Synthetic landmark datasets: one Gaussian blob per class around a random
//! two-hand prototype. Used for tests, benchmarks and ablations where no
//! recorded dataset is available.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::landmarks::{Hand, Keypoint, Label, LabeledSample, LandmarkFrame, KEYPOINTS_PER_HAND};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobConfig {
    pub samples_per_class: usize,
    /// Per-coordinate std around each class prototype.
    pub sigma: f64,
    /// Minimum distance between prototypes, in multiples of `sigma`.
    pub min_separation: f64,
    /// Number of leading classes to generate (at most 35).
    pub classes: usize,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            samples_per_class: 200,
            sigma: 0.01,
            min_separation: 10.0,
            classes: crate::landmarks::NUM_CLASSES,
            seed: 0,
        }
    }
}

/// Random prototypes, at least `min_separation * sigma` apart in landmark
/// space (both hands concatenated).
pub fn prototypes(cfg: &BlobConfig) -> Vec<LandmarkFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let min_dist = cfg.min_separation * cfg.sigma;
    let mut out: Vec<LandmarkFrame> = Vec::with_capacity(cfg.classes);
    while out.len() < cfg.classes {
        let candidate = LandmarkFrame::new(Some(random_hand(&mut rng)), Some(random_hand(&mut rng)));
        if out.iter().all(|p| frame_distance(p, &candidate) >= min_dist) {
            out.push(candidate);
        }
    }
    out
}

fn random_hand<R: Rng>(rng: &mut R) -> Hand {
    let mut kps = [Keypoint::ORIGIN; KEYPOINTS_PER_HAND];
    for k in &mut kps {
        *k = Keypoint::new(
            rng.random_range(0.2..0.8),
            rng.random_range(0.2..0.8),
            rng.random_range(-0.1..0.1),
        );
    }
    Hand::new(kps)
}

/// Euclidean distance over all keypoints of both hands; absent hands count as zeros.
pub fn frame_distance(a: &LandmarkFrame, b: &LandmarkFrame) -> f64 {
    let zero = Hand::zeros();
    let pairs = [(&a.left, &b.left), (&a.right, &b.right)];
    pairs
        .iter()
        .flat_map(|(x, y)| {
            let x = x.as_ref().unwrap_or(&zero).keypoints();
            let y = y.as_ref().unwrap_or(&zero).keypoints();
            x.iter().zip(y.iter()).map(|(p, q)| {
                let d = p.distance(q);
                d * d
            })
        })
        .sum::<f64>()
        .sqrt()
}

/// Generates `samples_per_class` noisy copies of each prototype, class by class.
pub fn blob_dataset(cfg: &BlobConfig) -> Vec<LabeledSample> {
    let protos = prototypes(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let normal = Normal::new(0.0, cfg.sigma).expect("sigma must be positive");
    let mut out = Vec::with_capacity(cfg.classes * cfg.samples_per_class);
    for (c, proto) in protos.iter().enumerate() {
        let label = Label::from_index(c).expect("at most 35 classes");
        for _ in 0..cfg.samples_per_class {
            let jitter = |h: Hand, rng: &mut ChaCha8Rng| {
                let mut h = h;
                for k in h.keypoints_mut() {
                    k.x += normal.sample(rng);
                    k.y += normal.sample(rng);
                    k.z += normal.sample(rng);
                }
                h
            };
            let left = proto.left.map(|h| jitter(h, &mut rng));
            let right = proto.right.map(|h| jitter(h, &mut rng));
            out.push(LabeledSample::new(LandmarkFrame::new(left, right), label));
        }
    }
    out
}
