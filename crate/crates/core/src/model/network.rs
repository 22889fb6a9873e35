//! Residual MLP with hand-written forward and backward passes.
//!
//! Every hidden stage is `dense → ReLU → batch-norm → dropout`. Residual
//! blocks add the stage input to the stage output; nothing follows the add.
//! Dense weights are stored `fan_in × fan_out` so a batch is `X · W + b`.

use ndarray::{Array1, Array2, ArrayD, ArrayViewMutD, Axis, Dimension, NdFloat, Zip};
use num_traits::{AsPrimitive, FromPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::{FEATURE_DIM, NUM_CLASSES};

pub const BN_EPSILON: f64 = 1e-5;

/// Output-layer init std relative to He init; keeps initial logits near zero.
const OUTPUT_INIT_GAIN: f64 = 0.05;

/// Element type of network tensors. Trained and deployed models use `f32`;
/// `f64` exists for numerical checks.
pub trait Scalar: NdFloat + FromPrimitive + AsPrimitive<f64> + Default {
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

fn cast_array<F: Scalar, G: Scalar, D: Dimension>(a: &ndarray::Array<F, D>) -> ndarray::Array<G, D> {
    a.mapv(|v| G::of(v.as_()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub width: usize,
    pub residual_blocks: usize,
    pub compression_width: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    /// When false the blocks keep their layers but drop the shortcut add.
    pub residual: bool,
}

impl Default for NetworkSpec {
    /// The deployed architecture: 141 → 512 → 3 × residual(512) → 256 → 35.
    fn default() -> Self {
        Self {
            input_dim: FEATURE_DIM,
            width: 512,
            residual_blocks: 3,
            compression_width: 256,
            num_classes: NUM_CLASSES,
            dropout_rate: 0.3,
            residual: true,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.width == 0 || self.compression_width == 0 {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("need at least two classes".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Number of dense → BN → dropout stages (stem, blocks, compression).
    pub fn stage_count(&self) -> usize {
        self.residual_blocks + 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F: Scalar> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Dense<F> {
    fn he_normal<R: Rng>(fan_in: usize, fan_out: usize, gain: f64, rng: &mut R) -> Self {
        let std = gain * (2.0 / fan_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || {
            let z: f64 = StandardNormal.sample(rng);
            F::of(z * std)
        });
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: &Array2<F>) -> Array2<F> {
        x.dot(&self.weight) + &self.bias
    }

    fn cast<G: Scalar>(&self) -> Dense<G> {
        Dense {
            weight: cast_array(&self.weight),
            bias: cast_array(&self.bias),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<F: Scalar> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
}

impl<F: Scalar> BatchNorm<F> {
    fn new(n: usize) -> Self {
        Self {
            gamma: Array1::ones(n),
            beta: Array1::zeros(n),
            running_mean: Array1::zeros(n),
            running_var: Array1::ones(n),
        }
    }

    fn infer(&self, a: &mut Array2<F>) {
        let eps = F::of(BN_EPSILON);
        let scale: Array1<F> = Zip::from(&self.gamma)
            .and(&self.running_var)
            .map_collect(|&g, &v| g / (v + eps).sqrt());
        let shift: Array1<F> = Zip::from(&self.beta)
            .and(&self.running_mean)
            .and(&scale)
            .map_collect(|&b, &m, &s| b - m * s);
        for mut row in a.rows_mut() {
            Zip::from(&mut row)
                .and(&scale)
                .and(&shift)
                .for_each(|x, &s, &t| *x = *x * s + t);
        }
    }

    fn cast<G: Scalar>(&self) -> BatchNorm<G> {
        BatchNorm {
            gamma: cast_array(&self.gamma),
            beta: cast_array(&self.beta),
            running_mean: cast_array(&self.running_mean),
            running_var: cast_array(&self.running_var),
        }
    }
}

/// `dense → ReLU → batch-norm → dropout`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage<F: Scalar> {
    pub dense: Dense<F>,
    pub norm: BatchNorm<F>,
}

impl<F: Scalar> Stage<F> {
    fn new<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self {
            dense: Dense::he_normal(fan_in, fan_out, 1.0, rng),
            norm: BatchNorm::new(fan_out),
        }
    }

    fn width(&self) -> usize {
        self.dense.bias.len()
    }

    fn forward_infer(&self, x: &Array2<F>) -> Array2<F> {
        let mut a = self.dense.apply(x);
        a.mapv_inplace(relu);
        self.norm.infer(&mut a);
        a
    }

    fn forward_train(&self, x: &Array2<F>, mask: Option<&Array2<F>>) -> (Array2<F>, StageCache<F>) {
        let z = self.dense.apply(x);
        let n = F::of(z.nrows() as f64);
        let a = z.mapv(relu);
        let mean = a.sum_axis(Axis(0)) / n;
        let var = {
            let mut v = Array1::<F>::zeros(a.ncols());
            for row in a.rows() {
                Zip::from(&mut v)
                    .and(&row)
                    .and(&mean)
                    .for_each(|v, &x, &m| *v += (x - m) * (x - m));
            }
            v / n
        };
        let eps = F::of(BN_EPSILON);
        let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
        let mut xhat = a;
        for mut row in xhat.rows_mut() {
            Zip::from(&mut row)
                .and(&mean)
                .and(&inv_std)
                .for_each(|x, &m, &s| *x = (*x - m) * s);
        }
        let mut out = xhat.clone();
        for mut row in out.rows_mut() {
            Zip::from(&mut row)
                .and(&self.norm.gamma)
                .and(&self.norm.beta)
                .for_each(|x, &g, &b| *x = *x * g + b);
        }
        if let Some(mask) = mask {
            out *= mask;
        }
        let cache = StageCache {
            input: x.clone(),
            z,
            xhat,
            inv_std,
            mask: mask.cloned(),
            batch_mean: mean,
            batch_var: var,
        };
        (out, cache)
    }

    /// Returns `(dx, grads)` for upstream gradient `dout` w.r.t. the stage output.
    /// `dx` is skipped when not wanted.
    fn backward(
        &self,
        cache: &StageCache<F>,
        dout: &Array2<F>,
        want_dx: bool,
    ) -> (Option<Array2<F>>, StageGrads<F>) {
        let n = F::of(dout.nrows() as f64);
        let dy = match &cache.mask {
            Some(mask) => dout * mask,
            None => dout.clone(),
        };
        let dbeta = dy.sum_axis(Axis(0));
        let dgamma = (&dy * &cache.xhat).sum_axis(Axis(0));
        let dxhat = &dy * &self.norm.gamma;
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let mut dz = dxhat;
        Zip::from(&mut dz)
            .and(&cache.xhat)
            .and(&cache.z)
            .and_broadcast(&cache.inv_std)
            .and_broadcast(&sum_dxhat)
            .and_broadcast(&sum_dxhat_xhat)
            .for_each(|d, &xh, &z, &s, &sd, &sdx| {
                let da = s / n * (n * *d - sd - xh * sdx);
                *d = if z > F::zero() { da } else { F::zero() };
            });
        let dw = cache.input.t().dot(&dz);
        let db = dz.sum_axis(Axis(0));
        let dx = want_dx.then(|| dz.dot(&self.dense.weight.t()));
        (
            dx,
            StageGrads {
                weight: dw,
                bias: db,
                gamma: dgamma,
                beta: dbeta,
            },
        )
    }

    fn cast<G: Scalar>(&self) -> Stage<G> {
        Stage {
            dense: self.dense.cast(),
            norm: self.norm.cast(),
        }
    }
}

fn relu<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        x
    } else {
        F::zero()
    }
}

/// Residual MLP parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<F: Scalar> {
    pub spec: NetworkSpec,
    pub stem: Stage<F>,
    pub blocks: Vec<Stage<F>>,
    pub head: Stage<F>,
    pub output: Dense<F>,
}

#[derive(Debug, Clone)]
pub struct StageCache<F: Scalar> {
    input: Array2<F>,
    z: Array2<F>,
    xhat: Array2<F>,
    inv_std: Array1<F>,
    mask: Option<Array2<F>>,
    pub batch_mean: Array1<F>,
    pub batch_var: Array1<F>,
}

impl<F: Scalar> StageCache<F> {
    /// Dense output before the ReLU.
    pub fn pre_activation(&self) -> &Array2<F> {
        &self.z
    }
}

/// Activations from a train-mode forward pass, consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<F: Scalar> {
    /// Caches in stage order: stem, blocks, head.
    pub stages: Vec<StageCache<F>>,
    head_out: Array2<F>,
    pub logits: Array2<F>,
    pub probs: Array2<F>,
}

/// Inverted-dropout masks (0 or `1/(1-rate)`) for each stage, in stage order.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks<F: Scalar>(pub Vec<Option<Array2<F>>>);

#[derive(Debug, Clone)]
pub struct StageGrads<F: Scalar> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
}

/// Gradients for every trainable tensor, ordered like [`Network::trainable_mut`].
#[derive(Debug, Clone)]
pub struct Gradients<F: Scalar> {
    pub tensors: Vec<ArrayD<F>>,
}

impl<F: Scalar> Network<F> {
    /// He-normal dense weights, zero biases, BN gamma 1 / beta 0 / running (0, 1).
    /// Initial values are drawn in f64, so the same seed gives the same
    /// network (up to rounding) at every precision.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = Stage::new(spec.input_dim, spec.width, &mut rng);
        let blocks = (0..spec.residual_blocks)
            .map(|_| Stage::new(spec.width, spec.width, &mut rng))
            .collect();
        let head = Stage::new(spec.width, spec.compression_width, &mut rng);
        let output = Dense::he_normal(
            spec.compression_width,
            spec.num_classes,
            OUTPUT_INIT_GAIN,
            &mut rng,
        );
        Ok(Self {
            spec,
            stem,
            blocks,
            head,
            output,
        })
    }

    /// The same network at another precision.
    pub fn cast<G: Scalar>(&self) -> Network<G> {
        Network {
            spec: self.spec,
            stem: self.stem.cast(),
            blocks: self.blocks.iter().map(Stage::cast).collect(),
            head: self.head.cast(),
            output: self.output.cast(),
        }
    }

    pub fn stages(&self) -> impl Iterator<Item = &Stage<F>> {
        std::iter::once(&self.stem)
            .chain(&self.blocks)
            .chain(std::iter::once(&self.head))
    }

    pub fn stages_mut(&mut self) -> impl Iterator<Item = &mut Stage<F>> {
        std::iter::once(&mut self.stem)
            .chain(&mut self.blocks)
            .chain(std::iter::once(&mut self.head))
    }

    fn check_input(&self, x: &Array2<F>) -> Result<()> {
        if x.ncols() != self.spec.input_dim || x.nrows() == 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("(n >= 1, {})", self.spec.input_dim),
                found: format!("{:?}", x.dim()),
            });
        }
        Ok(())
    }

    /// Inference-mode logits: running BN statistics, no dropout.
    pub fn logits(&self, x: &Array2<F>) -> Result<Array2<F>> {
        self.check_input(x)?;
        let mut h = self.stem.forward_infer(x);
        for block in &self.blocks {
            let d = block.forward_infer(&h);
            h = if self.spec.residual { h + d } else { d };
        }
        let h = self.head.forward_infer(&h);
        Ok(self.output.apply(&h))
    }

    /// Inference-mode class probabilities, one row per input row.
    pub fn predict_proba(&self, x: &Array2<F>) -> Result<Array2<F>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Draws inverted-dropout masks for a batch of `n` rows.
    pub fn sample_masks<R: Rng>(&self, n: usize, rng: &mut R) -> DropoutMasks<F> {
        let rate = self.spec.dropout_rate;
        let masks = self
            .stages()
            .map(|s| {
                (rate > 0.0).then(|| {
                    let keep = F::of(1.0 / (1.0 - rate));
                    Array2::from_shape_simple_fn((n, s.width()), || {
                        if rng.random::<f64>() < rate {
                            F::zero()
                        } else {
                            keep
                        }
                    })
                })
            })
            .collect();
        DropoutMasks(masks)
    }

    /// Train-mode forward with freshly sampled dropout masks.
    pub fn forward_train<R: Rng>(&self, x: &Array2<F>, rng: &mut R) -> Result<ForwardCache<F>> {
        self.check_input(x)?;
        let masks = self.sample_masks(x.nrows(), rng);
        self.forward_train_with_masks(x, &masks)
    }

    /// Train-mode forward: batch statistics in BN and the given dropout masks.
    pub fn forward_train_with_masks(
        &self,
        x: &Array2<F>,
        masks: &DropoutMasks<F>,
    ) -> Result<ForwardCache<F>> {
        self.check_input(x)?;
        if masks.0.len() != self.spec.stage_count() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} dropout masks", self.spec.stage_count()),
                found: masks.0.len().to_string(),
            });
        }
        let mut caches = Vec::with_capacity(self.spec.stage_count());
        let mut masks = masks.0.iter().map(Option::as_ref);
        let (mut h, c) = self.stem.forward_train(x, masks.next().flatten());
        caches.push(c);
        for block in &self.blocks {
            let (d, c) = block.forward_train(&h, masks.next().flatten());
            caches.push(c);
            h = if self.spec.residual { h + d } else { d };
        }
        let (head_out, c) = self.head.forward_train(&h, masks.next().flatten());
        caches.push(c);
        let logits = self.output.apply(&head_out);
        let probs = softmax(&logits);
        Ok(ForwardCache {
            stages: caches,
            head_out,
            logits,
            probs,
        })
    }

    /// Backpropagates mean softmax cross-entropy through the cached pass.
    pub fn backward(&self, cache: &ForwardCache<F>, targets: &Array2<F>) -> Result<Gradients<F>> {
        if targets.dim() != cache.probs.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", cache.probs.dim()),
                found: format!("{:?}", targets.dim()),
            });
        }
        let n = F::of(targets.nrows() as f64);
        let dlogits = (&cache.probs - targets) / n;
        let d_out_w = cache.head_out.t().dot(&dlogits);
        let d_out_b = dlogits.sum_axis(Axis(0));
        let dh = dlogits.dot(&self.output.weight.t());

        let stage_count = self.spec.stage_count();
        let mut stage_grads: Vec<Option<StageGrads<F>>> = vec![None; stage_count];
        let (dh, g) = self.head.backward(&cache.stages[stage_count - 1], &dh, true);
        let mut dh = dh.expect("requested");
        stage_grads[stage_count - 1] = Some(g);
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let (dx, g) = block.backward(&cache.stages[i + 1], &dh, true);
            let dx = dx.expect("requested");
            stage_grads[i + 1] = Some(g);
            dh = if self.spec.residual { dh + dx } else { dx };
        }
        // the network input needs no gradient
        let (_, g) = self.stem.backward(&cache.stages[0], &dh, false);
        stage_grads[0] = Some(g);

        let mut tensors = Vec::with_capacity(4 * stage_count + 2);
        for g in stage_grads.into_iter().map(|g| g.expect("every stage visited")) {
            tensors.push(g.weight.into_dyn());
            tensors.push(g.bias.into_dyn());
            tensors.push(g.gamma.into_dyn());
            tensors.push(g.beta.into_dyn());
        }
        tensors.push(d_out_w.into_dyn());
        tensors.push(d_out_b.into_dyn());
        Ok(Gradients { tensors })
    }

    /// Trainable tensors in a fixed order: per stage (weight, bias, gamma,
    /// beta), then output weight and bias.
    pub fn trainable_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        let Network {
            stem,
            blocks,
            head,
            output,
            ..
        } = self;
        let mut out = Vec::new();
        for s in std::iter::once(stem).chain(blocks.iter_mut()).chain(std::iter::once(head)) {
            out.push(s.dense.weight.view_mut().into_dyn());
            out.push(s.dense.bias.view_mut().into_dyn());
            out.push(s.norm.gamma.view_mut().into_dyn());
            out.push(s.norm.beta.view_mut().into_dyn());
        }
        out.push(output.weight.view_mut().into_dyn());
        out.push(output.bias.view_mut().into_dyn());
        out
    }

    /// Names matching [`Network::trainable_mut`].
    pub fn trainable_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for name in self.stage_names() {
            for p in ["weight", "bias", "gamma", "beta"] {
                names.push(format!("{name}.{p}"));
            }
        }
        names.push("output.weight".into());
        names.push("output.bias".into());
        names
    }

    pub fn stage_names(&self) -> Vec<String> {
        std::iter::once("stem".to_string())
            .chain((0..self.blocks.len()).map(|i| format!("block{i}")))
            .chain(std::iter::once("head".to_string()))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.stages()
            .map(|s| s.dense.weight.len() + s.dense.bias.len() + 2 * s.norm.gamma.len())
            .sum::<usize>()
            + self.output.weight.len()
            + self.output.bias.len()
    }

    /// Folds batch statistics into the running averages:
    /// `running = momentum * running + (1 - momentum) * batch`.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<F>, momentum: f64) {
        let (m, rest) = (F::of(momentum), F::of(1.0 - momentum));
        for (stage, c) in self.stages_mut().zip(&cache.stages) {
            Zip::from(&mut stage.norm.running_mean)
                .and(&c.batch_mean)
                .for_each(|r, &b| *r = m * *r + rest * b);
            Zip::from(&mut stage.norm.running_var)
                .and(&c.batch_var)
                .for_each(|r, &b| *r = m * *r + rest * b);
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax<F: Scalar>(logits: &Array2<F>) -> Array2<F> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(F::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Mean categorical cross-entropy computed from logits via log-sum-exp,
/// accumulated in f64.
pub fn cross_entropy<F: Scalar>(logits: &Array2<F>, targets: &Array2<F>) -> f64 {
    let mut total = 0.0;
    for (row, t) in logits.rows().into_iter().zip(targets.rows()) {
        let max: f64 = row.fold(F::neg_infinity(), |m, &v| m.max(v)).as_();
        let lse = max + row.iter().map(|&v| (v.as_() - max).exp()).sum::<f64>().ln();
        total += Zip::from(&row)
            .and(&t)
            .fold(0.0, |acc, &l, &t| acc + t.as_() * (lse - l.as_()));
    }
    total / logits.nrows() as f64
}
