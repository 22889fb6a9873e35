#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sanvaad::augment::one_hot_batch;
use sanvaad::model::{cross_entropy, ForwardCache, Network, NetworkSpec};
use sanvaad::signplan::{PhraseDictionary, PlanItem, SignPlan};

/// Worst finite-difference disagreement for one parameter tensor.
#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// Entries skipped because the perturbation flipped a ReLU.
    pub kinks: usize,
}

pub fn miniature_spec() -> NetworkSpec {
    NetworkSpec {
        width: 16,
        residual_blocks: 2,
        compression_width: 16,
        ..Default::default()
    }
}

/// Central differences with step `h` over every trainable scalar, using a
/// fixed batch and fixed dropout masks. Relative error is
/// `|a - n| / max(|a|, |n|, floor)`. Perturbations that flip the sign of any
/// ReLU input are counted as kinks and left out, since the loss is not
/// differentiable across them.
pub fn gradient_check(spec: NetworkSpec, batch: usize, seed: u64, h: f64, floor: f64) -> Vec<TensorCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::init(spec, seed).unwrap();
    // non-trivial BN parameters so their gradients are exercised away from 1/0
    for stage in net.stages_mut() {
        stage.norm.gamma.mapv_inplace(|_| rng.random_range(0.5..1.5));
        stage.norm.beta.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        stage.dense.bias.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    }
    let x = Array2::from_shape_simple_fn((batch, spec.input_dim), || StandardNormal.sample(&mut rng));
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..spec.num_classes)).collect();
    let targets = one_hot_batch(&labels);
    let masks = net.sample_masks(batch, &mut rng);

    let signs = |c: &ForwardCache<f64>| -> Vec<bool> {
        c.stages.iter().flat_map(|s| s.pre_activation().iter().map(|&z| z > 0.0)).collect()
    };
    let loss = |net: &Network<f64>| {
        let c = net.forward_train_with_masks(&x, &masks).unwrap();
        (cross_entropy(&c.logits, &targets), signs(&c))
    };
    let cache = net.forward_train_with_masks(&x, &masks).unwrap();
    let base = signs(&cache);
    let grads = net.backward(&cache, &targets).unwrap();
    let names = net.trainable_names();

    let mut out = Vec::new();
    for (t, (name, g)) in names.iter().zip(&grads.tensors).enumerate() {
        let analytic = g.as_slice().unwrap().to_vec();
        let mut check = TensorCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
            kinks: 0,
        };
        for (i, &a) in analytic.iter().enumerate() {
            let orig = net.trainable_mut()[t].as_slice().unwrap()[i];
            net.trainable_mut()[t].as_slice_mut().unwrap()[i] = orig + h;
            let (up, s_up) = loss(&net);
            net.trainable_mut()[t].as_slice_mut().unwrap()[i] = orig - h;
            let (down, s_down) = loss(&net);
            net.trainable_mut()[t].as_slice_mut().unwrap()[i] = orig;
            if s_up != base || s_down != base {
                check.kinks += 1;
                continue;
            }
            let n = (up - down) / (2.0 * h);
            let abs = (a - n).abs();
            let rel = abs / a.abs().max(n.abs()).max(floor);
            if rel > check.max_rel_error {
                check.max_rel_error = rel;
                check.worst_analytic = a;
                check.worst_numeric = n;
            }
            check.max_abs_error = check.max_abs_error.max(abs);
        }
        out.push(check);
    }
    out
}

/// Tokens covered by GIF items.
pub fn gif_tokens(plan: &SignPlan) -> usize {
    plan.items
        .iter()
        .map(|i| match i {
            PlanItem::Gif { source_phrase, .. } => source_phrase.split(' ').count(),
            PlanItem::Letter { .. } => 0,
        })
        .sum()
}

/// Best achievable phrase coverage over every segmentation of `tokens`.
pub fn brute_force_coverage(dict: &PhraseDictionary, tokens: &[String]) -> usize {
    let n = tokens.len();
    let mut best = 0;
    // bit i set = a segment boundary after token i
    for cuts in 0u32..(1 << n.saturating_sub(1)) {
        let mut start = 0;
        let mut covered = 0;
        let mut valid = true;
        for end in 1..=n {
            if end == n || cuts & (1 << (end - 1)) != 0 {
                let seg = &tokens[start..end];
                if dict.asset_for(seg).is_some() {
                    covered += seg.len();
                } else if seg.len() > 1 {
                    valid = false;
                    break;
                }
                start = end;
            }
        }
        if valid {
            best = best.max(covered);
        }
    }
    best
}
