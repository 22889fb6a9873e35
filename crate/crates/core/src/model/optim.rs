use ndarray::{ArrayD, ArrayViewMutD, Zip};

use super::network::Scalar;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar> {
    pub step: u64,
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
}

impl<F: Scalar> AdamState<F> {
    pub fn for_shapes(shapes: &[Vec<usize>]) -> Self {
        let m: Vec<ArrayD<F>> = shapes.iter().map(|s| ArrayD::zeros(s.as_slice())).collect();
        Self {
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// Bias-corrected Adam update applied in place.
    pub fn step(
        &mut self,
        params: &mut [ArrayViewMutD<'_, F>],
        grads: &[ArrayD<F>],
        cfg: &AdamConfig,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} tensors", self.m.len()),
                found: format!("{} params / {} grads", params.len(), grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{:?}", m.shape()),
                    found: format!("param {:?} / grad {:?}", p.shape(), g.shape()),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = F::of(1.0 - cfg.beta1.powi(t));
        let c2 = F::of(1.0 - cfg.beta2.powi(t));
        let (b1, b2) = (F::of(cfg.beta1), F::of(cfg.beta2));
        let (lr, eps) = (F::of(cfg.learning_rate), F::of(cfg.epsilon));
        let one = F::one();
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let update = |p: &mut F, g: F, m: &mut F, v: &mut F| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            };
            match (
                p.as_slice_mut(),
                g.as_slice(),
                m.as_slice_mut(),
                v.as_slice_mut(),
            ) {
                (Some(p), Some(g), Some(m), Some(v)) => {
                    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        update(p, g, m, v);
                    }
                }
                _ => Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| update(p, g, m, v)),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, ArrayD, IxDyn};

    fn run(grads: &[f64], w0: f64) -> Vec<f64> {
        let cfg = AdamConfig::default();
        let mut w = ArrayD::from_elem(IxDyn(&[1]), w0);
        let mut state = AdamState::<f64>::for_shapes(&[vec![1]]);
        let mut trace = Vec::new();
        for &g in grads {
            let grad = vec![arr1(&[g]).into_dyn()];
            state.step(&mut [w.view_mut()], &grad, &cfg).unwrap();
            trace.push(w[[0]]);
        }
        trace
    }

    #[test]
    fn three_step_trace_matches_reference() {
        // reference trace from an independent Adam implementation, w0 = 1.0
        let expected = [0.99900000002, 0.9986543941811651, 0.998275002408357];
        let got = run(&[0.5, -0.2, 0.1], 1.0);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        assert_eq!(run(&[0.0], 0.25), vec![0.25]);
    }

    #[test]
    fn first_step_is_bounded_by_lr() {
        for g in [1e-6, 0.3, -7.0, 1e6] {
            let w = run(&[g], 0.0)[0];
            assert!(w.abs() <= 1e-3 * (1.0 + 1e-6), "{g}: {w}");
        }
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let mut state = AdamState::<f64>::for_shapes(&[vec![2]]);
        let mut w = ArrayD::<f64>::zeros(IxDyn(&[3]));
        let g = vec![ArrayD::<f64>::zeros(IxDyn(&[3]))];
        assert!(state.step(&mut [w.view_mut()], &g, &AdamConfig::default()).is_err());
        assert_eq!(state.step, 0);
    }
}
