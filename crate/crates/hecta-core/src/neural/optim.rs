//! RMSprop optimizer and global gradient-norm clipping.

use super::tensor::ParamStore;
use super::NeuralError;

/// RMSprop with a running average of squared gradients:
///   s = rho * s + (1 - rho) * g^2
///   p = p - lr * g / (sqrt(s) + eps)
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub rho: f64,
    pub eps: f64,
    sq_avg: ParamStore,
}

pub const DEFAULT_RHO: f64 = 0.99;
pub const DEFAULT_EPS: f64 = 1e-5;

impl RmsProp {
    pub fn new(params: &ParamStore) -> Self {
        RmsProp {
            rho: DEFAULT_RHO,
            eps: DEFAULT_EPS,
            sq_avg: params.zeros_like(),
        }
    }

    /// One descent step. Non-finite gradients leave the parameters untouched
    /// and are reported as an error so the caller can flag the skipped step.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &ParamStore,
        lr: f64,
    ) -> Result<(), NeuralError> {
        if !grads.all_finite() {
            return Err(NeuralError::NonFinite {
                context: "RmsProp::step gradients",
            });
        }
        let names: Vec<String> = params.names().map(str::to_owned).collect();
        for name in &names {
            let g = grads.get(name).data().to_vec();
            let s = self.sq_avg.get_mut(name).data_mut();
            let p = params.get_mut(name).data_mut();
            debug_assert_eq!(g.len(), p.len());
            for i in 0..p.len() {
                s[i] = self.rho * s[i] + (1.0 - self.rho) * g[i] * g[i];
                p[i] -= lr * g[i] / (s[i].sqrt() + self.eps);
            }
        }
        if !params.all_finite() {
            return Err(NeuralError::NonFinite {
                context: "RmsProp::step parameters",
            });
        }
        Ok(())
    }
}

/// Euclidean norm over every gradient entry in the store.
pub fn global_grad_norm(grads: &ParamStore) -> f64 {
    grads
        .iter()
        .flat_map(|(_, t)| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Scale all gradients so the global norm does not exceed `max_norm`.
pub fn clip_global_norm(grads: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = global_grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, t) in grads.iter_mut() {
            for v in t.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tensor::Tensor;

    fn store_with(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let len = values.len();
        s.insert("w", Tensor::from_vec(&[len], values).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = store_with(vec![1.0, -2.0, 0.5]);
        let grads = params.zeros_like();
        let mut opt = RmsProp::new(&params);
        opt.step(&mut params, &grads, 0.1).unwrap();
        assert_eq!(params.get("w").data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn single_step_on_quadratic_shrinks_weight() {
        // f(w) = w^2 at w = 1, lr = 0.1: g = 2, s = 0.04,
        // w' = 1 - 0.1 * 2 / (0.2 + 1e-5), clearly inside (-1, 1).
        let mut params = store_with(vec![1.0]);
        let grads = store_with(vec![2.0]);
        let mut opt = RmsProp::new(&params);
        opt.step(&mut params, &grads, 0.1).unwrap();
        assert!(params.get("w").data()[0].abs() < 1.0);
    }

    #[test]
    fn step_is_deterministic() {
        let run = || {
            let mut params = store_with(vec![0.3, -0.7]);
            let grads = store_with(vec![0.11, -0.04]);
            let mut opt = RmsProp::new(&params);
            opt.step(&mut params, &grads, 1e-3).unwrap();
            opt.step(&mut params, &grads, 1e-3).unwrap();
            params.get("w").data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_is_rejected_and_params_untouched() {
        let mut params = store_with(vec![1.0]);
        let grads = store_with(vec![f64::INFINITY]);
        let mut opt = RmsProp::new(&params);
        assert!(opt.step(&mut params, &grads, 0.1).is_err());
        assert_eq!(params.get("w").data(), &[1.0]);
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut grads = store_with(vec![3.0, 4.0]);
        let pre = clip_global_norm(&mut grads, 0.2);
        assert!((pre - 5.0).abs() < 1e-12);
        let post = global_grad_norm(&grads);
        assert!((post - 0.2).abs() < 1e-12);
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut grads = store_with(vec![0.01, 0.02]);
        clip_global_norm(&mut grads, 0.2);
        assert_eq!(grads.get("w").data(), &[0.01, 0.02]);
    }
}
