//! Central finite-difference verification of analytic gradients.
//!
//! The harness treats everything under check as entries of a [`ParamStore`]:
//! layer weights, and, when a test wants input gradients too, the inputs
//! themselves stored under their own key. A module under check supplies a
//! scalar loss and its analytic gradient; the harness compares coordinates
//! against central differences.

use rand::seq::index::sample;
use rand::Rng;

use super::tensor::ParamStore;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Relative step; the actual step per coordinate is `h * max(1, |x|)`.
    pub h: f64,
    pub tolerance: f64,
    /// Max coordinates checked per tensor (all of them if the tensor is
    /// smaller). Sampling keeps large layers tractable.
    pub max_coords_per_tensor: usize,
    /// Floor of the relative-error denominator. Below this scale the
    /// comparison degrades to an absolute tolerance of
    /// `tolerance * denom_floor`, which keeps central-difference roundoff
    /// (about |f| * 1e-16 / h) from flagging gradients that are genuinely
    /// near zero.
    pub denom_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-6,
            tolerance: 1e-4,
            max_coords_per_tensor: 64,
            denom_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradFailure {
    pub name: String,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    pub failures: Vec<GradFailure>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    let denom = a.abs().max(n.abs()).max(floor);
    (a - n).abs() / denom
}

/// Compare analytic gradients against central differences.
///
/// * `loss` evaluates the scalar objective for a given store.
/// * `analytic` returns the full gradient store (same keys as `store`).
/// * `names` selects which tensors to probe; coordinates are subsampled
///   deterministically from `rng` if a tensor exceeds the configured limit.
pub fn grad_check(
    store: &ParamStore,
    names: &[String],
    loss: impl Fn(&ParamStore) -> f64,
    analytic: impl FnOnce(&ParamStore) -> ParamStore,
    cfg: &GradCheckConfig,
    rng: &mut impl Rng,
) -> GradCheckReport {
    let grads = analytic(store);
    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        coords_checked: 0,
        failures: Vec::new(),
        tolerance: cfg.tolerance,
    };

    for name in names {
        let len = store.get(name).len();
        let coords: Vec<usize> = if len <= cfg.max_coords_per_tensor {
            (0..len).collect()
        } else {
            sample(rng, len, cfg.max_coords_per_tensor).into_vec()
        };
        for coord in coords {
            let x0 = store.get(name).data()[coord];
            let step = cfg.h * x0.abs().max(1.0);

            work.get_mut(name).data_mut()[coord] = x0 + step;
            let f_plus = loss(&work);
            work.get_mut(name).data_mut()[coord] = x0 - step;
            let f_minus = loss(&work);
            work.get_mut(name).data_mut()[coord] = x0;

            let numeric = (f_plus - f_minus) / (2.0 * step);
            let a = grads.get(name).data()[coord];
            let err = rel_err(a, numeric, cfg.denom_floor);
            report.coords_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
            }
            if err > cfg.tolerance {
                report.failures.push(GradFailure {
                    name: name.clone(),
                    coord,
                    analytic: a,
                    numeric,
                    rel_err: err,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::Dense;
    use crate::neural::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// loss = sum_i c_i * y_i over a dense layer; checks weights and input.
    #[test]
    fn dense_layer_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = Dense::new("fc", 6, 4);
        let mut store = ParamStore::new();
        d.register(&mut store, &mut rng);
        let input: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        store.insert("input", Tensor::from_vec(&[6], input).unwrap());
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();

        let names: Vec<String> = vec!["fc.w".into(), "fc.b".into(), "input".into()];
        let c_loss = c.clone();
        let d2 = d.clone();
        let report = grad_check(
            &store,
            &names,
            move |ps| {
                let y = d2.forward(ps, ps.get("input").data()).unwrap();
                y.iter().zip(&c_loss).map(|(a, b)| a * b).sum()
            },
            |ps| {
                let mut grads = ps.zeros_like();
                let x = ps.get("input").data().to_vec();
                let dx = d.backward(ps, &x, &c, &mut grads);
                grads.accumulate("input", &dx);
                grads
            },
            &GradCheckConfig::default(),
            &mut rng,
        );
        assert!(report.passed(), "failures: {:?}", report.failures);
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = Dense::new("fc", 3, 3);
        let mut store = ParamStore::new();
        d.register(&mut store, &mut rng);
        store.insert(
            "input",
            Tensor::from_vec(&[3], vec![0.4, -0.2, 0.9]).unwrap(),
        );
        let c = [1.0, 1.0, 1.0];

        let d2 = d.clone();
        let report = grad_check(
            &store,
            &["fc.w".to_string()],
            move |ps| {
                let y = d2.forward(ps, ps.get("input").data()).unwrap();
                y.iter().zip(&c).map(|(a, b)| a * b).sum()
            },
            |ps| {
                let mut grads = ps.zeros_like();
                let x = ps.get("input").data().to_vec();
                d.backward(ps, &x, &c, &mut grads);
                // Deliberate corruption: scale one weight gradient.
                grads.get_mut("fc.w").data_mut()[0] += 0.5;
                grads
            },
            &GradCheckConfig::default(),
            &mut rng,
        );
        assert!(!report.passed());
        assert_eq!(report.failures[0].name, "fc.w");
        assert_eq!(report.failures[0].coord, 0);
    }
}
