//! A single GRU cell with fused gate weights.
//!
//! Gate order in the fused matrices is reset, update, candidate:
//!   r = sigmoid(Wi_r x + bi_r + Wh_r h + bh_r)
//!   z = sigmoid(Wi_z x + bi_z + Wh_z h + bh_z)
//!   n = tanh(Wi_n x + bi_n + r * (Wh_n h + bh_n))
//!   h' = (1 - z) * n + z * h

use rand::Rng;

use super::layers::{matvec, matvec_t_acc, outer_acc};
use super::tensor::{ParamStore, Tensor};
use super::NeuralError;

#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_ih: String,
    pub w_hh: String,
    pub b_ih: String,
    pub b_hh: String,
    pub in_dim: usize,
    pub hidden: usize,
}

/// Intermediate values needed by the backward pass.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// Wh_n h + bh_n, before multiplication by r.
    m: Vec<f64>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl GruCell {
    pub fn new(prefix: &str, in_dim: usize, hidden: usize) -> Self {
        GruCell {
            w_ih: format!("{prefix}.w_ih"),
            w_hh: format!("{prefix}.w_hh"),
            b_ih: format!("{prefix}.b_ih"),
            b_hh: format!("{prefix}.b_hh"),
            in_dim,
            hidden,
        }
    }

    pub fn register(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let h = self.hidden;
        store.insert(
            &self.w_ih,
            Tensor::uniform_fan_in(&[3 * h, self.in_dim], self.in_dim, rng),
        );
        store.insert(&self.w_hh, Tensor::uniform_fan_in(&[3 * h, h], h, rng));
        store.insert(&self.b_ih, Tensor::uniform_fan_in(&[3 * h], self.in_dim, rng));
        store.insert(&self.b_hh, Tensor::uniform_fan_in(&[3 * h], h, rng));
    }

    pub fn forward(
        &self,
        ps: &ParamStore,
        x: &[f64],
        h_prev: &[f64],
    ) -> Result<(Vec<f64>, GruCache), NeuralError> {
        if x.len() != self.in_dim || h_prev.len() != self.hidden {
            return Err(NeuralError::ShapeMismatch {
                context: "GruCell::forward",
                expected: self.in_dim + self.hidden,
                actual: x.len() + h_prev.len(),
            });
        }
        if !x.iter().chain(h_prev).all(|v| v.is_finite()) {
            return Err(NeuralError::NonFinite {
                context: "GruCell::forward input",
            });
        }
        let h = self.hidden;
        let w_ih = ps.get(&self.w_ih).data();
        let w_hh = ps.get(&self.w_hh).data();
        let b_ih = ps.get(&self.b_ih).data();
        let b_hh = ps.get(&self.b_hh).data();

        let mut gi = vec![0.0; 3 * h];
        let mut gh = vec![0.0; 3 * h];
        matvec(w_ih, 3 * h, self.in_dim, x, &mut gi);
        matvec(w_hh, 3 * h, h, h_prev, &mut gh);

        let mut r = vec![0.0; h];
        let mut z = vec![0.0; h];
        let mut n = vec![0.0; h];
        let mut m = vec![0.0; h];
        for i in 0..h {
            r[i] = sigmoid(gi[i] + b_ih[i] + gh[i] + b_hh[i]);
            z[i] = sigmoid(gi[h + i] + b_ih[h + i] + gh[h + i] + b_hh[h + i]);
            m[i] = gh[2 * h + i] + b_hh[2 * h + i];
            n[i] = (gi[2 * h + i] + b_ih[2 * h + i] + r[i] * m[i]).tanh();
        }
        let h_new: Vec<f64> = (0..h).map(|i| (1.0 - z[i]) * n[i] + z[i] * h_prev[i]).collect();
        let cache = GruCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            r,
            z,
            n,
            m,
        };
        Ok((h_new, cache))
    }

    /// Accumulates parameter gradients; returns (dL/dx, dL/dh_prev).
    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &GruCache,
        dh_new: &[f64],
        grads: &mut ParamStore,
    ) -> (Vec<f64>, Vec<f64>) {
        let h = self.hidden;
        debug_assert_eq!(dh_new.len(), h);
        let GruCache { x, h_prev, r, z, n, m } = cache;

        // Gate pre-activation gradients, packed in (r, z, n) order.
        let mut da = vec![0.0; 3 * h];
        let mut dh_prev: Vec<f64> = (0..h).map(|i| dh_new[i] * z[i]).collect();
        for i in 0..h {
            let dn = dh_new[i] * (1.0 - z[i]);
            let dz = dh_new[i] * (h_prev[i] - n[i]);
            let da_n = dn * (1.0 - n[i] * n[i]);
            let dr = da_n * m[i];
            let da_z = dz * z[i] * (1.0 - z[i]);
            let da_r = dr * r[i] * (1.0 - r[i]);
            da[i] = da_r;
            da[h + i] = da_z;
            da[2 * h + i] = da_n;
        }

        // Candidate-gate hidden path carries the extra r factor.
        let dm: Vec<f64> = (0..h).map(|i| da[2 * h + i] * r[i]).collect();
        let mut dgh = da.clone();
        dgh[2 * h..3 * h].copy_from_slice(&dm);

        outer_acc(grads.get_mut(&self.w_ih).data_mut(), &da, x);
        outer_acc(grads.get_mut(&self.w_hh).data_mut(), &dgh, h_prev);
        grads.accumulate(&self.b_ih, &da);
        grads.accumulate(&self.b_hh, &dgh);

        let mut dx = vec![0.0; self.in_dim];
        matvec_t_acc(ps.get(&self.w_ih).data(), 3 * h, self.in_dim, &da, &mut dx);
        matvec_t_acc(ps.get(&self.w_hh).data(), 3 * h, h, &dgh, &mut dh_prev);
        (dx, dh_prev)
    }
}
