use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::autograd::{Graph, ParamId, ParamStore, Var};

/// A ChaCha stream keyed by `seed` and a label, so each named tensor gets its
/// own stream regardless of construction order.
pub fn keyed_rng(seed: u64, label: &[u8]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label);
    let mut key = [0u8; 32];
    key.copy_from_slice(&h.finalize());
    ChaCha8Rng::from_seed(key)
}

/// Unit-norm Gaussian direction derived from the content hash of `bytes`.
pub fn hashed_unit_vector(seed: u64, domain: &str, bytes: &[u8], width: usize) -> Array1<f64> {
    let mut label = Vec::with_capacity(domain.len() + 1 + bytes.len());
    label.extend_from_slice(domain.as_bytes());
    label.push(0);
    label.extend_from_slice(bytes);
    let mut rng = keyed_rng(seed, &label);
    let mut v: Array1<f64> = (0..width).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = v.dot(&v).sqrt();
    v /= norm;
    v
}

/// Affine layer `y = x W + b` with `W: in×out` and `b: 1×out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Registers `{name}.weight` and `{name}.bias`. Weights are uniform in
    /// `±scale/sqrt(in_dim)`; biases start at zero.
    pub fn new(store: &mut ParamStore, seed: u64, name: &str, in_dim: usize, out_dim: usize, scale: f64) -> Self {
        let bound = scale / (in_dim as f64).sqrt();
        let mut rng = keyed_rng(seed, name.as_bytes());
        let w = Array2::from_shape_fn((in_dim, out_dim), |_| rng.random_range(-bound..bound));
        let weight = store.add(format!("{name}.weight"), w);
        let bias = store.add(format!("{name}.bias"), Array2::zeros((1, out_dim)));
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}
