//! Fully connected network with Leaky ReLU activations and manual backprop.
//!
//! Batches are column-major: an input is `(in_dim, batch)` and every sample is
//! one column, which maps directly onto BLAS gemm calls.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::gemm;
use crate::{Error, Result};

/// Negative slope of the Leaky ReLU activation.
pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

#[inline]
fn leaky_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Multi-layer perceptron; the last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `weights[l]` has shape (out, in).
    pub weights: Vec<DMatrix<f64>>,
    /// `biases[l]` has shape (out, 1).
    pub biases: Vec<DMatrix<f64>>,
}

/// Per-layer tensors saved during the forward pass.
pub struct MlpCache {
    /// Input activation of each layer.
    layer_inputs: Vec<DMatrix<f64>>,
    /// Pre-activation of each hidden layer (none for the last, linear layer).
    pre_acts: Vec<DMatrix<f64>>,
}

/// Parameter gradients with the same shapes as the model tensors.
#[derive(Debug, Clone)]
pub struct MlpGrad {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DMatrix<f64>>,
}

impl Mlp {
    /// He-style initialization; with `zero_output_layer` the final layer starts
    /// at zero so the network is the zero function.
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng, zero_output_layer: bool) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::Shape(format!("bad layer sizes {sizes:?}")));
        }
        let n_layers = sizes.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let last = l == n_layers - 1;
            let w = if last && zero_output_layer {
                DMatrix::zeros(fan_out, fan_in)
            } else {
                DMatrix::from_fn(fan_out, fan_in, |_, _| normal(rng) * scale)
            };
            weights.push(w);
            biases.push(DMatrix::zeros(fan_out, 1));
        }
        Ok(Self { weights, biases })
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.last().unwrap().nrows()
    }

    fn affine(&self, l: usize, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.weights[l].nrows(), a.ncols());
        gemm(1.0, &self.weights[l], false, a, false, 0.0, &mut z);
        let b = &self.biases[l];
        for mut col in z.column_iter_mut() {
            col += b.column(0);
        }
        z
    }

    /// Plain forward pass on a `(in_dim, batch)` matrix.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let n_layers = self.weights.len();
        let mut a = x.clone();
        for l in 0..n_layers {
            let mut z = self.affine(l, &a);
            if l + 1 < n_layers {
                z.apply(|v| *v = leaky(*v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass that records what backprop needs.
    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, MlpCache)> {
        self.check_input(x)?;
        let n_layers = self.weights.len();
        let mut layer_inputs = Vec::with_capacity(n_layers);
        let mut pre_acts = Vec::with_capacity(n_layers.saturating_sub(1));
        let mut a = x.clone();
        for l in 0..n_layers {
            layer_inputs.push(a.clone());
            let mut z = self.affine(l, &a);
            if l + 1 < n_layers {
                pre_acts.push(z.clone());
                z.apply(|v| *v = leaky(*v));
            }
            a = z;
        }
        Ok((a, MlpCache { layer_inputs, pre_acts }))
    }

    /// Backpropagate `d_out` (gradient w.r.t. the output) through the cached
    /// pass; returns parameter gradients and the gradient w.r.t. the input.
    pub fn backward(&self, cache: &MlpCache, d_out: &DMatrix<f64>) -> (MlpGrad, DMatrix<f64>) {
        let n_layers = self.weights.len();
        let mut d_weights = vec![DMatrix::zeros(0, 0); n_layers];
        let mut d_biases = vec![DMatrix::zeros(0, 0); n_layers];
        let mut dz = d_out.clone();
        for l in (0..n_layers).rev() {
            if l + 1 < n_layers {
                let z = &cache.pre_acts[l];
                dz.zip_apply(z, |d, zv| *d *= leaky_grad(zv));
            }
            let a_in = &cache.layer_inputs[l];
            let mut dw = DMatrix::zeros(dz.nrows(), a_in.nrows());
            gemm(1.0, &dz, false, a_in, true, 0.0, &mut dw);
            let mut db = DMatrix::zeros(dz.nrows(), 1);
            for col in dz.column_iter() {
                db.column_mut(0).iter_mut().zip(col.iter()).for_each(|(b, v)| *b += v);
            }
            d_weights[l] = dw;
            d_biases[l] = db;
            if l > 0 {
                let mut da = DMatrix::zeros(self.weights[l].ncols(), dz.ncols());
                gemm(1.0, &self.weights[l], true, &dz, false, 0.0, &mut da);
                dz = da;
            } else {
                let mut da = DMatrix::zeros(self.weights[0].ncols(), dz.ncols());
                gemm(1.0, &self.weights[0], true, &dz, false, 0.0, &mut da);
                return (MlpGrad { weights: d_weights, biases: d_biases }, da);
            }
        }
        unreachable!("networks have at least one layer");
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input has {} rows, network expects {}",
                x.nrows(),
                self.in_dim()
            )));
        }
        Ok(())
    }
}

/// Standard normal via Box-Muller, driven by the deterministic stream.
pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(99)
    }

    #[test]
    fn zero_network_maps_to_zero() {
        let mut net = Mlp::new(&[3, 5, 2], &mut rng(), false).unwrap();
        for w in &mut net.weights {
            w.fill(0.0);
        }
        let x = DMatrix::from_fn(3, 4, |i, j| (i + j) as f64);
        let y = net.forward(&x).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_positive_inputs() {
        let mut net = Mlp::new(&[3, 3], &mut rng(), false).unwrap();
        net.weights[0] = DMatrix::identity(3, 3);
        net.biases[0].fill(0.0);
        let x = DMatrix::from_fn(3, 2, |i, j| 1.0 + (i * 2 + j) as f64);
        let y = net.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn input_shape_is_checked() {
        let net = Mlp::new(&[3, 2], &mut rng(), false).unwrap();
        assert!(net.forward(&DMatrix::zeros(4, 1)).is_err());
    }

    #[test]
    fn backprop_jacobian_matches_finite_differences() {
        let net = Mlp::new(&[4, 8, 3], &mut rng(), false).unwrap();
        let x0 = DMatrix::from_fn(4, 1, |i, _| 0.3 * (i as f64) - 0.55);
        let h = 1e-5;
        // jacobian column by backprop: dL/dx for L = y_k
        for k in 0..3 {
            let (_, cache) = net.forward_cached(&x0).unwrap();
            let mut dy = DMatrix::zeros(3, 1);
            dy[(k, 0)] = 1.0;
            let (_, dx) = net.backward(&cache, &dy);
            for i in 0..4 {
                let mut xp = x0.clone();
                xp[(i, 0)] += h;
                let mut xm = x0.clone();
                xm[(i, 0)] -= h;
                let fd = (net.forward(&xp).unwrap()[(k, 0)] - net.forward(&xm).unwrap()[(k, 0)])
                    / (2.0 * h);
                let rel = (dx[(i, 0)] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-4, "J[{k},{i}]: bp {} vs fd {}", dx[(i, 0)], fd);
            }
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut net = Mlp::new(&[2, 6, 2], &mut rng(), false).unwrap();
        let x = DMatrix::from_fn(2, 3, |i, j| 0.17 * (i as f64 + 1.0) * (j as f64 - 1.3));
        let t = DMatrix::from_fn(2, 3, |i, j| 0.5 * (i as f64) - 0.2 * (j as f64));
        let loss = |net: &Mlp| -> f64 {
            let y = net.forward(&x).unwrap();
            (y - &t).iter().map(|v| v * v).sum::<f64>()
        };
        let (y, cache) = net.forward_cached(&x).unwrap();
        let dy = 2.0 * (&y - &t);
        let (grads, _) = net.backward(&cache, &dy);
        let h = 1e-6;
        for l in 0..2 {
            for idx in 0..net.weights[l].len() {
                let orig = net.weights[l][idx];
                net.weights[l][idx] = orig + h;
                let up = loss(&net);
                net.weights[l][idx] = orig - h;
                let dn = loss(&net);
                net.weights[l][idx] = orig;
                let fd = (up - dn) / (2.0 * h);
                let bp = grads.weights[l][idx];
                assert!(
                    (bp - fd).abs() <= 1e-4 * fd.abs().max(1e-6),
                    "W{l}[{idx}]: bp {bp} vs fd {fd}"
                );
            }
        }
    }
}
