//! The invertible network (coupling blocks + fixed permutations) and the
//! plain DNN surrogate.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::coupling::{BlockCache, BlockGrad, BlockInvCache, CouplingBlock};
use super::mlp::Mlp;
use crate::dataset::NormStats;
use crate::{Error, Result};

/// Coupling blocks interleaved with fixed seeded channel permutations.
///
/// When the input and output sizes differ the network works at
/// `dim = max(in, out)`: narrower inputs are zero-padded, and when the output
/// is narrower the trailing `dim - out_dim` channels are latent (ignored by
/// the forward loss, zero-filled when running in reverse). With equal sizes,
/// as in the 4-in/4-out bandgap mapping, both mechanisms are inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct InnModel {
    pub blocks: Vec<CouplingBlock>,
    /// `perms[i]` sits between blocks `i` and `i + 1`; output row `r` reads
    /// input row `perms[i][r]`.
    pub perms: Vec<Vec<usize>>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub norm: NormStats,
    pub seed: u64,
}

pub struct InnCache {
    blocks: Vec<BlockCache>,
}

pub struct InnInvCache {
    blocks: Vec<BlockInvCache>,
}

impl InnModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        n_blocks: usize,
        subnet_width: usize,
        subnet_hidden_layers: usize,
        clamp: f64,
        norm: NormStats,
        seed: u64,
    ) -> Result<Self> {
        let dim = in_dim.max(out_dim);
        if dim < 2 || dim % 2 != 0 {
            return Err(Error::Shape(format!(
                "working width {dim} must be even and at least 2"
            )));
        }
        if n_blocks == 0 {
            return Err(Error::Shape("need at least one coupling block".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            blocks.push(CouplingBlock::new(
                dim / 2,
                subnet_width,
                subnet_hidden_layers,
                clamp,
                &mut rng,
            )?);
        }
        let mut perms = Vec::with_capacity(n_blocks - 1);
        for _ in 0..n_blocks.saturating_sub(1) {
            let mut p: Vec<usize> = (0..dim).collect();
            p.shuffle(&mut rng);
            perms.push(p);
        }
        Ok(Self { blocks, perms, in_dim, out_dim, norm, seed })
    }

    /// Working channel count (`max(in_dim, out_dim)`).
    pub fn dim(&self) -> usize {
        2 * self.blocks[0].half_dim()
    }

    /// Latent channels appended to the output side.
    pub fn latent_dim(&self) -> usize {
        self.dim() - self.out_dim
    }

    fn apply_perm(p: &[usize], x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (r, &src) in p.iter().enumerate() {
            out.row_mut(r).copy_from(&x.row(src));
        }
        out
    }

    fn apply_perm_inverse(p: &[usize], x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (r, &src) in p.iter().enumerate() {
            out.row_mut(src).copy_from(&x.row(r));
        }
        out
    }

    /// Zero-pad an `in_dim` batch up to the working width.
    pub fn pad_input(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.in_dim {
            return Err(Error::Shape(format!(
                "input has {} rows, expected {}",
                x.nrows(),
                self.in_dim
            )));
        }
        let mut full = DMatrix::zeros(self.dim(), x.ncols());
        full.rows_mut(0, self.in_dim).copy_from(x);
        Ok(full)
    }

    /// Zero-fill the latent channels of an `out_dim` batch.
    pub fn pad_output(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.nrows() != self.out_dim {
            return Err(Error::Shape(format!(
                "output has {} rows, expected {}",
                y.nrows(),
                self.out_dim
            )));
        }
        let mut full = DMatrix::zeros(self.dim(), y.ncols());
        full.rows_mut(0, self.out_dim).copy_from(y);
        Ok(full)
    }

    /// Forward pass on the full working width.
    pub fn forward_full(&self, x_full: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut a = self.blocks[0].forward(x_full)?;
        for (i, block) in self.blocks.iter().enumerate().skip(1) {
            a = block.forward(&Self::apply_perm(&self.perms[i - 1], &a))?;
        }
        Ok(a)
    }

    /// Inverse pass on the full working width.
    pub fn inverse_full(&self, y_full: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.blocks.len();
        let mut a = self.blocks[n - 1].inverse(y_full)?;
        for i in (0..n - 1).rev() {
            a = self.blocks[i].inverse(&Self::apply_perm_inverse(&self.perms[i], &a))?;
        }
        Ok(a)
    }

    /// `in_dim` batch -> `out_dim` predictions (normalized space).
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let y_full = self.forward_full(&self.pad_input(x)?)?;
        Ok(y_full.rows(0, self.out_dim).into_owned())
    }

    /// `out_dim` batch -> `in_dim` reconstruction with zero latent channels.
    pub fn inverse(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let x_full = self.inverse_full(&self.pad_output(y)?)?;
        Ok(x_full.rows(0, self.in_dim).into_owned())
    }

    pub fn forward_cached(&self, x_full: &DMatrix<f64>) -> Result<(DMatrix<f64>, InnCache)> {
        let mut caches = Vec::with_capacity(self.blocks.len());
        let (mut a, c0) = self.blocks[0].forward_cached(x_full)?;
        caches.push(c0);
        for (i, block) in self.blocks.iter().enumerate().skip(1) {
            let (next, c) = block.forward_cached(&Self::apply_perm(&self.perms[i - 1], &a))?;
            caches.push(c);
            a = next;
        }
        Ok((a, InnCache { blocks: caches }))
    }

    /// Backprop through the forward chain; returns per-block gradients in
    /// block order plus the gradient w.r.t. the padded input.
    pub fn backward(&self, cache: &InnCache, d_y_full: &DMatrix<f64>) -> (Vec<BlockGrad>, DMatrix<f64>) {
        let n = self.blocks.len();
        let mut grads: Vec<Option<BlockGrad>> = (0..n).map(|_| None).collect();
        let mut d = d_y_full.clone();
        for i in (0..n).rev() {
            let (g, d_in) = self.blocks[i].backward(&cache.blocks[i], &d);
            grads[i] = Some(g);
            d = if i > 0 { Self::apply_perm_inverse(&self.perms[i - 1], &d_in) } else { d_in };
        }
        (grads.into_iter().map(Option::unwrap).collect(), d)
    }

    pub fn inverse_cached(&self, y_full: &DMatrix<f64>) -> Result<(DMatrix<f64>, InnInvCache)> {
        let n = self.blocks.len();
        let mut caches: Vec<Option<BlockInvCache>> = (0..n).map(|_| None).collect();
        let (mut a, cn) = self.blocks[n - 1].inverse_cached(y_full)?;
        caches[n - 1] = Some(cn);
        for i in (0..n - 1).rev() {
            let (next, c) =
                self.blocks[i].inverse_cached(&Self::apply_perm_inverse(&self.perms[i], &a))?;
            caches[i] = Some(c);
            a = next;
        }
        Ok((a, InnInvCache { blocks: caches.into_iter().map(Option::unwrap).collect() }))
    }

    /// Backprop through the inverse chain (gradients w.r.t. parameters; the
    /// gradient w.r.t. the supplied output data is dropped at the end).
    pub fn backward_inverse(&self, cache: &InnInvCache, d_x_full: &DMatrix<f64>) -> Vec<BlockGrad> {
        let n = self.blocks.len();
        let mut grads: Vec<Option<BlockGrad>> = (0..n).map(|_| None).collect();
        let mut d = d_x_full.clone();
        for i in 0..n {
            // block i's inverse input v is block i+1's inverse output routed
            // through the permutation between them
            let (g, d_v) = self.blocks[i].backward_inverse(&cache.blocks[i], &d);
            grads[i] = Some(g);
            if i + 1 < n {
                d = Self::apply_perm(&self.perms[i], &d_v);
            }
        }
        grads.into_iter().map(Option::unwrap).collect()
    }

    /// All parameter tensors in canonical order.
    pub fn params(&self) -> Vec<&DMatrix<f64>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for net in b.subnets() {
                for l in 0..net.weights.len() {
                    out.push(&net.weights[l]);
                    out.push(&net.biases[l]);
                }
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            for net in b.subnets_mut() {
                let n = net.weights.len();
                let (ws, bs) = (&mut net.weights, &mut net.biases);
                let mut wi = ws.iter_mut();
                let mut bi = bs.iter_mut();
                for _ in 0..n {
                    out.push(wi.next().unwrap());
                    out.push(bi.next().unwrap());
                }
            }
        }
        out
    }

    /// Flatten per-block gradients into the [`Self::params`] order.
    pub fn flatten_grads(grads: Vec<BlockGrad>) -> Vec<DMatrix<f64>> {
        let mut out = Vec::new();
        for g in grads {
            for net in [g.s1, g.s2, g.t1, g.t2] {
                for (w, b) in net.weights.into_iter().zip(net.biases) {
                    out.push(w);
                    out.push(b);
                }
            }
        }
        out
    }
}

/// Plain feed-forward surrogate with the same normalization contract.
#[derive(Debug, Clone, PartialEq)]
pub struct DnnModel {
    pub mlp: Mlp,
    pub norm: NormStats,
    pub seed: u64,
}

impl DnnModel {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        width: usize,
        hidden_layers: usize,
        norm: NormStats,
        seed: u64,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden_layers + 2);
        sizes.push(in_dim);
        sizes.extend(std::iter::repeat(width).take(hidden_layers));
        sizes.push(out_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self { mlp: Mlp::new(&sizes, &mut rng, false)?, norm, seed })
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.mlp.forward(x)
    }

    pub fn params(&self) -> Vec<&DMatrix<f64>> {
        let mut out = Vec::new();
        for l in 0..self.mlp.weights.len() {
            out.push(&self.mlp.weights[l]);
            out.push(&self.mlp.biases[l]);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let n = self.mlp.weights.len();
        let mut out = Vec::new();
        let mut wi = self.mlp.weights.iter_mut();
        let mut bi = self.mlp.biases.iter_mut();
        for _ in 0..n {
            out.push(wi.next().unwrap());
            out.push(bi.next().unwrap());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::DesignBounds;
    use rand::Rng;

    fn norm() -> NormStats {
        NormStats::from_bounds(&DesignBounds::default(), 2200.0)
    }

    fn randomized_inn(in_dim: usize, out_dim: usize, seed: u64) -> InnModel {
        let mut model = InnModel::new(in_dim, out_dim, 3, 8, 2, 2.0, norm(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        for p in model.params_mut() {
            p.apply(|v| *v += 0.4 * super::super::mlp::normal(&mut rng));
        }
        model
    }

    #[test]
    fn fresh_model_is_a_permutation() {
        let model = InnModel::new(4, 4, 10, 16, 2, 2.0, norm(), 11).unwrap();
        let x = DMatrix::from_fn(4, 5, |i, j| (i * 5 + j) as f64 * 0.1);
        let y = model.forward(&x).unwrap();
        // zeroed subnets leave only the permutations: the multiset of values
        // per column is preserved
        for c in 0..5 {
            let mut a: Vec<f64> = x.column(c).iter().cloned().collect();
            let mut b: Vec<f64> = y.column(c).iter().cloned().collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn roundtrip_square_model() {
        let model = randomized_inn(4, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = DMatrix::from_fn(4, 1, |_, _| rng.gen_range(0.0..1.0));
            let y = model.forward(&x).unwrap();
            let back = model.inverse(&y).unwrap();
            assert!((&back - &x).amax() < 1e-6, "roundtrip {}", (&back - &x).amax());
        }
    }

    #[test]
    fn padding_narrow_input_roundtrips() {
        // in 2 < out 4: zero-padded input channels
        let model = randomized_inn(2, 4, 17);
        assert_eq!(model.dim(), 4);
        assert_eq!(model.latent_dim(), 0);
        let x = DMatrix::from_fn(2, 3, |i, j| 0.2 * (i + j) as f64);
        let y = model.forward(&x).unwrap();
        assert_eq!(y.nrows(), 4);
        // inverting the padded output recovers the padded input exactly
        let x_full = model.inverse_full(&model.pad_output(&y).unwrap()).unwrap();
        assert!((x_full.rows(0, 2) - &x).amax() < 1e-8);
        assert!(x_full.rows(2, 2).amax() < 1e-8, "padding channels must return to zero");
    }

    #[test]
    fn latent_channels_on_narrow_output() {
        // in 4 > out 2: two latent channels on the output side
        let model = randomized_inn(4, 2, 23);
        assert_eq!(model.dim(), 4);
        assert_eq!(model.latent_dim(), 2);
        let x = DMatrix::from_fn(4, 2, |i, j| 0.15 * (i as f64) + 0.1 * (j as f64));
        let y = model.forward(&x).unwrap();
        assert_eq!(y.nrows(), 2);
        // reverse with zero latent gives a deterministic in-dim reconstruction
        let back = model.inverse(&y).unwrap();
        assert_eq!(back.nrows(), 4);
        // and a full roundtrip through the true latent values is exact
        let y_full = model.forward_full(&model.pad_input(&x).unwrap()).unwrap();
        let exact = model.inverse_full(&y_full).unwrap();
        assert!((exact.rows(0, 4) - &x).amax() < 1e-6);
    }

    #[test]
    fn odd_width_is_rejected() {
        assert!(InnModel::new(3, 3, 2, 8, 2, 2.0, norm(), 0).is_err());
    }

    #[test]
    fn composition_roundtrip_ten_blocks() {
        // perturbation sized so outputs stay at the O(1) scale of trained
        // models on normalized data
        let mut model = InnModel::new(4, 4, 10, 16, 2, 2.0, norm(), 41).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for p in model.params_mut() {
            p.apply(|v| *v += rng.gen_range(-0.15..0.15));
        }
        for _ in 0..100 {
            let x = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-0.2..1.2));
            let y = model.forward(&x).unwrap();
            let back = model.inverse(&y).unwrap();
            assert!((&back - &x).amax() < 1e-6);
        }
    }
}
