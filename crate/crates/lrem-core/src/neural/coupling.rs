//! Affine coupling block with clamped scales and its exact inverse.
//!
//! Forward, on the two halves `u = [u1, u2]`:
//!
//! ```text
//! v1 = u1 .* exp(s2h(u2)) + t2(u2)
//! v2 = u2 .* exp(s1h(v1)) + t1(v1)
//! ```
//!
//! where `sh = alpha * tanh(s / alpha)` caps the log-scales so `exp` cannot
//! blow up while keeping the block exactly invertible:
//!
//! ```text
//! u2 = (v2 - t1(v1)) .* exp(-s1h(v1))
//! u1 = (v1 - t2(u2)) .* exp(-s2h(u2))
//! ```

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;

use super::mlp::{Mlp, MlpCache, MlpGrad};
use crate::{Error, Result};

/// Default clamp constant for the log-scales.
pub const DEFAULT_CLAMP: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlock {
    pub s1: Mlp,
    pub s2: Mlp,
    pub t1: Mlp,
    pub t2: Mlp,
    /// Scale clamp `alpha`.
    pub clamp: f64,
}

/// Intermediates of a cached forward pass.
pub struct BlockCache {
    u1: DMatrix<f64>,
    u2: DMatrix<f64>,
    v1: DMatrix<f64>,
    e2: DMatrix<f64>,
    e1: DMatrix<f64>,
    tanh2: DMatrix<f64>,
    tanh1: DMatrix<f64>,
    c_s2: MlpCache,
    c_t2: MlpCache,
    c_s1: MlpCache,
    c_t1: MlpCache,
}

/// Intermediates of a cached inverse pass (for inverse-direction training).
pub struct BlockInvCache {
    u1: DMatrix<f64>,
    u2: DMatrix<f64>,
    em1: DMatrix<f64>,
    em2: DMatrix<f64>,
    tanh1: DMatrix<f64>,
    tanh2: DMatrix<f64>,
    c_s1: MlpCache,
    c_t1: MlpCache,
    c_s2: MlpCache,
    c_t2: MlpCache,
}

/// Gradients for the four subnets.
pub struct BlockGrad {
    pub s1: MlpGrad,
    pub s2: MlpGrad,
    pub t1: MlpGrad,
    pub t2: MlpGrad,
}

impl CouplingBlock {
    /// Subnets `half -> width x hidden_layers -> half`, with zeroed output
    /// layers so a fresh block is the identity map.
    pub fn new(
        half_dim: usize,
        width: usize,
        hidden_layers: usize,
        clamp: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if clamp <= 0.0 {
            return Err(Error::Domain(format!("clamp must be positive, got {clamp}")));
        }
        let mut sizes = Vec::with_capacity(hidden_layers + 2);
        sizes.push(half_dim);
        sizes.extend(std::iter::repeat(width).take(hidden_layers));
        sizes.push(half_dim);
        Ok(Self {
            s1: Mlp::new(&sizes, rng, true)?,
            s2: Mlp::new(&sizes, rng, true)?,
            t1: Mlp::new(&sizes, rng, true)?,
            t2: Mlp::new(&sizes, rng, true)?,
            clamp,
        })
    }

    pub fn half_dim(&self) -> usize {
        self.s1.in_dim()
    }

    /// The four subnets in canonical order (s1, s2, t1, t2).
    pub fn subnets(&self) -> [&Mlp; 4] {
        [&self.s1, &self.s2, &self.t1, &self.t2]
    }

    pub fn subnets_mut(&mut self) -> [&mut Mlp; 4] {
        [&mut self.s1, &mut self.s2, &mut self.t1, &mut self.t2]
    }

    /// `alpha * tanh(s / alpha)` plus the tanh values (for gradients).
    fn clamped(&self, s: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let tanh = s.map(|v| (v / self.clamp).tanh());
        (tanh.map(|t| self.clamp * t), tanh)
    }

    fn split(&self, u: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let h = self.half_dim();
        if u.nrows() != 2 * h {
            return Err(Error::Shape(format!(
                "coupling block expects {} rows, got {}",
                2 * h,
                u.nrows()
            )));
        }
        Ok((u.rows(0, h).into_owned(), u.rows(h, h).into_owned()))
    }

    fn join(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
        out.rows_mut(0, a.nrows()).copy_from(a);
        out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
        out
    }

    pub fn forward(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (v, _) = self.forward_cached(u)?;
        Ok(v)
    }

    pub fn forward_cached(&self, u: &DMatrix<f64>) -> Result<(DMatrix<f64>, BlockCache)> {
        let (u1, u2) = self.split(u)?;
        let (s2_raw, c_s2) = self.s2.forward_cached(&u2)?;
        let (s2h, tanh2) = self.clamped(&s2_raw);
        let e2 = s2h.map(f64::exp);
        let (t2v, c_t2) = self.t2.forward_cached(&u2)?;
        let v1 = u1.component_mul(&e2) + &t2v;

        let (s1_raw, c_s1) = self.s1.forward_cached(&v1)?;
        let (s1h, tanh1) = self.clamped(&s1_raw);
        let e1 = s1h.map(f64::exp);
        let (t1v, c_t1) = self.t1.forward_cached(&v1)?;
        let v2 = u2.component_mul(&e1) + &t1v;

        let v = Self::join(&v1, &v2);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite value in coupling forward".into()));
        }
        Ok((v, BlockCache { u1, u2, v1, e2, e1, tanh2, tanh1, c_s2, c_t2, c_s1, c_t1 }))
    }

    pub fn inverse(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (u, _) = self.inverse_cached(v)?;
        Ok(u)
    }

    pub fn inverse_cached(&self, v: &DMatrix<f64>) -> Result<(DMatrix<f64>, BlockInvCache)> {
        let (v1, v2) = self.split(v)?;
        let (s1_raw, c_s1) = self.s1.forward_cached(&v1)?;
        let (s1h, tanh1) = self.clamped(&s1_raw);
        let em1 = s1h.map(|s| (-s).exp());
        let (t1v, c_t1) = self.t1.forward_cached(&v1)?;
        let u2 = (&v2 - &t1v).component_mul(&em1);

        let (s2_raw, c_s2) = self.s2.forward_cached(&u2)?;
        let (s2h, tanh2) = self.clamped(&s2_raw);
        let em2 = s2h.map(|s| (-s).exp());
        let (t2v, c_t2) = self.t2.forward_cached(&u2)?;
        let u1 = (&v1 - &t2v).component_mul(&em2);

        let u = Self::join(&u1, &u2);
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite value in coupling inverse".into()));
        }
        Ok((u, BlockInvCache { u1, u2, em1, em2, tanh1, tanh2, c_s1, c_t1, c_s2, c_t2 }))
    }

    /// Backprop through the forward map. `d_v` holds gradients w.r.t. `[v1, v2]`.
    pub fn backward(&self, cache: &BlockCache, d_v: &DMatrix<f64>) -> (BlockGrad, DMatrix<f64>) {
        let h = self.half_dim();
        let dv1_ext = d_v.rows(0, h).into_owned();
        let dv2 = d_v.rows(h, h).into_owned();

        // v2 = u2 .* e1 + t1(v1)
        let mut du2 = dv2.component_mul(&cache.e1);
        let mut d_s1raw = dv2.component_mul(&cache.u2).component_mul(&cache.e1);
        d_s1raw.zip_apply(&cache.tanh1, |d, t| *d *= 1.0 - t * t);
        let (g_s1, dv1_s) = self.s1.backward(&cache.c_s1, &d_s1raw);
        let (g_t1, dv1_t) = self.t1.backward(&cache.c_t1, &dv2);
        let dv1 = dv1_ext + dv1_s + dv1_t;

        // v1 = u1 .* e2 + t2(u2)
        let du1 = dv1.component_mul(&cache.e2);
        let mut d_s2raw = dv1.component_mul(&cache.u1).component_mul(&cache.e2);
        d_s2raw.zip_apply(&cache.tanh2, |d, t| *d *= 1.0 - t * t);
        let (g_s2, du2_s) = self.s2.backward(&cache.c_s2, &d_s2raw);
        let (g_t2, du2_t) = self.t2.backward(&cache.c_t2, &dv1);
        du2 += du2_s + du2_t;

        (BlockGrad { s1: g_s1, s2: g_s2, t1: g_t1, t2: g_t2 }, Self::join(&du1, &du2))
    }

    /// Backprop through the inverse map: gradients w.r.t. the subnet
    /// parameters plus the gradient w.r.t. the block input `[v1, v2]`.
    pub fn backward_inverse(
        &self,
        cache: &BlockInvCache,
        d_u: &DMatrix<f64>,
    ) -> (BlockGrad, DMatrix<f64>) {
        let h = self.half_dim();
        let du1 = d_u.rows(0, h).into_owned();
        let du2_ext = d_u.rows(h, h).into_owned();

        // u1 = (v1 - t2(u2)) .* em2, so d/d(s2_raw) pulls out -u1 (1 - tanh2^2)
        let mut dv1 = du1.component_mul(&cache.em2);
        let d_t2 = -du1.component_mul(&cache.em2);
        let mut d_s2raw = -du1.component_mul(&cache.u1);
        d_s2raw.zip_apply(&cache.tanh2, |d, t| *d *= 1.0 - t * t);
        let (g_t2, du2_t) = self.t2.backward(&cache.c_t2, &d_t2);
        let (g_s2, du2_s) = self.s2.backward(&cache.c_s2, &d_s2raw);
        let du2 = du2_ext + du2_t + du2_s;

        // u2 = (v2 - t1(v1)) .* em1
        let dv2 = du2.component_mul(&cache.em1);
        let d_t1 = -du2.component_mul(&cache.em1);
        let mut d_s1raw = -du2.component_mul(&cache.u2);
        d_s1raw.zip_apply(&cache.tanh1, |d, t| *d *= 1.0 - t * t);
        let (g_t1, dv1_t) = self.t1.backward(&cache.c_t1, &d_t1);
        let (g_s1, dv1_s) = self.s1.backward(&cache.c_s1, &d_s1raw);
        dv1 += dv1_t + dv1_s;

        (
            BlockGrad { s1: g_s1, s2: g_s2, t1: g_t1, t2: g_t2 },
            Self::join(&dv1, &dv2),
        )
    }

    /// Per-sample log-determinant of the forward Jacobian:
    /// `sum(s2h(u2)) + sum(s1h(v1))`.
    pub fn log_det(&self, u: &DMatrix<f64>) -> Result<Vec<f64>> {
        let (u1, u2) = self.split(u)?;
        let (s2h, _) = self.clamped(&self.s2.forward(&u2)?);
        let e2 = s2h.map(f64::exp);
        let v1 = u1.component_mul(&e2) + self.t2.forward(&u2)?;
        let (s1h, _) = self.clamped(&self.s1.forward(&v1)?);
        Ok((0..u.ncols())
            .map(|c| s2h.column(c).sum() + s1h.column(c).sum())
            .collect())
    }
}
