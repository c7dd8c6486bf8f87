//! Mini-batch ADAM training on mean-absolute-error loss.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::inn::{DnnModel, InnModel};
use crate::{Error, Result};

/// Training hyperparameters. The defaults follow the network settings table:
/// ADAM at learning rate 1e-4 on L1 loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of the training set held out for early stopping.
    pub val_fraction: f64,
    /// Stop after this many epochs without validation improvement.
    pub patience: usize,
    /// Minimum improvement that resets the patience counter.
    pub min_delta: f64,
    /// Add an inverse-reconstruction L1 term when training an INN.
    pub bidirectional: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 2000,
            batch_size: 128,
            seed: 0,
            val_fraction: 0.1,
            patience: 200,
            min_delta: 1e-5,
            bidirectional: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.epochs > 0
            && self.batch_size > 0
            && (0.0..0.5).contains(&self.val_fraction)
            && self.min_delta >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid training config: {self:?}")))
        }
    }
}

/// Loss history and early-stopping outcome of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// ADAM state over a flat list of parameter tensors.
struct Adam {
    m: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
    t: usize,
}

impl Adam {
    fn new(shapes: &[&DMatrix<f64>]) -> Self {
        Self {
            m: shapes.iter().map(|p| DMatrix::zeros(p.nrows(), p.ncols())).collect(),
            v: shapes.iter().map(|p| DMatrix::zeros(p.nrows(), p.ncols())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, cfg: &TrainConfig, params: &mut [&mut DMatrix<f64>], grads: &[DMatrix<f64>]) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..g.len() {
                let gi = g[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Mean absolute error over all entries, plus its gradient.
fn l1_loss(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let n = (pred.nrows() * pred.ncols()) as f64;
    let mut grad = DMatrix::zeros(pred.nrows(), pred.ncols());
    let mut loss = 0.0;
    for i in 0..pred.len() {
        let d = pred[i] - truth[i];
        loss += d.abs();
        grad[i] = d.signum() / n;
    }
    (loss / n, grad)
}

/// Abstraction over the two trainable model kinds.
pub trait Trainable {
    /// Forward loss and flat parameter gradients on one batch.
    fn loss_and_grads(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, bidirectional: bool)
        -> Result<(f64, Vec<DMatrix<f64>>)>;
    /// Forward loss only (validation).
    fn loss(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64>;
    fn params(&self) -> Vec<&DMatrix<f64>>;
    fn params_mut(&mut self) -> Vec<&mut DMatrix<f64>>;
    fn snapshot(&self) -> Vec<DMatrix<f64>>;
    fn restore(&mut self, snap: &[DMatrix<f64>]);
}

impl Trainable for InnModel {
    fn loss_and_grads(
        &self,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        bidirectional: bool,
    ) -> Result<(f64, Vec<DMatrix<f64>>)> {
        let x_full = self.pad_input(x)?;
        let (pred_full, cache) = self.forward_cached(&x_full)?;
        let pred = pred_full.rows(0, self.out_dim).into_owned();
        let (mut loss, grad_out) = l1_loss(&pred, y);
        // latent rows carry no loss
        let mut d_full = DMatrix::zeros(self.dim(), grad_out.ncols());
        d_full.rows_mut(0, self.out_dim).copy_from(&grad_out);
        let (block_grads, _) = self.backward(&cache, &d_full);
        let mut flat = InnModel::flatten_grads(block_grads);

        if bidirectional {
            let y_full = self.pad_output(y)?;
            let (recon_full, inv_cache) = self.inverse_cached(&y_full)?;
            let recon = recon_full.rows(0, self.in_dim).into_owned();
            let (inv_loss, inv_grad) = l1_loss(&recon, x);
            loss += inv_loss;
            let mut d_x_full = DMatrix::zeros(self.dim(), inv_grad.ncols());
            d_x_full.rows_mut(0, self.in_dim).copy_from(&inv_grad);
            let inv_flat = InnModel::flatten_grads(self.backward_inverse(&inv_cache, &d_x_full));
            for (a, b) in flat.iter_mut().zip(inv_flat) {
                *a += b;
            }
        }
        Ok((loss, flat))
    }

    fn loss(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        Ok(l1_loss(&self.forward(x)?, y).0)
    }

    fn params(&self) -> Vec<&DMatrix<f64>> {
        InnModel::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        InnModel::params_mut(self)
    }

    fn snapshot(&self) -> Vec<DMatrix<f64>> {
        InnModel::params(self).into_iter().cloned().collect()
    }

    fn restore(&mut self, snap: &[DMatrix<f64>]) {
        for (p, s) in InnModel::params_mut(self).into_iter().zip(snap) {
            p.copy_from(s);
        }
    }
}

impl Trainable for DnnModel {
    fn loss_and_grads(
        &self,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        _bidirectional: bool,
    ) -> Result<(f64, Vec<DMatrix<f64>>)> {
        let (pred, cache) = self.mlp.forward_cached(x)?;
        let (loss, grad_out) = l1_loss(&pred, y);
        let (grads, _) = self.mlp.backward(&cache, &grad_out);
        let mut flat = Vec::new();
        for (w, b) in grads.weights.into_iter().zip(grads.biases) {
            flat.push(w);
            flat.push(b);
        }
        Ok((loss, flat))
    }

    fn loss(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        Ok(l1_loss(&self.forward(x)?, y).0)
    }

    fn params(&self) -> Vec<&DMatrix<f64>> {
        DnnModel::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        DnnModel::params_mut(self)
    }

    fn snapshot(&self) -> Vec<DMatrix<f64>> {
        DnnModel::params(self).into_iter().cloned().collect()
    }

    fn restore(&mut self, snap: &[DMatrix<f64>]) {
        for (p, s) in DnnModel::params_mut(self).into_iter().zip(snap) {
            p.copy_from(s);
        }
    }
}

fn gather(data: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(data.nrows(), idx.len());
    for (c, &i) in idx.iter().enumerate() {
        out.column_mut(c).copy_from(&data.column(i));
    }
    out
}

/// Train a model on column-batched `(x, y)` data. Deterministic for a given
/// seed; the best-validation parameters are restored on return.
pub fn train<M: Trainable>(
    model: &mut M,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let n = x.ncols();
    if y.ncols() != n || n < 2 {
        return Err(Error::Data(format!(
            "training data with {} inputs and {} outputs",
            n,
            y.ncols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let n_val = ((n as f64 * cfg.val_fraction) as usize).min(n - 1);
    let (val_idx, train_idx) = idx.split_at(n_val);
    let (x_val, y_val) = (gather(x, val_idx), gather(y, val_idx));
    let mut order: Vec<usize> = train_idx.to_vec();

    let mut adam = Adam::new(&model.params());
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        epochs_run: 0,
    };
    let mut best_val = f64::INFINITY;
    let mut best_snap = model.snapshot();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = gather(x, chunk);
            let yb = gather(y, chunk);
            let (loss, grads) = model.loss_and_grads(&xb, &yb, cfg.bidirectional)?;
            if !loss.is_finite() {
                return Err(Error::Train { epoch, message: format!("loss diverged to {loss}") });
            }
            adam.step(cfg, &mut model.params_mut(), &grads);
            epoch_loss += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = epoch_loss / seen as f64;
        let val_loss = if n_val > 0 { model.loss(&x_val, &y_val)? } else { train_loss };
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        report.epochs_run = epoch + 1;

        if val_loss < best_val - cfg.min_delta {
            best_val = val_loss;
            report.best_epoch = epoch;
            best_snap = model.snapshot();
        } else if epoch - report.best_epoch >= cfg.patience {
            break;
        }
    }
    model.restore(&best_snap);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::DesignBounds;
    use crate::dataset::NormStats;

    fn norm() -> NormStats {
        NormStats::from_bounds(&DesignBounds::default(), 2200.0)
    }

    fn toy_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 3e-3,
            epochs: 500,
            batch_size: 16,
            seed,
            val_fraction: 0.2,
            patience: 500,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn constant_dataset_drives_loss_to_zero() {
        let n = 64;
        let x = DMatrix::from_fn(4, n, |i, _| 0.2 + 0.1 * i as f64);
        let y = DMatrix::from_fn(4, n, |i, _| 0.7 - 0.05 * i as f64);
        let mut dnn = DnnModel::new(4, 4, 16, 2, norm(), 3).unwrap();
        let report = train(&mut dnn, &x, &y, &toy_cfg(1)).unwrap();
        let final_loss = dnn.loss(&x, &y).unwrap();
        assert!(
            final_loss < 1e-2,
            "constant fit should converge, got {final_loss} after {} epochs",
            report.epochs_run
        );
    }

    #[test]
    fn same_seed_gives_bitwise_identical_history() {
        let n = 40;
        let x = DMatrix::from_fn(4, n, |i, j| ((i * 31 + j * 7) % 10) as f64 / 10.0);
        let y = DMatrix::from_fn(4, n, |i, j| ((i * 13 + j * 3) % 10) as f64 / 10.0);
        let run = |seed: u64| {
            let mut inn = InnModel::new(4, 4, 2, 8, 2, 2.0, norm(), 5).unwrap();
            let cfg = TrainConfig { epochs: 20, batch_size: 8, seed, ..TrainConfig::default() };
            train(&mut inn, &x, &y, &cfg).unwrap()
        };
        let a = run(9);
        let b = run(9);
        assert_eq!(a.train_loss, b.train_loss);
        assert_eq!(a.val_loss, b.val_loss);
        let c = run(10);
        assert_ne!(a.train_loss, c.train_loss);
    }

    #[test]
    fn inn_keeps_invertibility_through_training() {
        let n = 60;
        let x = DMatrix::from_fn(4, n, |i, j| ((i + j) % 7) as f64 / 7.0);
        let y = x.map(|v| (v * 1.7).sin() * 0.4 + 0.5);
        let mut inn = InnModel::new(4, 4, 3, 8, 2, 2.0, norm(), 7).unwrap();
        train(&mut inn, &x, &y, &toy_cfg(2)).unwrap();
        let probe = DMatrix::from_fn(4, 50, |i, j| ((i * j + 3) % 11) as f64 / 11.0);
        let back = inn.inverse(&inn.forward(&probe).unwrap()).unwrap();
        assert!((&back - &probe).amax() < 1e-6);
    }

    #[test]
    fn bidirectional_mode_trains() {
        let n = 32;
        let x = DMatrix::from_fn(4, n, |i, j| ((i * 5 + j) % 9) as f64 / 9.0);
        let y = x.map(|v| 0.8 * v + 0.1);
        let mut inn = InnModel::new(4, 4, 2, 8, 2, 2.0, norm(), 11).unwrap();
        let cfg = TrainConfig {
            bidirectional: true,
            epochs: 60,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 4,
            ..TrainConfig::default()
        };
        let report = train(&mut inn, &x, &y, &cfg).unwrap();
        assert!(report.train_loss.last().unwrap() < &report.train_loss[0]);
    }
}
