//! Neural surrogates: an invertible network for inverse retrieval and a plain
//! DNN benchmark, trained from scratch with ADAM on L1 loss.

pub mod coupling;
pub mod inn;
pub mod metrics;
pub mod mlp;
pub mod train;

pub use coupling::{CouplingBlock, DEFAULT_CLAMP};
pub use inn::{DnnModel, InnModel};
pub use metrics::{median, rmse_per_sample};
pub use mlp::Mlp;
pub use train::{train, TrainConfig, TrainReport, Trainable};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dataset::NormStats;
use crate::{Error, Result};

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorData {
    rows: usize,
    cols: usize,
    /// Row-major values.
    data: Vec<f64>,
}

impl TensorData {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Data(format!(
                "tensor payload {} != {} x {}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_fn(self.rows, self.cols, |r, c| self.data[r * self.cols + c]))
    }
}

/// On-disk model representation (JSON). Reload is bit-exact.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: String,
    in_dim: usize,
    out_dim: usize,
    n_blocks: usize,
    /// Layer sizes of each coupling subnet (INN) or of the whole net (DNN).
    layer_sizes: Vec<usize>,
    clamp: f64,
    perms: Vec<Vec<usize>>,
    norm: NormStats,
    seed: u64,
    tensors: Vec<TensorData>,
}

fn write_model(file: &ModelFile, path: &Path) -> Result<()> {
    let json = serde_json::to_string(file).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

fn read_model(path: &Path, expect_kind: &str) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("model parse: {e}")))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Data(format!(
            "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
            file.format_version
        )));
    }
    if file.kind != expect_kind {
        return Err(Error::Data(format!(
            "model file holds a {:?}, expected {:?}",
            file.kind, expect_kind
        )));
    }
    Ok(file)
}

fn fill_params(params: Vec<&mut DMatrix<f64>>, tensors: &[TensorData]) -> Result<()> {
    if params.len() != tensors.len() {
        return Err(Error::Data(format!(
            "model file has {} tensors, model needs {}",
            tensors.len(),
            params.len()
        )));
    }
    for (p, t) in params.into_iter().zip(tensors) {
        let m = t.to_matrix()?;
        if m.shape() != p.shape() {
            return Err(Error::Data(format!(
                "tensor shape {:?} != expected {:?}",
                m.shape(),
                p.shape()
            )));
        }
        p.copy_from(&m);
    }
    Ok(())
}

impl InnModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let subnet = &self.blocks[0].s1;
        let mut layer_sizes = vec![subnet.in_dim()];
        layer_sizes.extend(subnet.weights.iter().map(|w| w.nrows()));
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: "inn".into(),
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            n_blocks: self.blocks.len(),
            layer_sizes,
            clamp: self.blocks[0].clamp,
            perms: self.perms.clone(),
            norm: self.norm,
            seed: self.seed,
            tensors: self.params().iter().map(|p| TensorData::from_matrix(p)).collect(),
        };
        write_model(&file, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = read_model(path, "inn")?;
        if file.layer_sizes.len() < 3 {
            return Err(Error::Data("subnet needs at least one hidden layer".into()));
        }
        let width = file.layer_sizes[1];
        let hidden = file.layer_sizes.len() - 2;
        let mut model = InnModel::new(
            file.in_dim,
            file.out_dim,
            file.n_blocks,
            width,
            hidden,
            file.clamp,
            file.norm,
            file.seed,
        )?;
        if file.perms.len() != model.perms.len()
            || file.perms.iter().any(|p| {
                let mut seen = vec![false; model.dim()];
                p.len() != model.dim() || p.iter().any(|&i| i >= model.dim() || std::mem::replace(&mut seen[i], true))
            })
        {
            return Err(Error::Data("invalid permutation table in model file".into()));
        }
        model.perms = file.perms.clone();
        fill_params(model.params_mut(), &file.tensors)?;
        Ok(model)
    }
}

impl DnnModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut layer_sizes = vec![self.mlp.in_dim()];
        layer_sizes.extend(self.mlp.weights.iter().map(|w| w.nrows()));
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: "dnn".into(),
            in_dim: self.mlp.in_dim(),
            out_dim: self.mlp.out_dim(),
            n_blocks: 0,
            layer_sizes,
            clamp: 0.0,
            perms: Vec::new(),
            norm: self.norm,
            seed: self.seed,
            tensors: self.params().iter().map(|p| TensorData::from_matrix(p)).collect(),
        };
        write_model(&file, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = read_model(path, "dnn")?;
        if file.layer_sizes.len() < 3 {
            return Err(Error::Data("network needs at least one hidden layer".into()));
        }
        let width = file.layer_sizes[1];
        let hidden = file.layer_sizes.len() - 2;
        let mut model =
            DnnModel::new(file.in_dim, file.out_dim, width, hidden, file.norm, file.seed)?;
        fill_params(model.params_mut(), &file.tensors)?;
        Ok(model)
    }
}
