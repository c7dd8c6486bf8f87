//! Plate finite elements: assembly, Bloch-Floquet reduction, band eigensolve.

pub mod bloch;
pub mod element;

pub use bloch::{reduce, BlochTransform, ReducedSystem};
pub use element::{element_matrices, ElementMatrix, SHEAR_CORRECTION};

use crate::cell::{CellMesh, MaterialSet};
use crate::{linalg, Error, Result};

/// Degrees of freedom per node: (w, theta_x, theta_y).
pub const DOFS_PER_NODE: usize = 3;

/// Row-wise sparse symmetric matrix used for the global system.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, rows: vec![Vec::new(); n] }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.rows[i].push((j, v));
        }
    }

    /// Sort columns and merge duplicate entries.
    pub fn compress(&mut self) {
        for row in &mut self.rows {
            row.sort_unstable_by_key(|&(j, _)| j);
            let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match out.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => out.push((j, v)),
                }
            }
            *row = out;
        }
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    /// Largest |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut b = 0usize;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, _) in row {
                b = b.max(i.abs_diff(j));
            }
        }
        b
    }
}

/// Assembled global stiffness and mass for one cell mesh.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub k0: SparseMatrix,
    pub m0: SparseMatrix,
    pub n_dofs: usize,
}

/// Assemble the global Mindlin stiffness and mass matrices.
pub fn assemble(mesh: &CellMesh, mats: &MaterialSet) -> Result<SystemMatrices> {
    let n_dofs = mesh.n_nodes() * DOFS_PER_NODE;
    let mut k0 = SparseMatrix::zeros(n_dofs);
    let mut m0 = SparseMatrix::zeros(n_dofs);
    for (conn, &region) in mesh.elements.iter().zip(&mesh.regions) {
        let coords: [[f64; 2]; 4] = std::array::from_fn(|i| mesh.nodes[conn[i]]);
        let (ke, me) = element_matrices(mats.get(region), &coords)?;
        for (a, &na) in conn.iter().enumerate() {
            for (b, &nb) in conn.iter().enumerate() {
                for da in 0..DOFS_PER_NODE {
                    for db in 0..DOFS_PER_NODE {
                        let gi = na * DOFS_PER_NODE + da;
                        let gj = nb * DOFS_PER_NODE + db;
                        k0.add(gi, gj, ke[(a * DOFS_PER_NODE + da, b * DOFS_PER_NODE + db)]);
                        m0.add(gi, gj, me[(a * DOFS_PER_NODE + da, b * DOFS_PER_NODE + db)]);
                    }
                }
            }
        }
    }
    k0.compress();
    m0.compress();
    Ok(SystemMatrices { k0, m0, n_dofs })
}

/// The `n_modes` lowest angular frequencies (rad/s) of the reduced pencil,
/// ascending. Small negative eigenvalues from roundoff are clamped to zero.
pub fn solve_bands(red: &ReducedSystem, n_modes: usize) -> Result<Vec<f64>> {
    let dim = red.k_hat.nrows();
    if n_modes > dim {
        return Err(Error::Domain(format!(
            "requested {n_modes} modes from a {dim}-dimensional reduced system"
        )));
    }
    let lambdas = linalg::hermitian_gen_eigenvalues(&red.k_hat, &red.m_hat)?;
    let lambda_max = lambdas.iter().cloned().fold(0.0f64, f64::max);
    let floor = -1e-6 * lambda_max.max(1.0);
    let mut out = Vec::with_capacity(n_modes);
    for &l in lambdas.iter().take(n_modes) {
        if l < floor {
            return Err(Error::Numeric(format!(
                "eigenvalue {l:e} below the clamping floor {floor:e}; \
                 reduced system is not positive semi-definite"
            )));
        }
        out.push(l.max(0.0).sqrt());
    }
    Ok(out)
}
