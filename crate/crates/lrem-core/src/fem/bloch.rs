//! Bloch-Floquet periodic boundary conditions on the structured cell mesh.
//!
//! Boundary nodes split into the eight groups B, T, L, R, LB, RB, LT, RT plus
//! the interior I. The transform keeps `[q_I, q_B, q_L, q_LB]` as masters and
//! expresses the opposite edges through unit-modulus phase factors:
//! `q_T = e^{i k_y} q_B`, `q_R = e^{i k_x} q_L`, `q_RB = e^{i k_x} q_LB`,
//! `q_LT = e^{i k_y} q_LB`, `q_RT = e^{i (k_x + k_y)} q_LB`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{SystemMatrices, DOFS_PER_NODE};
use crate::cell::CellMesh;
use crate::{Error, Result};

/// Node-level Bloch transform `q = T q_hat` in compressed form: every full
/// node copies exactly one master node scaled by a phase.
#[derive(Debug, Clone)]
pub struct BlochTransform {
    pub kx: f64,
    pub ky: f64,
    /// Full node -> master slot.
    pub master_slot: Vec<usize>,
    /// Full node -> phase factor.
    pub phase: Vec<Complex64>,
    /// Master slot -> full node, ordered `[I, B, L, LB]`.
    pub masters: Vec<usize>,
}

impl BlochTransform {
    /// Build the transform for dimensionless wavenumbers (radians per cell).
    pub fn for_mesh(mesh: &CellMesh, kx: f64, ky: f64) -> Result<Self> {
        let nx = mesh.nx();
        let ny = mesh.ny();
        // Tensor grids always pair opposite edges; verify the spacing anyway so
        // hand-built meshes cannot slip through with mismatched layouts.
        for (lines, name) in [(&mesh.x_lines, "x"), (&mesh.y_lines, "y")] {
            if lines.len() < 2 {
                return Err(Error::Mesh(format!("no elements along {name}")));
            }
        }

        let n_nodes = mesh.n_nodes();
        let px = Complex64::from_polar(1.0, kx);
        let py = Complex64::from_polar(1.0, ky);
        let pxy = Complex64::from_polar(1.0, kx + ky);
        let one = Complex64::new(1.0, 0.0);

        // master slots ordered [interior, bottom, left, corner]
        let mut masters = Vec::new();
        let mut slot_of_node = vec![usize::MAX; n_nodes];
        let push_master = |node: usize, masters: &mut Vec<usize>, slots: &mut Vec<usize>| {
            slots[node] = masters.len();
            masters.push(node);
        };
        for j in 1..ny {
            for i in 1..nx {
                push_master(mesh.node_index(i, j), &mut masters, &mut slot_of_node);
            }
        }
        for i in 1..nx {
            push_master(mesh.node_index(i, 0), &mut masters, &mut slot_of_node);
        }
        for j in 1..ny {
            push_master(mesh.node_index(0, j), &mut masters, &mut slot_of_node);
        }
        push_master(mesh.node_index(0, 0), &mut masters, &mut slot_of_node);

        let mut master_slot = vec![usize::MAX; n_nodes];
        let mut phase = vec![one; n_nodes];
        for j in 0..=ny {
            for i in 0..=nx {
                let node = mesh.node_index(i, j);
                let (master, ph) = match (i, j) {
                    (0, 0) => (node, one),
                    (i, 0) if i == nx => (mesh.node_index(0, 0), px),
                    (0, j) if j == ny => (mesh.node_index(0, 0), py),
                    (i, j) if i == nx && j == ny => (mesh.node_index(0, 0), pxy),
                    (_, 0) => (node, one),
                    (0, _) => (node, one),
                    (i, j) if j == ny => (mesh.node_index(i, 0), py),
                    (i, j) if i == nx => (mesh.node_index(0, j), px),
                    _ => (node, one),
                };
                master_slot[node] = slot_of_node[master];
                phase[node] = ph;
            }
        }
        Ok(Self { kx, ky, master_slot, phase, masters })
    }

    /// Number of master DOFs.
    pub fn reduced_dim(&self) -> usize {
        self.masters.len() * DOFS_PER_NODE
    }

    /// Materialize the dense transform matrix (tests and diagnostics only).
    pub fn dense(&self) -> DMatrix<Complex64> {
        let n = self.master_slot.len();
        let mut t = DMatrix::zeros(n * DOFS_PER_NODE, self.reduced_dim());
        for node in 0..n {
            for d in 0..DOFS_PER_NODE {
                t[(node * DOFS_PER_NODE + d, self.master_slot[node] * DOFS_PER_NODE + d)] =
                    self.phase[node];
            }
        }
        t
    }
}

/// The Bloch-reduced Hermitian pencil.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub k_hat: DMatrix<Complex64>,
    pub m_hat: DMatrix<Complex64>,
}

/// Fold the global matrices through the transform: `K_hat = T^H K0 T`,
/// `M_hat = T^H M0 T`, symmetrized to suppress roundoff.
pub fn reduce(sys: &SystemMatrices, t: &BlochTransform) -> ReducedSystem {
    let dim = t.reduced_dim();
    let mut k_hat = DMatrix::<Complex64>::zeros(dim, dim);
    let mut m_hat = DMatrix::<Complex64>::zeros(dim, dim);
    let d = DOFS_PER_NODE;
    for (mat, out) in [(&sys.k0, &mut k_hat), (&sys.m0, &mut m_hat)] {
        for gi in 0..sys.n_dofs {
            let (node_i, di) = (gi / d, gi % d);
            let row_phase = t.phase[node_i].conj();
            let mi = t.master_slot[node_i] * d + di;
            for &(gj, v) in mat.row(gi) {
                let (node_j, dj) = (gj / d, gj % d);
                let mj = t.master_slot[node_j] * d + dj;
                out[(mi, mj)] += row_phase * v * t.phase[node_j];
            }
        }
        // hermitize: (A + A^H) / 2
        for i in 0..dim {
            for j in 0..=i {
                let avg = 0.5 * (out[(i, j)] + out[(j, i)].conj());
                out[(i, j)] = avg;
                out[(j, i)] = avg.conj();
            }
        }
    }
    ReducedSystem { k_hat, m_hat }
}
