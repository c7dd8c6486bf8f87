//! Inverse design of 2D locally resonant elastic metamaterial (LREM) unit cells.
//!
//! The crate covers the full design loop:
//!
//! - [`cell`] — unit-cell parameterization, mass, and conforming structured meshing
//! - [`fem`] — Mindlin plate elements, assembly, Bloch-Floquet reduction, eigensolve
//! - [`bands`] — IBZ sweeps, band structures, bandgap extraction
//! - [`dataset`] — design-space sampling, labeling, normalization, persistence
//! - [`neural`] — invertible neural network (affine coupling) and DNN surrogate
//! - [`design`] — INN-based retrieval plus SQP mass minimization under a bandgap constraint
//! - [`verify`] — finite 8x8 plate harmonic response and transmissibility
//!
//! Frequencies are in Hz, cell coordinates in mm, material properties in SI
//! units, and masses in grams unless noted otherwise.

pub mod bands;
pub mod cell;
pub mod config;
pub mod dataset;
pub mod design;
pub mod fem;
pub mod linalg;
pub mod neural;
pub mod plot;
pub mod verify;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented domain bound (design bounds, point outside cell, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// Bad element geometry (inverted or degenerate element).
    #[error("geometry error: {0}")]
    Geometry(String),
    /// Inconsistent mesh (mismatched edge layouts, merge ambiguity, ...).
    #[error("mesh error: {0}")]
    Mesh(String),
    /// Numerical failure (eigensolver non-convergence, singular system, non-finite value).
    #[error("numerical error: {0}")]
    Numeric(String),
    /// Shape mismatch between arrays or network layers.
    #[error("shape error: {0}")]
    Shape(String),
    /// Invalid or inconsistent data (normalization ranges, malformed files, ...).
    #[error("data error: {0}")]
    Data(String),
    /// Training failure (divergence).
    #[error("training error at epoch {epoch}: {message}")]
    Train { epoch: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Coarse category used by the CLI for exit codes and by the C API for error codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain(_) | Error::Shape(_) | Error::Data(_) => ErrorKind::InvalidInput,
            Error::Geometry(_) | Error::Mesh(_) | Error::Numeric(_) | Error::Train { .. } => {
                ErrorKind::Numeric
            }
            Error::Io(_) => ErrorKind::Io,
        }
    }
}

/// Error category for FFI/CLI mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    InvalidInput,
    Numeric,
    Io,
}
