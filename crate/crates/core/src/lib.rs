//! Limiting-absorption solutions of scattering problems in periodic 2-D
//! waveguides, computed as contour integrals of quasi-periodic cell
//! solutions.
//!
//! The waveguide is the strip `R x (0, 1)` with a 1-periodic refractive index
//! `q` and a source `f` supported in the unit cell `(-1/2, 1/2] x (0, 1)`.

pub mod cell;
pub mod contour;
pub mod dense;
pub mod dispersion;
pub mod error;
pub mod expr;
pub mod fem;
pub mod fullguide;
pub mod halfguide;
pub mod medium;
pub mod mesh;
pub mod oracle;
pub mod quadrature;
pub mod sparse;

pub use cell::{CellOperator, CellProblem, CellSolution};
pub use error::{LapError, Result};
pub use medium::{MediumSpec, SourceSpec};
pub use mesh::{build_structured_mesh, UnitCellMesh};
pub use num_complex::Complex64;
