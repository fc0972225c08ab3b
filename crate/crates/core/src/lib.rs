//! Numerical toolkit for a 2-D stationary radiative transport coefficient
//! problem: a Volterra-type forward solver over a rectangle illuminated from a
//! source segment, and reconstruction of the attenuation coefficient from
//! partial boundary data by minimizing a Carleman-weighted least-squares
//! functional over a truncated spectral expansion in the source variable.

pub mod assembly;
pub mod basis;
pub mod config;
pub mod error;
pub mod forward;
pub mod geom;
pub mod grid;
pub mod inversion;
pub mod io;
pub mod phantom;
pub mod quad;
pub mod source;

pub use config::{DerivMode, ExperimentConfig};
pub use error::{Result, RteError};
pub use grid::{
    build_grids, BoundaryTrace, Grid2D, GridPurpose, Radiance, ScalarField2D, Side, SourceGrid,
};
