//! Level-set simulation of nonlocal front evolutions together with a
//! harness that measures the quantitative estimates such evolutions obey.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] and [`contour`]: sampled fields, upwind/curvature stencils,
//!   marching squares and area measures.
//! * [`geometry`]: admissible initial data, direction fields and push maps.
//! * [`solver`]: explicit monotone stepping of the frozen-speed equation.
//! * [`coupling`]: dislocation, FitzHugh–Nagumo and volume speed laws.
//! * [`weak`]: fixed-point weak solutions and the uniqueness probe.
//! * [`verify`]: one empirical report per estimate.
//! * [`config`] and [`runner`]: scenario files, presets and artifact output.

pub mod config;
pub mod contour;
pub mod coupling;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod runner;
pub mod solver;
pub mod verify;
pub mod weak;

pub use contour::{band_measure, extract_contour, lebesgue_measure, FrontContour, Polyline};
pub use error::{FrontError, Result};
pub use grid::{
    curvature_term, normalized_curvature, upwind_gradient_norm, GridSpec, ScalarField,
};
