//! Higher-order invariants of minimal surfaces in spheres.
//!
//! The crate samples a conformal immersion `f: M -> S^n` on a chart, builds the
//! osculating flag and the higher fundamental forms, and computes curvature
//! ellipses, Hopf differentials and a-invariants. On top of that it tests the
//! classification predicates (exceptional, superconformal, superminimal, Ricci
//! condition, pseudoholomorphic type in S^6, self-duality) and reconstructs
//! surfaces from a-invariant data by integrating moving frames.

// Index loops mirror the component formulas; `!(a >= b)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cayley;
pub mod chart;
pub mod classify;
pub mod config;
pub mod error;
pub mod flag;
pub mod gallery;
pub mod invariants;
pub mod io;
pub mod jet2;
pub mod polar;
pub mod reconstruct;
pub mod report;
pub mod verify;

pub use analysis::{analyze, analyze_samples, Analysis};
pub use chart::{ChartGrid, ChartSpec, JetTable, MetricField, Topology};
pub use config::{RunConfig, Tolerances};
pub use error::{Error, Result};
pub use gallery::{gallery_surface, GallerySurface};

pub use num_complex::Complex64;
