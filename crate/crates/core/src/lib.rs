//! Training toolkit for projection-based reduced-order models of parametric
//! PDEs, built around three accelerators for greedy sampling:
//!
//! * incremental empirical test spaces via hierarchical approximate POD,
//! * progressive empirical quadrature with warm-started non-negative
//!   least squares,
//! * two-fidelity seeding of the greedy loop from a coarse-mesh surrogate.
//!
//! The crate ships two desk-scale high-fidelity models (a steady nonlinear
//! reaction-diffusion rod and a quasi-static creep bar with internal
//! variables) so the full training pipelines can run end to end and be
//! compared: standard vs. incremental vs. multi-fidelity.

pub mod compress;
pub mod config;
pub mod driver;
pub mod error;
pub mod hyper;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod nnls;
pub mod params;
pub mod persist;
pub mod rom;

pub use compress::{PodBasis, PodTarget, Rob, TestSpaceState};
pub use config::{ModelKind, RunConfig};
pub use driver::{GreedyConfig, GreedyTrace, GreedyVariant};
pub use error::CoreError;
pub use hyper::{EqSystem, QuadRule};
pub use linalg::{EuclideanIp, InnerProduct, MatrixIp};
pub use mesh::{build_mesh_hierarchy, Mesh};
pub use model::{HfField, NormKind};
pub use nnls::{nnls_solve, NnlsProblem, NnlsResult};
pub use params::{tensor_grid, AxisSpacing, GridSpec, ParamBox, ParamVec};
pub use rom::{GnSettings, SteadyRom, UnsteadyRom};

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
