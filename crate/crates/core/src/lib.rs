//! Planning and simulation toolkit for splitting a domain-partitioned
//! workload across heterogeneous compute modules (e.g. a CPU cluster and a
//! GPU booster sharing one interconnect).
//!
//! The crate is organized around five concerns:
//!
//! - [`model`] — the performance model: device classes, the
//!   capacity-constrained min-max allocation solver, its brute-force oracle,
//!   bounds, and operation-domain classification.
//! - [`mesh`] — structured hexahedral element meshes, weighted rank
//!   assignment via recursive coordinate bisection, and gather-scatter
//!   communication volumes.
//! - [`sim`] — per-timestep runtime estimation (arithmetic, communication,
//!   and I/O phases) and timestep statistics.
//! - [`sweep`] — strong-scaling sweeps and the GPU:CPU weight search built
//!   on top of the other modules.
//! - [`scenario`] — machine/case description files and built-in presets.
//!
//! Sweep evaluation is data-parallel; the `parallel` feature (on by
//! default) backs it with rayon, otherwise a sequential fallback is used.
//! Results are ordered by input order either way.

pub mod exec;
pub mod mesh;
pub mod model;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod util;

pub use model::{
    brute_force_allocation, classify_domain, solve_allocation, tmin_unconstrained, Allocation,
    DeviceClass, OperationDomain, Workload,
};
pub use scenario::Scenario;
pub use sweep::{MachineModel, ScalingTable};
