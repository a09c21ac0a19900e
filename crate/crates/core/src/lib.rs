//! Decentralized state-feedback synthesis for interval type-2 Takagi-Sugeno
//! fuzzy large-scale systems.
//!
//! The crate builds membership-function-dependent LMI feasibility problems
//! from an IT2 T-S model of N interconnected subsystems, solves them,
//! recovers decentralized gains, simulates the closed loop and certifies
//! extended-dissipativity performance on trajectories.
//!
//! Module map:
//! - [`fuzzy_model`]: IT2 sets, rule bases, type-reduced membership grades.
//! - [`fou_partition`]: state-box gridding and sub-FOU corner-constant tables.
//! - [`lmi_core`]: affine matrix-inequality assembly, Schur lifting and the
//!   semidefinite feasibility backend plus an eigenvalue audit.
//! - [`synthesis`]: the two LMI families, gain recovery, gamma bisection.
//! - [`dissipativity`]: performance presets, supply rates, trajectory
//!   certification and the two bounding lemmas.
//! - [`simulate`]: fixed-step RK4 integration of the closed/open loop.
//! - [`bench_pendulum`]: the double-inverted-pendulum benchmark.
//! - [`config`]: JSON configuration schemas and report types.

pub mod bench_pendulum;
pub mod config;
pub mod dissipativity;
pub mod fou_partition;
pub mod fuzzy_model;
pub mod lmi_core;
pub mod par;
pub mod simulate;
pub mod synthesis;
