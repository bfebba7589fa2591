//! Training physics-enhanced neural ODEs by direct collocation.
//!
//! The continuous problem (fit ODE right-hand sides containing neural or
//! rational surrogate terms to sampled trajectories) is transcribed into a
//! sparse nonlinear program on flipped Legendre-Gauss-Radau collocation
//! grids and solved with the built-in primal-dual interior-point method.
//! Every stage is deterministic for a fixed seed and thread count, and the
//! parallel callback evaluation is bit-identical across thread counts.

pub mod autodiff;
pub mod collocation;
pub mod data;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod problems;
pub mod simulate;
pub mod solver;
pub mod transcription;
