//! Risk-aware allocation of actuator protections for uncertain closed-loop
//! LTI systems under stealthy false-data injection.
//!
//! The crate is organised as a pipeline:
//!
//! * [`model`] assembles closed loops for sampled uncertainties and masks,
//! * [`impact`] certifies the worst stealthy attack energy with SDPs,
//! * [`risk`] turns per-sample impacts into CVaR, VaR, worst-case or mean,
//! * [`allocation`] chooses protections by coupled SDP, exhaustive or greedy search,
//! * [`simulate`] replays step attacks in the time domain.

// Links the system BLAS/LAPACK used by the SDP solver.
extern crate openblas_src as _;

pub mod allocation;
pub mod error;
pub mod impact;
pub mod linalg;
pub mod matrix_serde;
pub mod model;
pub mod presets;
pub mod risk;
pub mod sdp;
pub mod simulate;

pub use error::{Error, Result};
