use thiserror::Error;

use crate::sdp::SolveStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model error: {0}")]
    Model(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The impact program has no finite optimum: either a stealthy attack with
    /// unbounded performance energy exists or the closed loop is not stable.
    #[error("impact unbounded or assumptions violated (solver status: {status:?})")]
    ImpactUnbounded { status: SolveStatus },

    #[error("solver failure ({status:?}): {detail}")]
    Solver { status: SolveStatus, detail: String },

    #[error("empty sample set")]
    EmptySamples,

    #[error("allocation failed: {0}")]
    Allocation(String),

    #[error("search space of {subsets} subsets exceeds the cap of {cap}")]
    SearchTooLarge { subsets: u128, cap: u128 },

    #[error("simulation diverged at t = {time}")]
    Simulation { time: f64 },

    #[error("dump parse error at line {line}: {msg}")]
    Dump { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
