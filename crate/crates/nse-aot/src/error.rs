//! Error taxonomy shared by the solver, the assimilation layer, and the CLI.
//!
//! The CLI maps these onto process exit codes: configuration problems exit
//! with 2, failed verdicts (a check that ran and came out negative) with 1.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration (bad grid, malformed key, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite coefficients appeared during time integration.
    #[error("solution blew up at t = {time}: {detail}")]
    Blowup { time: f64, detail: String },

    /// A stability guard (CFL or explicit nudging bound) was violated.
    #[error("stability guard violated at t = {time}: {detail}")]
    Unstable { time: f64, detail: String },

    /// A feasibility condition has no solution (empty mu window, failed
    /// scheduling assumption). Carries the quantitative gap.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A verification run completed but the checked property failed.
    #[error("verdict failure: {0}")]
    Verdict(String),

    /// Malformed snapshot / observation record / manifest.
    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
