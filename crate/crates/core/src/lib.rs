//! Simulation and numerical solvers for a system of particles that move
//! right on the real line by jumps, where a particle's jump-acceptance
//! probability is a decreasing function of its location quantile within
//! the empirical distribution.
//!
//! The crate has four computational layers:
//!
//! * [`kernels`] — jump-size laws, rate curves, model parameters, the
//!   drift speed they induce, and the closed-form reference wave for
//!   exponential jumps with a power rate curve.
//! * [`particle`] — event-driven stochastic simulation of the n-particle
//!   system, with rank maintenance in an order-statistic tree.
//! * [`meanfield`] — explicit time integration of the deterministic
//!   integro-differential evolution of the location CDF, with
//!   conservation-law and wave-distance diagnostics.
//! * [`frame`] and [`wave`] — deterministic computation of steady wave
//!   profiles: first the regulated finite-frame profile via a forward
//!   Volterra march with atom-mass bisection, then the infinite-line
//!   profile by tuning the frame speed so the median sits at 0 and
//!   growing the frame.
//!
//! Supporting modules: [`config`] (JSON run configuration), [`rng`]
//! (named deterministic RNG streams), [`io`] (CSV artifacts), and
//! [`verify`] (the end-to-end check pipeline behind `rankwave verify`).

pub mod config;
pub mod flux;
pub mod frame;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod meanfield;
pub mod ostree;
pub mod particle;
pub mod rng;
pub mod verify;
pub mod wave;

pub use grid::GridCdf;
pub use kernels::{closed_form_wave, eta_bar, rate_smooth, wave_speed, JumpKernel, ModelParams, RateCurve};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported moment order {requested} (only 1..={max} are available)")]
    UnsupportedMoment { requested: usize, max: usize },

    #[error("bisection failed: {0}")]
    BisectionFailure(String),

    #[error("window overflow: right-boundary tail mass {mass:.3e} exceeds tail_tol {tol:.3e} at t={t}")]
    WindowOverflow { mass: f64, tol: f64, t: f64 },

    #[error("monotonicity violation of {excess:.3e} at x={x} (t={t})")]
    MonotonicityViolation { excess: f64, x: f64, t: f64 },

    #[error("windows do not overlap: [{a_left}, {a_right}] vs [{b_left}, {b_right}]")]
    NoOverlap {
        a_left: f64,
        a_right: f64,
        b_left: f64,
        b_right: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
