//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by configuration validation, numerical routines, and the
/// experiment runner.
#[derive(Debug, Error)]
pub enum WdmError {
    #[error("missing configuration key `{0}`")]
    MissingKey(String),

    #[error("could not parse value `{value}` for key `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("even mode count N = {0}; the mode index set is symmetric around zero and requires an odd N")]
    EvenModeCount(usize),

    #[error("mode count N = {n} exceeds the band limit N_max = {n_max}")]
    ModeCountExceedsMax { n: usize, n_max: usize },

    #[error("receiver shorter than source: Lr = {lr} m < Ls = {ls} m")]
    ReceiverShorterThanSource { lr: f64, ls: f64 },

    #[error("non-positive dimension: {name} = {value}")]
    NonPositiveDimension { name: String, value: f64 },

    #[error("negative per-mode power at index {index}: {value}")]
    NegativePower { index: usize, value: f64 },

    #[error("mode index {index} outside 1..={count}")]
    ModeIndexOutOfRange { index: usize, count: usize },

    #[error("quadrature did not converge on [{a}, {b}]: error estimate {estimate:.3e} > target {target:.3e} after {panels} panels")]
    QuadratureNonConvergence {
        a: f64,
        b: f64,
        estimate: f64,
        target: f64,
        panels: usize,
    },

    #[error("wavenumber spectrum grid would need {needed} samples (limit {limit}); geometry too large for a cached spectrum")]
    SpectrumGridTooLarge { needed: usize, limit: usize },

    #[error("dipole elements overlap: spacing {spacing} m < element size {size} m")]
    DipoleOverlap { spacing: f64, size: f64 },

    #[error("dipole element {index} extends beyond the segment: center {center} m, segment half-length {half} m")]
    DipoleOutsideSegment { index: usize, center: f64, half: f64 },

    #[error("mode {mode} steers outside the visible region: |cos(theta)| = {steering} > 1")]
    BeamOutsideVisibleRegion { mode: usize, steering: f64 },

    #[error("covariance matrix is not positive definite (Cholesky failed)")]
    NonPositiveDefiniteCovariance,

    #[error("eigenvalue solver failed: {0}")]
    EigenSolverFailure(String),

    #[error("eigenproblem grid under-resolved: top-eigenvalue drift {drift:.3e} between M = {m} and M = {m2}")]
    UnderResolvedGrid { m: usize, m2: usize, drift: f64 },

    #[error("all channel gains are zero; waterfilling has no feasible allocation")]
    AllZeroGains,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("angular density is not normalized: integral = {0}")]
    UnnormalizedDensity(f64),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("sweep grid must be strictly increasing")]
    NonMonotonicSweep,

    #[error("experiment `{experiment}` failed at sweep point {point}: {source}")]
    SweepPointFailed {
        experiment: String,
        point: String,
        #[source]
        source: Box<WdmError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WdmError>;
