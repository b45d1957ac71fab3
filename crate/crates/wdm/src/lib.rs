//! Wavenumber-division multiplexing over line-of-sight continuous apertures.
//!
//! This crate models a link between two parallel line segments - a
//! spatially-continuous source current and a continuous receive aperture -
//! and evaluates communication schemes that multiplex data over spatial
//! Fourier modes (the wavenumber-domain analog of OFDM subcarriers). It
//! provides:
//!
//! - the scalar Green's function of the link and its wavenumber spectrum
//!   ([`fields`]),
//! - Fourier, dipole, matched-filter, and eigenfunction basis families
//!   ([`basis`], [`channel`], [`eigenmodes`]),
//! - mode-coupling matrices assembled by oscillatory quadrature
//!   ([`channel`], [`quadrature`]),
//! - electromagnetic-interference covariance models ([`emi`]),
//! - SVD/MMSE/MR/one-tap receivers with waterfilling ([`transceiver`]),
//! - radiated-power accounting ([`power`]),
//! - and a CLI experiment runner ([`experiments`], binary `wdm`).
//!
//! See the `book/` directory for a guided tour; its code snippets are
//! compiled as doc-tests through the hidden `guide` module below.

pub(crate) mod assembly;
pub mod channel;
pub mod basis;
pub mod eigenmodes;
pub mod emi;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod power;
pub mod quadrature;
pub mod scenario;
pub mod transceiver;

pub use error::{Result, WdmError};
pub use scenario::Scenario;
