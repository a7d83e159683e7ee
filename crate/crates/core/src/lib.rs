//! Numerics for sensing parameters of phase-covariant bosonic channels.
//!
//! The crate has two halves that check each other:
//!
//! * closed forms: the attenuator-amplifier cascade descriptor of a channel
//!   family ([`channels::CascadeParams`]), the universal QFIM upper bound with
//!   its per-photon/per-mode split ([`bounds`]), and the scenario QFIs for
//!   thermal-loss transmittance and additive-noise sensing;
//! * a brute-force oracle on truncated Fock spaces: Kraus realisations of the
//!   quantum-limited attenuator and amplifier ([`channels`]), SLD- and
//!   fidelity-based QFIMs ([`qfi`]), NDS probe machinery and the amplifier
//!   output fidelity formula ([`nds`]).
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod channels;
mod error;
pub mod fock;
pub mod linalg;
pub mod nds;
pub mod oracle;
pub mod qfi;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;

pub use nalgebra::{DMatrix, DVector};
