//! Minimizing immersions of closed hyperbolic surfaces into hyperbolic 3-space.
//!
//! The crate is organised bottom-up: [`schatten`] holds the 1-Schatten norm of
//! 2→3 linear maps, [`hyperbolic`] the hyperboloid model kernels, [`surface`]
//! the discrete closed surface, [`codazzi`] the Codazzi-operator machinery and
//! the det φ = 1 solver, [`energy`] the discrete energy and its minimizer, and
//! [`reconstruct`] the development of immersion data and monodromy extraction.
//!
//! Everything builds without `std` (the default `std` feature only forwards to
//! dependencies); heap allocation is required.
// Negated comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod codazzi;
pub mod energy;
pub mod error;
pub mod hyperbolic;
pub mod math;
pub mod reconstruct;
pub mod schatten;
pub mod sparse;
pub mod surface;

pub use error::{Error, Result};
