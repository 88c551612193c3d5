//! Command-line driver for `hyperimm`: file formats, run configuration,
//! subcommands and the verification suites.
// Negated comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod formats;
pub mod suites;

pub use commands::{run, Failure};
