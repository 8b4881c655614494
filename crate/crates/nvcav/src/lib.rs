//! File formats, run configuration and subcommands of the `nvcav` tool.
//!
//! The numerics live in `nvcav-core`; this crate adds I/O around them. Every
//! output carries a provenance header (tool version, SHA-256 of each input,
//! seed) and numbers are written as the shortest decimal that parses back to
//! the same `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod provenance;
