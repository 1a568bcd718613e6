//! Data-private bid-price control for multi-party network revenue management.
//!
//! Parties in an alliance share some network capacity and keep the rest of
//! their data private. Each party masks its block of the capacity-sharing LP
//! with random transformations, every party solves the same masked program,
//! and each recovers its own exact primal allocation and dual bid-prices.
//!
//! This crate is `no_std` with `alloc`. The `privbid` crate adds file formats,
//! transports and the command-line tool.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod lp;
pub mod masking;
pub mod mmatrix;
pub mod models;
pub mod netmodel;
pub mod protocol;
pub mod seed;
pub mod sim;
pub mod sparsity;
pub mod wire;

pub use error::{Error, Result};
