//! Synchronized spectral graph CNN toolkit.
//!
//! Everything in this crate is pure computation over in-memory values:
//! kNN graphs and normalized Laplacians ([`graph`]), truncated eigenbases
//! ([`eigen`]), spectral transforms and dilated kernels ([`spectral`]),
//! functional-map synchronization ([`sync`]), a small reverse-mode tape
//! ([`autodiff`]), the layered network ([`network`]), training loops
//! ([`train`]) and task metrics ([`tasks`]).
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the
//! command line live in the companion `sscnn` crate.
#![no_std]

extern crate alloc;

pub mod autodiff;
pub mod eigen;
mod error;
pub mod graph;
pub mod gradcheck;
pub mod linalg;
pub(crate) mod math;
pub mod network;
pub mod pipeline;
pub mod rng;
pub mod sparse;
pub mod spectral;
pub mod sync;
pub mod synth;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
pub use linalg::Mat;
