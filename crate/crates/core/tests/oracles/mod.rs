//! Reference checks shared by the test targets.
#![allow(dead_code)]

pub mod adjoint;
pub mod metrics;
