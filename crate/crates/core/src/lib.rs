//! Coupled graph-tensor factorization (CGTF).
//!
//! Joint low-rank factorization of a partially observed 3-way tensor and
//! per-mode partially observed graph adjacency matrices, solved by ADMM with
//! closed-form block updates. Also provides factor-based community detection,
//! evaluation metrics and a synthetic data generator.

pub mod community;
pub mod error;
pub mod metrics;
pub mod multilinear;
pub mod seed;
pub mod solver;
pub mod synthgen;

pub use error::{Error, Result};
