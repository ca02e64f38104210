//! Limiting spectral distributions of additively deformed sample covariance
//! matrices.
//!
//! Given two spectral measures and a dimension ratio, this crate computes the
//! limiting eigenvalue distribution of `W = B + X' A X / n`: its Stieltjes
//! transform, density, point masses, support intervals and square-root edge
//! constants, and validates all of it against a self-contained Monte Carlo
//! eigenvalue simulator.

pub mod measures;
pub mod numerics;
pub mod report;
pub mod simulate;
pub mod solver;
pub mod support;

pub use measures::{IntervalUnion, Measure, MeasureError, MeasurePart};
pub use solver::{SolutionPoint, SolverConfig, SolverError};
pub use simulate::{EnsembleConfig, EntryLaw};
pub use support::{EdgeRecord, EdgeSide, SupportOptions, SupportReport};
