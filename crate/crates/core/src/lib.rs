//! Wold-type decompositions and analytic models for q-commuting pairs and
//! tuples of isometries.

pub mod bcl;
pub mod cyclo;
pub mod error;
pub mod fixtures;
pub mod graded;
pub mod linalg;
pub mod opalg;
pub mod passage;
pub mod phase;
pub mod report;
pub mod rewrite;
pub mod smatrix;
pub mod tuples;
pub mod wold;

pub use cyclo::Scalar;
pub use error::{Error, Result};
pub use graded::{GradedIndex, TruncationWindow};
pub use opalg::{Atom, BasisKey, Comparison, LazyOperator, SVec, SpaceSignature, TruncatedMatrix, Verdict};
pub use phase::{Phase, QMatrix};
pub use smatrix::SMatrix;
