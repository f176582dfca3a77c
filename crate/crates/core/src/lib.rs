//! Quadratic Bell inequalities for `d2dd` nonsignaling boxes, derived from
//! Information Causality through concatenated random-access-code protocols,
//! and their characterization as the Macroscopic Locality (NPA level 1) set
//! on the guessing-profile subspace.
#![allow(clippy::needless_range_loop)]

pub mod algebra;
pub mod concat;
pub mod error;
pub mod ic;
pub mod ml;
pub mod nsbox;
pub mod scan;

pub use algebra::{ComplexMatrix, RootOfUnity};
pub use concat::{ErrorDistribution, FourierCoefficients, GuessErrorVector, TransitionMatrix};
pub use error::{Error, Result};
pub use ic::{IcQuadraticReport, IcVerdict, Verdict};
pub use ml::{BlockFamily, MlVerdict, MomentMatrix, OracleStatus, SymmetrizedMoment};
pub use nsbox::{BoxDistribution, GuessingProfile, ValidationReport};
pub use scan::{FamilySpec, ScanRecord};
