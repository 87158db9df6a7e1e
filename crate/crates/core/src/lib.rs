//! Adversarial debiasing over fixed input representations.
//!
//! The crate trains a main classifier (two-layer encoder plus linear head)
//! against an ensemble of MLP discriminators through gradient reversal, with
//! an optional difference loss that pushes the discriminators' hidden
//! representations toward mutual orthogonality. It also provides the
//! iterative null-space projection baseline, equalized-odds gap and linear
//! leakage metrics, a synthetic skewed-data generator, and the experiment
//! runner used by the `fairadv` CLI.

pub mod datagen;
pub mod error;
pub mod experiment;
pub mod fairmetrics;
pub mod fairmodel;
pub mod inlp;
pub mod numkit;

pub use error::{Error, Result};
pub use numkit::RealMatrix;
