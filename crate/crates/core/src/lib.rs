//! Anomaly-aware bidirectional GAN for semi-supervised anomaly detection.
//!
//! The crate trains a bidirectional GAN (encoder E, generator G, joint
//! discriminator D and optional pair discriminator D') whose least-squares
//! objectives model the normal data while explicitly suppressing density on
//! a small set of collected anomalies. Detection uses reconstruction error
//! or latent-code norm, selected on a validation split.
//!
//! Alongside the trainable stack, [`oracle`] verifies the convergence
//! theory numerically on finite discrete distributions (closed-form optimal
//! discriminators, the Pearson chi-square identity, and brute-force
//! confirmation of the generator optimum), and [`metrics`] provides the
//! AUROC/FID evaluation harness.

pub mod cli;
pub mod error;
pub mod metrics;
pub mod networks;
pub mod nn;
pub mod objectives;
pub mod oracle;
pub mod scenario;
pub mod scoring;
pub mod trainer;

pub use error::{Error, Result};
pub use objectives::{PairScoreBatch, ScoreBatch, TargetScheme};
