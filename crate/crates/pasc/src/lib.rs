//! Deterministic link-level simulator for position-aided semantic image
//! transmission.
//!
//! The pipeline renders a procedural scene from a pose, synthesizes the
//! receiver's shared view of it, transmits only the thresholded difference
//! through a trainable binarized codec and an OFDM link, and fuses the decoded
//! difference back onto the synthetic image. A conventional transform-coding
//! baseline and an adaptive method-selection policy sit alongside for
//! comparison experiments.

pub mod adapt;
pub mod baseline;
pub mod codec;
pub mod diffmask;
pub mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod phy;
pub mod scene;
pub mod seedmix;

pub use error::{Error, Result};
pub use image::{Image, Pose};
