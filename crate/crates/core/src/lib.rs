//! Gradient orientation densities for single and multiple views.
//!
//! The crate computes single-view densities (HOG and its per-cell
//! normalization, DOG), their temporal average over tracked patch sequences
//! (MV-HOG), and their marginalization over synthesized viewpoints of a local
//! surface (R-HOG), together with the matching machinery and a fully
//! synthetic, ground-truthed benchmark that compares them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod hog;
pub mod imgproc;
pub mod matchdb;
pub mod mvhog;
pub mod record;
pub mod rhog;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
