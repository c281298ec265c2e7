//! Delta-mode motion in-betweening.
//!
//! A small, self-contained toolkit for filling the missing frames of a
//! skeletal animation between key-frames. The neural in-betweener is a
//! transformer that reads key-frames relative to a local reference pose and
//! writes residuals on top of a zero-parameter baseline (SLERP interpolation
//! or the last known frame), which makes it insensitive to global
//! translation of the input.
//!
//! Layout:
//! - [`autograd`]: reverse-mode differentiation over dense tensors.
//! - [`geometry`]: quaternions, ortho6D rotations, SLERP and forward kinematics.
//! - [`motion`]: motion clips, CSV ingestion, windowing, sampling, normalization, synthesis.
//! - [`baselines`]: zero-velocity, SLERP and positional LERP in-betweeners.
//! - [`model`]: the delta-mode transformer.
//! - [`training`]: losses, schedule, Adam and the training loop.
//! - [`metrics`]: L2Q, L2P, NPSS and evaluation reports.
//! - [`par`]: sequential / rayon execution policy.

// NaN-rejecting `!(x > y)` checks and value-type `mul` / `neg` are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]
#![allow(clippy::too_many_arguments, clippy::type_complexity)]

pub mod autograd;
pub mod baselines;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod motion;
pub mod par;
pub mod training;

pub use error::{Error, Result};
