//! Minimal reverse-mode automatic differentiation over dense row-major
//! tensors.
//!
//! A [`Graph`] is an append-only arena of nodes. Every operation reads its
//! inputs, computes its output eagerly and records a backward rule. Because
//! nodes are only ever appended, creation order is a topological order and
//! [`Graph::backward`] simply walks the arena in reverse.
//!
//! The engine is generic over [`Real`] so the same model code runs in `f32`
//! for training and in `f64` for finite-difference gradient checks.

pub mod checkpoint;
pub mod gradcheck;
mod graph;
mod kernels;
mod tensor;

pub use graph::{Graph, Var};
pub use tensor::Tensor;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating-point scalar usable inside the graph.
pub trait Real:
    Float + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + DivAssign + 'static
{
    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Layer-normalization epsilon used throughout the model.
pub const LAYERNORM_EPS: f64 = 1e-5;
