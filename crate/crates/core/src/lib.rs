//! Grey-box identification of an unknown reaction rate inside the fedbatch
//! bioreactor equations.
//!
//! The rate `mu(X, S)` is represented by a small ReLU network. The bioreactor
//! ODEs are discretized with explicit Euler, unrolled over the whole time
//! series, and the network is trained with exact reverse-mode gradients taken
//! through every step of the unrolled recurrence.
//!
//! Module map:
//!
//! - [`nn`]: the two-layer approximator, its initialization schemes and checkpoints.
//! - [`dynamics`]: bioreactor right-hand side, Haldane kinetics, Euler stepping.
//! - [`adjoint`]: observation masks, trajectory losses, backpropagation through time.
//! - [`datagen`]: seeded corpus generation, coarsening and corpus files.
//! - [`training`]: Adam, stopping rules, the two-stage schedule and evaluation.
//!
//! Interchangeable pieces (initialization schemes, observation masks) are
//! trait objects held in a [`registry::Registry`] and selected by name.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod fmt;
pub mod nn;
pub mod parallel;
pub mod registry;
pub mod training;

pub use error::{Error, Result};
