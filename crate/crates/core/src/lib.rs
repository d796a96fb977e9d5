//! Control-barrier-function (CBF) safety filtering for sampled-data control loops.
//!
//! A continuous-time CBF-QP safety filter that is solved only at discrete sampling
//! instants loses its guarantees between samples. The failure is worst where the
//! Lie derivative of the barrier along the input directions, `L_g h(x)`, vanishes:
//! there the filter certifies *any* input, the uncertified policy is applied for a
//! full sampling interval, and the closed loop can chatter or leave the safe set.
//!
//! This crate provides:
//!
//! - [`dynamics`]: control-affine systems, exact zero-order-hold discretization of
//!   LTI systems via the matrix exponential, and a fixed-step RK4 integrator.
//! - [`cbf`]: quadratic (ellipsoidal), affine, rotated/translated, and polytopic
//!   barrier candidates with values and gradients, plus extended class-K functions.
//! - [`lie`]: Lie derivatives, relative-degree analysis for affine barriers on LTI
//!   systems, singular-set grid scans, and higher-order CBF constraint chains.
//! - [`filter`]: the per-step safety-filter QP (standard and penalty-augmented
//!   objectives), an exact small-scale solver, and a brute-force grid oracle.
//! - [`sim`]: deterministic closed-loop simulation, safety/chattering metrics, and
//!   bundled scenario presets (`sim-*` and `real-*` families).

pub mod cbf;
pub mod dynamics;
mod error;
pub mod filter;
pub mod lie;
pub mod sim;

pub use dynamics::{InputVec, StateVec};
pub use error::{Error, Result};
