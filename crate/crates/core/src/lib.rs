//! Numerical laboratory for scaling laws of learned models on tasks with
//! latent, heavy-tailed instance difficulty.
//!
//! The generative model: features `x ~ N(0, Σ)` with a power-law diagonal
//! spectrum, a latent per-instance precision `τ ~ Gamma(β/2, 1)`, and labels
//! `y = x·θ* + η` with `η ~ N(0, σ_η²/τ)`. A ridge student is trained on N
//! samples; at inference the student gets k attempts per instance and fails
//! when every attempt lands outside a tolerance `δ` of the instance target.
//!
//! The crate provides, end to end:
//! * synthetic data generation with deterministic, stream-indexed RNG ([`datagen`]),
//! * closed-form ridge training and generalization-loss estimates ([`ridge`]),
//! * exact pass@k failure curves plus quadrature oracles ([`passk`]),
//! * effective-exponent extraction and saturation fits ([`expfit`]),
//! * training-vs-inference compute allocation ([`allocation`]),
//! * an adapter that runs external regression datasets through the same
//!   pipeline ([`adapter`]),
//! * experiment orchestration, config handling and CSV artifacts
//!   ([`experiment`], [`config`], [`csvio`]).

pub mod adapter;
pub mod allocation;
pub mod config;
pub mod csvio;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod expfit;
pub mod nlls;
pub mod parallel;
pub mod passk;
pub mod quad;
pub mod ridge;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
