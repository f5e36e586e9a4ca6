//! Discrete graph diffusion over scale-degree categories for short
//! polyphonic phrases, with rule-guided sampling, harmonic cataloguing and
//! multi-phrase fusion.
//!
//! Numeric code is generic over [`scalar::Real`]; the aliases below fix the
//! common `f64` and `f32` instantiations. Transition algebra also accepts the
//! exact [`scalar::Ratio`] type.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod denoiser;
pub mod error;
pub mod fusion;
pub mod graph;
pub mod midi;
pub mod realize;
pub mod sampler;
pub mod scalar;
pub mod schedule;
pub mod score;
pub mod theory;

pub use error::{Error, Result};

pub type Schedule = schedule::NoiseSchedule<f64>;
pub type Schedule32 = schedule::NoiseSchedule<f32>;
pub type Marginal64 = schedule::Marginal<f64>;
pub type ExactMarginal = schedule::Marginal<scalar::Ratio>;
pub type Denoiser = denoiser::DenoiserParams<f64>;
pub type Denoiser32 = denoiser::DenoiserParams<f32>;
pub type Graph = graph::ScoreGraph<f64>;
pub type Topology = graph::GraphTopology<f64>;
