//! Desk-scale laboratory for affordance-aware conditional video generation.
//!
//! The crate bundles everything needed to run the full loop on one machine:
//!
//! * [`tensor`] — a minimal dense-tensor / reverse-mode autodiff engine with
//!   an Adam optimizer and the `AFT1` tensor file format.
//! * [`world`] — a deterministic procedural generator of scenes, interaction
//!   videos, and ground-truth affordance masks.
//! * [`model`] — the conditional video transformer with dual scene + text
//!   conditioning (noise-decayed latent concatenation and fused
//!   cross-attention memory) and attention recording.
//! * [`flow`] — flow-matching training, condition dropout, the Euler ODE
//!   sampler, and dual-scale classifier-free guidance.
//! * [`probe`] — cross-attention heatmap extraction and pixel-IoU scoring
//!   against ground-truth affordance masks.
//! * [`metrics`] — placement accuracy, background PSNR, an action-classifier
//!   judge, and a Fréchet feature distance.
//! * [`pipeline`] — experiment configs, checkpoints, and the command drivers
//!   behind the `afford` CLI.

pub mod error;
pub mod flow;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod plot;
pub mod probe;
pub mod rng;
pub mod tensor;
pub mod world;

pub use error::{Error, Result};
