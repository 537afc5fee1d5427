//! Secrecy beamforming for STAR-RIS assisted uplink NOMA.
//!
//! The crate covers the system model and channel synthesis, a self-contained
//! conic solver, the successive-convex-approximation pipelines for full and
//! statistical eavesdropper CSI, the comparison schemes and an experiment
//! harness that writes CSV summaries.

pub mod baselines;
pub mod channel;
pub mod conic;
pub mod error;
pub mod fullcsi;
pub mod harness;
pub mod model;
pub mod rng;
pub mod sca;
pub mod statcsi;

pub use channel::{cascaded_forms, sample_channels, Cascades, ChannelSet};
pub use error::{Error, Result};
pub use model::{
    DecodingOrder, LargeScale, RadioConfig, RateConfig, SecrecyReport, StarCoefficients, SystemGeometry, Tolerances, User,
};
