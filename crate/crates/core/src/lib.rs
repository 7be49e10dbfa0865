//! Core library for a desk-scale multilingual translation laboratory:
//! a small f64 autodiff engine, text and corpus utilities, evaluation
//! metrics, procedurally generated toy languages, a denoising adversarial
//! autoencoder, latent-space interpolation, and an adversarially trained
//! translator with a per-language reward readout.

pub mod daae;
pub mod engine;
pub mod interpolation;
pub mod metrics;
pub mod nmt;
pub mod reward;
pub mod synthlang;
pub mod textpipe;

pub use daae::DaaeError;
pub use engine::EngineError;
pub use interpolation::InterpError;
pub use metrics::MetricsError;
pub use nmt::NmtError;
pub use reward::RewardError;
pub use synthlang::SynthError;
pub use textpipe::TextError;
