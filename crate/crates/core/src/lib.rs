//! Cross-modal artwork-to-music toolkit.
//!
//! * [`embedding`]: EMB1 embedding store and cosine similarity
//! * [`pairing`]: greedy artwork/music pairing, similarity statistics,
//!   stratified splits and JSONL manifests
//! * [`dsp`]: WAV ingestion, STFT, log-mel extraction, Griffin-Lim
//! * [`diffusion`]: noise schedule, SNR, min-SNR-γ weighted loss, sampler
//! * [`nn`]: image projection layer, toy denoiser, AdamW, toy training
//! * [`metrics`]: FAD, KL divergence, embedding cosine score
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix the common instantiations.

pub mod diffusion;
pub mod dsp;
pub mod embedding;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod pairing;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = matrix::Matrix<f64>;
pub type Matrix32 = matrix::Matrix<f32>;

pub type AudioBuffer32 = dsp::AudioBuffer<f32>;
pub type AudioBuffer64 = dsp::AudioBuffer<f64>;
pub type MelSpectrogram32 = dsp::MelSpectrogram<f32>;
pub type MelSpectrogram64 = dsp::MelSpectrogram<f64>;

pub type NoiseSchedule32 = diffusion::NoiseSchedule<f32>;
pub type NoiseSchedule64 = diffusion::NoiseSchedule<f64>;
pub type NoisyLatent64 = diffusion::NoisyLatent<f64>;

pub type ProjectionParams32 = nn::ProjectionParams<f32>;
pub type ProjectionParams64 = nn::ProjectionParams<f64>;
pub type DenoiserParams32 = nn::DenoiserParams<f32>;
pub type DenoiserParams64 = nn::DenoiserParams<f64>;
pub type ToyModel32 = nn::ToyModel<f32>;
pub type ToyModel64 = nn::ToyModel<f64>;

pub type GaussianStats64 = metrics::GaussianStats<f64>;
pub type ProbabilityVector64 = metrics::ProbabilityVector<f64>;
