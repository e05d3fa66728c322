//! Temporal-event-guided Foley sound synthesis.
//!
//! The pipeline: extract a frame-level RMS event feature from audio,
//! condition a 1-D U-Net diffusion model on (sound class, event feature)
//! through FiLM-family modulation layers, train and sample with a
//! variance-preserving cosine diffusion process and classifier-free
//! guidance, and evaluate temporal fidelity with the event-L1 metric.

pub mod conditioning;
pub mod corpus;
pub mod diffusion;
pub mod error;
pub mod feature;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod train;
pub mod unet;
pub mod wave;

pub use conditioning::{BFilmLayer, FilmLayer, TFilmLayer, TemporalMode};
pub use diffusion::{CondInput, DiffusionModel, SamplerConfig, TrainConfig};
pub use error::{Error, Result};
pub use unet::{ModelConfig, UNet};
pub use feature::EventFeature;
pub use nn::{Activation, Scalar};
pub use rng::RandomSource;
pub use wave::Waveform;
