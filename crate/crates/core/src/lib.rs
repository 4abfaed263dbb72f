//! Joint audio-video generation at desk scale: DDPM and DDIM sampling,
//! coupled audio-video diffusion, conditional flow matching, a two-stage
//! video-then-audio pipeline, and Fréchet-distance evaluation over synthetic
//! paired clips.

pub mod error;
pub mod netcore;
pub mod schedule;
pub mod tensor;

pub use error::{Error, Result};
pub use schedule::{NoiseSchedule, ScheduleConfig, StepCoeffs};
pub use tensor::{Modality, ModalityTensor};
pub mod diffusion;
pub mod rng;
pub mod data;
pub mod eval;
pub mod joint;
pub mod flowmatch;
pub mod models;
pub mod train;
pub mod checkpoint;
pub mod pipeline;
pub mod config;
pub mod commands;
