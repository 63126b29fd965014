//! Encoder, latent code and control-code-conditioned decoder.

mod cae;
mod config;
mod params;
pub mod transformer;

pub use cae::{teacher_forcing, CaeModel, Encoded};
pub use config::ModelConfig;
pub use params::{Bound, ParamStore};
