mod archive;
pub mod cli;
pub mod datapipe;
pub mod error;
pub mod evalkit;
pub mod model;
pub mod numerics;
pub mod text;
pub mod training;

pub use error::{Error, Result};
