//! Denoising and cycle-consistency training, optimizer and checkpoints.

mod checkpoint;
mod config;
mod losses;
mod optim;
mod sampler;
mod trainer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint,
    Checkpoint, MAGIC,
};
pub use config::{AdamConfig, TrainingConfig};
pub use losses::{
    back_transfer_loss, batch_attribute, cc_loss, dae_loss, pseudo_transfer, pseudo_transfer_len,
};
pub use optim::{global_norm, Adam};
pub use sampler::ClassStream;
pub use trainer::{step_attribute, train, train_step, StepLosses, Trainer};

/// Independent random stream for (`seed`, `tag`, `index`).
pub fn stream_rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng.set_word_pos((index as u128) << 36);
    rng
}
