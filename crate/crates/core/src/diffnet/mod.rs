//! Minimal reverse-mode differentiation engine for the trainable frame
//! encoder and its scalar heads.
//!
//! Three layers of machinery, all in 64-bit arithmetic:
//!
//! * [`params`] — the fully connected encoder parameters, fast cached
//!   forward/backward passes, and the checkpoint format.
//! * [`tape`] — a small computation tape recording vector-valued ops; every
//!   training loss is assembled from these ops and differentiated exactly.
//! * [`adam`] / [`fd`] — the adaptive-moment optimizer and the central
//!   finite-difference gradient verifier that anchors the whole crate's
//!   numerics.

mod adam;
mod fd;
mod params;
mod tape;

pub use adam::{adam_step, OptimState};
pub use fd::{finite_diff_check, FdReport};
pub use params::{
    encode, encode_batch, encode_values, head_value, load_checkpoint, save_checkpoint,
    CachedForward, EncoderParams, Grads, Layer, CHECKPOINT_MAGIC,
};
pub use tape::{NodeId, Tape};

/// Checkpoint container as raw bytes (embedded by the reward-model file).
pub fn checkpoint_bytes(params: &EncoderParams) -> Vec<u8> {
    params::encode_checkpoint(params)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> crate::error::Result<EncoderParams> {
    params::decode_checkpoint(bytes)
}

/// Cached forward/backward internals shared with the training loops.
pub(crate) mod params_internal {
    pub(crate) use super::params::{backprop_cached, forward_cached, CachedForward};
}
