//! Tiny fully connected networks, Adam, and the checkpoint format.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{adam_step, adam_step_with_lr, AdamConfig, OptimState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use mlp::{Activation, ForwardCache, Mlp, NetArch, TimeEmbed};
