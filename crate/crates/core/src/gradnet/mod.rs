//! Numerical substrate for the trainable components: a flat parameter store,
//! small fully connected networks with exact reverse-mode gradients (and
//! forward-mode input tangents), Adam, and checkpoint I/O.

mod adam;
mod checkpoint;
mod mlp;
mod params;

pub use adam::{adam_step, AdamConfig, LrSchedule};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mlp::{stable_sigmoid, Activation, Mlp, MlpSpec, MlpTape};
pub use params::{ParamBlock, ParamStore};
