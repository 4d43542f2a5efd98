//! Toy-scale DynGhost: a transformer over `(frame, pattern)` tokens that
//! alternates attention across patterns within a frame and across frames at
//! a fixed pattern, followed by a per-frame sigmoid head.
//!
//! Gradients are derived by hand; [`gradient_check`] compares them with
//! central differences.

mod checkpoint;
mod config;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointEntry, CheckpointManifest, CHECKPOINT_MANIFEST};
pub use config::{BlockKind, DynGhostConfig, LossWeights, Variant};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, GradProbe, ModelObjective, Objective, GRAD_FLOOR, GRAD_TOLERANCE};
pub use loss::{loss_terms, loss_total, loss_with_grad, LossParts};
pub use model::{attention_block, embed_tokens, forward, head, BlockOutput};
pub use optim::{AdamWConfig, AdamWState};
pub use params::{ParamStore, Slot};
pub use train::{batch_loss_and_grad, sample_loss, sample_loss_and_grad, train, Sample, TrainConfig, TrainReport};
