//! Loss assembly, mini-batching, coarse-to-fine level unlocking, the
//! optimization loop and its logs and checkpoints.

mod batch;
mod config;
mod engine;
mod loss;

pub use batch::{sample_batch, valid_bins, BatchItem, GroundBand};
pub use config::{progressive_mask, BeamSection, EncodingSection, LossConfig, ProgressiveSchedule, SamplingSection, TrainConfig, TrainerConfig};
pub use engine::{
    build_model, evaluate_batch, pixel_rng, survey_domain, train, BatchResult, LossTerms, Pixel, StepRecord, TrainContext, TrainSummary, Trainer,
    GRAD_CHUNKS,
};
pub use loss::{altimeter_terms, loss_altimeter, loss_intensity, loss_intensity_grad, loss_regularizer, normal_penalty, normal_penalty_grad};
