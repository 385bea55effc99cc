//! Denoising diffusion: variance schedule, forward process, posterior,
//! noise-prediction training and ancestral sampling.

mod process;
mod sampler;
mod schedule;
mod train;

pub use process::{
    forward_jump, forward_jump_rows, forward_step, noise_prediction_loss, posterior,
    posterior_coefficients, predict_x0, reverse_coefficients, reverse_mean, PosteriorStats,
};
pub use sampler::{sample, sample_with_trajectory, NoisePredictor, SampleOptions, SamplerVariance};
pub use schedule::{make_schedule, NoiseSchedule, ScheduleConfig};
pub use train::{train, train_with_progress, training_step, Snapshot, TrainConfig, TrainOutcome};
