//! Losses, augmentation, the synthetic corpus and the training loop.

pub mod augment;
mod checks;
pub mod corpus;
pub mod losses;
mod trainer;

pub use augment::{augment_audio, augment_h, crop_offsets};
pub use checks::check_model_gradients;
pub use corpus::{generate_synthetic_corpus, generate_synthetic_corpus_with, RowAlignment, Sample, SyntheticCorpusSpec, UtteranceTemplate};
pub use losses::{gan_losses, mmd_loss, mmd_with_bandwidths, mse_loss, total_translator_loss, GeneratorLoss};
pub use trainer::{
    MseReduction, OptimizerKind,
    derangement, evaluate, grid_of, h_tensor, leave_one_out, make_batches, summarize, train, EpochLog, LooResult, LooRow,
    SampleMetrics, StepStats, Summary, Targets, TrainConfig, TrainOutcome, Trainer, METRICS_HEADER, TRAIN_LOG_HEADER,
};
