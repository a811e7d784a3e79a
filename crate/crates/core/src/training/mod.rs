//! Loss, model assembly, the training loop and checkpoints.

mod checkpoint;
mod gradcheck;
mod loss;
mod model;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use gradcheck::{
    batch_loss, check_gradients, run_gradcheck, toy_corpus, toy_model, GradcheckConfig,
    GroupCheck, ERROR_FLOOR,
};
pub use loss::{biased_loss, LossConfig, LOG_FLOOR};
pub use model::{Forward, Layout, Model, ModelConfig, Prediction};
pub use train::{
    accumulate_sentence, encode_corpus, evaluate, train, write_metrics_csv, Encoded,
    EpochMetrics, TrainConfig, TrainOutcome,
};
