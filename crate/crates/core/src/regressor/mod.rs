//! Per-band 1D CNN regressor from temporal amplitude envelope to T60.

mod arch;
mod file;
mod network;
mod train;

pub use arch::{Architecture, Layout};
pub use file::{
    decode_model, encode_model, load_model, load_models, model_file_name, save_model, save_models,
    FORMAT_VERSION, MAGIC,
};
pub use network::{loss_mse, BatchPass, CnnModel, Mode, BN_EPSILON, BN_MOMENTUM, DEFAULT_DROPOUT};
pub use train::{
    evaluate_mse, fit, train, EpochRecord, Pair, TrainConfig, TrainingLog, MIN_TRAIN_PAIRS,
};
