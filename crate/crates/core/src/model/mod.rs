//! Neural classifiers on IQ tokens: the encoder-only transformer, the 1D-CNN
//! baseline, losses, Adam and the training loop.

mod adam;
mod cnn;
mod gradcheck;
mod kernels;
mod network;
mod train;
mod transformer;

pub use adam::Adam;
pub use gradcheck::{check_network, grad_check, GradCheckReport, GRAD_CHECK_STEP};
pub use kernels::{log_softmax, sigmoid, Scalar};
pub use network::{
    argmax, batch_loss_and_grad, is_correct, loss, loss_from_logits, predicted_set, BatchStats, LossMode,
    Network, Target, TensorInfo,
};
pub use transformer::{param_count, Transformer, TransformerCache, TransformerConfig};
pub use train::{
    enumerate_sequences, fit, logits_f64, prepare_window, split_sequences, train_transformer, usable_sequences, Augmentation,
    Condition, EpochRecord, InMemoryCorpus, LrSchedule, SequenceCorpus, SequenceRef, TrainConfig, TrainHistory,
};
pub use cnn::{cnn_param_count, Cnn, CnnCache, CnnConfig};
