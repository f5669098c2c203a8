//! The student: a linear model over hashed n-grams with a classification
//! head and a per-position byte-level sequence head.

pub mod features;
pub mod loss;
pub mod model;
pub mod train;

pub use features::{featurize, fnv1a64, FeatureConfig, SparseVec};
pub use loss::{argmax, log_softmax, sce_gradient, sce_loss, sce_loss_grad, sce_loss_mean, softmax, SceConfig};
pub use model::{decode_tokens, encode_target, SeqOutput, StudentModel, BOS, BYTE_VOCAB, DEFAULT_MAX_LEN, EOS};
pub use train::{train_step, TrainConfig};
