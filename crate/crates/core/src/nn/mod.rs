//! A small dense-tensor CNN engine: NHWC conv, max pooling, batch norm,
//! inverted dropout, flatten and dense layers with exact reverse-mode
//! gradients, an Adam training loop with early stopping, and builders for the
//! two genre-classification architectures.

pub mod gradcheck;
mod io;
mod network;
mod spec;
mod tensor;
mod train;

pub use io::{decode_weights, encode_weights, load_network, save_network, TensorEntry, WeightManifest, WEIGHTS_MAGIC};
pub use network::{Gradients, LayerParams, Mode, Network, Tape, BN_EPSILON, BN_MOMENTUM};
pub use spec::{build_melspec_cnn, build_mfcc_cnn, Activation, LayerSpec, LayerSummary, ModelSpec, Padding, ParamCounts};
pub use tensor::{cross_entropy, relu, softmax, Tensor};
pub use train::{accuracy_on, predict, predict_proba, train, train_with, History, SampleSet, TrainConfig};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("data does not match the model: {0}")]
    DataShapeMismatch(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("loss needs a final dense layer with softmax activation")]
    MissingSoftmaxHead,
    #[error("non-finite values: {0}")]
    NonFinite(String),
    #[error("io: {0}")]
    Io(String),
    #[error("weight format: {0}")]
    Format(String),
}
