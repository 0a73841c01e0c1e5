//! Small differentiable text-classification stack: hashed bag-of-features
//! utterance encoder, stacked recurrent context encoder, two-layer head,
//! Adam training with early stopping.

pub mod layers;
pub mod model;
pub mod params;
pub mod persist;
pub mod tape;
pub mod text;
pub mod train;

pub use layers::CellType;
pub use model::{ModelConfig, ModelError, SequenceClassifier};
pub use params::{Grads, ParamId, ParamSet, Tensor};
pub use persist::{load_model, read_manifest, save_model, write_manifest, ModelManifest, PersistError};
pub use text::{EncodedInput, Featurizer, Utterance, SEPARATOR};
pub use train::{fit, EarlyStopping, FitReport, LabeledInput, TrainConfig, TrainError};
