//! Dense convolutional networks with explicit back-propagation.

pub mod checkpoint;
pub mod head;
pub mod layers;
pub mod network;
pub mod spec;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use head::{activate, loss_charseq, loss_dict, loss_ngram, Target};
pub use network::{Grads, Layer, Network, Trace};
pub use spec::{shape_plan, HeadSpec, LayerSpec, NetworkSpec, Stage, Variant, Widths, INPUT_SHAPE};
pub use tensor::{Real, Tensor};
pub use train::{incremental_train, sgd_train, EpochRecord, Expansion, Fit, Sample, TrainConfig, TrainLog};
