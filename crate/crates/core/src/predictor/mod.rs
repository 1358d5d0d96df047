//! Relation-probability network: pair sequences through a bidirectional
//! LSTM stack, attention pooling, dropout and a sigmoid output per relation,
//! trained with binary cross-entropy and Adam.

pub mod adam;
mod lstm;
pub mod network;
pub mod params;
pub mod predict;
pub mod sequence;
pub mod train;

pub use network::{backward, bce_loss, forward, ForwardPass, Mode, PROB_EPS};
pub use params::{LstmParams, ModelConfig, ModelParams};
pub use predict::{rank_relations, Predictor, RankedRelation};
pub use sequence::{assemble_pair, PairEncoder, PairSequence};
pub use train::{
    evaluation_loss, train, EarlyStopping, EpochLog, TrainConfig, TrainOutcome, Trainer,
    TrainingSet, Verdict,
};
