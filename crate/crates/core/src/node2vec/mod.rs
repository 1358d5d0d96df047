//! Structural node embeddings: biased random walks plus skip-gram training.

pub mod alias;
pub mod sgns;
pub mod walk;

pub use sgns::{init_embeddings, train_sgns, NodeEmbeddings, SgnsConfig, SgnsReport};
pub use walk::{
    generate_walks, precompute_transitions, transition_probabilities, SamplingStrategy,
    TransitionTables, WalkConfig, WalkCorpus,
};
