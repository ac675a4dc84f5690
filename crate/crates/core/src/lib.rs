//! Few-shot classification head built on class-relevant patch selection.
//!
//! Each image is a class embedding plus `M` patch embeddings. Patches are
//! ranked by similarity to the class embedding, the top `m` are kept and
//! fused with the class embedding, and a query is scored against each class
//! prototype by feeding the flattened matrix of squared cosines between fused
//! patches through a small MLP.
//!
//! Modules, bottom-up:
//! - [`numerics`]: vector kernels, softmax/cross-entropy, the seeded RNG.
//! - [`store`] and [`synthetic`]: the embedding data model, the CPEM file
//!   format, and a generator with planted signal patches.
//! - [`episodic`]: N-way K-shot sampling and prototypes.
//! - [`selection`]: similarity ranking, top-`m` selection, fusion.
//! - [`scorer`]: score matrices, the MLP head, AdamW, CPEH checkpoints.
//! - [`harness`]: training, evaluation, sweeps, mask export.

pub mod episodic;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod scorer;
pub mod selection;
pub mod store;
pub mod synthetic;

pub use episodic::{build_prototype, sample_episode, Episode, EpisodeSampler, EpisodeSpec};
pub use error::{Error, Result};
pub use harness::{
    evaluate, export_masks, sweep_distance, sweep_m, train, EvalReport, RunConfig, SweepReport,
    TrainLog, TrainOutcome,
};
pub use numerics::{cosine, cross_entropy, softmax, Mat64, Rng64};
pub use scorer::{
    episode_loss_and_grads, optimizer_step, read_head, score_matrix, write_head, HeadParams,
    MlpHead, OptimizerConfig, Schedule, ScoreMatrix,
};
pub use selection::{
    fuse, represent, select_top, similarity_sequence, DistanceKind, FusedRepresentation,
    SelectionMask, SelectionResult,
};
pub use store::{read_store, write_store, EmbeddingRecord, EmbeddingStore};
pub use synthetic::{generate_synthetic, SyntheticConfig};
