//! Class-incremental learning with label mapping and response
//! consolidation.
//!
//! Classes are denoted by nearly-orthogonal random unit vectors instead
//! of one-hot codes ([`codebook`]), each class batch gets its own
//! normalized head on a shared trunk ([`lmrc`]), and prediction is
//! Winner-Take-All over all (head, class) cosine similarities
//! ([`inference`]). Old knowledge survives new-class training by
//! matching a frozen snapshot's responses, optionally helped by a small
//! rehearsal pool ([`data`]).
//!
//! All randomness flows through seeded ChaCha12 streams ([`rng`]), so
//! every run is bit-reproducible.

pub mod codebook;
pub mod data;
pub mod inference;
pub mod lmrc;
pub mod netcore;
pub mod rng;

pub use codebook::{
    capacity_estimate, empirical_capacity, normal_cdf, prob_accept, prob_nth_success,
    prob_within_tries, CapacityParams, CodebookError, LabelCodebook, LabelVector, VarianceMode,
};
pub use data::{
    gen_synthetic_blobs, load_idx, split_class_batches, stratified_split, ClassBatchStream,
    DataError, Dataset, RehearsalPool, TrainTestSplit,
};
pub use inference::{
    avg_incremental_accuracy, evaluate, predict, predict_wta, suppression_probe, EvalMetrics,
    PredictionTrace, SimilarityEntry,
};
pub use lmrc::{
    add_head, gradcheck_compositions, make_snapshot, new_classes_loss, response_loss,
    response_targets, review_loss, total_loss, train_increment, CodebookHandle, EpochRecord,
    IncrementLog, LmrcError, MultiHeadModel, Snapshot, TrainConfig, TrainMode,
};
pub use netcore::{
    cosine, grad_check, sgd_step, Activation, DenseLayer, GradientSet, Head, HeadKind, Matrix,
    NetError,
};
