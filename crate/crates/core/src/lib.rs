//! Shapley-value explanations for models that score event sequences.
//!
//! A sequence is a `d x l` matrix of features by events. Players are removed
//! by swapping in a per-feature background, either whole feature rows, whole
//! event columns, or groups of cells. Old events with negligible aggregate
//! importance can be merged into a single player before the event-level fit,
//! which shrinks the coalition space exponentially.
//!
//! ```
//! use seqshap::{explain_sequence, BackgroundMatrix, ExplainConfig, Execution, GruModel, GruWeights, SequenceMatrix};
//!
//! let model = GruModel::new(GruWeights::random(2, 4, 7, 0.5)?)?;
//! let x = SequenceMatrix::from_events("acct-1", &[vec![0.1, 1.0], vec![0.4, -0.2], vec![0.9, 0.3]])?;
//! let background = BackgroundMatrix::from_values(vec![0.0, 0.0])?;
//! let run = explain_sequence(&model, &x, &background, &ExplainConfig::default(), Execution::Sequential)?;
//! let events = run.events.unwrap();
//! assert!(events.local_accuracy_gap() < 1e-8);
//! # Ok::<(), seqshap::Error>(())
//! ```

pub mod error;
pub mod kernel;
pub mod model;
pub mod orchestrator;
pub mod parallel;
pub mod perturb;
pub mod pruning;
pub mod seqdata;

pub use error::{Error, ModelError, Result};
pub use kernel::{
    draw_coalitions, kernel_weight, shapley_explain, shapley_explain_with, solve_attributions, CoalitionSample,
    CoalitionSet, ExplanationResult, SamplerConfig, DEFAULT_N_SAMPLES,
};
pub use model::{
    connect_protocol_model, gru_forward, score_batch, Concurrency, CountingScorer, Endpoint, FnScorer, GruModel,
    GruWeights, ProtocolConfig, ProtocolScorer, SequenceScorer,
};
pub use orchestrator::{
    build_cell_partition, explain_cells, explain_corpus, explain_events, explain_features, explain_sequence,
    global_aggregate, rsd, variance_study, CellConfig, CellPartition, ExplainConfig, ExplainMode, GlobalReport,
    SequenceExplanation, SequenceRun, DEFAULT_THETA,
};
pub use parallel::Execution;
pub use perturb::{perturb_cells, perturb_events, perturb_features, Axis, CoalitionMatrix, CoalitionVector};
pub use pruning::{prune_index, prune_scan, two_split_shapley, PruneConfig, PruneOutcome, SplitImportance, DEFAULT_ETA};
pub use seqdata::{build_background, load_dataset, write_dataset, BackgroundMatrix, EventSchema, FeatureKind, SequenceMatrix};
