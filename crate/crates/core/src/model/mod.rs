//! The black-box scoring contract and its implementations.

mod gru;
mod protocol;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use gru::{gru_forward, GruModel, GruWeights};
pub use protocol::{connect_protocol_model, Endpoint, ProtocolConfig, ProtocolScorer, PROTOCOL_VERSION};

use crate::error::{Error, ModelError, Result};
use crate::seqdata::SequenceMatrix;

/// Whether a scorer may be called from several threads at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Concurrency {
    Serial,
    Concurrent,
}

/// A deterministic model mapping each sequence to the scalar score of its
/// final event.
///
/// The score of one sequence must not depend on the rest of the batch.
pub trait SequenceScorer: Send + Sync {
    fn score_batch(&self, batch: &[SequenceMatrix]) -> Result<Vec<f64>>;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Serial
    }

    fn score(&self, x: &SequenceMatrix) -> Result<f64> {
        let scores = self.score_batch(std::slice::from_ref(x))?;
        scores.into_iter().next().ok_or_else(|| {
            ModelError::BatchSize {
                expected: 1,
                got: 0,
            }
            .into()
        })
    }
}

impl<S: SequenceScorer + ?Sized> SequenceScorer for &S {
    fn score_batch(&self, batch: &[SequenceMatrix]) -> Result<Vec<f64>> {
        (**self).score_batch(batch)
    }
    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }
}

impl<S: SequenceScorer + ?Sized> SequenceScorer for Box<S> {
    fn score_batch(&self, batch: &[SequenceMatrix]) -> Result<Vec<f64>> {
        (**self).score_batch(batch)
    }
    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }
}

impl<S: SequenceScorer + ?Sized> SequenceScorer for Arc<S> {
    fn score_batch(&self, batch: &[SequenceMatrix]) -> Result<Vec<f64>> {
        (**self).score_batch(batch)
    }
    fn concurrency(&self) -> Concurrency {
        (**self).concurrency()
    }
}

/// Validating front door for batch scoring: non-empty batch, uniform feature
/// count, one finite score per sequence in input order.
pub fn score_batch<S: SequenceScorer + ?Sized>(scorer: &S, batch: &[SequenceMatrix]) -> Result<Vec<f64>> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Empty("cannot score an empty batch".into()))?;
    let d = first.n_features();
    if let Some(bad) = batch.iter().find(|x| x.n_features() != d) {
        return Err(Error::Dimension(format!(
            "batch mixes {d} and {} features",
            bad.n_features()
        )));
    }
    let scores = scorer.score_batch(batch)?;
    if scores.len() != batch.len() {
        return Err(ModelError::BatchSize {
            expected: batch.len(),
            got: scores.len(),
        }
        .into());
    }
    if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
        return Err(ModelError::Transport(format!("model returned non-finite score at position {pos}")).into());
    }
    Ok(scores)
}

/// Wraps a plain function as a concurrent-safe scorer.
pub struct FnScorer<F> {
    f: F,
}

impl<F> FnScorer<F>
where
    F: Fn(&SequenceMatrix) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnScorer { f }
    }
}

impl<F> SequenceScorer for FnScorer<F>
where
    F: Fn(&SequenceMatrix) -> f64 + Send + Sync,
{
    fn score_batch(&self, batch: &[SequenceMatrix]) -> Result<Vec<f64>> {
        Ok(batch.iter().map(&self.f).collect())
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Concurrent
    }
}

/// Mean of the most recent event's features.
pub fn last_event_mean(x: &SequenceMatrix) -> f64 {
    let last = x.n_events() - 1;
    (0..x.n_features()).map(|f| x.get(f, last)).sum::<f64>() / x.n_features() as f64
}

/// Counts how many sequences pass through the wrapped scorer.
pub struct CountingScorer<S> {
    inner: S,
    sequences: AtomicUsize,
    calls: AtomicUsize,
}

impl<S: SequenceScorer> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        CountingScorer {
            inner,
            sequences: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    /// Total sequences evaluated.
    pub fn evaluations(&self) -> usize {
        self.sequences.load(Ordering::SeqCst)
    }

    /// Total `score_batch` invocations.
    pub fn batches(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.sequences.store(0, Ordering::SeqCst);
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: SequenceScorer> SequenceScorer for CountingScorer<S> {
    fn score_batch(&self, batch: &[SequenceMatrix]) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.sequences.fetch_add(batch.len(), Ordering::SeqCst);
        self.inner.score_batch(batch)
    }

    fn concurrency(&self) -> Concurrency {
        self.inner.concurrency()
    }
}
