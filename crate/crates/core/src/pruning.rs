//! Temporal coalition pruning.
//!
//! Each split `i` divides the sequence into an old block (columns `0..i`) and
//! a recent block (`i..l`). With only two players the exact Shapley values
//! come from four evaluations, and `f(X)`, `f(B)` are shared by every split.
//! Scanning from the newest split backwards, the first split whose old block
//! has absolute importance below `eta` gives the largest prefix that can be
//! merged into a single player.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{score_batch, SequenceScorer};
use crate::parallel::{try_map_chunks, Execution};
use crate::perturb::perturb_events;
use crate::seqdata::{BackgroundMatrix, SequenceMatrix};

/// Default pruning tolerance.
pub const DEFAULT_ETA: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub eta: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig { eta: DEFAULT_ETA }
    }
}

impl PruneConfig {
    pub fn new(eta: f64) -> Result<Self> {
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::InvalidArgument(format!("eta must be finite and >= 0, got {eta}")));
        }
        Ok(PruneConfig { eta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneOutcome {
    /// Number of oldest events merged into one player; 0 means no pruning.
    pub prune_index: usize,
    /// Old-block importance at the returned split (0 when nothing was pruned).
    pub prefix_importance: f64,
    pub evaluations_used: usize,
}

impl PruneOutcome {
    pub fn none() -> Self {
        PruneOutcome {
            prune_index: 0,
            prefix_importance: 0.0,
            evaluations_used: 0,
        }
    }

    /// Events left to explain, the merged prefix counting as one.
    pub fn pruned_length(&self, n_events: usize) -> usize {
        if self.prune_index == 0 {
            n_events
        } else {
            n_events - self.prune_index + 1
        }
    }
}

/// One row of a full pruning scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitImportance {
    pub i: usize,
    pub w1: f64,
    pub w2: f64,
}

/// Two-player Shapley values from the four coalition values.
#[inline]
fn two_player(f00: f64, f01: f64, f10: f64, f11: f64) -> (f64, f64) {
    let w1 = 0.5 * ((f10 - f00) + (f11 - f01));
    let w2 = 0.5 * ((f01 - f00) + (f11 - f10));
    (w1, w2)
}

fn split_bits(l: usize, i: usize, old: bool, recent: bool) -> Vec<bool> {
    (0..l).map(|e| if e < i { old } else { recent }).collect()
}

fn check_split(x: &SequenceMatrix, i: usize) -> Result<()> {
    let l = x.n_events();
    if i == 0 || i >= l {
        return Err(Error::InvalidArgument(format!(
            "split index {i} outside 1..={} for a sequence of {l} events",
            l.saturating_sub(1)
        )));
    }
    Ok(())
}

/// Exact Shapley values of the blocks `0..i` (w1) and `i..l` (w2).
pub fn two_split_shapley<S: SequenceScorer + ?Sized>(
    scorer: &S,
    x: &SequenceMatrix,
    i: usize,
    background: &BackgroundMatrix,
) -> Result<(f64, f64)> {
    check_split(x, i)?;
    let l = x.n_events();
    let batch = [(false, false), (false, true), (true, false), (true, true)]
        .iter()
        .map(|&(old, recent)| perturb_events(x, &split_bits(l, i, old, recent), background))
        .collect::<Result<Vec<_>>>()?;
    let v = score_batch(scorer, &batch)?;
    Ok(two_player(v[0], v[1], v[2], v[3]))
}

fn endpoints<S: SequenceScorer + ?Sized>(
    scorer: &S,
    x: &SequenceMatrix,
    background: &BackgroundMatrix,
) -> Result<(f64, f64)> {
    background.check_compatible(x)?;
    let v = score_batch(scorer, &[x.clone(), background.materialize(x.n_events())])?;
    Ok((v[0], v[1]))
}

/// Largest prefix whose aggregate importance is below `eta`.
///
/// Uses `2 + 2 * (splits scanned)` model evaluations.
pub fn prune_index<S: SequenceScorer + ?Sized>(
    scorer: &S,
    x: &SequenceMatrix,
    background: &BackgroundMatrix,
    config: &PruneConfig,
) -> Result<PruneOutcome> {
    let l = x.n_events();
    if l < 2 {
        return Ok(PruneOutcome::none());
    }
    let (f_full, f_base) = endpoints(scorer, x, background)?;
    let mut evaluations = 2;
    for i in (1..l).rev() {
        let batch = [
            perturb_events(x, &split_bits(l, i, false, true), background)?,
            perturb_events(x, &split_bits(l, i, true, false), background)?,
        ];
        let v = score_batch(scorer, &batch)?;
        evaluations += 2;
        let (w1, _) = two_player(f_base, v[0], v[1], f_full);
        if w1.abs() < config.eta {
            return Ok(PruneOutcome {
                prune_index: i,
                prefix_importance: w1,
                evaluations_used: evaluations,
            });
        }
    }
    Ok(PruneOutcome {
        prune_index: 0,
        prefix_importance: 0.0,
        evaluations_used: evaluations,
    })
}

/// Importance of both blocks at every split `1..l`, in order of `i`.
///
/// Issues exactly `2 (l - 1) + 2` model evaluations.
pub fn prune_scan<S: SequenceScorer + ?Sized>(
    scorer: &S,
    x: &SequenceMatrix,
    background: &BackgroundMatrix,
    exec: Execution,
) -> Result<Vec<SplitImportance>> {
    let l = x.n_events();
    if l < 2 {
        return Err(Error::InvalidArgument("a pruning scan needs at least two events".into()));
    }
    let (f_full, f_base) = endpoints(scorer, x, background)?;
    let splits: Vec<usize> = (1..l).collect();
    let exec = exec.for_scorer(scorer.concurrency());
    let pairs = try_map_chunks(exec, &splits, 64, |chunk| {
        let mut batch = Vec::with_capacity(2 * chunk.len());
        for &i in chunk {
            batch.push(perturb_events(x, &split_bits(l, i, false, true), background)?);
            batch.push(perturb_events(x, &split_bits(l, i, true, false), background)?);
        }
        let v = score_batch(scorer, &batch)?;
        Ok(v.chunks(2).map(|p| (p[0], p[1])).collect())
    })?;
    Ok(splits
        .into_iter()
        .zip(pairs)
        .map(|(i, (f01, f10))| {
            let (w1, w2) = two_player(f_base, f01, f10, f_full);
            SplitImportance { i, w1, w2 }
        })
        .collect())
}
