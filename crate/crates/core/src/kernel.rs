//! Shapley kernel weights, coalition enumeration and sampling, and the
//! constrained weighted least-squares fit that turns model evaluations into
//! attributions.
//!
//! The surrogate `g(z) = w0 + sum_i w_i z_i` is fit under the two equality
//! constraints `g(0) = f(B)` and `g(1) = f(X)`. The constraints are enforced
//! by fixing `w0` and eliminating the last weight, so local accuracy holds to
//! rounding error in both exact and sampled mode.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{score_batch, SequenceScorer};
use crate::parallel::{try_map_chunks, Execution};
use crate::perturb::{perturb_cells, perturb_events, perturb_features, Axis, CoalitionMatrix};
use crate::seqdata::{BackgroundMatrix, SequenceMatrix};

/// Default coalition budget.
pub const DEFAULT_N_SAMPLES: usize = 32_000;

/// Sequences handed to the scorer per batch.
const EVAL_CHUNK: usize = 256;

/// Diagonal shift applied to the normalized normal equations when plain
/// Cholesky fails.
pub const RIDGE_FALLBACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_samples: DEFAULT_N_SAMPLES,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn new(n_samples: usize, seed: u64) -> Result<Self> {
        let cfg = SamplerConfig { n_samples, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_samples must be at least 2, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }

    /// True when all `2^m` coalitions fit in the budget.
    pub fn is_exact_for(&self, m: usize) -> bool {
        m < 63 && (1u64 << m) <= self.n_samples as u64
    }
}

/// Shapley kernel weight of a coalition of size `s` among `m` players.
pub fn kernel_weight(m: usize, s: usize) -> Result<f64> {
    if m < 2 || s == 0 || s >= m {
        return Err(Error::InvalidArgument(format!(
            "kernel weight undefined for m={m}, s={s} (requires m >= 2 and 1 <= s <= m-1)"
        )));
    }
    let (mf, sf) = (m as f64, s as f64);
    let binom = binomial(m, s);
    if binom.is_finite() {
        Ok((mf - 1.0) / (binom * sf * (mf - sf)))
    } else {
        Ok(((mf - 1.0).ln() - ln_binomial(m, s) - sf.ln() - (mf - sf).ln()).exp())
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    // the running product drifts by an ulp; integers below 2^53 are exact
    if acc < 9.0e15 {
        acc.round()
    } else {
        acc
    }
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// One coalition together with its regression weight.
///
/// The empty and full coalitions carry infinite weight; they enter the fit
/// as constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCoalition {
    pub bits: Vec<bool>,
    pub weight: f64,
}

impl WeightedCoalition {
    pub fn size(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionSet {
    pub n_players: usize,
    /// All `2^m` coalitions present.
    pub exact: bool,
    pub coalitions: Vec<WeightedCoalition>,
}

impl CoalitionSet {
    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }
}

fn mask_bits(mask: u64, m: usize) -> Vec<bool> {
    (0..m).map(|i| mask >> i & 1 == 1).collect()
}

/// Lexicographic `k`-subsets of `0..n`.
fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Chooses the coalitions to evaluate for `m` players.
///
/// Exact mode (`2^m <= n_samples`) enumerates everything with kernel weights.
/// Otherwise the empty and full coalitions are always included; size classes
/// `{s, m - s}` whose share of the kernel mass would buy at least their full
/// population are enumerated outright, and the remaining budget is filled by
/// drawing sizes in proportion to their kernel mass, each draw paired with its
/// complement. Repeated draws merge, their multiplicity adding to the weight.
pub fn draw_coalitions(m: usize, config: &SamplerConfig) -> Result<CoalitionSet> {
    config.validate()?;
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one player".into()));
    }
    if config.is_exact_for(m) {
        let coalitions = (0..1u64 << m)
            .map(|mask| {
                let bits = mask_bits(mask, m);
                let s = mask.count_ones() as usize;
                let weight = if s == 0 || s == m {
                    f64::INFINITY
                } else {
                    kernel_weight(m, s).expect("interior size")
                };
                WeightedCoalition { bits, weight }
            })
            .collect();
        return Ok(CoalitionSet {
            n_players: m,
            exact: true,
            coalitions,
        });
    }

    let mut coalitions = vec![
        WeightedCoalition {
            bits: vec![false; m],
            weight: f64::INFINITY,
        },
        WeightedCoalition {
            bits: vec![true; m],
            weight: f64::INFINITY,
        },
    ];
    let mut budget = config.n_samples - 2;
    let mf = m as f64;

    // size classes {s, m - s}, outermost first; mass includes the (m-1) factor
    let classes: Vec<(usize, bool, f64)> = (1..=m / 2)
        .map(|s| {
            let paired = s != m - s;
            let mass = (mf - 1.0) / (s as f64 * (mf - s as f64)) * if paired { 2.0 } else { 1.0 };
            (s, paired, mass)
        })
        .collect();
    let mut remaining_mass: f64 = classes.iter().map(|c| c.2).sum();
    let mut next_class = 0;
    while next_class < classes.len() && budget > 0 {
        let (s, paired, mass) = classes[next_class];
        let population = binomial(m, s) * if paired { 2.0 } else { 1.0 };
        let allotted = budget as f64 * mass / remaining_mass;
        if population > allotted || population > budget as f64 {
            break;
        }
        let w = kernel_weight(m, s)?;
        for_each_subset(m, s, |idx| {
            let mut bits = vec![false; m];
            for &i in idx {
                bits[i] = true;
            }
            if paired {
                let complement: Vec<bool> = bits.iter().map(|b| !b).collect();
                coalitions.push(WeightedCoalition {
                    bits: complement,
                    weight: w,
                });
            }
            coalitions.push(WeightedCoalition { bits, weight: w });
        });
        budget -= population as usize;
        remaining_mass -= mass;
        next_class += 1;
    }

    let sampled_classes = &classes[next_class..];
    if budget > 0 && !sampled_classes.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let class_mass: f64 = sampled_classes.iter().map(|c| c.2).sum();
        let mut slots: HashMap<Vec<bool>, usize> = HashMap::new();
        let mut drawn: Vec<(Vec<bool>, u64)> = Vec::new();
        let mut draws = 0u64;
        let max_draws = 64 * budget as u64 + 10_000;
        let mut record = |bits: Vec<bool>, drawn: &mut Vec<(Vec<bool>, u64)>| {
            match slots.get(&bits) {
                Some(&slot) => drawn[slot].1 += 1,
                None => {
                    slots.insert(bits.clone(), drawn.len());
                    drawn.push((bits, 1));
                }
            }
        };
        while drawn.len() < budget && draws < max_draws {
            let mut u = rng.random::<f64>() * class_mass;
            let mut pick = sampled_classes.len() - 1;
            for (i, c) in sampled_classes.iter().enumerate() {
                if u < c.2 {
                    pick = i;
                    break;
                }
                u -= c.2;
            }
            let s = sampled_classes[pick].0;
            let mut bits = vec![false; m];
            for i in index::sample(&mut rng, m, s).into_iter() {
                bits[i] = true;
            }
            let complement: Vec<bool> = bits.iter().map(|b| !b).collect();
            record(bits, &mut drawn);
            draws += 1;
            if drawn.len() < budget {
                record(complement, &mut drawn);
                draws += 1;
            }
        }
        let per_draw = class_mass / draws as f64;
        coalitions.extend(drawn.into_iter().map(|(bits, count)| WeightedCoalition {
            bits,
            weight: per_draw * count as f64,
        }));
    }

    let exact = next_class == classes.len();
    Ok(CoalitionSet {
        n_players: m,
        exact,
        coalitions,
    })
}

/// Interior coalition with its weight and model output.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionSample {
    pub bits: Vec<bool>,
    pub weight: f64,
    pub value: f64,
}

/// Fits the constrained weighted least-squares surrogate and returns one
/// attribution per player.
///
/// Every sample must be an interior coalition (`1 <= |z| <= m - 1`). With a
/// single player the answer is `f_full - f_base` and no samples are needed.
pub fn solve_attributions(m: usize, samples: &[CoalitionSample], f_full: f64, f_base: f64) -> Result<Vec<f64>> {
    let delta = f_full - f_base;
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one player".into()));
    }
    if m == 1 {
        return Ok(vec![delta]);
    }
    if samples.is_empty() {
        return Err(Error::Solver("no interior coalitions; increase n_samples".into()));
    }
    for s in samples {
        let size = s.bits.iter().filter(|&&b| b).count();
        if s.bits.len() != m || size == 0 || size == m {
            return Err(Error::InvalidArgument(format!(
                "sample of size {size} over {} bits is not an interior coalition of {m} players",
                s.bits.len()
            )));
        }
        if !(s.weight.is_finite() && s.weight > 0.0) || !s.value.is_finite() {
            return Err(Error::InvalidArgument("sample weights must be positive and values finite".into()));
        }
    }
    let distinct = {
        let mut seen: Vec<&[bool]> = samples.iter().map(|s| s.bits.as_slice()).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    };
    let k = m - 1;
    if distinct < k {
        return Err(Error::Solver(format!(
            "rank-deficient design: {distinct} distinct coalitions for {k} free weights; increase n_samples"
        )));
    }

    let total_weight: f64 = samples.iter().map(|s| s.weight).sum();
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let mut row = vec![0.0; k];
    for s in samples {
        let w = s.weight / total_weight;
        let last = if s.bits[k] { 1.0 } else { 0.0 };
        for (i, r) in row.iter_mut().enumerate() {
            *r = if s.bits[i] { 1.0 } else { 0.0 } - last;
        }
        let target = s.value - f_base - last * delta;
        for i in 0..k {
            if row[i] == 0.0 {
                continue;
            }
            let wi = w * row[i];
            rhs[i] += wi * target;
            for j in 0..=i {
                gram[i * k + j] += wi * row[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            gram[j * k + i] = gram[i * k + j];
        }
    }

    let beta = match cholesky_solve(&gram, &rhs, k, 0.0) {
        Some(b) => b,
        None => cholesky_solve(&gram, &rhs, k, RIDGE_FALLBACK).ok_or_else(|| {
            Error::Solver("normal equations are singular even with ridge fallback; increase n_samples".into())
        })?,
    };
    let mut weights = beta;
    let partial: f64 = weights.iter().sum();
    weights.push(delta - partial);
    Ok(weights)
}

/// Solves `(A + ridge I) x = b` for symmetric positive definite `A`.
/// Returns `None` when a pivot is not safely positive.
fn cholesky_solve(a: &[f64], b: &[f64], n: usize, ridge: f64) -> Option<Vec<f64>> {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
    if max_diag <= 0.0 && ridge == 0.0 {
        return None;
    }
    let tol = max_diag * 1e-13;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            if i == j {
                sum += ridge;
            }
            for p in 0..j {
                sum -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if !sum.is_finite() || sum <= tol {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for p in 0..i {
            sum -= l[i * n + p] * y[p];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for p in i + 1..n {
            sum -= l[p * n + i] * x[p];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}

/// Per-player attributions for one explained sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationResult {
    pub axis: Axis,
    pub player_labels: Vec<String>,
    pub attributions: Vec<f64>,
    /// `f(B)`, the score with every player absent.
    pub base_score: f64,
    /// `f(X)`, the explained score.
    pub full_score: f64,
    pub exact: bool,
    pub n_evaluations: usize,
}

impl ExplanationResult {
    /// `|sum(w) + w0 - f(X)|`.
    pub fn local_accuracy_gap(&self) -> f64 {
        (self.attributions.iter().sum::<f64>() + self.base_score - self.full_score).abs()
    }

    pub fn n_players(&self) -> usize {
        self.attributions.len()
    }
}

/// Maps a coalition over some set of players onto a concrete input.
pub trait PlayerMap: Sync {
    fn axis(&self) -> Axis;
    fn n_players(&self) -> usize;
    fn labels(&self) -> Vec<String>;
    fn apply(&self, x: &SequenceMatrix, background: &BackgroundMatrix, bits: &[bool]) -> Result<SequenceMatrix>;
}

/// One player per feature row.
#[derive(Debug, Clone)]
pub struct FeaturePlayers {
    pub names: Vec<String>,
}

impl PlayerMap for FeaturePlayers {
    fn axis(&self) -> Axis {
        Axis::Features
    }
    fn n_players(&self) -> usize {
        self.names.len()
    }
    fn labels(&self) -> Vec<String> {
        self.names.clone()
    }
    fn apply(&self, x: &SequenceMatrix, background: &BackgroundMatrix, bits: &[bool]) -> Result<SequenceMatrix> {
        perturb_features(x, bits, background)
    }
}

/// One player per event column, optionally with the oldest `prune_index`
/// columns merged into a leading "pruned_prefix" player.
#[derive(Debug, Clone)]
pub struct EventPlayers {
    pub n_events: usize,
    pub prune_index: usize,
}

pub const PRUNED_PREFIX_LABEL: &str = "pruned_prefix";

impl EventPlayers {
    pub fn new(n_events: usize, prune_index: usize) -> Result<Self> {
        if n_events == 0 || prune_index >= n_events {
            return Err(Error::InvalidArgument(format!(
                "prune index {prune_index} invalid for {n_events} events"
            )));
        }
        Ok(EventPlayers { n_events, prune_index })
    }

    /// Column index of each non-prefix player, oldest first.
    pub fn columns(&self) -> std::ops::Range<usize> {
        self.prune_index..self.n_events
    }
}

/// Label of the event at column `e` of `l`: the newest is `t=0`, then `t=-1`, ...
pub fn event_label(e: usize, l: usize) -> String {
    format!("t={}", -((l - 1 - e) as i64))
}

impl PlayerMap for EventPlayers {
    fn axis(&self) -> Axis {
        Axis::Events
    }
    fn n_players(&self) -> usize {
        self.n_events - self.prune_index + usize::from(self.prune_index > 0)
    }
    fn labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.n_players());
        if self.prune_index > 0 {
            labels.push(PRUNED_PREFIX_LABEL.to_string());
        }
        labels.extend(self.columns().map(|e| event_label(e, self.n_events)));
        labels
    }
    fn apply(&self, x: &SequenceMatrix, background: &BackgroundMatrix, bits: &[bool]) -> Result<SequenceMatrix> {
        if self.prune_index == 0 {
            return perturb_events(x, bits, background);
        }
        let full = crate::perturb::expand_pruned_events(bits, self.prune_index, self.n_events)?;
        perturb_events(x, &full, background)
    }
}

/// One player per individual cell, row-major.
#[derive(Debug, Clone)]
pub struct SingleCellPlayers {
    pub n_features: usize,
    pub n_events: usize,
}

impl PlayerMap for SingleCellPlayers {
    fn axis(&self) -> Axis {
        Axis::Cells
    }
    fn n_players(&self) -> usize {
        self.n_features * self.n_events
    }
    fn labels(&self) -> Vec<String> {
        (0..self.n_features)
            .flat_map(|f| (0..self.n_events).map(move |e| format!("cell[f{f},{}]", event_label(e, self.n_events))))
            .collect()
    }
    fn apply(&self, x: &SequenceMatrix, background: &BackgroundMatrix, bits: &[bool]) -> Result<SequenceMatrix> {
        let z = CoalitionMatrix::new(self.n_features, self.n_events, bits.to_vec())?;
        perturb_cells(x, &z, background)
    }
}

/// Scores every coalition of `set` under `players`, in set order.
pub fn evaluate_coalitions<S, P>(
    scorer: &S,
    x: &SequenceMatrix,
    background: &BackgroundMatrix,
    players: &P,
    set: &CoalitionSet,
    exec: Execution,
) -> Result<Vec<f64>>
where
    S: SequenceScorer + ?Sized,
    P: PlayerMap + ?Sized,
{
    let exec = exec.for_scorer(scorer.concurrency());
    try_map_chunks(exec, &set.coalitions, EVAL_CHUNK, |chunk| {
        let batch = chunk
            .iter()
            .map(|c| players.apply(x, background, &c.bits))
            .collect::<Result<Vec<_>>>()?;
        score_batch(scorer, &batch)
    })
}

/// Draws coalitions, evaluates them, and solves for attributions.
pub fn explain_players<S, P>(
    scorer: &S,
    x: &SequenceMatrix,
    background: &BackgroundMatrix,
    players: &P,
    config: &SamplerConfig,
    exec: Execution,
) -> Result<ExplanationResult>
where
    S: SequenceScorer + ?Sized,
    P: PlayerMap + ?Sized,
{
    background.check_compatible(x)?;
    let m = players.n_players();
    let set = draw_coalitions(m, config)?;
    let values = evaluate_coalitions(scorer, x, background, players, &set, exec)?;

    let mut f_full = None;
    let mut f_base = None;
    let mut samples = Vec::with_capacity(set.len());
    for (c, &value) in set.coalitions.iter().zip(&values) {
        match c.size() {
            0 => f_base = Some(value),
            s if s == m => f_full = Some(value),
            _ => samples.push(CoalitionSample {
                bits: c.bits.clone(),
                weight: c.weight,
                value,
            }),
        }
    }
    let (f_full, f_base) = match (f_full, f_base) {
        (Some(a), Some(b)) => (a, b),
        _ => unreachable!("coalition sets always hold the empty and full coalitions"),
    };
    let attributions = solve_attributions(m, &samples, f_full, f_base)?;
    Ok(ExplanationResult {
        axis: players.axis(),
        player_labels: players.labels(),
        attributions,
        base_score: f_base,
        full_score: f_full,
        exact: set.exact,
        n_evaluations: values.len(),
    })
}

/// Explains `x` along one axis without pruning. Feature players are named
/// after the background's features; cells are individual players.
pub fn shapley_explain<S: SequenceScorer + ?Sized>(
    scorer: &S,
    x: &SequenceMatrix,
    background: &BackgroundMatrix,
    axis: Axis,
    config: &SamplerConfig,
) -> Result<ExplanationResult> {
    shapley_explain_with(scorer, x, background, axis, config, Execution::default())
}

pub fn shapley_explain_with<S: SequenceScorer + ?Sized>(
    scorer: &S,
    x: &SequenceMatrix,
    background: &BackgroundMatrix,
    axis: Axis,
    config: &SamplerConfig,
    exec: Execution,
) -> Result<ExplanationResult> {
    background.check_compatible(x)?;
    match axis {
        Axis::Features => {
            let players = FeaturePlayers {
                names: background.feature_names.clone(),
            };
            explain_players(scorer, x, background, &players, config, exec)
        }
        Axis::Events => {
            let players = EventPlayers::new(x.n_events(), 0)?;
            explain_players(scorer, x, background, &players, config, exec)
        }
        Axis::Cells => {
            let players = SingleCellPlayers {
                n_features: x.n_features(),
                n_events: x.n_events(),
            };
            explain_players(scorer, x, background, &players, config, exec)
        }
    }
}
