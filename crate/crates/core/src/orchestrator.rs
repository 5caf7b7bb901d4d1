//! Event-, feature- and cell-level pipelines plus corpus-level aggregation.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernel::{
    event_label, explain_players, EventPlayers, ExplanationResult, FeaturePlayers, PlayerMap, SamplerConfig,
    PRUNED_PREFIX_LABEL,
};
use crate::model::SequenceScorer;
use crate::parallel::{try_map, Execution};
use crate::perturb::{perturb_cells, Axis, CoalitionMatrix};
use crate::pruning::{prune_index, PruneConfig, PruneOutcome};
use crate::seqdata::{BackgroundMatrix, SequenceMatrix};

/// Default relevance threshold for cell grouping.
pub const DEFAULT_THETA: f64 = 0.1;

/// Attributions whose mean magnitude is at or below this are left out of RSD.
pub const RSD_MEAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub theta: f64,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig { theta: DEFAULT_THETA }
    }
}

impl CellConfig {
    pub fn new(theta: f64) -> Result<Self> {
        if !theta.is_finite() || theta < 0.0 {
            return Err(Error::InvalidArgument(format!("theta must be finite and >= 0, got {theta}")));
        }
        Ok(CellConfig { theta })
    }
}

/// Event-level explanation with the pruned prefix merged into one player.
pub fn explain_events<S: SequenceScorer + ?Sized>(
    scorer: &S,
    x: &SequenceMatrix,
    background: &BackgroundMatrix,
    prune: &PruneOutcome,
    config: &SamplerConfig,
    exec: Execution,
) -> Result<ExplanationResult> {
    let players = EventPlayers::new(x.n_events(), prune.prune_index)?;
    explain_players(scorer, x, background, &players, config, exec)
}

/// Feature-level explanation over the whole sequence; pruning plays no part.
pub fn explain_features<S: SequenceScorer + ?Sized>(
    scorer: &S,
    x: &SequenceMatrix,
    background: &BackgroundMatrix,
    config: &SamplerConfig,
    exec: Execution,
) -> Result<ExplanationResult> {
    let players = FeaturePlayers {
        names: background.feature_names.clone(),
    };
    explain_players(scorer, x, background, &players, config, exec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    /// Every cell of the pruned events.
    Pruned,
    /// A single relevant-feature x relevant-event cell.
    Intersection,
    /// Cells of a relevant event outside the relevant features.
    EventRemainder,
    /// Cells of a relevant feature outside the relevant and pruned events.
    FeatureRemainder,
    /// Everything else.
    Remainder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGroup {
    pub label: String,
    pub kind: GroupKind,
    /// `(feature, event column)` pairs.
    pub cells: Vec<(usize, usize)>,
}

/// Disjoint cover of the `d x l` grid by labeled cell groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPartition {
    pub n_features: usize,
    pub n_events: usize,
    pub prune_index: usize,
    pub groups: Vec<CellGroup>,
    pub relevant_features: Vec<usize>,
    /// Event columns.
    pub relevant_events: Vec<usize>,
}

impl CellPartition {
    pub fn k(&self) -> usize {
        self.groups.len()
    }

    /// Group count when every group is non-empty: `|F*||E*| + |F*| + |E*| + 2`.
    pub fn nominal_k(&self) -> usize {
        let (nf, ne) = (self.relevant_features.len(), self.relevant_events.len());
        nf * ne + nf + ne + 2
    }

    /// Group index owning each cell, row-major; errors if the groups overlap
    /// or leave a cell uncovered.
    pub fn assignment(&self) -> Result<Vec<usize>> {
        let (d, l) = (self.n_features, self.n_events);
        let mut owner = vec![usize::MAX; d * l];
        for (g, group) in self.groups.iter().enumerate() {
            if group.cells.is_empty() {
                return Err(Error::InvalidArgument(format!("group '{}' is empty", group.label)));
            }
            for &(f, e) in &group.cells {
                if f >= d || e >= l {
                    return Err(Error::Dimension(format!(
                        "cell ({f}, {e}) outside a {d}x{l} grid"
                    )));
                }
                let slot = &mut owner[f * l + e];
                if *slot != usize::MAX {
                    return Err(Error::InvalidArgument(format!(
                        "cell ({f}, {e}) belongs to groups {} and {g}",
                        *slot
                    )));
                }
                *slot = g;
            }
        }
        if let Some(pos) = owner.iter().position(|&g| g == usize::MAX) {
            return Err(Error::InvalidArgument(format!(
                "cell ({}, {}) is in no group",
                pos / l,
                pos % l
            )));
        }
        Ok(owner)
    }
}

/// Groups cells by relevance of their row and column.
///
/// Relevant features and (unpruned) events are those whose absolute
/// attribution exceeds `theta`. Empty groups are dropped.
pub fn build_cell_partition(
    event_attrs: &ExplanationResult,
    feature_attrs: &ExplanationResult,
    prune: &PruneOutcome,
    dims: (usize, usize),
    config: &CellConfig,
) -> Result<CellPartition> {
    let (d, l) = dims;
    let p = prune.prune_index;
    if d == 0 || l == 0 || p >= l {
        return Err(Error::Dimension(format!("invalid grid {d}x{l} with prune index {p}")));
    }
    if feature_attrs.attributions.len() != d {
        return Err(Error::Dimension(format!(
            "{} feature attributions for {d} features",
            feature_attrs.attributions.len()
        )));
    }
    let offset = usize::from(p > 0);
    if event_attrs.attributions.len() != l - p + offset {
        return Err(Error::Dimension(format!(
            "{} event attributions for {l} events pruned at {p}",
            event_attrs.attributions.len()
        )));
    }

    let relevant_features: Vec<usize> = (0..d)
        .filter(|&f| feature_attrs.attributions[f].abs() > config.theta)
        .collect();
    let relevant_events: Vec<usize> = (p..l)
        .filter(|&e| event_attrs.attributions[e - p + offset].abs() > config.theta)
        .collect();
    let is_rel_f: Vec<bool> = (0..d).map(|f| relevant_features.contains(&f)).collect();
    let is_rel_e: Vec<bool> = (0..l).map(|e| relevant_events.contains(&e)).collect();
    let fname = |f: usize| {
        feature_attrs
            .player_labels
            .get(f)
            .cloned()
            .unwrap_or_else(|| format!("f{f}"))
    };

    let mut groups = Vec::new();
    let mut push = |label: String, kind: GroupKind, cells: Vec<(usize, usize)>| {
        if !cells.is_empty() {
            groups.push(CellGroup { label, kind, cells });
        }
    };

    push(
        PRUNED_PREFIX_LABEL.to_string(),
        GroupKind::Pruned,
        (0..d).flat_map(|f| (0..p).map(move |e| (f, e))).collect(),
    );
    for &f in &relevant_features {
        for &e in &relevant_events {
            push(
                format!("cell[{},{}]", fname(f), event_label(e, l)),
                GroupKind::Intersection,
                vec![(f, e)],
            );
        }
    }
    for &e in &relevant_events {
        push(
            format!("event[{}]", event_label(e, l)),
            GroupKind::EventRemainder,
            (0..d).filter(|&f| !is_rel_f[f]).map(|f| (f, e)).collect(),
        );
    }
    for &f in &relevant_features {
        push(
            format!("feature[{}]", fname(f)),
            GroupKind::FeatureRemainder,
            (p..l).filter(|&e| !is_rel_e[e]).map(|e| (f, e)).collect(),
        );
    }
    push(
        "other".to_string(),
        GroupKind::Remainder,
        (0..d)
            .filter(|&f| !is_rel_f[f])
            .flat_map(|f| (p..l).filter(|&e| !is_rel_e[e]).map(move |e| (f, e)))
            .collect(),
    );

    let partition = CellPartition {
        n_features: d,
        n_events: l,
        prune_index: p,
        groups,
        relevant_features,
        relevant_events,
    };
    partition.assignment()?;
    Ok(partition)
}

/// One player per cell group.
#[derive(Debug, Clone)]
pub struct CellPlayers {
    labels: Vec<String>,
    n_features: usize,
    n_events: usize,
    owner: Vec<usize>,
}

impl CellPlayers {
    pub fn new(partition: &CellPartition) -> Result<Self> {
        Ok(CellPlayers {
            labels: partition.groups.iter().map(|g| g.label.clone()).collect(),
            n_features: partition.n_features,
            n_events: partition.n_events,
            owner: partition.assignment()?,
        })
    }

    /// Expands one bit per group into a cell mask.
    pub fn coalition_matrix(&self, bits: &[bool]) -> Result<CoalitionMatrix> {
        if bits.len() != self.labels.len() {
            return Err(Error::Dimension(format!(
                "{} bits for {} cell groups",
                bits.len(),
                self.labels.len()
            )));
        }
        CoalitionMatrix::new(
            self.n_features,
            self.n_events,
            self.owner.iter().map(|&g| bits[g]).collect(),
        )
    }
}

impl PlayerMap for CellPlayers {
    fn axis(&self) -> Axis {
        Axis::Cells
    }
    fn n_players(&self) -> usize {
        self.labels.len()
    }
    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }
    fn apply(&self, x: &SequenceMatrix, background: &BackgroundMatrix, bits: &[bool]) -> Result<SequenceMatrix> {
        perturb_cells(x, &self.coalition_matrix(bits)?, background)
    }
}

pub fn explain_cells<S: SequenceScorer + ?Sized>(
    scorer: &S,
    x: &SequenceMatrix,
    background: &BackgroundMatrix,
    partition: &CellPartition,
    config: &SamplerConfig,
    exec: Execution,
) -> Result<ExplanationResult> {
    if x.shape() != (partition.n_features, partition.n_events) {
        return Err(Error::Dimension(format!(
            "partition is {}x{}, sequence is {:?}",
            partition.n_features,
            partition.n_events,
            x.shape()
        )));
    }
    let players = CellPlayers::new(partition)?;
    explain_players(scorer, x, background, &players, config, exec)
}

/// Position of an event attribution: an offset from the newest event (`0`,
/// `-1`, ...) or the merged prefix. Serialized as an integer or `"pruned"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventTag {
    Pruned,
    Offset(i64),
}

impl Serialize for EventTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EventTag::Pruned => serializer.serialize_str("pruned"),
            EventTag::Offset(t) => serializer.serialize_i64(*t),
        }
    }
}

impl<'de> Deserialize<'de> for EventTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct TagVisitor;
        impl Visitor<'_> for TagVisitor {
            type Value = EventTag;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an integer event offset or \"pruned\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<EventTag, E> {
                Ok(EventTag::Offset(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<EventTag, E> {
                i64::try_from(v).map(EventTag::Offset).map_err(E::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<EventTag, E> {
                if v == "pruned" {
                    Ok(EventTag::Pruned)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        deserializer.deserialize_any(TagVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAttribution {
    pub t: EventTag,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAttribution {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAttribution {
    pub group: String,
    /// `[feature index, event offset]` pairs.
    pub members: Vec<[i64; 2]>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExactFlags {
    pub events: bool,
    pub features: bool,
    pub cells: bool,
}

/// Serialized explanation of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceExplanation {
    pub entity: String,
    pub score: f64,
    pub base_score: f64,
    pub prune_index: usize,
    pub n_events: usize,
    pub events: Vec<EventAttribution>,
    pub features: Vec<FeatureAttribution>,
    pub cells: Vec<CellAttribution>,
    pub exact: ExactFlags,
}

impl SequenceExplanation {
    /// Event count after merging the pruned prefix into one.
    pub fn pruned_length(&self) -> usize {
        PruneOutcome {
            prune_index: self.prune_index,
            prefix_importance: 0.0,
            evaluations_used: 0,
        }
        .pruned_length(self.n_events)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainMode {
    Event,
    Feature,
    Cell,
    All,
}

impl ExplainMode {
    fn needs_events(self) -> bool {
        !matches!(self, ExplainMode::Feature)
    }
    fn needs_features(self) -> bool {
        !matches!(self, ExplainMode::Event)
    }
    fn needs_cells(self) -> bool {
        matches!(self, ExplainMode::Cell | ExplainMode::All)
    }
    fn emits_events(self) -> bool {
        matches!(self, ExplainMode::Event | ExplainMode::All)
    }
    fn emits_features(self) -> bool {
        matches!(self, ExplainMode::Feature | ExplainMode::All)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub mode: ExplainMode,
    pub sampler: SamplerConfig,
    pub prune: PruneConfig,
    pub cell: CellConfig,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            mode: ExplainMode::All,
            sampler: SamplerConfig::default(),
            prune: PruneConfig::default(),
            cell: CellConfig::default(),
        }
    }
}

/// Everything computed for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRun {
    pub explanation: SequenceExplanation,
    pub prune: PruneOutcome,
    pub events: Option<ExplanationResult>,
    pub features: Option<ExplanationResult>,
    pub cells: Option<ExplanationResult>,
    pub partition: Option<CellPartition>,
    /// Model evaluations across pruning and all explanations.
    pub evaluations: usize,
}

fn event_tag(label: &str) -> EventTag {
    if label == PRUNED_PREFIX_LABEL {
        EventTag::Pruned
    } else {
        label
            .strip_prefix("t=")
            .and_then(|t| t.parse().ok())
            .map(EventTag::Offset)
            .unwrap_or(EventTag::Pruned)
    }
}

/// Runs pruning then event, feature and cell explanations as the mode asks.
/// Cell grouping consumes the event and feature results, so those run first.
pub fn explain_sequence<S: SequenceScorer + ?Sized>(
    scorer: &S,
    x: &SequenceMatrix,
    background: &BackgroundMatrix,
    config: &ExplainConfig,
    exec: Execution,
) -> Result<SequenceRun> {
    background.check_compatible(x)?;
    let (d, l) = x.shape();
    let mode = config.mode;
    let mut evaluations = 0;

    let prune = if mode.needs_events() {
        let p = prune_index(scorer, x, background, &config.prune)?;
        evaluations += p.evaluations_used;
        p
    } else {
        PruneOutcome::none()
    };
    let events = if mode.needs_events() {
        let r = explain_events(scorer, x, background, &prune, &config.sampler, exec)?;
        evaluations += r.n_evaluations;
        Some(r)
    } else {
        None
    };
    let features = if mode.needs_features() {
        let r = explain_features(scorer, x, background, &config.sampler, exec)?;
        evaluations += r.n_evaluations;
        Some(r)
    } else {
        None
    };
    let (partition, cells) = match (&events, &features) {
        (Some(ev), Some(ft)) if mode.needs_cells() => {
            let partition = build_cell_partition(ev, ft, &prune, (d, l), &config.cell)?;
            let r = explain_cells(scorer, x, background, &partition, &config.sampler, exec)?;
            evaluations += r.n_evaluations;
            (Some(partition), Some(r))
        }
        _ => (None, None),
    };

    let first = events
        .as_ref()
        .or(features.as_ref())
        .expect("every mode runs events or features");
    let mut explanation = SequenceExplanation {
        entity: x.entity_id().to_string(),
        score: first.full_score,
        base_score: first.base_score,
        prune_index: prune.prune_index,
        n_events: l,
        events: Vec::new(),
        features: Vec::new(),
        cells: Vec::new(),
        exact: ExactFlags::default(),
    };
    if let (true, Some(ev)) = (mode.emits_events(), &events) {
        explanation.events = ev
            .player_labels
            .iter()
            .zip(&ev.attributions)
            .map(|(label, &value)| EventAttribution {
                t: event_tag(label),
                value,
            })
            .collect();
        explanation.exact.events = ev.exact;
    }
    if let (true, Some(ft)) = (mode.emits_features(), &features) {
        explanation.features = ft
            .player_labels
            .iter()
            .zip(&ft.attributions)
            .map(|(name, &value)| FeatureAttribution {
                name: name.clone(),
                value,
            })
            .collect();
        explanation.exact.features = ft.exact;
    }
    if let (Some(part), Some(cr)) = (&partition, &cells) {
        explanation.cells = part
            .groups
            .iter()
            .zip(&cr.attributions)
            .map(|(g, &value)| CellAttribution {
                group: g.label.clone(),
                members: g
                    .cells
                    .iter()
                    .map(|&(f, e)| [f as i64, -((l - 1 - e) as i64)])
                    .collect(),
                value,
            })
            .collect();
        explanation.exact.cells = cr.exact;
    }

    Ok(SequenceRun {
        explanation,
        prune,
        events,
        features,
        cells,
        partition,
        evaluations,
    })
}

/// Explains every sequence, in parallel across sequences when allowed.
pub fn explain_corpus<S: SequenceScorer + ?Sized>(
    scorer: &S,
    data: &[SequenceMatrix],
    background: &BackgroundMatrix,
    config: &ExplainConfig,
    exec: Execution,
) -> Result<Vec<SequenceRun>> {
    let outer = exec.for_scorer(scorer.concurrency());
    try_map(outer, data, |x| explain_sequence(scorer, x, background, config, exec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDistribution {
    pub t: EventTag,
    pub values: Vec<f64>,
}

/// Corpus-level pruning statistics and per-position attribution samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalReport {
    pub n_sequences: usize,
    pub n_samples: usize,
    pub log2_n_samples: f64,
    pub mean_pruned_length: f64,
    pub median_pruned_length: f64,
    pub max_pruned_length: usize,
    /// Percentage of sequences whose pruned length is below `log2(n_samples)`.
    pub percentile_below_log2: f64,
    pub event_attributions: Vec<EventDistribution>,
}

fn median_of(values: &mut [usize]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

pub fn global_aggregate(results: &[SequenceExplanation], n_samples: usize) -> Result<GlobalReport> {
    if results.is_empty() {
        return Err(Error::Empty("no explanations to aggregate".into()));
    }
    if n_samples < 2 {
        return Err(Error::InvalidArgument("n_samples must be at least 2".into()));
    }
    let mut lengths: Vec<usize> = results.iter().map(SequenceExplanation::pruned_length).collect();
    let n = lengths.len();
    let log2 = (n_samples as f64).log2();
    let total: usize = lengths.iter().sum();
    let below = lengths.iter().filter(|&&len| (len as f64) < log2).count();
    let max = *lengths.iter().max().expect("non-empty");
    let median = median_of(&mut lengths);

    let mut by_tag: BTreeMap<EventTag, Vec<f64>> = BTreeMap::new();
    for r in results {
        for ev in &r.events {
            by_tag.entry(ev.t).or_default().push(ev.value);
        }
    }

    Ok(GlobalReport {
        n_sequences: n,
        n_samples,
        log2_n_samples: log2,
        mean_pruned_length: total as f64 / n as f64,
        median_pruned_length: median,
        max_pruned_length: max,
        percentile_below_log2: 100.0 * below as f64 / n as f64,
        event_attributions: by_tag
            .into_iter()
            .map(|(t, values)| EventDistribution { t, values })
            .collect(),
    })
}

/// Mean over players of sample-std / |mean| across repeated runs.
///
/// Players whose mean magnitude is at most [`RSD_MEAN_FLOOR`] are skipped.
pub fn rsd(runs: &[Vec<f64>]) -> Result<f64> {
    if runs.len() < 2 {
        return Err(Error::InvalidArgument("RSD needs at least two runs".into()));
    }
    let m = runs[0].len();
    if runs.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension("runs have different player counts".into()));
    }
    let n = runs.len() as f64;
    let mut per_player = Vec::with_capacity(m);
    for j in 0..m {
        let mean = runs.iter().map(|r| r[j]).sum::<f64>() / n;
        if mean.abs() <= RSD_MEAN_FLOOR {
            continue;
        }
        let var = runs.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        per_player.push(var.sqrt() / mean.abs());
    }
    if per_player.is_empty() {
        return Err(Error::UndefinedRsd("every player's mean attribution is ~0".into()));
    }
    Ok(per_player.iter().sum::<f64>() / per_player.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceStudy {
    pub entity: String,
    pub prune_index: usize,
    pub player_labels: Vec<String>,
    pub seeds: Vec<u64>,
    pub runs: Vec<Vec<f64>>,
    pub rsd: f64,
}

/// Repeats an event- or feature-level explanation with seeds
/// `seed, seed + 1, ...` and reports the RSD of the attributions.
pub fn variance_study<S: SequenceScorer + ?Sized>(
    scorer: &S,
    x: &SequenceMatrix,
    background: &BackgroundMatrix,
    config: &ExplainConfig,
    repeats: usize,
    exec: Execution,
) -> Result<VarianceStudy> {
    if repeats < 2 {
        return Err(Error::InvalidArgument("variance study needs at least two repeats".into()));
    }
    let events_axis = match config.mode {
        ExplainMode::Event => true,
        ExplainMode::Feature => false,
        other => {
            return Err(Error::InvalidArgument(format!(
                "variance study supports event or feature mode, not {other:?}"
            )))
        }
    };
    let prune = if events_axis {
        prune_index(scorer, x, background, &config.prune)?
    } else {
        PruneOutcome::none()
    };
    let seeds: Vec<u64> = (0..repeats as u64).map(|r| config.sampler.seed.wrapping_add(r)).collect();
    let results = try_map(exec.for_scorer(scorer.concurrency()), &seeds, |&seed| {
        let sampler = SamplerConfig {
            seed,
            ..config.sampler
        };
        if events_axis {
            explain_events(scorer, x, background, &prune, &sampler, exec)
        } else {
            explain_features(scorer, x, background, &sampler, exec)
        }
    })?;
    let runs: Vec<Vec<f64>> = results.iter().map(|r| r.attributions.clone()).collect();
    Ok(VarianceStudy {
        entity: x.entity_id().to_string(),
        prune_index: prune.prune_index,
        player_labels: results[0].player_labels.clone(),
        seeds,
        rsd: rsd(&runs)?,
        runs,
    })
}
