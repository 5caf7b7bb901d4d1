//! Maps coalitions onto concrete model inputs by mixing a sequence with its
//! background. None of these functions mutate their inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqdata::{BackgroundMatrix, SequenceMatrix};

/// Which part of the input a set of players stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Features,
    Events,
    Cells,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoalitionVector {
    bits: Vec<bool>,
    axis: Axis,
}

impl CoalitionVector {
    pub fn new(bits: Vec<bool>, axis: Axis) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidArgument("coalition must have at least one player".into()));
        }
        Ok(CoalitionVector { bits, axis })
    }

    pub fn ones(m: usize, axis: Axis) -> Result<Self> {
        Self::new(vec![true; m], axis)
    }

    pub fn zeros(m: usize, axis: Axis) -> Result<Self> {
        Self::new(vec![false; m], axis)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of players present.
    pub fn size(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// A `d x l` keep-mask over cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoalitionMatrix {
    n_features: usize,
    n_events: usize,
    bits: Vec<bool>,
}

impl CoalitionMatrix {
    pub fn new(n_features: usize, n_events: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != n_features * n_events || bits.is_empty() {
            return Err(Error::Dimension(format!(
                "{} bits for a {n_features}x{n_events} coalition matrix",
                bits.len()
            )));
        }
        Ok(CoalitionMatrix {
            n_features,
            n_events,
            bits,
        })
    }

    pub fn filled(n_features: usize, n_events: usize, value: bool) -> Self {
        CoalitionMatrix {
            n_features,
            n_events,
            bits: vec![value; n_features * n_events],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_features, self.n_events)
    }

    #[inline]
    pub fn get(&self, feature: usize, event: usize) -> bool {
        self.bits[feature * self.n_events + event]
    }

    pub fn set(&mut self, feature: usize, event: usize, keep: bool) {
        self.bits[feature * self.n_events + event] = keep;
    }

    /// Columns constant, taken from an event coalition.
    pub fn from_event_bits(n_features: usize, events: &[bool]) -> Self {
        let l = events.len();
        let bits = (0..n_features).flat_map(|_| events.iter().copied()).collect();
        CoalitionMatrix {
            n_features,
            n_events: l,
            bits,
        }
    }

    /// Rows constant, taken from a feature coalition.
    pub fn from_feature_bits(features: &[bool], n_events: usize) -> Self {
        let bits = features
            .iter()
            .flat_map(|&b| std::iter::repeat_n(b, n_events))
            .collect();
        CoalitionMatrix {
            n_features: features.len(),
            n_events,
            bits,
        }
    }
}

fn mix(x: &SequenceMatrix, b: &BackgroundMatrix, keep: impl Fn(usize, usize) -> bool) -> SequenceMatrix {
    let (d, l) = x.shape();
    let mut values = Vec::with_capacity(d * l);
    for f in 0..d {
        let bg = b.value(f);
        let row = x.row(f);
        values.extend(row.iter().enumerate().map(|(e, &v)| if keep(f, e) { v } else { bg }));
    }
    SequenceMatrix::from_parts_unchecked(x.entity_id().to_string(), d, l, values)
}

/// Row `i` keeps `X[i, :]` where `z_i = 1`, otherwise takes the background row.
pub fn perturb_features(x: &SequenceMatrix, z: &[bool], b: &BackgroundMatrix) -> Result<SequenceMatrix> {
    b.check_compatible(x)?;
    if z.len() != x.n_features() {
        return Err(Error::Dimension(format!(
            "feature coalition has {} bits for {} features",
            z.len(),
            x.n_features()
        )));
    }
    Ok(mix(x, b, |f, _| z[f]))
}

/// Column `j` keeps `X[:, j]` where `z_j = 1`, otherwise takes the background column.
pub fn perturb_events(x: &SequenceMatrix, z: &[bool], b: &BackgroundMatrix) -> Result<SequenceMatrix> {
    b.check_compatible(x)?;
    if z.len() != x.n_events() {
        return Err(Error::Dimension(format!(
            "event coalition has {} bits for {} events",
            z.len(),
            x.n_events()
        )));
    }
    Ok(mix(x, b, |_, e| z[e]))
}

/// Elementwise `X * Z + B * (1 - Z)`.
pub fn perturb_cells(x: &SequenceMatrix, z: &CoalitionMatrix, b: &BackgroundMatrix) -> Result<SequenceMatrix> {
    b.check_compatible(x)?;
    if z.shape() != x.shape() {
        return Err(Error::Dimension(format!(
            "coalition matrix {:?} does not match sequence {:?}",
            z.shape(),
            x.shape()
        )));
    }
    Ok(mix(x, b, |f, e| z.get(f, e)))
}

/// Expands an event coalition whose first bit stands for the grouped prefix
/// `0..prune_index` into one bit per column.
pub fn expand_pruned_events(bits: &[bool], prune_index: usize, n_events: usize) -> Result<Vec<bool>> {
    let expected = if prune_index == 0 {
        n_events
    } else {
        n_events - prune_index + 1
    };
    if prune_index >= n_events || bits.len() != expected {
        return Err(Error::Dimension(format!(
            "{} bits for {n_events} events with prune index {prune_index}",
            bits.len()
        )));
    }
    if prune_index == 0 {
        return Ok(bits.to_vec());
    }
    let mut full = vec![bits[0]; prune_index];
    full.extend_from_slice(&bits[1..]);
    Ok(full)
}
