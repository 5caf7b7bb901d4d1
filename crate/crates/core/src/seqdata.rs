//! Event tables, per-entity sequence matrices and background construction.
//!
//! A [`SequenceMatrix`] stores `d` features by `l` events in row-major order.
//! Column `l - 1` is the most recent event and is the one whose score gets
//! explained.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// How a feature column is encoded, which also fixes its background aggregator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    /// Categories encoded as real numbers (ordinal codes).
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    Mean,
    /// Most frequent value, ties broken toward the smallest encoded value.
    Mode,
}

impl FeatureKind {
    pub fn aggregator(self) -> Aggregator {
        match self {
            FeatureKind::Numeric => Aggregator::Mean,
            FeatureKind::Categorical => Aggregator::Mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSchema {
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub entity_key: String,
    pub order_key: String,
}

impl EventSchema {
    /// Schema with every feature numeric.
    pub fn numeric(
        feature_names: Vec<String>,
        entity_key: impl Into<String>,
        order_key: impl Into<String>,
    ) -> Result<Self> {
        let kinds = vec![FeatureKind::Numeric; feature_names.len()];
        let schema = EventSchema {
            feature_names,
            feature_kinds: kinds,
            entity_key: entity_key.into(),
            order_key: order_key.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let schema: EventSchema = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_names.is_empty() {
            return Err(Error::Schema("schema declares no features".into()));
        }
        if self.feature_kinds.len() != self.feature_names.len() {
            return Err(Error::Schema(format!(
                "{} feature names but {} feature kinds",
                self.feature_names.len(),
                self.feature_kinds.len()
            )));
        }
        let mut seen = HashMap::new();
        for (i, name) in self.feature_names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Schema(format!("feature {i} has an empty name")));
            }
            if let Some(prev) = seen.insert(name.as_str(), i) {
                return Err(Error::Schema(format!(
                    "feature name '{name}' repeated at positions {prev} and {i}"
                )));
            }
        }
        if self.entity_key.is_empty() || self.order_key.is_empty() {
            return Err(Error::Schema("entity_key and order_key must be non-empty".into()));
        }
        Ok(())
    }
}

/// A `d x l` real matrix (features by events) for one entity.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMatrix {
    entity_id: String,
    n_features: usize,
    n_events: usize,
    values: Vec<f64>,
}

impl SequenceMatrix {
    /// Builds from row-major values (`values[f * l + e]`).
    pub fn new(
        entity_id: impl Into<String>,
        n_features: usize,
        n_events: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if n_features == 0 || n_events == 0 {
            return Err(Error::Dimension(format!(
                "sequence must be at least 1x1, got {n_features}x{n_events}"
            )));
        }
        if values.len() != n_features * n_events {
            return Err(Error::Dimension(format!(
                "{} values for a {n_features}x{n_events} sequence",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at feature {}, event {}",
                pos / n_events,
                pos % n_events
            )));
        }
        Ok(SequenceMatrix {
            entity_id: entity_id.into(),
            n_features,
            n_events,
            values,
        })
    }

    /// Builds from feature rows, each of length `l`.
    pub fn from_rows(entity_id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let l = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != l) {
            return Err(Error::Dimension("feature rows have unequal lengths".into()));
        }
        Self::new(entity_id, d, l, rows.concat())
    }

    /// Builds from event columns, oldest first, each of length `d`.
    pub fn from_events(entity_id: impl Into<String>, events: &[Vec<f64>]) -> Result<Self> {
        let l = events.len();
        let d = events.first().map_or(0, Vec::len);
        if events.iter().any(|e| e.len() != d) {
            return Err(Error::Dimension("events have unequal feature counts".into()));
        }
        let mut values = vec![0.0; d * l];
        for (e, column) in events.iter().enumerate() {
            for (f, &v) in column.iter().enumerate() {
                values[f * l + e] = v;
            }
        }
        Self::new(entity_id, d, l, values)
    }

    pub(crate) fn from_parts_unchecked(entity_id: String, d: usize, l: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), d * l);
        SequenceMatrix {
            entity_id,
            n_features: d,
            n_events: l,
            values,
        }
    }

    pub fn entity_id(&self) -> &str {
        &self.entity_id
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_features, self.n_events)
    }

    #[inline]
    pub fn get(&self, feature: usize, event: usize) -> f64 {
        self.values[feature * self.n_events + event]
    }

    pub fn row(&self, feature: usize) -> &[f64] {
        let l = self.n_events;
        &self.values[feature * l..(feature + 1) * l]
    }

    pub fn event(&self, event: usize) -> Vec<f64> {
        (0..self.n_features).map(|f| self.get(f, event)).collect()
    }

    pub fn events(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.n_events).map(move |e| self.event(e))
    }

    /// Row-major backing storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Columns `start..end` as a new sequence with the same entity id.
    pub fn slice_events(&self, start: usize, end: usize) -> Result<SequenceMatrix> {
        if start >= end || end > self.n_events {
            return Err(Error::InvalidArgument(format!(
                "event range {start}..{end} invalid for length {}",
                self.n_events
            )));
        }
        let values = (0..self.n_features)
            .flat_map(|f| self.row(f)[start..end].iter().copied())
            .collect();
        Ok(Self::from_parts_unchecked(
            self.entity_id.clone(),
            self.n_features,
            end - start,
            values,
        ))
    }
}

/// Per-feature background values, broadcast across events on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundMatrix {
    pub feature_names: Vec<String>,
    pub values: Vec<f64>,
    pub kinds: Vec<FeatureKind>,
}

impl BackgroundMatrix {
    pub fn new(feature_names: Vec<String>, values: Vec<f64>, kinds: Vec<FeatureKind>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("background has no features".into()));
        }
        if feature_names.len() != values.len() || kinds.len() != values.len() {
            return Err(Error::Dimension(format!(
                "background has {} names, {} values, {} kinds",
                feature_names.len(),
                values.len(),
                kinds.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("background values must be finite".into()));
        }
        Ok(BackgroundMatrix {
            feature_names,
            values,
            kinds,
        })
    }

    /// Numeric background with generated feature names `f0, f1, ...`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let names = (0..values.len()).map(|i| format!("f{i}")).collect();
        let kinds = vec![FeatureKind::Numeric; values.len()];
        Self::new(names, values, kinds)
    }

    pub fn n_features(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn value(&self, feature: usize) -> f64 {
        self.values[feature]
    }

    /// The `d x n_events` matrix with `values` repeated in every column.
    pub fn materialize(&self, n_events: usize) -> SequenceMatrix {
        let l = n_events.max(1);
        let values = self
            .values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, l))
            .collect();
        SequenceMatrix::from_parts_unchecked("background".into(), self.values.len(), l, values)
    }

    pub fn check_compatible(&self, x: &SequenceMatrix) -> Result<()> {
        if x.n_features() != self.n_features() {
            return Err(Error::Dimension(format!(
                "sequence has {} features, background has {}",
                x.n_features(),
                self.n_features()
            )));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let raw: BackgroundMatrix = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Self::new(raw.feature_names, raw.values, raw.kinds)
    }

    pub fn write_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

/// Aggregates every event of every sequence per feature.
///
/// Values are sorted before reduction so the result does not depend on the
/// order of sequences or of events within them.
pub fn build_background(data: &[SequenceMatrix], schema: &EventSchema) -> Result<BackgroundMatrix> {
    let first = data
        .first()
        .ok_or_else(|| Error::Empty("cannot build a background from no sequences".into()))?;
    let d = schema.n_features();
    if let Some(bad) = data.iter().find(|s| s.n_features() != d) {
        return Err(Error::Dimension(format!(
            "sequence '{}' has {} features, expected {d}",
            bad.entity_id(),
            bad.n_features()
        )));
    }
    debug_assert_eq!(first.n_features(), d);

    let mut values = Vec::with_capacity(d);
    for (f, kind) in schema.feature_kinds.iter().enumerate() {
        let mut column: Vec<f64> = data.iter().flat_map(|s| s.row(f).iter().copied()).collect();
        column.sort_by(f64::total_cmp);
        values.push(match kind.aggregator() {
            Aggregator::Mean => sorted_mean(&column),
            Aggregator::Mode => sorted_mode(&column),
        });
    }
    BackgroundMatrix::new(schema.feature_names.clone(), values, schema.feature_kinds.clone())
}

fn sorted_mean(sorted: &[f64]) -> f64 {
    // Neumaier summation
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in sorted {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / sorted.len() as f64
}

fn sorted_mode(sorted: &[f64]) -> f64 {
    let mut best = sorted[0];
    let mut best_count = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        // strictly greater keeps the smallest value among ties
        if j - i > best_count {
            best = v;
            best_count = j - i;
        }
        i = j;
    }
    best
}

#[derive(Debug, Clone)]
enum OrderValue {
    Number(f64),
    Text(String),
}

impl OrderValue {
    fn as_number(&self) -> Option<f64> {
        match self {
            OrderValue::Number(v) => Some(*v),
            OrderValue::Text(s) => s.trim().parse::<f64>().ok().filter(|v| !v.is_nan()),
        }
    }

    fn as_text(&self) -> String {
        match self {
            OrderValue::Number(v) => v.to_string(),
            OrderValue::Text(s) => s.clone(),
        }
    }
}

struct RawEvent {
    entity: String,
    order: OrderValue,
    features: Vec<f64>,
}

/// Loads a CSV or JSON event table and groups it into per-entity sequences.
///
/// Entities appear in order of first occurrence. Events are sorted by the
/// order key (numerically when every key parses as a number, lexically
/// otherwise); ties keep input order.
pub fn load_dataset(path: impl AsRef<Path>, schema: &EventSchema) -> Result<Vec<SequenceMatrix>> {
    schema.validate()?;
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        || text.trim_start().starts_with('[');
    let events = if is_json {
        parse_json_events(&text, schema)?
    } else {
        parse_csv_events(&text, schema)?
    };
    group_events(events, schema.n_features())
}

fn parse_csv_events(text: &str, schema: &EventSchema) -> Result<Vec<RawEvent>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let entity_col = column(&schema.entity_key)?;
    let order_col = column(&schema.order_key)?;
    let feature_cols = schema
        .feature_names
        .iter()
        .map(|n| column(n))
        .collect::<Result<Vec<_>>>()?;

    let mut events = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let features = feature_cols
            .iter()
            .zip(&schema.feature_names)
            .map(|(&c, name)| parse_cell(cell(c), name, row))
            .collect::<Result<Vec<_>>>()?;
        events.push(RawEvent {
            entity: cell(entity_col).to_string(),
            order: OrderValue::Text(cell(order_col).to_string()),
            features,
        });
    }
    Ok(events)
}

fn parse_cell(raw: &str, name: &str, row: usize) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::Parse {
            row,
            message: format!("missing value for feature '{name}'"),
        });
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            message: format!("feature '{name}' value '{raw}' is not a finite number"),
        }),
    }
}

fn parse_json_events(text: &str, schema: &EventSchema) -> Result<Vec<RawEvent>> {
    let doc: Value = serde_json::from_str(text)?;
    let rows = doc
        .as_array()
        .ok_or_else(|| Error::Schema("JSON dataset must be an array of events".into()))?;
    let d = schema.n_features();
    let mut events = Vec::with_capacity(rows.len());
    for (i, row_value) in rows.iter().enumerate() {
        let row = i + 1;
        let obj = row_value.as_object().ok_or_else(|| Error::Parse {
            row,
            message: "event is not a JSON object".into(),
        })?;
        let field = |name: &str| {
            obj.get(name)
                .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
        };
        let entity = match field("entity")? {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            other => {
                return Err(Error::Parse {
                    row,
                    message: format!("entity must be a string or number, got {other}"),
                })
            }
        };
        let order = match field("order")? {
            Value::Number(n) => OrderValue::Number(n.as_f64().unwrap_or(f64::NAN)),
            Value::String(s) => OrderValue::Text(s.clone()),
            other => {
                return Err(Error::Parse {
                    row,
                    message: format!("order must be a string or number, got {other}"),
                })
            }
        };
        let raw_features = field("features")?.as_array().ok_or_else(|| Error::Parse {
            row,
            message: "features must be an array".into(),
        })?;
        if raw_features.len() != d {
            return Err(Error::Parse {
                row,
                message: format!("expected {d} features, found {}", raw_features.len()),
            });
        }
        let features = raw_features
            .iter()
            .zip(&schema.feature_names)
            .map(|(v, name)| match v.as_f64() {
                Some(x) if x.is_finite() => Ok(x),
                _ => Err(Error::Parse {
                    row,
                    message: format!("feature '{name}' value {v} is not a finite number"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        events.push(RawEvent {
            entity,
            order,
            features,
        });
    }
    Ok(events)
}

fn group_events(events: Vec<RawEvent>, d: usize) -> Result<Vec<SequenceMatrix>> {
    let numeric_keys: Option<Vec<f64>> = events.iter().map(|e| e.order.as_number()).collect();
    let text_keys: Vec<String>;
    let cmp: Box<dyn Fn(usize, usize) -> Ordering> = match &numeric_keys {
        Some(keys) => Box::new(move |a, b| keys[a].total_cmp(&keys[b])),
        None => {
            text_keys = events.iter().map(|e| e.order.as_text()).collect();
            Box::new(|a, b| text_keys[a].cmp(&text_keys[b]))
        }
    };

    let mut slots: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, ev) in events.iter().enumerate() {
        let slot = *slots.entry(ev.entity.as_str()).or_insert_with(|| {
            groups.push((ev.entity.as_str(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(i);
    }

    groups
        .into_iter()
        .map(|(entity, mut idx)| {
            // stable sort keeps input order among equal keys
            idx.sort_by(|&a, &b| cmp(a, b));
            let l = idx.len();
            let mut values = vec![0.0; d * l];
            for (e, &i) in idx.iter().enumerate() {
                for (f, &v) in events[i].features.iter().enumerate() {
                    values[f * l + e] = v;
                }
            }
            SequenceMatrix::new(entity, d, l, values)
        })
        .collect()
}

/// Writes sequences as CSV (`.csv`) or JSON (anything else); the order key
/// becomes the event index.
pub fn write_dataset(path: impl AsRef<Path>, schema: &EventSchema, data: &[SequenceMatrix]) -> Result<()> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec![schema.entity_key.clone(), schema.order_key.clone()];
        header.extend(schema.feature_names.iter().cloned());
        w.write_record(&header)?;
        for seq in data {
            for e in 0..seq.n_events() {
                let mut record = vec![seq.entity_id().to_string(), e.to_string()];
                record.extend((0..seq.n_features()).map(|f| seq.get(f, e).to_string()));
                w.write_record(&record)?;
            }
        }
        w.flush()?;
    } else {
        let rows: Vec<Value> = data
            .iter()
            .flat_map(|seq| {
                (0..seq.n_events()).map(move |e| {
                    serde_json::json!({
                        "entity": seq.entity_id(),
                        "order": e,
                        "features": seq.event(e),
                    })
                })
            })
            .collect();
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &rows)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
