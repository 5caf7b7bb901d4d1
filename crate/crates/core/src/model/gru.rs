use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Concurrency, SequenceScorer};
use crate::error::{Error, Result};
use crate::seqdata::SequenceMatrix;

/// Weights of a single-layer GRU with a sigmoid readout.
///
/// Matrices are row-major: input matrices are `hidden_dim x input_dim`,
/// recurrent matrices `hidden_dim x hidden_dim`.
///
/// ```text
/// z  = sigmoid(W_z x + U_z h + b_z)
/// r  = sigmoid(W_r x + U_r h + b_r)
/// n  = tanh(W_n x + U_n (r * h) + b_n)
/// h' = (1 - z) * n + z * h
/// score = sigmoid(v . h_last + c)
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruWeights {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_update: Vec<f64>,
    pub u_update: Vec<f64>,
    pub b_update: Vec<f64>,
    pub w_reset: Vec<f64>,
    pub u_reset: Vec<f64>,
    pub b_reset: Vec<f64>,
    pub w_candidate: Vec<f64>,
    pub u_candidate: Vec<f64>,
    pub b_candidate: Vec<f64>,
    pub readout_weights: Vec<f64>,
    pub readout_bias: f64,
}

impl GruWeights {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let (d, h) = (input_dim, hidden_dim);
        GruWeights {
            input_dim,
            hidden_dim,
            w_update: vec![0.0; h * d],
            u_update: vec![0.0; h * h],
            b_update: vec![0.0; h],
            w_reset: vec![0.0; h * d],
            u_reset: vec![0.0; h * h],
            b_reset: vec![0.0; h],
            w_candidate: vec![0.0; h * d],
            u_candidate: vec![0.0; h * h],
            b_candidate: vec![0.0; h],
            readout_weights: vec![0.0; h],
            readout_bias: 0.0,
        }
    }

    /// Entries drawn uniformly from `[-scale, scale]` with a seeded ChaCha8 stream.
    pub fn random(input_dim: usize, hidden_dim: usize, seed: u64, scale: f64) -> Result<Self> {
        let mut w = Self::zeros(input_dim, hidden_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for buf in w.buffers_mut() {
            for v in buf.iter_mut() {
                *v = rng.random_range(-scale..=scale);
            }
        }
        w.readout_bias = rng.random_range(-scale..=scale);
        w.validate()?;
        Ok(w)
    }

    fn buffers_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.w_update,
            &mut self.u_update,
            &mut self.b_update,
            &mut self.w_reset,
            &mut self.u_reset,
            &mut self.b_reset,
            &mut self.w_candidate,
            &mut self.u_candidate,
            &mut self.b_candidate,
            &mut self.readout_weights,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        if d == 0 || h == 0 {
            return Err(Error::Dimension("GRU dims must be positive".into()));
        }
        let expected = [
            ("w_update", &self.w_update, h * d),
            ("u_update", &self.u_update, h * h),
            ("b_update", &self.b_update, h),
            ("w_reset", &self.w_reset, h * d),
            ("u_reset", &self.u_reset, h * h),
            ("b_reset", &self.b_reset, h),
            ("w_candidate", &self.w_candidate, h * d),
            ("u_candidate", &self.u_candidate, h * h),
            ("b_candidate", &self.b_candidate, h),
            ("readout_weights", &self.readout_weights, h),
        ];
        for (name, buf, len) in expected {
            if buf.len() != len {
                return Err(Error::Dimension(format!(
                    "{name} has {} entries, expected {len}",
                    buf.len()
                )));
            }
            if buf.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} contains non-finite entries")));
            }
        }
        if !self.readout_bias.is_finite() {
            return Err(Error::InvalidArgument("readout_bias is not finite".into()));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let w: GruWeights = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        w.validate()?;
        Ok(w)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = W x + U h + b` for one gate.
#[inline]
fn gate_preactivation(w: &[f64], x: &[f64], u: &[f64], h: &[f64], b: &[f64], out: &mut [f64]) {
    let (d, hd) = (x.len(), h.len());
    for (j, o) in out.iter_mut().enumerate() {
        let wx: f64 = w[j * d..(j + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum();
        let uh: f64 = u[j * hd..(j + 1) * hd].iter().zip(h).map(|(a, b)| a * b).sum();
        *o = wx + uh + b[j];
    }
}

/// Runs the recurrence from a zero hidden state over events oldest to newest
/// and returns the sigmoid readout of the final hidden state.
pub fn gru_forward(weights: &GruWeights, x: &SequenceMatrix) -> Result<f64> {
    if x.n_features() != weights.input_dim {
        return Err(Error::Dimension(format!(
            "GRU expects {} features, sequence has {}",
            weights.input_dim,
            x.n_features()
        )));
    }
    let hd = weights.hidden_dim;
    let mut h = vec![0.0; hd];
    let mut z = vec![0.0; hd];
    let mut r = vec![0.0; hd];
    let mut rh = vec![0.0; hd];
    let mut n = vec![0.0; hd];
    let mut input = vec![0.0; x.n_features()];

    for e in 0..x.n_events() {
        for (f, slot) in input.iter_mut().enumerate() {
            *slot = x.get(f, e);
        }
        gate_preactivation(&weights.w_update, &input, &weights.u_update, &h, &weights.b_update, &mut z);
        gate_preactivation(&weights.w_reset, &input, &weights.u_reset, &h, &weights.b_reset, &mut r);
        for j in 0..hd {
            z[j] = sigmoid(z[j]);
            rh[j] = sigmoid(r[j]) * h[j];
        }
        gate_preactivation(
            &weights.w_candidate,
            &input,
            &weights.u_candidate,
            &rh,
            &weights.b_candidate,
            &mut n,
        );
        for j in 0..hd {
            h[j] = (1.0 - z[j]) * n[j].tanh() + z[j] * h[j];
        }
    }
    let logit: f64 = weights.readout_weights.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + weights.readout_bias;
    Ok(sigmoid(logit))
}

/// The built-in reference scorer.
#[derive(Debug, Clone)]
pub struct GruModel {
    weights: GruWeights,
}

impl GruModel {
    pub fn new(weights: GruWeights) -> Result<Self> {
        weights.validate()?;
        Ok(GruModel { weights })
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(GruWeights::from_json_file(path)?)
    }

    pub fn weights(&self) -> &GruWeights {
        &self.weights
    }
}

impl SequenceScorer for GruModel {
    fn score_batch(&self, batch: &[SequenceMatrix]) -> Result<Vec<f64>> {
        batch.iter().map(|x| gru_forward(&self.weights, x)).collect()
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Concurrent
    }
}
