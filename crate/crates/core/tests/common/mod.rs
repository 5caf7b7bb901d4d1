//! Brute-force Shapley oracle shared by integration and acceptance tests.
//!
//! Builds perturbed inputs cell by cell and averages marginal contributions
//! over every player ordering, without touching the regression path.

#![allow(dead_code)]

use seqshap::{BackgroundMatrix, SequenceMatrix, SequenceScorer};

/// Which players own each cell.
pub enum OracleAxis {
    Features,
    Events,
}

/// Sequence with cells of absent players replaced by background.
pub fn mask_sequence(x: &SequenceMatrix, b: &BackgroundMatrix, axis: &OracleAxis, present: &[bool]) -> SequenceMatrix {
    let (d, l) = x.shape();
    let mut rows = vec![vec![0.0; l]; d];
    for (f, row) in rows.iter_mut().enumerate() {
        for (e, cell) in row.iter_mut().enumerate() {
            let keep = match axis {
                OracleAxis::Features => present[f],
                OracleAxis::Events => present[e],
            };
            *cell = if keep { x.get(f, e) } else { b.values[f] };
        }
    }
    SequenceMatrix::from_rows(x.entity_id(), &rows).unwrap()
}

/// Shapley values by averaging marginal contributions over all `m!` orderings.
pub fn permutation_shapley(m: usize, value: impl Fn(&[bool]) -> f64) -> Vec<f64> {
    let table: Vec<f64> = (0..1usize << m)
        .map(|mask| {
            let present: Vec<bool> = (0..m).map(|i| mask >> i & 1 == 1).collect();
            value(&present)
        })
        .collect();
    let mut totals = vec![0.0; m];
    let mut count = 0u64;
    let mut order: Vec<usize> = (0..m).collect();
    // Heap's algorithm
    let mut c = vec![0usize; m];
    let mut visit = |order: &[usize]| {
        let mut mask = 0usize;
        for &p in order {
            let before = table[mask];
            mask |= 1 << p;
            totals[p] += table[mask] - before;
        }
        count += 1;
    };
    visit(&order);
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    totals.iter().map(|t| t / count as f64).collect()
}

/// Oracle Shapley values of a scorer along one axis.
pub fn oracle_shapley<S: SequenceScorer + ?Sized>(
    scorer: &S,
    x: &SequenceMatrix,
    b: &BackgroundMatrix,
    axis: OracleAxis,
) -> Vec<f64> {
    let m = match axis {
        OracleAxis::Features => x.n_features(),
        OracleAxis::Events => x.n_events(),
    };
    permutation_shapley(m, |present| scorer.score(&mask_sequence(x, b, &axis, present)).unwrap())
}

#[test]
fn oracle_handles_known_game() {
    // glove game: players 0 and 1 together are worth 1
    let v = permutation_shapley(3, |p| if p[0] && p[1] { 1.0 } else { 0.0 });
    assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15 && v[2] == 0.0);
}
