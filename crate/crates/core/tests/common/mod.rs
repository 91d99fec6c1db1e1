//! Test-only helpers shared by the integration suites.
#![allow(dead_code)]

use eprb::coincidence::CoincidencePair;
use eprb::sim::{DetectionEvent, SourceConfig, Streams};

/// Best injective matching by exhaustive search: maximum pair count, then
/// minimum total `|dt|`. Exponential in the right-stream length; meant for at
/// most ~12 events per side.
#[derive(Debug, Clone)]
pub struct OracleMatch {
    pub count: usize,
    pub total_abs_dt: f64,
    /// `(left index, right index)` pairs.
    pub pairs: Vec<(usize, usize)>,
}

pub fn exhaustive_matching(left: &[f64], right: &[f64], tau: f64) -> OracleMatch {
    assert!(
        right.len() <= 16,
        "oracle is exponential in the right stream"
    );
    let n_masks = 1usize << right.len();
    // best[i][mask]: best (count, -cost) for lefts i.. with rights in mask already used.
    let mut best = vec![vec![(0usize, 0.0f64); n_masks]; left.len() + 1];
    let mut choice = vec![vec![None::<usize>; n_masks]; left.len() + 1];
    for i in (0..left.len()).rev() {
        for mask in 0..n_masks {
            let mut b = best[i + 1][mask];
            let mut c = None;
            for (j, &r) in right.iter().enumerate() {
                let d = (left[i] - r).abs();
                if mask & (1 << j) != 0 || d > tau {
                    continue;
                }
                let (cnt, cost) = best[i + 1][mask | (1 << j)];
                let cand = (cnt + 1, cost + d);
                if cand.0 > b.0 || (cand.0 == b.0 && cand.1 < b.1 - 1e-15) {
                    b = cand;
                    c = Some(j);
                }
            }
            best[i][mask] = b;
            choice[i][mask] = c;
        }
    }
    let mut pairs = Vec::new();
    let mut mask = 0;
    for (i, row) in choice.iter().enumerate().take(left.len()) {
        if let Some(j) = row[mask] {
            pairs.push((i, j));
            mask |= 1 << j;
        }
    }
    OracleMatch {
        count: best[0][0].0,
        total_abs_dt: best[0][0].1,
        pairs,
    }
}

pub fn total_abs_dt(pairs: &[CoincidencePair]) -> f64 {
    pairs.iter().map(|p| p.dt.abs()).sum()
}

pub fn times(events: &[DetectionEvent]) -> Vec<f64> {
    events.iter().map(|e| e.time).collect()
}

/// Keeps the first `n` events of each side.
pub fn truncate(mut s: Streams, n: usize) -> Streams {
    s.left.truncate(n);
    s.right.truncate(n);
    s
}

/// Source with the given overlap density and pulse length 1.
pub fn unit_source(overlap: f64, duration: f64, seed: u64) -> SourceConfig {
    SourceConfig {
        rate: overlap,
        pulse_length: 1.0,
        duration,
        efficiency: 1.0,
        seed,
        ..SourceConfig::default()
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}
