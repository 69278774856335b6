//! Run-level measurements: feed quality, its moving average, and the rank
//! correlation between popularity and quality.

use std::cmp::Ordering;
use std::collections::HashSet;

use thiserror::Error;

use crate::engine::SimState;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("NaN at index {0}")]
    NotANumber(usize),
}

/// Mean quality over every feed entry of every agent, duplicates included.
/// Divides by the number of entries present; zero when all feeds are empty.
pub fn feed_avg_quality(state: &SimState<'_>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for feed in state.feeds() {
        for id in feed.iter() {
            sum += state.post(id).quality;
        }
        count += feed.len();
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Number of distinct posts visible in any feed.
pub fn feed_diversity(state: &SimState<'_>) -> usize {
    state
        .feeds()
        .iter()
        .flat_map(|f| f.iter())
        .collect::<HashSet<_>>()
        .len()
}

pub fn ema_update(prev: f64, q: f64, rho: f64) -> f64 {
    rho * prev + (1.0 - rho) * q
}

pub fn converged(prev: f64, cur: f64, epsilon: f64, step: u64, warmup: u64) -> bool {
    step >= warmup && (cur - prev).abs() < epsilon
}

/// Exponential moving average of feed quality, seeded with the first observation.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityTracker {
    rho: f64,
    ema: Option<f64>,
    previous: Option<f64>,
    steps: u64,
}

impl QualityTracker {
    pub fn new(rho: f64) -> Self {
        Self {
            rho,
            ema: None,
            previous: None,
            steps: 0,
        }
    }

    pub fn observe(&mut self, q: f64) -> f64 {
        let next = match self.ema {
            None => q,
            Some(prev) => ema_update(prev, q, self.rho),
        };
        self.previous = self.ema;
        self.ema = Some(next);
        self.steps += 1;
        next
    }

    pub fn ema(&self) -> Option<f64> {
        self.ema
    }

    pub fn previous(&self) -> Option<f64> {
        self.previous
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// True once two observations exist, `step >= warmup`, and the last
    /// change is below `epsilon`.
    pub fn is_converged(&self, epsilon: f64, warmup: u64) -> bool {
        match (self.previous, self.ema) {
            (Some(prev), Some(cur)) => converged(prev, cur, epsilon, self.steps, warmup),
            _ => false,
        }
    }
}

fn pairs_in_runs<T, F>(sorted: &[T], same: F) -> u64
where
    F: Fn(&T, &T) -> bool,
{
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if same(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Kendall's tau-b, computed in O(n log n) with Knight's merge-sort method.
///
/// Returns `Ok(None)` when either variable is constant, where the statistic
/// has a zero denominator.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<Option<f64>, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(MetricsError::TooShort(n));
    }
    if let Some(i) = x.iter().zip(y).position(|(a, b)| a.is_nan() || b.is_nan()) {
        return Err(MetricsError::NotANumber(i));
    }

    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let tied_x = pairs_in_runs(&pairs, |a, b| a.0 == b.0);
    let tied_xy = pairs_in_runs(&pairs, |a, b| a.0 == b.0 && a.1 == b.1);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = count_inversions(&mut ys, &mut buf);
    let tied_y = pairs_in_runs(&ys, |a, b| a == b);

    if tied_x == n0 || tied_y == n0 {
        return Ok(None);
    }
    // concordant - discordant
    let s = n0 as i128 - tied_x as i128 - tied_y as i128 + tied_xy as i128 - 2 * swaps as i128;
    let denom = (((n0 - tied_x) as f64) * ((n0 - tied_y) as f64)).sqrt();
    Ok(Some(s as f64 / denom))
}

/// Bottom-up merge sort of `v` that returns the number of strictly inverted pairs.
fn count_inversions(v: &mut Vec<f64>, buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut k) = (start, mid, start);
            while i < mid && j < end {
                if v[j].total_cmp(&v[i]) == Ordering::Less {
                    buf[k] = v[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[k] = v[i];
                    i += 1;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
            k += mid - i;
            buf[k..k + (end - j)].copy_from_slice(&v[j..end]);
            start = end;
        }
        std::mem::swap(v, buf);
        width *= 2;
    }
    swaps
}
