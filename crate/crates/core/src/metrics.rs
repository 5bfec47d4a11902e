//! Ground-truth-aware evaluation of estimates and optimizer runs.

use std::fmt;

use crate::estimator::Estimate;
use crate::objectives::{Peak, TestFunction};
use crate::optimizer::{Grid, IterationRow};

/// Sample counts at which coverage curves are recorded.
pub const DEFAULT_CHECKPOINTS: [usize; 10] = [10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000];

/// Number of evaluation points used for coverage.
pub const COVERAGE_POINTS: usize = 1001;

/// `n` equally spaced points over the test function's domain, endpoints included.
pub fn evaluation_points(n: usize) -> Vec<f64> {
    let (lo, hi) = TestFunction::DOMAIN;
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Fraction of points whose true value lies strictly inside the estimated CI.
pub fn coverage(estimates: &[Estimate], truth: &[f64]) -> f64 {
    assert_eq!(estimates.len(), truth.len(), "one truth value per estimate");
    if estimates.is_empty() {
        return 0.0;
    }
    let hits = estimates
        .iter()
        .zip(truth)
        .filter(|(e, s)| e.covers(**s))
        .count();
    hits as f64 / estimates.len() as f64
}

/// Highest lower bound on the grid as a fraction of `s_max`.
pub fn lcb_max_fraction(grid: &Grid, s_max: f64) -> f64 {
    grid.lcb_max() / s_max
}

/// `(I_tot, I_false)`: pruned fraction of the grid, and fraction that is
/// pruned while its true value exceeds the current `lcb_max`.
pub fn pruning_rates(grid: &Grid, truth: &[f64]) -> (f64, f64) {
    assert_eq!(grid.len(), truth.len(), "one truth value per grid point");
    let lcb_max = grid.lcb_max();
    let (mut total, mut false_pruned) = (0usize, 0usize);
    for (&p, &s) in grid.pruned().iter().zip(truth) {
        if p {
            total += 1;
            if s > lcb_max {
                false_pruned += 1;
            }
        }
    }
    let n = grid.len() as f64;
    (total as f64 / n, false_pruned as f64 / n)
}

/// Peak a run converged to. The highest peak is the global maximum (`GM`);
/// the others are `L1, L2, ...` by position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PeakLabel {
    Local(usize),
    Global,
}

impl fmt::Display for PeakLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeakLabel::Local(i) => write!(f, "L{i}"),
            PeakLabel::Global => f.write_str("GM"),
        }
    }
}

/// Labels for a catalogue, in catalogue order.
pub fn peak_labels(peaks: &[Peak]) -> Vec<PeakLabel> {
    let global = global_index(peaks);
    let mut local = 0;
    (0..peaks.len())
        .map(|i| {
            if Some(i) == global {
                PeakLabel::Global
            } else {
                local += 1;
                PeakLabel::Local(local)
            }
        })
        .collect()
}

fn global_index(peaks: &[Peak]) -> Option<usize> {
    peaks
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, p)| match best {
            Some((_, v)) if v >= p.value => best,
            _ => Some((i, p.value)),
        })
        .map(|(i, _)| i)
}

/// Index of the catalogue peak nearest to `x`; ties go to the lower index.
pub fn nearest_peak(x: f64, peaks: &[Peak]) -> Option<usize> {
    peaks
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, p)| {
            let d = (p.x - x).abs();
            match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((i, d)),
            }
        })
        .map(|(i, _)| i)
}

/// Assigns the grid's best-lcb point to the nearest peak.
pub fn attribute_peak(grid: &Grid, peaks: &[Peak]) -> Option<PeakLabel> {
    let x = grid.point(grid.best_index())[0];
    let idx = nearest_peak(x, peaks)?;
    Some(peak_labels(peaks)[idx])
}

/// Per-peak counts over replications.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeakTally {
    labels: Vec<PeakLabel>,
    counts: Vec<usize>,
}

impl PeakTally {
    pub fn new(peaks: &[Peak]) -> Self {
        Self {
            labels: peak_labels(peaks),
            counts: vec![0; peaks.len()],
        }
    }

    pub fn record(&mut self, label: PeakLabel) {
        if let Some(i) = self.labels.iter().position(|l| *l == label) {
            self.counts[i] += 1;
        }
    }

    pub fn labels(&self) -> &[PeakLabel] {
        &self.labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, label: PeakLabel) -> usize {
        self.labels
            .iter()
            .position(|l| *l == label)
            .map_or(0, |i| self.counts[i])
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub mean: f64,
    pub std: f64,
}

impl Band {
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "need at least one replication");
        // Welford: identical inputs give an exact mean and zero spread
        let (mut mean, mut m2) = (0.0, 0.0);
        for (k, &v) in values.iter().enumerate() {
            let delta = v - mean;
            mean += delta / (k + 1) as f64;
            m2 += delta * (v - mean);
        }
        Self {
            mean,
            std: (m2 / values.len() as f64).max(0.0).sqrt(),
        }
    }
}

/// Per-checkpoint bands across replications; `replications[r][c]` is the
/// value of replication `r` at checkpoint `c`.
pub fn aggregate(replications: &[Vec<f64>]) -> Vec<Band> {
    assert!(!replications.is_empty(), "need at least one replication");
    let width = replications[0].len();
    assert!(
        replications.iter().all(|r| r.len() == width),
        "replications must share a checkpoint schedule"
    );
    (0..width)
        .map(|c| {
            let column: Vec<f64> = replications.iter().map(|r| r[c]).collect();
            Band::of(&column)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageCheckpoint {
    pub n_samples: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub checkpoints: Vec<CoverageCheckpoint>,
}

impl CoverageReport {
    /// Builds the report from per-replication coverages at `schedule`.
    pub fn from_replications(schedule: &[usize], replications: &[Vec<f64>]) -> Self {
        let bands = aggregate(replications);
        Self {
            checkpoints: schedule
                .iter()
                .zip(bands)
                .map(|(&n_samples, b)| CoverageCheckpoint {
                    n_samples,
                    mean: b.mean,
                    std: b.std,
                })
                .collect(),
        }
    }

    pub fn at(&self, n_samples: usize) -> Option<&CoverageCheckpoint> {
        self.checkpoints.iter().find(|c| c.n_samples == n_samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruningRow {
    pub i_tot: f64,
    pub i_false: f64,
    pub lcb_max_fraction: f64,
}

/// Pruning metrics per iteration of a run with known ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PruningReport {
    pub rows: Vec<PruningRow>,
}

impl PruningReport {
    pub fn from_trace(trace: &[IterationRow], s_max: f64) -> Self {
        Self {
            rows: trace
                .iter()
                .map(|r| PruningRow {
                    i_tot: r.pruned_fraction,
                    i_false: r.false_pruned_fraction.unwrap_or(0.0),
                    lcb_max_fraction: r.lcb_max / s_max,
                })
                .collect(),
        }
    }

    pub fn mean_false_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.i_false).sum::<f64>() / self.rows.len() as f64
    }

    pub fn final_lcb_fraction(&self) -> Option<f64> {
        self.rows.last().map(|r| r.lcb_max_fraction)
    }

    /// Iterations at which the lower bound overshoots the true maximum.
    pub fn overshoots(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.lcb_max_fraction > 1.0)
            .count()
    }
}
