//! Grid-based Bayesian optimization with confidence-bound pruning.
//!
//! The search space is tessellated into a regular grid. Each grid point keeps
//! running kernel sums so that ingesting a sample costs one kernel evaluation
//! per grid point. After every ingest the estimates are refreshed, points
//! whose upper bound falls below the best lower bound are pruned, and the
//! next point is drawn uniformly from what is left.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimator::{Bandwidth, Confidence, Estimate, Kernel, KernelSums, SampleRecord};
use crate::metrics;
use crate::objectives::{RngStream, StochasticObjective};

/// Axis-aligned box `[lower, upper]` in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::invalid("domain", "needs at least one dimension"));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::invalid("domain", "bounds must be finite"));
            }
            if hi <= lo {
                return Err(Error::invalid(
                    "domain",
                    format!("upper {hi} <= lower {lo}"),
                ));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| (*lo..=*hi).contains(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Wskde,
    Nakde,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Wskde => "wskde",
            EstimatorKind::Nakde => "nakde",
        }
    }
}

/// Turns the kernel sums at a grid point into an interval estimate.
pub trait PointEstimator {
    fn estimate(&self, sums: &KernelSums, count_scale: f64, conf: Confidence) -> Estimate;
}

impl PointEstimator for EstimatorKind {
    fn estimate(&self, sums: &KernelSums, count_scale: f64, conf: Confidence) -> Estimate {
        match self {
            EstimatorKind::Wskde => sums.ws_estimate(count_scale, conf),
            // no weight at the point: keep it selectable with CI [0, 1]
            EstimatorKind::Nakde => sums
                .na_estimate(count_scale, conf)
                .unwrap_or(Estimate::UNINFORMATIVE),
        }
    }
}

/// Result of a pruning pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneSummary {
    pub lcb_max: f64,
    pub best: usize,
    pub pruned: usize,
}

/// Regular grid over a [`Domain`] with per-point accumulators.
///
/// Points are stored row-major with the last dimension varying fastest.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: Domain,
    counts: Vec<usize>,
    coords: Vec<f64>,
    sums: Vec<KernelSums>,
    estimates: Vec<Estimate>,
    pruned: Vec<bool>,
    lcb_max: f64,
    best: usize,
    ingested: usize,
}

impl Grid {
    /// `floor(extent / spacing) + 1` equally spaced points per dimension,
    /// endpoints included. A dimension with a single point sits at its midpoint.
    pub fn tessellate(domain: &Domain, spacing: &[f64]) -> Result<Self> {
        check_dim(domain.dim(), spacing.len())?;
        let mut counts = Vec::with_capacity(spacing.len());
        for (j, &s) in spacing.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid(
                    "spacing",
                    format!("must be positive, got {s}"),
                ));
            }
            let extent = domain.upper[j] - domain.lower[j];
            // absorb representation error, e.g. 0.3 / 0.1 = 2.9999999999999996
            let steps = (extent / s + 1e-9).floor();
            if steps > 1e8 {
                return Err(Error::invalid("spacing", "grid would be too large"));
            }
            counts.push(steps as usize + 1);
        }
        Self::with_counts(domain, &counts)
    }

    /// Grid with an explicit number of points per dimension.
    pub fn with_counts(domain: &Domain, counts: &[usize]) -> Result<Self> {
        check_dim(domain.dim(), counts.len())?;
        if counts.contains(&0) {
            return Err(Error::invalid(
                "grid",
                "every dimension needs at least one point",
            ));
        }
        let axes: Vec<Vec<f64>> = counts
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                let (lo, hi) = (domain.lower[j], domain.upper[j]);
                if n == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    let step = (hi - lo) / (n - 1) as f64;
                    (0..n)
                        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
                        .collect()
                }
            })
            .collect();
        let total: usize = counts.iter().product();
        let d = domain.dim();
        let mut coords = Vec::with_capacity(total * d);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            coords.extend(idx.iter().enumerate().map(|(j, &i)| axes[j][i]));
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] < counts[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
        Ok(Self {
            domain: domain.clone(),
            counts: counts.to_vec(),
            coords,
            sums: vec![KernelSums::default(); total],
            estimates: vec![Estimate::UNINFORMATIVE; total],
            pruned: vec![false; total],
            lcb_max: 0.0,
            best: 0,
            ingested: 0,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim())
    }

    pub fn sums(&self) -> &[KernelSums] {
        &self.sums
    }

    pub fn estimates(&self) -> &[Estimate] {
        &self.estimates
    }

    pub fn pruned(&self) -> &[bool] {
        &self.pruned
    }

    pub fn pruned_count(&self) -> usize {
        self.pruned.iter().filter(|p| **p).count()
    }

    /// Highest lower bound found by the last [`prune`](Self::prune).
    pub fn lcb_max(&self) -> f64 {
        self.lcb_max
    }

    /// Index of the point achieving [`lcb_max`](Self::lcb_max).
    pub fn best_index(&self) -> usize {
        self.best
    }

    /// Number of samples ingested so far.
    pub fn ingested(&self) -> usize {
        self.ingested
    }

    /// Adds one sample's kernel weight to every grid point's sums.
    ///
    /// With `cutoff = Some(r)` points further than `r` bandwidths (in the
    /// scaled metric) from the sample are skipped.
    pub fn ingest_with(
        &mut self,
        sample: &SampleRecord,
        kernel: &Kernel,
        cutoff: Option<f64>,
    ) -> Result<()> {
        check_dim(self.dim(), sample.dim())?;
        check_dim(self.dim(), kernel.dim())?;
        if !self.domain.contains(&sample.x) {
            return Err(Error::OutOfDomain {
                point: sample.x.clone(),
            });
        }
        let d = self.dim();
        let cutoff_sq = cutoff.map(|r| r * r).unwrap_or(f64::INFINITY);
        for (g, sums) in self.coords.chunks_exact(d).zip(self.sums.iter_mut()) {
            let dist_sq = kernel.scaled_dist_sq(g, &sample.x);
            if dist_sq <= cutoff_sq {
                sums.add(kernel.weight_from_dist_sq(dist_sq), sample.y);
            }
        }
        self.ingested += 1;
        Ok(())
    }

    pub fn ingest(&mut self, sample: &SampleRecord, h: &Bandwidth) -> Result<()> {
        self.ingest_with(sample, &Kernel::new(h), None)
    }

    /// Recomputes every point's estimate from its sums.
    pub fn refresh<E: PointEstimator + ?Sized>(
        &mut self,
        estimator: &E,
        kernel: &Kernel,
        conf: Confidence,
    ) {
        let scale = kernel.count_scale();
        for (est, sums) in self.estimates.iter_mut().zip(&self.sums) {
            *est = estimator.estimate(sums, scale, conf);
        }
    }

    /// Marks every point whose upper bound is below the highest lower bound.
    ///
    /// The marking is recomputed from scratch on every call. Ties for the
    /// highest lower bound go to the lowest index.
    pub fn prune(&mut self) -> PruneSummary {
        let (best, lcb_max) =
            self.estimates
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, e)| {
                    if e.lcb > bv {
                        (i, e.lcb)
                    } else {
                        (bi, bv)
                    }
                });
        let mut pruned = 0;
        for (flag, e) in self.pruned.iter_mut().zip(&self.estimates) {
            *flag = e.ucb < lcb_max;
            pruned += usize::from(*flag);
        }
        self.lcb_max = lcb_max;
        self.best = best;
        PruneSummary {
            lcb_max,
            best,
            pruned,
        }
    }

    /// Uniformly random unpruned grid index.
    pub fn select_next(&self, rng: &mut RngStream) -> usize {
        let open = self.len() - self.pruned_count();
        debug_assert!(open > 0, "the best point is never pruned");
        let target = rng.index(open);
        self.pruned
            .iter()
            .enumerate()
            .filter(|(_, p)| !**p)
            .nth(target)
            .map(|(i, _)| i)
            .expect("target is below the open count")
    }
}

/// Settings for one optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub domain: Domain,
    pub bandwidth: Bandwidth,
    /// Grid spacing per dimension; `None` uses the bandwidth.
    pub spacing: Option<Vec<f64>>,
    pub confidence: Confidence,
    pub budget: usize,
    /// Stop once the best point's half-width is at most this value.
    pub threshold: Option<f64>,
    pub estimator: EstimatorKind,
    /// Skip kernel contributions beyond this many bandwidths.
    pub kernel_cutoff: Option<f64>,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn new(domain: Domain, bandwidth: Bandwidth) -> Self {
        Self {
            domain,
            bandwidth,
            spacing: None,
            confidence: Confidence::default(),
            budget: 10_000,
            threshold: None,
            estimator: EstimatorKind::Wskde,
            kernel_cutoff: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.domain.dim(), self.bandwidth.dim())?;
        if let Some(s) = &self.spacing {
            check_dim(self.domain.dim(), s.len())?;
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t <= 0.5) {
                return Err(Error::invalid(
                    "threshold",
                    format!("must lie in (0, 0.5], got {t}"),
                ));
            }
        }
        if let Some(r) = self.kernel_cutoff {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(
                    "kernel_cutoff",
                    format!("must be positive, got {r}"),
                ));
            }
        }
        Ok(())
    }

    fn grid_spacing(&self) -> Vec<f64> {
        self.spacing
            .clone()
            .unwrap_or_else(|| self.bandwidth.diag().to_vec())
    }
}

/// One completed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRow {
    /// 1-based iteration number.
    pub iteration: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub lcb_max: f64,
    pub best_index: usize,
    pub pruned_fraction: f64,
    /// Fraction of the grid pruned although its true value exceeds `lcb_max`.
    pub false_pruned_fraction: Option<f64>,
    /// Whether the grid point with the highest true value is pruned.
    pub truth_best_pruned: Option<bool>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Vec<IterationRow>,
    pub grid: Grid,
    pub stopped_early: bool,
}

/// Runs the optimizer with the estimator named in `config` and a stream
/// seeded from `config.seed`.
pub fn run<O: StochasticObjective + ?Sized>(
    config: &OptimizerConfig,
    objective: &O,
) -> Result<RunOutcome> {
    let mut rng = RngStream::new(config.seed);
    run_with(config, &config.estimator, objective, &mut rng)
}

/// Main loop: select, evaluate, ingest, refresh, prune, record.
pub fn run_with<E, O>(
    config: &OptimizerConfig,
    estimator: &E,
    objective: &O,
    rng: &mut RngStream,
) -> Result<RunOutcome>
where
    E: PointEstimator + ?Sized,
    O: StochasticObjective + ?Sized,
{
    config.validate()?;
    check_dim(config.domain.dim(), objective.dim())?;
    let kernel = Kernel::new(&config.bandwidth);
    let mut grid = Grid::tessellate(&config.domain, &config.grid_spacing())?;
    let truth: Option<Vec<f64>> = grid.points().map(|p| objective.expected(p)).collect();
    let truth_best = truth.as_ref().map(|t| {
        t.iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |b, (i, &v)| if v > b.1 { (i, v) } else { b },
            )
            .0
    });

    grid.refresh(estimator, &kernel, config.confidence);
    grid.prune();

    let start = Instant::now();
    let mut trace = Vec::with_capacity(config.budget);
    let mut stopped_early = false;
    for iteration in 1..=config.budget {
        let idx = grid.select_next(rng);
        let x = grid.point(idx).to_vec();
        let y = objective.sample(&x, rng);
        let sample = SampleRecord::new(x, y)?;
        grid.ingest_with(&sample, &kernel, config.kernel_cutoff)?;
        grid.refresh(estimator, &kernel, config.confidence);
        let summary = grid.prune();

        let false_pruned = truth.as_deref().map(|t| metrics::pruning_rates(&grid, t).1);
        trace.push(IterationRow {
            iteration,
            x: sample.x,
            y,
            lcb_max: summary.lcb_max,
            best_index: summary.best,
            pruned_fraction: summary.pruned as f64 / grid.len() as f64,
            false_pruned_fraction: false_pruned,
            truth_best_pruned: truth_best.map(|i| grid.pruned()[i]),
            elapsed: start.elapsed(),
        });

        if let Some(t) = config.threshold {
            if grid.estimates()[summary.best].half_width <= t {
                stopped_early = iteration < config.budget;
                break;
            }
        }
    }
    Ok(RunOutcome {
        trace,
        grid,
        stopped_early,
    })
}
