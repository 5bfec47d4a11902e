//! Seeded replication runners for the coverage and optimization experiments.

use std::time::{Duration, Instant};

use crate::estimator::{Kernel, SampleRecord};
use crate::metrics::{self, CoverageReport, PeakLabel, PeakTally, PruningReport};
use crate::objectives::{NoisyTestFunction, RngStream, StochasticObjective};
use crate::optimizer::{self, EstimatorKind, Grid, OptimizerConfig, RunOutcome};
use crate::parallel::{map_indexed, Execution};

use super::config::ExperimentConfig;

/// Description of [`replication_seed`], recorded in run metadata.
pub const SEED_MIXING: &str =
    "splitmix64(base_seed + (r + 1) * 0x9E3779B97F4A7C15), r = 0-based replication index";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `r` (0-based) of a run with `base` seed.
pub fn replication_seed(base: u64, r: usize) -> u64 {
    splitmix64(base.wrapping_add((r as u64).wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn replication_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n).map(|r| replication_seed(base, r)).collect()
}

fn objective(cfg: &ExperimentConfig) -> NoisyTestFunction {
    NoisyTestFunction::new(cfg.test_function(), cfg.noise_model())
}

/// Coverage curves of one replication, indexed `[estimator][checkpoint]`.
pub fn coverage_replication(
    cfg: &ExperimentConfig,
    obj: &NoisyTestFunction,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut grid = Grid::with_counts(&cfg.domain, &[cfg.eval_points]).expect("validated domain");
    let truth: Vec<f64> = grid
        .points()
        .map(|p| obj.expected(p).expect("test function has a ground truth"))
        .collect();
    let kernel = Kernel::new(&cfg.bandwidth);
    let conf = cfg.confidence();
    let (lo, hi) = (cfg.domain.lower()[0], cfg.domain.upper()[0]);
    let mut rng = RngStream::new(seed);
    let mut curves = vec![Vec::with_capacity(cfg.checkpoints.len()); cfg.estimators.len()];
    let mut drawn = 0;
    for &checkpoint in &cfg.checkpoints {
        while drawn < checkpoint {
            let x = (lo + rng.uniform() * (hi - lo)).min(hi);
            let y = obj.sample(&[x], &mut rng);
            let sample = SampleRecord::new(vec![x], y).expect("noise model yields [0, 1]");
            grid.ingest_with(&sample, &kernel, cfg.kernel_cutoff)
                .expect("sample lies in domain");
            drawn += 1;
        }
        for (curve, estimator) in curves.iter_mut().zip(&cfg.estimators) {
            grid.refresh(estimator, &kernel, conf);
            curve.push(metrics::coverage(grid.estimates(), &truth));
        }
    }
    curves
}

#[derive(Debug, Clone)]
pub struct CoverageRun {
    pub seeds: Vec<u64>,
    /// One report per configured estimator, in config order.
    pub reports: Vec<(EstimatorKind, CoverageReport)>,
    pub replication_times: Vec<Duration>,
    pub total_time: Duration,
}

pub fn run_coverage(cfg: &ExperimentConfig, exec: Execution) -> CoverageRun {
    let start = Instant::now();
    let obj = objective(cfg);
    let seeds = replication_seeds(cfg.seed, cfg.replications);
    let results = map_indexed(cfg.replications, exec, |r| {
        let t = Instant::now();
        let curves = coverage_replication(cfg, &obj, seeds[r]);
        (curves, t.elapsed())
    });
    let reports = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(e, &kind)| {
            let per_rep: Vec<Vec<f64>> = results.iter().map(|(c, _)| c[e].clone()).collect();
            (
                kind,
                CoverageReport::from_replications(&cfg.checkpoints, &per_rep),
            )
        })
        .collect();
    CoverageRun {
        seeds,
        reports,
        replication_times: results.iter().map(|(_, t)| *t).collect(),
        total_time: start.elapsed(),
    }
}

/// Optimizer settings for one replication.
pub fn optimizer_config(
    cfg: &ExperimentConfig,
    estimator: EstimatorKind,
    seed: u64,
) -> OptimizerConfig {
    OptimizerConfig {
        domain: cfg.domain.clone(),
        bandwidth: cfg.bandwidth.clone(),
        spacing: Some(cfg.spacing.clone()),
        confidence: cfg.confidence(),
        budget: cfg.budget,
        threshold: cfg.threshold,
        estimator,
        kernel_cutoff: cfg.kernel_cutoff,
        seed,
    }
}

#[derive(Debug, Clone)]
pub struct BoReplication {
    pub seed: u64,
    pub outcome: RunOutcome,
    pub pruning: PruningReport,
    pub peak: Option<PeakLabel>,
    pub time: Duration,
}

#[derive(Debug, Clone)]
pub struct EstimatorRuns {
    pub estimator: EstimatorKind,
    pub replications: Vec<BoReplication>,
    pub tally: PeakTally,
}

#[derive(Debug, Clone)]
pub struct BoRun {
    pub seeds: Vec<u64>,
    pub runs: Vec<EstimatorRuns>,
    pub total_time: Duration,
}

pub fn run_bo(cfg: &ExperimentConfig, exec: Execution) -> crate::Result<BoRun> {
    let start = Instant::now();
    let obj = objective(cfg);
    let s_max = obj.function.s_max();
    let peaks = obj.function.peaks().to_vec();
    let seeds = replication_seeds(cfg.seed, cfg.replications);
    let mut runs = Vec::with_capacity(cfg.estimators.len());
    for &estimator in &cfg.estimators {
        let results = map_indexed(cfg.replications, exec, |r| {
            let t = Instant::now();
            let outcome = optimizer::run(&optimizer_config(cfg, estimator, seeds[r]), &obj)?;
            // Budget-0 runs have no data, so no peak is attributed.
            let peak = if outcome.trace.is_empty() {
                None
            } else {
                metrics::attribute_peak(&outcome.grid, &peaks)
            };
            Ok(BoReplication {
                seed: seeds[r],
                pruning: PruningReport::from_trace(&outcome.trace, s_max),
                outcome,
                peak,
                time: t.elapsed(),
            })
        });
        let replications = results.into_iter().collect::<crate::Result<Vec<_>>>()?;
        let mut tally = PeakTally::new(&peaks);
        for label in replications.iter().filter_map(|r| r.peak) {
            tally.record(label);
        }
        runs.push(EstimatorRuns {
            estimator,
            replications,
            tally,
        });
    }
    Ok(BoRun {
        seeds,
        runs,
        total_time: start.elapsed(),
    })
}
