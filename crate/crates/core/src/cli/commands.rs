//! Command implementations: run an experiment and write its artifacts.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::experiment::{self, BoRun, CoverageRun, SEED_MIXING};
use super::output::{self, fmt_float, fmt_opt, CsvTable};
use super::CliError;
use crate::estimator::{Kernel, KernelSums, SampleRecord};
use crate::metrics::PeakTally;
use crate::objectives::RNG_ALGORITHM;
use crate::optimizer::{Grid, PointEstimator};
use crate::parallel::Execution;

pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Serialize)]
pub struct WallClock {
    pub total_seconds: f64,
    pub replication_seconds: Vec<f64>,
}

/// Contents of `metadata.json`. Everything except `wall_clock` is a pure
/// function of the config.
#[derive(Debug, Serialize)]
pub struct RunMetadata<'a> {
    pub version: &'static str,
    pub command: ExperimentKind,
    pub rng_algorithm: &'static str,
    pub seed_mixing: &'static str,
    pub config_digest: String,
    pub config: &'a ExperimentConfig,
    pub replication_seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_placement: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_axis: Option<&'static str>,
    pub outputs: Vec<String>,
    pub wall_clock: WallClock,
}

impl<'a> RunMetadata<'a> {
    fn new(
        cfg: &'a ExperimentConfig,
        seeds: Vec<u64>,
        outputs: &[PathBuf],
        total: Duration,
        reps: &[Duration],
    ) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            command: cfg.kind,
            rng_algorithm: RNG_ALGORITHM,
            seed_mixing: SEED_MIXING,
            config_digest: cfg.digest(),
            config: cfg,
            replication_seeds: seeds,
            sample_placement: None,
            x_axis: None,
            outputs: outputs
                .iter()
                .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .collect(),
            wall_clock: WallClock {
                total_seconds: total.as_secs_f64(),
                replication_seconds: reps.iter().map(Duration::as_secs_f64).collect(),
            },
        }
    }
}

/// Runs `cfg` and writes its artifacts into `cfg.output`.
pub fn run(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<PathBuf>, CliError> {
    output::ensure_dir(&cfg.output)?;
    match cfg.kind {
        ExperimentKind::Coverage => {
            let run = experiment::run_coverage(cfg, exec);
            write_coverage(cfg, &run)
        }
        ExperimentKind::Bo => {
            let run = experiment::run_bo(cfg, exec)?;
            write_bo(cfg, &run)
        }
        ExperimentKind::Estimate => run_estimate(cfg),
        ExperimentKind::PeakTable => emit_peak_table(cfg),
    }
}

fn finish(
    mut files: Vec<PathBuf>,
    meta: RunMetadata<'_>,
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    files.push(output::write_json(dir, METADATA_FILE, &meta)?);
    Ok(files)
}

pub fn write_coverage(cfg: &ExperimentConfig, run: &CoverageRun) -> Result<Vec<PathBuf>, CliError> {
    let digest = cfg.digest();
    let mut t = CsvTable::create(
        &cfg.output,
        "coverage.csv",
        &digest,
        &["estimator", "n_samples", "mean_coverage", "std_coverage"],
    )?;
    for (kind, report) in &run.reports {
        for c in &report.checkpoints {
            t.row([
                kind.label().to_string(),
                c.n_samples.to_string(),
                fmt_float(c.mean),
                fmt_float(c.std),
            ])?;
        }
    }
    let files = vec![t.finish()?];
    let mut meta = RunMetadata::new(
        cfg,
        run.seeds.clone(),
        &files,
        run.total_time,
        &run.replication_times,
    );
    meta.sample_placement =
        Some("uniform-random over the domain, one growing dataset per replication");
    meta.x_axis = Some("total samples");
    finish(files, meta, &cfg.output)
}

fn x_columns(dim: usize) -> Vec<String> {
    if dim == 1 {
        vec!["x".into()]
    } else {
        (1..=dim).map(|i| format!("x{i}")).collect()
    }
}

fn peak_header(tally: &PeakTally) -> Vec<String> {
    let mut h = vec!["noise".to_string(), "estimator".to_string()];
    h.extend(tally.labels().iter().map(|l| l.to_string()));
    h
}

pub fn write_bo(cfg: &ExperimentConfig, run: &BoRun) -> Result<Vec<PathBuf>, CliError> {
    let digest = cfg.digest();
    let dir = &cfg.output;
    let s_max = cfg.test_function().s_max();
    let xcols = x_columns(cfg.domain.dim());

    let mut header: Vec<String> =
        vec!["estimator".into(), "replication".into(), "iteration".into()];
    header.extend(xcols.iter().cloned());
    header.extend(["y", "lcb_max_fraction", "i_tot", "i_false"].map(String::from));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut trace = CsvTable::create(dir, "trace.csv", &digest, &header_refs)?;
    for er in &run.runs {
        for (r, rep) in er.replications.iter().enumerate() {
            let last = rep.outcome.trace.len();
            for (row, p) in rep.outcome.trace.iter().zip(&rep.pruning.rows) {
                if row.iteration % cfg.trace_stride != 0 && row.iteration != last {
                    continue;
                }
                let mut f = vec![
                    er.estimator.label().to_string(),
                    r.to_string(),
                    row.iteration.to_string(),
                ];
                f.extend(row.x.iter().map(|&v| fmt_float(v)));
                f.push(fmt_float(row.y));
                f.push(fmt_float(row.lcb_max / s_max));
                f.push(fmt_float(p.i_tot));
                f.push(fmt_float(p.i_false));
                trace.row(f)?;
            }
        }
    }

    let mut header: Vec<String> = vec!["estimator".into(), "replication".into()];
    header.extend(xcols.iter().cloned());
    header.extend(["m_h", "n_h", "p_ws", "sigma", "lcb", "ucb", "pruned"].map(String::from));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut grid_final = CsvTable::create(dir, "grid_final.csv", &digest, &header_refs)?;
    for er in &run.runs {
        for (r, rep) in er.replications.iter().enumerate() {
            let g = &rep.outcome.grid;
            for ((i, e), &pruned) in g.estimates().iter().enumerate().zip(g.pruned()) {
                let mut f = vec![er.estimator.label().to_string(), r.to_string()];
                f.extend(g.point(i).iter().map(|&v| fmt_float(v)));
                f.extend([
                    fmt_opt(e.m_h),
                    fmt_float(e.n_h),
                    fmt_float(e.center),
                    fmt_float(e.half_width),
                    fmt_float(e.lcb),
                    fmt_float(e.ucb),
                    pruned.to_string(),
                ]);
                grid_final.row(f)?;
            }
        }
    }

    let noise = cfg.noise_model().label();
    let header = run
        .runs
        .first()
        .map(|r| peak_header(&r.tally))
        .unwrap_or_default();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut peaks = CsvTable::create(dir, "peaks.csv", &digest, &header_refs)?;
    for er in &run.runs {
        let mut f = vec![noise.clone(), er.estimator.label().to_string()];
        f.extend(er.tally.counts().iter().map(usize::to_string));
        peaks.row(f)?;
    }

    let files = vec![trace.finish()?, grid_final.finish()?, peaks.finish()?];
    let times: Vec<Duration> = run
        .runs
        .iter()
        .flat_map(|r| r.replications.iter().map(|x| x.time))
        .collect();
    let meta = RunMetadata::new(cfg, run.seeds.clone(), &files, run.total_time, &times);
    finish(files, meta, dir)
}

/// Reads `x1..xd, y` rows. A non-numeric first row is taken as a header.
pub fn read_samples(path: &Path, dim: usize) -> Result<Vec<SampleRecord>, CliError> {
    let mut reader = output::csv_reader(path)?;
    let data_err = |reason: String| CliError::Data {
        path: path.to_path_buf(),
        reason,
    };
    let mut samples = Vec::new();
    let mut first = true;
    let headers = reader
        .headers()
        .map_err(|e| data_err(e.to_string()))?
        .clone();
    let records = std::iter::once(Ok(headers)).chain(reader.records());
    let mut row = 0usize;
    for rec in records {
        let rec = rec.map_err(|e| data_err(e.to_string()))?;
        let is_header = std::mem::take(&mut first);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let values: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match values {
            Ok(v) => v,
            Err(_) if is_header => continue,
            Err(e) => return Err(data_err(format!("row {}: {e}", row + 1))),
        };
        row += 1;
        if values.len() != dim + 1 {
            return Err(data_err(format!(
                "row {row}: expected {} columns, found {}",
                dim + 1,
                values.len()
            )));
        }
        let y = values[dim];
        let sample = SampleRecord::new(values[..dim].to_vec(), y)
            .map_err(|_| data_err(format!("row {row}: y = {y} is outside [0, 1]")))?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn run_estimate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let start = Instant::now();
    let data_path = cfg.resolve_path(cfg.data.as_ref().expect("validated at load time"));
    let samples = read_samples(&data_path, cfg.domain.dim())?;
    let grid = Grid::tessellate(&cfg.domain, &cfg.spacing)?;
    let kernel = Kernel::new(&cfg.bandwidth);
    let conf = cfg.confidence();
    let estimator = cfg.estimators[0];

    let mut header = vec!["estimator".to_string()];
    header.extend(x_columns(cfg.domain.dim()));
    header.extend(["m_h", "n_h", "p_ws", "sigma_ws", "lcb", "ucb"].map(String::from));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvTable::create(&cfg.output, "estimates.csv", &cfg.digest(), &header_refs)?;
    for q in grid.points() {
        let mut sums = KernelSums::default();
        for s in &samples {
            sums.add(kernel.weight(q, &s.x), s.y);
        }
        let e = estimator.estimate(&sums, kernel.count_scale(), conf);
        let mut f = vec![estimator.label().to_string()];
        f.extend(q.iter().map(|&v| fmt_float(v)));
        f.extend([
            fmt_opt(e.m_h),
            fmt_float(e.n_h),
            fmt_float(e.center),
            fmt_float(e.half_width),
            fmt_float(e.lcb),
            fmt_float(e.ucb),
        ]);
        t.row(f)?;
    }
    let files = vec![t.finish()?];
    let meta = RunMetadata::new(cfg, Vec::new(), &files, start.elapsed(), &[]);
    finish(files, meta, &cfg.output)
}

#[derive(serde::Deserialize)]
struct DigestOnly {
    config_digest: String,
}

pub fn emit_peak_table(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let start = Instant::now();
    let mut header: Option<csv::StringRecord> = None;
    let mut rows = Vec::new();
    for dir in &cfg.inputs {
        let dir = &cfg.resolve_path(dir);
        let missing = |what: &str| CliError::Invalid {
            field: "inputs".into(),
            reason: format!("{}: missing {what}", dir.display()),
        };
        let peaks_path = dir.join("peaks.csv");
        let meta_path = dir.join(METADATA_FILE);
        if !peaks_path.is_file() {
            return Err(missing("peaks.csv"));
        }
        if !meta_path.is_file() {
            return Err(missing(METADATA_FILE));
        }
        let meta_text = std::fs::read_to_string(&meta_path).map_err(|source| CliError::Io {
            path: meta_path.clone(),
            source,
        })?;
        let meta: DigestOnly = serde_json::from_str(&meta_text).map_err(|e| CliError::Data {
            path: meta_path.clone(),
            reason: e.to_string(),
        })?;
        let digest = output::read_digest(&peaks_path)?;
        if digest.as_deref() != Some(meta.config_digest.as_str()) {
            return Err(CliError::Data {
                path: peaks_path,
                reason: format!(
                    "config digest {} does not match {METADATA_FILE} ({})",
                    digest.as_deref().unwrap_or("<none>"),
                    meta.config_digest
                ),
            });
        }
        let mut reader = output::csv_reader(&peaks_path)?;
        let h = reader
            .headers()
            .map_err(|e| CliError::Data {
                path: peaks_path.clone(),
                reason: e.to_string(),
            })?
            .clone();
        match &header {
            Some(existing) if *existing != h => {
                return Err(CliError::Data {
                    path: peaks_path,
                    reason: "peak labels differ from the other inputs".into(),
                })
            }
            Some(_) => {}
            None => header = Some(h),
        }
        for rec in reader.records() {
            rows.push(rec.map_err(|e| CliError::Data {
                path: peaks_path.clone(),
                reason: e.to_string(),
            })?);
        }
    }
    let header = header.expect("at least one input");
    let header_refs: Vec<&str> = header.iter().collect();
    let mut t = CsvTable::create(&cfg.output, "table.csv", &cfg.digest(), &header_refs)?;
    for r in &rows {
        t.row(r.iter())?;
    }
    let files = vec![t.finish()?];
    let meta = RunMetadata::new(cfg, Vec::new(), &files, start.elapsed(), &[]);
    finish(files, meta, &cfg.output)
}
