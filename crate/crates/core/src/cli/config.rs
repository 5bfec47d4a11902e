//! Experiment configuration documents (TOML).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::estimator::{Bandwidth, Confidence};
use crate::metrics::{COVERAGE_POINTS, DEFAULT_CHECKPOINTS};
use crate::objectives::{NoiseModel, TestFunction};
use crate::optimizer::{Domain, EstimatorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Coverage,
    Bo,
    Estimate,
    PeakTable,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::Bo => "bo",
            ExperimentKind::Estimate => "estimate",
            ExperimentKind::PeakTable => "peak-table",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    Wskde,
    Nakde,
    Both,
}

impl EstimatorChoice {
    fn kinds(self) -> Vec<EstimatorKind> {
        match self {
            EstimatorChoice::Wskde => vec![EstimatorKind::Wskde],
            EstimatorChoice::Nakde => vec![EstimatorKind::Nakde],
            EstimatorChoice::Both => vec![EstimatorKind::Wskde, EstimatorKind::Nakde],
        }
    }
}

/// Noise model as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Bernoulli,
    Beta {
        concentration: f64,
    },
    ModeFraction {
        pose_probs: Vec<f64>,
        #[serde(default = "default_parts")]
        parts: u32,
    },
}

fn default_parts() -> u32 {
    10
}

impl NoiseSpec {
    pub fn model(&self) -> crate::Result<NoiseModel> {
        match self {
            NoiseSpec::Bernoulli => Ok(NoiseModel::Bernoulli),
            NoiseSpec::Beta { concentration } => NoiseModel::beta(*concentration),
            NoiseSpec::ModeFraction { pose_probs, parts } => {
                NoiseModel::mode_fraction(pose_probs.clone(), *parts)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self, dim: usize) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![v; dim],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTestFunction {
    #[serde(default = "default_a")]
    a: f64,
    #[serde(default = "default_b")]
    b: f64,
}

fn default_a() -> f64 {
    TestFunction::DEFAULT_A
}

fn default_b() -> f64 {
    TestFunction::DEFAULT_B
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Option<ExperimentKind>,
    estimator: Option<EstimatorChoice>,
    noise: Option<NoiseSpec>,
    test_function: Option<RawTestFunction>,
    domain: Option<RawDomain>,
    bandwidth: Option<OneOrMany>,
    spacing: Option<OneOrMany>,
    confidence: Option<String>,
    z: Option<f64>,
    budget: Option<usize>,
    threshold: Option<f64>,
    kernel_cutoff: Option<f64>,
    replications: Option<usize>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    max_samples: Option<usize>,
    checkpoints: Option<Vec<usize>>,
    eval_points: Option<usize>,
    trace_stride: Option<usize>,
    data: Option<PathBuf>,
    inputs: Option<Vec<PathBuf>>,
}

/// Test-function parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFunctionSpec {
    pub a: f64,
    pub b: f64,
}

/// Fully resolved and validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub estimators: Vec<EstimatorKind>,
    pub noise: NoiseSpec,
    pub test_function: TestFunctionSpec,
    pub domain: Domain,
    pub bandwidth: Bandwidth,
    pub spacing: Vec<f64>,
    pub z: f64,
    pub budget: usize,
    pub threshold: Option<f64>,
    pub kernel_cutoff: Option<f64>,
    pub replications: usize,
    pub seed: u64,
    pub checkpoints: Vec<usize>,
    pub eval_points: usize,
    pub trace_stride: usize,
    pub data: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    #[serde(skip)]
    pub output: PathBuf,
    /// Directory that relative `data`, `inputs` and `output` paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub paper_scale: bool,
}

pub const DESK_COVERAGE_REPLICATIONS: usize = 50;
pub const DESK_BO_REPLICATIONS: usize = 30;
pub const DESK_MAX_SAMPLES: usize = 2000;
pub const PAPER_REPLICATIONS: usize = 100;
pub const PAPER_MAX_SAMPLES: usize = 10_000;

fn invalid(field: &'static str, reason: impl Into<String>) -> CliError {
    CliError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn from_core(field: &'static str, err: crate::Error) -> CliError {
    invalid(field, err.to_string())
}

impl ExperimentConfig {
    /// Parses a config document; `kind` fills in a missing `kind` key.
    pub fn parse(text: &str, kind: Option<ExperimentKind>) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        Self::resolve(raw, kind)
    }

    /// Defaults for `kind` with nothing overridden.
    pub fn defaults(kind: ExperimentKind) -> Self {
        Self::parse("", Some(kind)).expect("defaults are valid")
    }

    fn resolve(raw: RawConfig, expected: Option<ExperimentKind>) -> Result<Self, CliError> {
        let kind = match (raw.kind, expected) {
            (Some(k), Some(e)) if k != e => {
                return Err(invalid(
                    "kind",
                    format!("config is for `{k}`, command is `{e}`"),
                ))
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => return Err(invalid("kind", "missing")),
        };

        let (lo, hi) = TestFunction::DOMAIN;
        let domain = match raw.domain {
            Some(d) => Domain::new(d.lower, d.upper).map_err(|e| from_core("domain", e))?,
            None => Domain::interval(lo, hi).expect("valid default domain"),
        };
        let dim = domain.dim();
        if matches!(kind, ExperimentKind::Coverage | ExperimentKind::Bo)
            && (dim != 1 || domain.lower()[0] < lo || domain.upper()[0] > hi)
        {
            return Err(invalid(
                "domain",
                "must be a 1-D sub-interval of [0, 2*pi] for the test function",
            ));
        }

        let bandwidth = raw
            .bandwidth
            .map(|b| b.into_vec(dim))
            .unwrap_or_else(|| vec![0.02; dim]);
        if bandwidth.len() != dim {
            return Err(invalid("bandwidth", format!("needs {dim} entries")));
        }
        let bandwidth = Bandwidth::new(bandwidth).map_err(|e| from_core("bandwidth", e))?;

        let spacing = raw
            .spacing
            .map(|s| s.into_vec(dim))
            .unwrap_or_else(|| bandwidth.diag().to_vec());
        if spacing.len() != dim {
            return Err(invalid("spacing", format!("needs {dim} entries")));
        }
        if let Some(s) = spacing.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(invalid("spacing", format!("must be positive, got {s}")));
        }

        let z = match (raw.confidence, raw.z) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "confidence",
                    "give either `confidence` or `z`, not both",
                ))
            }
            (Some(level), None) => Confidence::from_level(&level)
                .ok_or_else(|| {
                    invalid(
                        "confidence",
                        format!("unknown level `{level}` (use 90%, 95% or 99%)"),
                    )
                })?
                .z(),
            (None, Some(z)) => Confidence::new(z).map_err(|e| from_core("z", e))?.z(),
            (None, None) => Confidence::default().z(),
        };

        let default_choice = match kind {
            ExperimentKind::Coverage => EstimatorChoice::Both,
            _ => EstimatorChoice::Wskde,
        };
        let estimator = raw.estimator.unwrap_or(default_choice);
        if kind == ExperimentKind::Estimate && estimator == EstimatorChoice::Both {
            return Err(invalid("estimator", "estimate takes a single estimator"));
        }

        let noise = raw.noise.unwrap_or(NoiseSpec::Bernoulli);
        noise.model().map_err(|e| from_core("noise", e))?;

        let tf = raw.test_function.unwrap_or(RawTestFunction {
            a: default_a(),
            b: default_b(),
        });
        TestFunction::new(tf.a, tf.b).map_err(|e| from_core("test_function", e))?;

        if let Some(t) = raw.threshold {
            if !(t > 0.0 && t <= 0.5) {
                return Err(invalid(
                    "threshold",
                    format!("must lie in (0, 0.5], got {t}"),
                ));
            }
        }
        if let Some(r) = raw.kernel_cutoff {
            if !(r.is_finite() && r > 0.0) {
                return Err(invalid(
                    "kernel_cutoff",
                    format!("must be positive, got {r}"),
                ));
            }
        }

        let replications = raw.replications.unwrap_or(match kind {
            ExperimentKind::Coverage => DESK_COVERAGE_REPLICATIONS,
            _ => DESK_BO_REPLICATIONS,
        });
        if replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }

        let checkpoints = match (raw.checkpoints, raw.max_samples) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "checkpoints",
                    "give either `checkpoints` or `max_samples`, not both",
                ))
            }
            (Some(c), None) => c,
            (None, max) => schedule_up_to(max.unwrap_or(DESK_MAX_SAMPLES)),
        };
        if checkpoints.is_empty()
            || checkpoints[0] == 0
            || checkpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(invalid(
                "checkpoints",
                "must be a non-empty, strictly increasing list of positive counts",
            ));
        }

        let eval_points = raw.eval_points.unwrap_or(COVERAGE_POINTS);
        if eval_points < 2 {
            return Err(invalid("eval_points", "needs at least 2 points"));
        }
        let trace_stride = raw.trace_stride.unwrap_or(1);
        if trace_stride == 0 {
            return Err(invalid("trace_stride", "must be at least 1"));
        }

        if kind == ExperimentKind::Estimate && raw.data.is_none() {
            return Err(invalid("data", "estimate needs a data file"));
        }
        let inputs = raw.inputs.unwrap_or_default();
        if kind == ExperimentKind::PeakTable && inputs.is_empty() {
            return Err(invalid(
                "inputs",
                "peak-table needs at least one bo output directory",
            ));
        }

        Ok(Self {
            kind,
            estimators: estimator.kinds(),
            noise,
            test_function: TestFunctionSpec { a: tf.a, b: tf.b },
            domain,
            bandwidth,
            spacing,
            z,
            budget: raw.budget.unwrap_or(10_000),
            threshold: raw.threshold,
            kernel_cutoff: raw.kernel_cutoff,
            replications,
            seed: raw.seed.unwrap_or(1),
            checkpoints,
            eval_points,
            trace_stride,
            data: raw.data,
            inputs,
            output: raw.output.unwrap_or_else(|| PathBuf::from("out")),
            base_dir: PathBuf::new(),
        })
    }

    /// Applies command-line overrides. `--paper-scale` runs 100 replications
    /// and coverage curves up to 10^4 samples; explicit overrides win.
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if o.paper_scale {
            self.replications = PAPER_REPLICATIONS;
            if self.kind == ExperimentKind::Coverage {
                self.checkpoints = schedule_up_to(PAPER_MAX_SAMPLES);
            }
        }
        if let Some(r) = o.replications {
            if r == 0 {
                return Err(invalid("replications", "must be at least 1"));
            }
            self.replications = r;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.output {
            self.output = out.clone();
        }
        Ok(())
    }

    pub fn confidence(&self) -> Confidence {
        Confidence::new(self.z).expect("validated at load time")
    }

    pub fn test_function(&self) -> TestFunction {
        TestFunction::new(self.test_function.a, self.test_function.b)
            .expect("validated at load time")
    }

    pub fn noise_model(&self) -> NoiseModel {
        self.noise.model().expect("validated at load time")
    }

    /// Largest checkpoint, i.e. the number of samples per coverage replication.
    pub fn max_samples(&self) -> usize {
        *self.checkpoints.last().expect("non-empty")
    }

    /// `path` relative to the config file's directory, unless absolute.
    pub fn resolve_path(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    /// SHA-256 of the resolved config, excluding the output location.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

fn schedule_up_to(max: usize) -> Vec<usize> {
    let mut s: Vec<usize> = DEFAULT_CHECKPOINTS
        .iter()
        .copied()
        .filter(|&c| c <= max)
        .collect();
    if s.last() != Some(&max) && max > 0 {
        s.push(max);
    }
    s
}

/// Reads and validates a config file.
pub fn load_config(
    path: &Path,
    kind: Option<ExperimentKind>,
) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = ExperimentConfig::parse(&text, kind).map_err(|e| match e {
        CliError::Parse(msg) => CliError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.output = cfg.base_dir.join(&cfg.output);
    Ok(cfg)
}
