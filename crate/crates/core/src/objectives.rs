//! Ground-truth test function and seeded outcome generators on `[0, 1]`.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};

/// Name of the generator behind [`RngStream`], recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9, seed_from_u64)";

const SCAN_POINTS: usize = 1_000_000;
const REFINE_TOL: f64 = 1e-9;

/// Deterministic random stream keyed by a 64-bit seed.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// A local maximum of the test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub x: f64,
    pub value: f64,
}

/// `S(x) = 0.5 (sin(a x^2) exp(-b (2 pi - x)) + 1)` on `[0, 2 pi]`.
///
/// Peaks are located once at construction by a dense scan followed by
/// ternary refinement.
#[derive(Debug, Clone)]
pub struct TestFunction {
    a: f64,
    b: f64,
    peaks: Vec<Peak>,
}

impl TestFunction {
    pub const DEFAULT_A: f64 = 0.6;
    pub const DEFAULT_B: f64 = 0.03;
    pub const DOMAIN: (f64, f64) = (0.0, 2.0 * PI);

    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::invalid("a", format!("must be positive, got {a}")));
        }
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::invalid(
                "b",
                format!("must be non-negative, got {b}"),
            ));
        }
        let mut tf = Self {
            a,
            b,
            peaks: Vec::new(),
        };
        tf.peaks = tf.scan_peaks()?;
        Ok(tf)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Evaluates `S(x)` without a domain check.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let (_, hi) = Self::DOMAIN;
        0.5 * ((self.a * x * x).sin() * (-self.b * (hi - x)).exp() + 1.0)
    }

    pub fn ground_truth(&self, x: f64) -> Result<f64> {
        let (lo, hi) = Self::DOMAIN;
        if !(lo..=hi).contains(&x) {
            return Err(Error::OutOfDomain { point: vec![x] });
        }
        Ok(self.value(x))
    }

    /// Local maxima sorted by location.
    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    /// Highest peak value (the global maximum).
    pub fn s_max(&self) -> f64 {
        self.peaks
            .iter()
            .map(|p| p.value)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn scan_peaks(&self) -> Result<Vec<Peak>> {
        let (lo, hi) = Self::DOMAIN;
        let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
        let at = |i: usize| lo + step * i as f64;
        let values: Vec<f64> = (0..SCAN_POINTS).map(|i| self.value(at(i))).collect();
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(
                "test function",
                format!("value {v} leaves [0, 1]"),
            ));
        }
        let mut peaks = Vec::new();
        for i in 1..SCAN_POINTS - 1 {
            if values[i] > values[i - 1] && values[i] >= values[i + 1] {
                let x = self.ternary_max(at(i - 1), at(i + 1));
                peaks.push(Peak {
                    x,
                    value: self.value(x),
                });
            }
        }
        Ok(peaks)
    }

    fn ternary_max(&self, mut lo: f64, mut hi: f64) -> f64 {
        while hi - lo > REFINE_TOL {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if self.value(m1) < self.value(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        0.5 * (lo + hi)
    }
}

impl Default for TestFunction {
    fn default() -> Self {
        Self::new(Self::DEFAULT_A, Self::DEFAULT_B).expect("default parameters are valid")
    }
}

/// Distribution of one outcome given its expectation.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Bernoulli,
    /// Beta with `alpha + beta = concentration`.
    Beta {
        concentration: f64,
    },
    /// Largest category frequency among `parts` categorical outcomes.
    /// Ignores the requested mean.
    ModeFraction {
        pose_probs: Vec<f64>,
        parts: u32,
    },
}

impl NoiseModel {
    pub fn beta(concentration: f64) -> Result<Self> {
        if !(concentration.is_finite() && concentration > 0.0) {
            return Err(Error::invalid(
                "concentration",
                format!("must be positive and finite, got {concentration}"),
            ));
        }
        Ok(Self::Beta { concentration })
    }

    pub fn mode_fraction(pose_probs: Vec<f64>, parts: u32) -> Result<Self> {
        if pose_probs.is_empty() {
            return Err(Error::invalid("pose_probs", "needs at least one category"));
        }
        if pose_probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid(
                "pose_probs",
                "entries must be finite and >= 0",
            ));
        }
        let total: f64 = pose_probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "pose_probs",
                format!("sum to {total}, not 1"),
            ));
        }
        if parts == 0 {
            return Err(Error::invalid("parts", "needs at least one part"));
        }
        Ok(Self::ModeFraction { pose_probs, parts })
    }

    /// Short label used in output files.
    pub fn label(&self) -> String {
        match self {
            Self::Bernoulli => "bernoulli".into(),
            Self::Beta { concentration } => format!("beta(c={concentration})"),
            Self::ModeFraction { parts, .. } => format!("mode_fraction(m={parts})"),
        }
    }

    /// One outcome in `[0, 1]`.
    pub fn draw(&self, mean: f64, rng: &mut RngStream) -> f64 {
        match self {
            Self::Bernoulli => {
                if rng.uniform() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Beta { concentration } => {
                if mean <= 0.0 || mean >= 1.0 {
                    return mean.clamp(0.0, 1.0);
                }
                let dist = Beta::new(mean * concentration, (1.0 - mean) * concentration)
                    .expect("positive shape parameters");
                let v: f64 = dist.sample(rng);
                if v.is_nan() {
                    mean
                } else {
                    v.clamp(0.0, 1.0)
                }
            }
            Self::ModeFraction { pose_probs, parts } => {
                let mut counts = vec![0u32; pose_probs.len()];
                for _ in 0..*parts {
                    let u = rng.uniform();
                    let mut acc = 0.0;
                    let mut pick = pose_probs.len() - 1;
                    for (k, p) in pose_probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    counts[pick] += 1;
                }
                let max = counts.into_iter().max().unwrap_or(0);
                f64::from(max) / f64::from(*parts)
            }
        }
    }

    /// Exact expectation of [`draw`](Self::draw) at the given mean.
    pub fn expectation(&self, mean: f64) -> f64 {
        match self {
            Self::Bernoulli | Self::Beta { .. } => mean,
            Self::ModeFraction { pose_probs, parts } => mode_fraction_mean(pose_probs, *parts),
        }
    }
}

/// `E[max count] / m` via `E[max] = sum_t P(max >= t)`, where
/// `P(max < t)` is `m!` times the `x^m` coefficient of
/// `prod_k sum_{c < t} (p_k x)^c / c!`.
fn mode_fraction_mean(probs: &[f64], parts: u32) -> f64 {
    let m = parts as usize;
    // factorials in log space keep large m finite
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=m).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    let mut expected_max = 0.0;
    for t in 1..=m {
        // P(every count <= t - 1)
        let mut poly = vec![0.0; m + 1];
        poly[0] = 1.0;
        for &p in probs {
            let mut next = vec![0.0; m + 1];
            for (deg, &coef) in poly.iter().enumerate() {
                if coef == 0.0 {
                    continue;
                }
                for c in 0..t.min(m - deg + 1) {
                    let term = if c == 0 {
                        1.0
                    } else if p == 0.0 {
                        0.0
                    } else {
                        (c as f64 * p.ln() - ln_fact[c]).exp()
                    };
                    next[deg + c] += coef * term;
                }
            }
            poly = next;
        }
        let below = (poly[m] * ln_fact[m].exp()).clamp(0.0, 1.0);
        expected_max += 1.0 - below;
    }
    expected_max / m as f64
}

/// A stochastic function that the optimizer can query.
pub trait StochasticObjective {
    fn dim(&self) -> usize;

    /// One noisy outcome in `[0, 1]` at `x`.
    fn sample(&self, x: &[f64], rng: &mut RngStream) -> f64;

    /// Ground-truth expectation at `x`, when known.
    fn expected(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// The 1-D test function observed through a noise model.
#[derive(Debug, Clone)]
pub struct NoisyTestFunction {
    pub function: TestFunction,
    pub noise: NoiseModel,
}

impl NoisyTestFunction {
    pub fn new(function: TestFunction, noise: NoiseModel) -> Self {
        Self { function, noise }
    }
}

impl StochasticObjective for NoisyTestFunction {
    fn dim(&self) -> usize {
        1
    }

    fn sample(&self, x: &[f64], rng: &mut RngStream) -> f64 {
        self.noise.draw(self.function.value(x[0]), rng)
    }

    fn expected(&self, x: &[f64]) -> Option<f64> {
        Some(self.noise.expectation(self.function.value(x[0])))
    }
}
