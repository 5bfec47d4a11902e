//! Kernel-weighted estimates of a bounded stochastic function.
//!
//! Everything here is a pure function of its inputs. The Wilson score
//! estimate is computed from two kernel statistics at the query point, the
//! kernel-weighted mean `m_h` and the effective sample count `n_h`, and
//! yields an interval that stays conservative for any outcome distribution
//! supported on `[0, 1]`.
//!
//! The batch entry points (`kde_mean`, `effective_count`, `ws_kde`,
//! `na_estimate`) recompute the kernel sums from a dataset. [`KernelSums`]
//! holds the same sums for incremental use.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Diagonal bandwidth matrix of a Gaussian product kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Bandwidth {
    diag: Vec<f64>,
    det: f64,
}

impl Bandwidth {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::invalid("bandwidth", "needs at least one dimension"));
        }
        if let Some(bad) = diag.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(Error::invalid(
                "bandwidth",
                format!("entries must be positive and finite, got {bad}"),
            ));
        }
        let det = diag.iter().product::<f64>();
        if !(det > 0.0 && det.is_finite()) {
            return Err(Error::invalid(
                "bandwidth",
                format!("determinant {det} is not a positive finite number"),
            ));
        }
        Ok(Self { diag, det })
    }

    /// Same width `h` in each of `dim` dimensions.
    pub fn isotropic(h: f64, dim: usize) -> Result<Self> {
        Self::new(vec![h; dim])
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }
}

impl TryFrom<Vec<f64>> for Bandwidth {
    type Error = Error;

    fn try_from(diag: Vec<f64>) -> Result<Self> {
        Self::new(diag)
    }
}

impl From<Bandwidth> for Vec<f64> {
    fn from(h: Bandwidth) -> Self {
        h.diag
    }
}

/// Two-sided normal quantile `z` used for every interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    z: f64,
}

impl Confidence {
    pub const LEVEL_90: Confidence = Confidence { z: 1.6449 };
    pub const LEVEL_95: Confidence = Confidence { z: 1.96 };
    pub const LEVEL_99: Confidence = Confidence { z: 2.5758 };

    pub fn new(z: f64) -> Result<Self> {
        if z.is_finite() && z > 0.0 {
            Ok(Self { z })
        } else {
            Err(Error::invalid(
                "z",
                format!("must be positive and finite, got {z}"),
            ))
        }
    }

    /// Resolves the named levels `"90%"`, `"95%"` and `"99%"`.
    pub fn from_level(level: &str) -> Option<Self> {
        match level.trim() {
            "90%" => Some(Self::LEVEL_90),
            "95%" => Some(Self::LEVEL_95),
            "99%" => Some(Self::LEVEL_99),
            _ => None,
        }
    }

    pub fn z(&self) -> f64 {
        self.z
    }
}

impl Default for Confidence {
    fn default() -> Self {
        Self::LEVEL_95
    }
}

/// One evaluated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub x: Vec<f64>,
    pub y: f64,
}

impl SampleRecord {
    pub fn new(x: Vec<f64>, y: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::invalid(
                "y",
                format!("outcome {y} is outside [0, 1]"),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x", "coordinates must be finite"));
        }
        Ok(Self { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Estimate at a single query point.
///
/// `center` and `half_width` are the Wilson score center and half-width for
/// WS-KDE estimates and the kernel mean and `z` standard errors for the
/// normal-approximation baseline. The interval is
/// `[center - half_width, center + half_width]` clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub m_h: Option<f64>,
    pub n_h: f64,
    pub center: f64,
    pub half_width: f64,
    pub lcb: f64,
    pub ucb: f64,
}

impl Estimate {
    /// The estimate with no information: center 0.5, interval `[0, 1]`.
    pub const UNINFORMATIVE: Estimate = Estimate {
        m_h: None,
        n_h: 0.0,
        center: 0.5,
        half_width: 0.5,
        lcb: 0.0,
        ucb: 1.0,
    };

    fn from_center(m_h: Option<f64>, n_h: f64, center: f64, half_width: f64) -> Self {
        Self::with_bounds(
            m_h,
            n_h,
            center,
            half_width,
            center - half_width,
            center + half_width,
        )
    }

    fn with_bounds(
        m_h: Option<f64>,
        n_h: f64,
        center: f64,
        half_width: f64,
        lcb: f64,
        ucb: f64,
    ) -> Self {
        Self {
            m_h,
            n_h,
            center,
            half_width,
            lcb: lcb.clamp(0.0, center),
            ucb: ucb.clamp(center, 1.0),
        }
    }

    /// Strict containment of `value` in the open interval `(lcb, ucb)`.
    pub fn covers(&self, value: f64) -> bool {
        self.lcb < value && value < self.ucb
    }
}

/// `k22 = ||K||_2^2` for the `d`-dimensional standard Gaussian kernel.
pub fn k22(dim: usize) -> f64 {
    let d = dim as f64;
    1.0 / (2f64.powf(d) * PI.powf(d / 2.0))
}

/// Gaussian kernel with precomputed normalisation for a fixed bandwidth.
#[derive(Debug, Clone)]
pub struct Kernel {
    inv_diag: Vec<f64>,
    norm: f64,
    count_scale: f64,
}

impl Kernel {
    pub fn new(h: &Bandwidth) -> Self {
        let d = h.dim() as f64;
        Self {
            inv_diag: h.diag().iter().map(|v| 1.0 / v).collect(),
            norm: 1.0 / (h.det() * (2.0 * PI).powf(d / 2.0)),
            count_scale: h.det() / k22(h.dim()),
        }
    }

    pub fn dim(&self) -> usize {
        self.inv_diag.len()
    }

    /// Factor `det H / k22` that maps a kernel-weight sum to `n_h`.
    pub fn count_scale(&self) -> f64 {
        self.count_scale
    }

    /// Squared Mahalanobis distance `u^T u` with `u = H^-1 (x - xi)`.
    #[inline]
    pub fn scaled_dist_sq(&self, x: &[f64], xi: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(xi.len(), self.dim());
        x.iter()
            .zip(xi)
            .zip(&self.inv_diag)
            .map(|((a, b), s)| {
                let u = (a - b) * s;
                u * u
            })
            .sum()
    }

    #[inline]
    pub fn weight_from_dist_sq(&self, dist_sq: f64) -> f64 {
        self.norm * (-0.5 * dist_sq).exp()
    }

    /// Kernel weight without dimension checks.
    #[inline]
    pub fn weight(&self, x: &[f64], xi: &[f64]) -> f64 {
        self.weight_from_dist_sq(self.scaled_dist_sq(x, xi))
    }
}

/// Running kernel sums at one query location: `sum K`, `sum K y`, `sum K y^2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KernelSums {
    pub sum_w: f64,
    pub sum_wy: f64,
    pub sum_wy2: f64,
}

impl KernelSums {
    #[inline]
    pub fn add(&mut self, w: f64, y: f64) {
        let wy = w * y;
        self.sum_w += w;
        self.sum_wy += wy;
        self.sum_wy2 += wy * y;
    }

    /// Accumulates the sums for `query` over a whole dataset.
    pub fn from_data(query: &[f64], data: &[SampleRecord], h: &Bandwidth) -> Result<Self> {
        check_dim(h.dim(), query.len())?;
        let kernel = Kernel::new(h);
        let mut sums = Self::default();
        for rec in data {
            check_dim(h.dim(), rec.dim())?;
            sums.add(kernel.weight(query, &rec.x), rec.y);
        }
        Ok(sums)
    }

    /// Kernel-weighted mean; `None` when the weights sum to zero.
    pub fn mean(&self) -> Option<f64> {
        (self.sum_w > 0.0).then(|| (self.sum_wy / self.sum_w).clamp(0.0, 1.0))
    }

    pub fn effective_count(&self, count_scale: f64) -> f64 {
        count_scale * self.sum_w
    }

    pub fn ws_estimate(&self, count_scale: f64, conf: Confidence) -> Estimate {
        let n_h = self.effective_count(count_scale);
        match self.mean() {
            Some(m) if n_h > 0.0 => wilson(m, n_h, conf.z()),
            _ => Estimate::UNINFORMATIVE,
        }
    }

    /// Normal-approximation estimate; `None` when no weight reaches the query.
    pub fn na_estimate(&self, count_scale: f64, conf: Confidence) -> Option<Estimate> {
        let m = self.mean()?;
        let n_h = self.effective_count(count_scale);
        if n_h <= 0.0 {
            return None;
        }
        let var = (self.sum_wy2 / self.sum_w - m * m).max(0.0);
        let half = conf.z() * (var / n_h).sqrt();
        Some(Estimate::from_center(Some(m), n_h, m, half))
    }
}

/// Gaussian kernel `K_{H,xi}(x)`.
pub fn kernel_weight(x: &[f64], xi: &[f64], h: &Bandwidth) -> Result<f64> {
    check_dim(h.dim(), x.len())?;
    check_dim(h.dim(), xi.len())?;
    Ok(Kernel::new(h).weight(x, xi))
}

/// Kernel-weighted mean of the outcomes; `Ok(None)` if no weight reaches `query`.
pub fn kde_mean(query: &[f64], data: &[SampleRecord], h: &Bandwidth) -> Result<Option<f64>> {
    Ok(KernelSums::from_data(query, data, h)?.mean())
}

/// Effective number of experiments `(det H / k22) * sum K` at `query`.
pub fn effective_count(query: &[f64], data: &[SampleRecord], h: &Bandwidth) -> Result<f64> {
    let sums = KernelSums::from_data(query, data, h)?;
    Ok(sums.effective_count(h.det() / k22(h.dim())))
}

/// Wilson score estimate from a (possibly undefined) mean and an effective count.
pub fn ws_estimate(m_h: Option<f64>, n_h: f64, conf: Confidence) -> Result<Estimate> {
    if !(n_h.is_finite() && n_h >= 0.0) {
        return Err(Error::invalid(
            "n_h",
            format!("must be finite and >= 0, got {n_h}"),
        ));
    }
    if n_h == 0.0 {
        return Ok(Estimate::UNINFORMATIVE);
    }
    match m_h {
        Some(m) if (0.0..=1.0).contains(&m) => Ok(wilson(m, n_h, conf.z())),
        Some(m) => Err(Error::invalid("m_h", format!("mean {m} is outside [0, 1]"))),
        None => Err(Error::invalid(
            "m_h",
            "undefined mean with a positive effective count",
        )),
    }
}

/// Wilson score interval for `successes` out of `n` Bernoulli replicates.
pub fn wilson_raw(successes: u64, n: u64, conf: Confidence) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::invalid("n", "needs at least one trial"));
    }
    if successes > n {
        return Err(Error::invalid(
            "successes",
            format!("{successes} successes out of {n} trials"),
        ));
    }
    ws_estimate(Some(successes as f64 / n as f64), n as f64, conf)
}

/// WS-KDE estimate at `query` over a dataset.
pub fn ws_kde(
    query: &[f64],
    data: &[SampleRecord],
    h: &Bandwidth,
    conf: Confidence,
) -> Result<Estimate> {
    let sums = KernelSums::from_data(query, data, h)?;
    Ok(sums.ws_estimate(h.det() / k22(h.dim()), conf))
}

/// Normal-approximation KDE estimate; `Ok(None)` when `n_h = 0`.
pub fn na_estimate(
    query: &[f64],
    data: &[SampleRecord],
    h: &Bandwidth,
    conf: Confidence,
) -> Result<Option<Estimate>> {
    let sums = KernelSums::from_data(query, data, h)?;
    Ok(sums.na_estimate(h.det() / k22(h.dim()), conf))
}

/// Closed-form Wilson center and half-width for `n > 0`.
///
/// The interval endpoints are the roots of a quadratic whose product is
/// `n m^2 / (n + z^2)`; when `center - half_width` cancels badly the lower
/// root is recovered from that product instead (and symmetrically for the
/// upper root via `1 - p`).
fn wilson(m: f64, n: f64, z: f64) -> Estimate {
    let z2 = z * z;
    let denom = n + z2;
    let center = (n * m + 0.5 * z2) / denom;
    let half = z / denom * (n * m * (1.0 - m) + 0.25 * z2).sqrt();

    let mut lcb = center - half;
    if lcb < 0.5 * center {
        lcb = n * m * m / (denom * (center + half));
    }
    let q = 1.0 - center;
    let mut ucb = center + half;
    if q - half < 0.5 * q {
        let r = 1.0 - m;
        ucb = 1.0 - n * r * r / (denom * (q + half));
    }
    Estimate::with_bounds(Some(m), n, center, half, lcb, ucb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    /// Roots of `(phat - p)^2 = z^2 p (1 - p) / n`, solved as a quadratic in `p`
    /// with the numerically stable root pairing.
    fn wilson_roots(phat: f64, n: f64, z: f64) -> (f64, f64) {
        let t = z * z / n;
        let a = 1.0 + t;
        let b = -(2.0 * phat + t);
        let c = phat * phat;
        let disc = t * (4.0 * phat * (1.0 - phat) + t);
        let q = -0.5 * (b - disc.sqrt());
        let (r1, r2) = (q / a, if q != 0.0 { c / q } else { 0.0 });
        (r1.min(r2), r1.max(r2))
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }

    fn rec(x: f64, y: f64) -> SampleRecord {
        SampleRecord::new(vec![x], y).unwrap()
    }

    #[test]
    fn kernel_weight_examples() {
        let h = Bandwidth::new(vec![0.02]).unwrap();
        let w = kernel_weight(&[1.0], &[1.0], &h).unwrap();
        assert_relative_eq!(w, 1.0 / (0.02 * (2.0 * PI).sqrt()), max_relative = 1e-14);
        assert_relative_eq!(w, 19.947114, epsilon = 1e-6);

        let h1 = Bandwidth::new(vec![1.0]).unwrap();
        let w = kernel_weight(&[1.0], &[0.0], &h1).unwrap();
        assert_relative_eq!(w, 0.24197072451914337, max_relative = 1e-14);

        let h2 = Bandwidth::new(vec![1.0, 1.0]).unwrap();
        let w = kernel_weight(&[0.3, -0.2], &[0.3, -0.2], &h2).unwrap();
        assert_relative_eq!(w, 1.0 / (2.0 * PI), max_relative = 1e-14);
    }

    #[test]
    fn kernel_weight_rejects_dimension_mismatch() {
        let h = Bandwidth::new(vec![0.1, 0.1]).unwrap();
        assert_eq!(
            kernel_weight(&[0.0], &[0.0, 0.0], &h),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        );
    }

    #[test]
    fn bandwidth_validation() {
        assert!(Bandwidth::new(vec![]).is_err());
        assert!(Bandwidth::new(vec![0.0]).is_err());
        assert!(Bandwidth::new(vec![-0.1]).is_err());
        assert!(Bandwidth::new(vec![f64::INFINITY]).is_err());
        assert!(Bandwidth::new(vec![f64::NAN]).is_err());
        let h = Bandwidth::new(vec![5.0, 1.0, 1.0]).unwrap();
        assert_eq!(h.det(), 5.0);
        assert_eq!(h.dim(), 3);
        // underflowing determinant
        assert!(Bandwidth::new(vec![1e-200, 1e-200]).is_err());
    }

    #[test]
    fn kde_mean_examples() {
        let h = Bandwidth::new(vec![0.02]).unwrap();
        assert_eq!(kde_mean(&[1.01], &[rec(1.0, 0.7)], &h).unwrap(), Some(0.7));
        let two = [rec(0.9, 0.0), rec(1.1, 1.0)];
        let h = Bandwidth::new(vec![0.1]).unwrap();
        assert_relative_eq!(
            kde_mean(&[1.0], &two, &h).unwrap().unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(kde_mean(&[1.0], &[], &h).unwrap(), None);
    }

    #[test]
    fn effective_count_examples() {
        let h = Bandwidth::new(vec![0.02]).unwrap();
        assert_eq!(effective_count(&[0.5], &[], &h).unwrap(), 0.0);
        let n = effective_count(&[0.5], &[rec(0.5, 1.0)], &h).unwrap();
        assert_relative_eq!(n, SQRT_2, max_relative = 1e-14);
        let far = effective_count(&[0.5], &[rec(0.5 + 10.0 * 0.02, 1.0)], &h).unwrap();
        assert_relative_eq!(far, SQRT_2 * (-50f64).exp(), max_relative = 1e-12);
        assert!(far > 2.6e-22 && far < 2.8e-22);
    }

    #[test]
    fn ws_estimate_zero_count_is_exact() {
        let e = ws_estimate(None, 0.0, Confidence::LEVEL_95).unwrap();
        assert_eq!(e.center, 0.5);
        assert_eq!(e.half_width, 0.5);
        assert_eq!((e.lcb, e.ucb), (0.0, 1.0));
    }

    #[test]
    fn ws_estimate_ten_successes() {
        let e = ws_estimate(Some(1.0), 10.0, Confidence::LEVEL_95).unwrap();
        let (lo, hi) = wilson_roots(1.0, 10.0, 1.96);
        assert_relative_eq!(e.center, 0.5 * (lo + hi), max_relative = 1e-12);
        assert_relative_eq!(e.half_width, 0.5 * (hi - lo), max_relative = 1e-12);
        assert_relative_eq!(e.center, 0.86123, epsilon = 5e-6);
        assert_relative_eq!(e.half_width, 0.13877, epsilon = 5e-6);
        assert_relative_eq!(e.lcb, 0.72246, epsilon = 5e-6);
        assert_eq!(e.ucb, 1.0);
    }

    #[test]
    fn ws_estimate_large_count_limit() {
        let e = ws_estimate(Some(0.3), 1e12, Confidence::LEVEL_95).unwrap();
        assert_relative_eq!(e.center, 0.3, epsilon = 1e-10);
        assert!(e.half_width < 1e-5);
    }

    #[test]
    fn ws_estimate_rejects_bad_inputs() {
        let c = Confidence::LEVEL_95;
        assert!(ws_estimate(Some(0.5), -1.0, c).is_err());
        assert!(ws_estimate(Some(1.5), 1.0, c).is_err());
        assert!(ws_estimate(Some(-0.1), 1.0, c).is_err());
        assert!(ws_estimate(None, 1.0, c).is_err());
        assert!(ws_estimate(Some(0.5), f64::NAN, c).is_err());
    }

    #[test]
    fn wilson_raw_examples() {
        let c = Confidence::LEVEL_95;
        let e = wilson_raw(0, 1, c).unwrap();
        assert_relative_eq!(e.center, 1.9208 / 4.8416, max_relative = 1e-12);
        let (lo, hi) = wilson_roots(0.0, 1.0, 1.96);
        assert_relative_eq!(e.center, 0.5 * (lo + hi), max_relative = 1e-12);
        assert_eq!(e.lcb, 0.0);

        let e = wilson_raw(5, 10, c).unwrap();
        let (lo, hi) = wilson_roots(0.5, 10.0, 1.96);
        assert_relative_eq!(e.center, 0.5, epsilon = 1e-15);
        assert_relative_eq!(e.half_width, 0.5 * (hi - lo), max_relative = 1e-12);
        assert_relative_eq!(e.half_width, 0.26341, epsilon = 5e-6);

        let e = wilson_raw(1_000_000_000, 1_000_000_000, c).unwrap();
        assert!(e.center > 1.0 - 1e-8 && e.half_width < 1e-8);

        assert!(wilson_raw(3, 2, c).is_err());
        assert!(wilson_raw(0, 0, c).is_err());
    }

    #[test]
    fn na_estimate_examples() {
        let c = Confidence::LEVEL_95;
        let h = Bandwidth::new(vec![0.02]).unwrap();
        let e = na_estimate(&[1.0], &[rec(1.0, 1.0)], &h, c)
            .unwrap()
            .unwrap();
        assert_eq!(e.center, 1.0);
        assert_eq!(e.half_width, 0.0);

        let h = Bandwidth::new(vec![0.37]).unwrap();
        let data = [rec(1.0, 0.0), rec(1.0, 1.0)];
        let e = na_estimate(&[1.0], &data, &h, c).unwrap().unwrap();
        assert_relative_eq!(e.center, 0.5, epsilon = 1e-15);
        assert_relative_eq!(e.n_h, 2.0 * SQRT_2, max_relative = 1e-14);
        assert_relative_eq!(
            e.half_width,
            1.96 * (0.25 / (2.0 * SQRT_2)).sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(e.half_width, 0.58271, epsilon = 5e-6);
        assert_eq!(e.lcb, 0.0);

        assert_eq!(na_estimate(&[1.0], &[], &h, c).unwrap(), None);
    }

    #[test]
    fn named_levels() {
        assert_eq!(Confidence::from_level("95%"), Some(Confidence::LEVEL_95));
        assert_eq!(Confidence::from_level("80%"), None);
        assert!(Confidence::new(0.0).is_err());
        assert!(Confidence::new(f64::INFINITY).is_err());
    }

    /// The named-level constants are the normal quantiles to the printed precision.
    #[test]
    fn named_levels_match_inverse_erf() {
        // erf via its Taylor series, inverted by bisection
        fn erf(x: f64) -> f64 {
            let mut term = x;
            let mut sum = x;
            for k in 1..200 {
                let k = k as f64;
                term *= -x * x / k;
                sum += term / (2.0 * k + 1.0);
            }
            2.0 / PI.sqrt() * sum
        }
        fn quantile(level: f64) -> f64 {
            let (mut lo, mut hi) = (0.0, 5.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if erf(mid / SQRT_2) < level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
        assert!((quantile(0.90) - Confidence::LEVEL_90.z()).abs() < 5e-5);
        assert!((quantile(0.95) - Confidence::LEVEL_95.z()).abs() < 5e-5);
        assert!((quantile(0.99) - Confidence::LEVEL_99.z()).abs() < 5e-5);
    }

    #[test]
    fn one_dimensional_count_matches_l2_norm_form() {
        // n h / ||K||^2 * f_h with ||K||^2 = 1 / (2 sqrt(pi)) for the Gaussian
        let h = 0.05;
        let data: Vec<_> = (0..40).map(|i| rec(0.013 * i as f64, 0.5)).collect();
        let bw = Bandwidth::new(vec![h]).unwrap();
        for q in [0.0, 0.1, 0.25, 0.4] {
            let n = data.len() as f64;
            let f_h = data
                .iter()
                .map(|r| {
                    let u = (q - r.x[0]) / h;
                    (-0.5 * u * u).exp() / (h * (2.0 * PI).sqrt())
                })
                .sum::<f64>()
                / n;
            let norm_sq = 1.0 / (2.0 * PI.sqrt());
            let expected = n * h / norm_sq * f_h;
            let got = effective_count(&[q], &data, &bw).unwrap();
            assert_relative_eq!(got, expected, max_relative = 1e-12);
        }
        assert_relative_eq!(k22(1), 1.0 / (2.0 * PI.sqrt()), max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn interval_matches_quadratic_roots(phat in 0.0f64..=1.0, n in 1u32..=100_000, z in 1e-3f64..=5.0) {
            let e = ws_estimate(Some(phat), n as f64, Confidence::new(z).unwrap()).unwrap();
            let (lo, hi) = wilson_roots(phat, n as f64, z);
            prop_assert!(rel_err(e.lcb, lo) <= 1e-10, "lcb {} vs {}", e.lcb, lo);
            prop_assert!(rel_err(e.ucb, hi) <= 1e-10, "ucb {} vs {}", e.ucb, hi);
        }

        #[test]
        fn bounds_are_ordered(m in 0.0f64..=1.0, n in 0.0f64..1e6, z in 1e-3f64..=5.0) {
            let e = ws_estimate(Some(m), n, Confidence::new(z).unwrap()).unwrap();
            prop_assert!(0.0 <= e.lcb && e.lcb <= e.center && e.center <= e.ucb && e.ucb <= 1.0);
        }

        #[test]
        fn half_width_shrinks_with_count(m in 0.0f64..=1.0, n in 0.01f64..1e5, dn in 0.01f64..1e3) {
            let c = Confidence::LEVEL_95;
            let a = ws_estimate(Some(m), n, c).unwrap();
            let b = ws_estimate(Some(m), n + dn, c).unwrap();
            prop_assert!(b.half_width < a.half_width);
        }

        #[test]
        fn center_shrinks_towards_half(m in 0.0f64..=1.0, n in 0.01f64..1e5) {
            prop_assume!((m - 0.5).abs() > 1e-6);
            let e = ws_estimate(Some(m), n, Confidence::LEVEL_95).unwrap();
            prop_assert!(e.center > m.min(0.5) && e.center < m.max(0.5));
        }

        #[test]
        fn beta_variance_below_bernoulli(alpha in 1e-3f64..1e3, beta in 1e-3f64..1e3) {
            let c = alpha + beta;
            let mu = alpha / c;
            let var = alpha * beta / (c * c * (c + 1.0));
            prop_assert!(var < mu * (1.0 - mu));
            prop_assert!((var - mu * (1.0 - mu) / (c + 1.0)).abs() <= 1e-12 * mu * (1.0 - mu));
        }

        #[test]
        fn sum_form_equals_density_form(xs in proptest::collection::vec(0.0f64..1.0, 1..50), q in 0.0f64..1.0, h in 0.01f64..0.5) {
            let data: Vec<_> = xs.iter().map(|&x| rec(x, 0.5)).collect();
            let bw = Bandwidth::new(vec![h]).unwrap();
            let kernel = Kernel::new(&bw);
            let sum: f64 = data.iter().map(|r| kernel.weight(&[q], &r.x)).sum();
            let n = data.len() as f64;
            let density = sum / n;
            let via_density = n * bw.det() / k22(1) * density;
            let direct = effective_count(&[q], &data, &bw).unwrap();
            prop_assert!(rel_err(direct, via_density) <= 1e-12);
        }

        #[test]
        fn permutation_invariance(mut pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..=1.0), 1..30), q in 0.0f64..1.0) {
            let bw = Bandwidth::new(vec![0.1]).unwrap();
            let c = Confidence::LEVEL_95;
            let data: Vec<_> = pts.iter().map(|&(x, y)| rec(x, y)).collect();
            let m1 = kde_mean(&[q], &data, &bw).unwrap();
            let n1 = effective_count(&[q], &data, &bw).unwrap();
            let a1 = na_estimate(&[q], &data, &bw, c).unwrap();
            pts.reverse();
            let mid = pts.len() / 2;
            pts.rotate_left(mid);
            let data: Vec<_> = pts.iter().map(|&(x, y)| rec(x, y)).collect();
            let m2 = kde_mean(&[q], &data, &bw).unwrap();
            let n2 = effective_count(&[q], &data, &bw).unwrap();
            let a2 = na_estimate(&[q], &data, &bw, c).unwrap();
            match (m1, m2) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
                (None, None) => {}
                _ => prop_assert!(false),
            }
            prop_assert!(rel_err(n1, n2) <= 1e-12);
            if let (Some(a), Some(b)) = (a1, a2) {
                prop_assert!((a.center - b.center).abs() <= 1e-12);
                prop_assert!((a.half_width.powi(2) - b.half_width.powi(2)).abs() <= 1e-10);
            }
        }
    }
}
