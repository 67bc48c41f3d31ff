//! Chunk-bugginess likelihood under imperfect debugging.
//!
//! Every chunk starts out buggy with probability `p`. Each time a chunk is
//! debugged its residual bugginess is scaled by the known inefficiency factor
//! `alpha`, so after `i` debugging sessions the chunk is buggy with
//! probability `p * alpha^i`. Observed data reduces to the sufficient
//! statistics `(m, n_0, ..., n_k)`:
//!
//! ```text
//! l(p)  = m log p + sum_i n_i log(1 - p alpha^i)
//! l'(p) = m / p   - sum_i n_i alpha^i / (1 - p alpha^i)
//! ```
//!
//! The buggy-chunk factors `alpha^d` are constant in `p` and are dropped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("probability {0} is outside the open interval (0, 1)")]
    Domain(f64),
    #[error("debugging inefficiency {0} is outside the open interval (0, 1)")]
    InvalidAlpha(f64),
    #[error("class {class:?} has inefficiency {alpha} outside (0, 1)")]
    InvalidClassAlpha { class: String, alpha: f64 },
    #[error("per-class variant requires at least one class inefficiency")]
    MissingClassAlphas,
    #[error("line count must be at least 1")]
    ZeroLineCount,
}

/// Which likelihood the session is scored under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// One bugginess `p` shared by every chunk.
    #[default]
    Homogeneous,
    /// Chunk bugginess `1 - (1 - p)^K` for a chunk of `K` lines.
    PerLine,
    /// Shared `p`, but the inefficiency factor depends on the chunk's class.
    PerClass,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Homogeneous => "homogeneous",
            Variant::PerLine => "per-line",
            Variant::PerClass => "per-class",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "homogeneous" => Ok(Variant::Homogeneous),
            "per-line" | "per_line" => Ok(Variant::PerLine),
            "per-class" | "per_class" => Ok(Variant::PerClass),
            other => Err(format!("unknown variant {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    alpha: f64,
    variant: Variant,
    #[serde(default)]
    class_alphas: BTreeMap<String, f64>,
}

fn in_unit_interval(x: f64) -> bool {
    x.is_finite() && x > 0.0 && x < 1.0
}

impl ModelParams {
    pub fn new(alpha: f64) -> Result<Self, ModelError> {
        Self::with_variant(alpha, Variant::Homogeneous, BTreeMap::new())
    }

    pub fn with_variant(
        alpha: f64,
        variant: Variant,
        class_alphas: BTreeMap<String, f64>,
    ) -> Result<Self, ModelError> {
        if !in_unit_interval(alpha) {
            return Err(ModelError::InvalidAlpha(alpha));
        }
        for (class, &a) in &class_alphas {
            if !in_unit_interval(a) {
                return Err(ModelError::InvalidClassAlpha {
                    class: class.clone(),
                    alpha: a,
                });
            }
        }
        if variant == Variant::PerClass && class_alphas.is_empty() {
            return Err(ModelError::MissingClassAlphas);
        }
        Ok(Self {
            alpha,
            variant,
            class_alphas,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn class_alphas(&self) -> &BTreeMap<String, f64> {
        &self.class_alphas
    }

    /// Inefficiency for a chunk of the given class. Classes without an
    /// explicit factor (and every chunk outside the per-class variant) use
    /// the session-wide `alpha`.
    pub fn alpha_for(&self, class: Option<&str>) -> f64 {
        if self.variant != Variant::PerClass {
            return self.alpha;
        }
        class
            .and_then(|c| self.class_alphas.get(c))
            .copied()
            .unwrap_or(self.alpha)
    }
}

/// Bug count `m` and perfect-traversal counts `n_i` keyed by debug count `i`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SufficientStats {
    pub m: u64,
    pub n: BTreeMap<u32, u64>,
}

impl SufficientStats {
    pub fn new(m: u64, n: impl IntoIterator<Item = (u32, u64)>) -> Self {
        let mut stats = Self {
            m,
            n: BTreeMap::new(),
        };
        for (i, count) in n {
            stats.add_successes(i, count);
        }
        stats
    }

    /// Largest debug count with a nonzero traversal count, 0 when there is none.
    pub fn k(&self) -> u32 {
        self.n
            .iter()
            .rev()
            .find(|(_, &c)| c > 0)
            .map(|(&i, _)| i)
            .unwrap_or(0)
    }

    pub fn n_at(&self, i: u32) -> u64 {
        self.n.get(&i).copied().unwrap_or(0)
    }

    pub fn total_successes(&self) -> u64 {
        self.n.values().sum()
    }

    pub fn add_successes(&mut self, i: u32, count: u64) {
        if count > 0 {
            *self.n.entry(i).or_insert(0) += count;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0 && self.total_successes() == 0
    }
}

/// One perfect traversal of a chunk of `lines` lines at debug count `debug_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineTraversal {
    pub debug_count: u32,
    pub lines: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerLineStats {
    pub m: u64,
    pub successes: Vec<LineTraversal>,
}

impl PerLineStats {
    pub fn push(&mut self, debug_count: u32, lines: u32) -> Result<(), ModelError> {
        if lines == 0 {
            return Err(ModelError::ZeroLineCount);
        }
        self.successes.push(LineTraversal { debug_count, lines });
        Ok(())
    }
}

/// Homogeneous statistics per chunk class, all sharing one `p`.
pub type PerClassStats = BTreeMap<String, SufficientStats>;

/// `ln(1 - x)` for `x` in `[0, 1)`, accurate for small `x`.
#[inline]
pub(crate) fn ln_one_minus(x: f64) -> f64 {
    (-x).ln_1p()
}

fn check_p(p: f64) -> Result<(), ModelError> {
    if in_unit_interval(p) {
        Ok(())
    } else {
        Err(ModelError::Domain(p))
    }
}

/// A log-likelihood in the single parameter `p` that the estimator can maximize.
pub trait Likelihood {
    /// Number of detected bugs; the MLE does not exist when this is zero.
    fn bug_count(&self) -> u64;

    fn log_likelihood_unchecked(&self, p: f64) -> f64;

    fn score_unchecked(&self, p: f64) -> f64;

    fn log_likelihood(&self, p: f64) -> Result<f64, ModelError> {
        check_p(p)?;
        Ok(self.log_likelihood_unchecked(p))
    }

    fn score(&self, p: f64) -> Result<f64, ModelError> {
        check_p(p)?;
        Ok(self.score_unchecked(p))
    }
}

/// Homogeneous statistics bound to their inefficiency factor.
#[derive(Debug, Clone, Copy)]
pub struct Homogeneous<'a> {
    pub stats: &'a SufficientStats,
    pub alpha: f64,
}

impl Likelihood for Homogeneous<'_> {
    fn bug_count(&self) -> u64 {
        self.stats.m
    }

    fn log_likelihood_unchecked(&self, p: f64) -> f64 {
        let bugs = if self.stats.m > 0 {
            self.stats.m as f64 * p.ln()
        } else {
            0.0
        };
        self.stats
            .n
            .iter()
            .filter(|(_, &c)| c > 0)
            .fold(bugs, |acc, (&i, &c)| {
                acc + c as f64 * ln_one_minus(p * self.alpha.powi(i as i32))
            })
    }

    fn score_unchecked(&self, p: f64) -> f64 {
        let bugs = self.stats.m as f64 / p;
        self.stats.n.iter().fold(bugs, |acc, (&i, &c)| {
            let a = self.alpha.powi(i as i32);
            acc - c as f64 * a / (1.0 - p * a)
        })
    }
}

/// `1 - (1 - p)^lines`, the chance that at least one of `lines` lines is buggy.
pub fn chunk_bugginess(p: f64, lines: u32) -> f64 {
    -(lines as f64 * (-p).ln_1p()).exp_m1()
}

#[derive(Debug, Clone, Copy)]
pub struct PerLine<'a> {
    pub stats: &'a PerLineStats,
    pub alpha: f64,
}

impl Likelihood for PerLine<'_> {
    fn bug_count(&self) -> u64 {
        self.stats.m
    }

    fn log_likelihood_unchecked(&self, p: f64) -> f64 {
        let bugs = if self.stats.m > 0 {
            self.stats.m as f64 * p.ln()
        } else {
            0.0
        };
        self.stats.successes.iter().fold(bugs, |acc, t| {
            let a = self.alpha.powi(t.debug_count as i32);
            acc + ln_one_minus(chunk_bugginess(p, t.lines) * a)
        })
    }

    fn score_unchecked(&self, p: f64) -> f64 {
        let bugs = self.stats.m as f64 / p;
        let q = 1.0 - p;
        self.stats.successes.iter().fold(bugs, |acc, t| {
            let a = self.alpha.powi(t.debug_count as i32);
            let k = t.lines as f64;
            let chunk_buggy = chunk_bugginess(p, t.lines);
            let d_buggy = k * q.powi(t.lines as i32 - 1);
            acc - a * d_buggy / (1.0 - chunk_buggy * a)
        })
    }
}

/// Per-class statistics: each class contributes its own homogeneous term
/// under its class inefficiency, with one shared `p`.
#[derive(Debug, Clone, Copy)]
pub struct PerClass<'a> {
    pub stats: &'a PerClassStats,
    pub params: &'a ModelParams,
}

impl PerClass<'_> {
    fn terms(&self) -> impl Iterator<Item = Homogeneous<'_>> {
        self.stats.iter().map(|(class, stats)| Homogeneous {
            stats,
            alpha: self.params.alpha_for(Some(class)),
        })
    }
}

impl Likelihood for PerClass<'_> {
    fn bug_count(&self) -> u64 {
        self.stats.values().map(|s| s.m).sum()
    }

    fn log_likelihood_unchecked(&self, p: f64) -> f64 {
        self.terms().map(|t| t.log_likelihood_unchecked(p)).sum()
    }

    fn score_unchecked(&self, p: f64) -> f64 {
        self.terms().map(|t| t.score_unchecked(p)).sum()
    }
}

/// `m log p + sum_i n_i log(1 - p alpha^i)`, additive constant omitted.
pub fn log_likelihood(
    stats: &SufficientStats,
    params: &ModelParams,
    p: f64,
) -> Result<f64, ModelError> {
    Homogeneous {
        stats,
        alpha: params.alpha(),
    }
    .log_likelihood(p)
}

/// Derivative of [`log_likelihood`] in `p`.
pub fn score(stats: &SufficientStats, params: &ModelParams, p: f64) -> Result<f64, ModelError> {
    Homogeneous {
        stats,
        alpha: params.alpha(),
    }
    .score(p)
}

/// `m log p + sum log(1 - (1 - (1-p)^K) alpha^i)` over every perfect traversal.
pub fn per_line_log_likelihood(
    stats: &PerLineStats,
    params: &ModelParams,
    p: f64,
) -> Result<f64, ModelError> {
    PerLine {
        stats,
        alpha: params.alpha(),
    }
    .log_likelihood(p)
}

pub fn per_class_log_likelihood(
    stats: &PerClassStats,
    params: &ModelParams,
    p: f64,
) -> Result<f64, ModelError> {
    PerClass { stats, params }.log_likelihood(p)
}

/// What can be said about the maximizer before solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MleDiagnosis {
    /// The score is positive near 0 and negative near 1.
    InteriorGuaranteed,
    /// The score is still non-negative at `1 - epsilon`.
    BoundaryHigh,
    /// No bug observed: the likelihood is maximized at `p = 0`.
    Undefined,
    /// Left to the solver.
    Undetermined,
}

impl std::fmt::Display for MleDiagnosis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MleDiagnosis::InteriorGuaranteed => "interior_guaranteed",
            MleDiagnosis::BoundaryHigh => "boundary_high",
            MleDiagnosis::Undefined => "undefined",
            MleDiagnosis::Undetermined => "undetermined",
        })
    }
}

/// Existence check for the homogeneous MLE.
///
/// `m > 0` is necessary. As `p -> 1` the score tends to
/// `m - sum_{i>=1} n_i alpha^i / (1 - alpha^i)` (or to minus infinity when
/// `n_0 > 0`), so an interior maximum is guaranteed exactly when `n_0 > 0` or
/// that weighted sum exceeds `m`. With a single bug this is the per-index
/// condition `n_i > alpha^-i - 1`.
pub fn mle_diagnosis(stats: &SufficientStats, params: &ModelParams, epsilon: f64) -> MleDiagnosis {
    if stats.m == 0 {
        return MleDiagnosis::Undefined;
    }
    let alpha = params.alpha();
    let pull: f64 = stats
        .n
        .iter()
        .filter(|(&i, _)| i > 0)
        .map(|(&i, &c)| {
            let a = alpha.powi(i as i32);
            c as f64 * a / (1.0 - a)
        })
        .sum();
    if stats.n_at(0) > 0 || pull > stats.m as f64 {
        return MleDiagnosis::InteriorGuaranteed;
    }
    let upper = 1.0 - epsilon;
    let lik = Homogeneous { stats, alpha };
    if in_unit_interval(upper) && lik.score_unchecked(upper) >= 0.0 {
        MleDiagnosis::BoundaryHigh
    } else {
        MleDiagnosis::Undetermined
    }
}

/// Per-index condition: some `i` has `n_i > alpha^-i - 1`. Sufficient for an
/// interior maximum only when `m = 1`; see [`mle_diagnosis`].
pub fn per_index_condition(stats: &SufficientStats, alpha: f64) -> bool {
    stats
        .n
        .iter()
        .any(|(&i, &c)| c as f64 > alpha.powi(-(i as i32)) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64) -> ModelParams {
        ModelParams::new(alpha).unwrap()
    }

    fn worked_example() -> SufficientStats {
        SufficientStats::new(4, [(0, 1), (1, 2), (2, 1)])
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(matches!(
            ModelParams::new(1.0),
            Err(ModelError::InvalidAlpha(_))
        ));
        assert!(matches!(
            ModelParams::new(0.0),
            Err(ModelError::InvalidAlpha(_))
        ));
        assert!(matches!(
            ModelParams::with_variant(0.5, Variant::PerClass, BTreeMap::new()),
            Err(ModelError::MissingClassAlphas)
        ));
        let bad = BTreeMap::from([("numeric".to_string(), 1.5)]);
        assert!(matches!(
            ModelParams::with_variant(0.5, Variant::PerClass, bad),
            Err(ModelError::InvalidClassAlpha { .. })
        ));
    }

    #[test]
    fn domain_errors() {
        let s = worked_example();
        let a = params(0.9);
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN, f64::INFINITY] {
            assert!(log_likelihood(&s, &a, p).is_err(), "p = {p}");
            assert!(score(&s, &a, p).is_err(), "p = {p}");
            assert!(per_line_log_likelihood(&PerLineStats::default(), &a, p).is_err());
        }
    }

    #[test]
    fn k_tracks_largest_nonzero_index() {
        assert_eq!(SufficientStats::default().k(), 0);
        assert_eq!(worked_example().k(), 2);
        let mut s = SufficientStats::new(1, [(7, 3)]);
        s.n.insert(9, 0);
        assert_eq!(s.k(), 7);
    }

    #[test]
    fn worked_example_matches_product_form() {
        let s = worked_example();
        let a = params(0.9);
        let lik = |p: f64| p.powi(4) * (1.0 - p) * (1.0 - 0.9 * p).powi(2) * (1.0 - 0.81 * p);
        let diff = log_likelihood(&s, &a, 0.6).unwrap() - log_likelihood(&s, &a, 0.4).unwrap();
        assert!((diff - (lik(0.6) / lik(0.4)).ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_data_is_flat() {
        let s = SufficientStats::default();
        for p in [0.01, 0.3, 0.99] {
            assert_eq!(log_likelihood(&s, &params(0.4), p).unwrap(), 0.0);
            assert_eq!(score(&s, &params(0.4), p).unwrap(), 0.0);
        }
    }

    #[test]
    fn bernoulli_form() {
        let s = SufficientStats::new(3, [(0, 5)]);
        let a = params(0.7);
        assert!(score(&s, &a, 0.375).unwrap().abs() < 1e-12);
        let top = log_likelihood(&s, &a, 0.375).unwrap();
        for j in 1..100 {
            let p = j as f64 / 100.0;
            assert!(log_likelihood(&s, &a, p).unwrap() <= top);
        }
    }

    #[test]
    fn score_negative_near_one_for_worked_example() {
        let s = worked_example();
        let a = params(0.9);
        let g = score(&s, &a, 0.99).unwrap();
        let h = 1e-6;
        let fd = (log_likelihood(&s, &a, 0.99 + h).unwrap()
            - log_likelihood(&s, &a, 0.99 - h).unwrap())
            / (2.0 * h);
        assert!(g < 0.0);
        assert!(fd < 0.0);
        assert!((g - fd).abs() < 1e-4 * g.abs());
    }

    #[test]
    fn all_buggy_score_is_reciprocal() {
        let s = SufficientStats::new(1, []);
        for p in [0.1, 0.5, 0.9] {
            assert!((score(&s, &params(0.5), p).unwrap() - 1.0 / p).abs() < 1e-12);
        }
    }

    #[test]
    fn per_line_single_line_chunks_reduce() {
        let pl = PerLineStats {
            m: 1,
            successes: vec![LineTraversal {
                debug_count: 0,
                lines: 1,
            }],
        };
        let s = SufficientStats::new(1, [(0, 1)]);
        let a = params(0.8);
        for j in 1..100 {
            let p = j as f64 / 100.0;
            let x = per_line_log_likelihood(&pl, &a, p).unwrap();
            let y = log_likelihood(&s, &a, p).unwrap();
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn per_line_three_line_chunk() {
        let pl = PerLineStats {
            m: 0,
            successes: vec![LineTraversal {
                debug_count: 0,
                lines: 3,
            }],
        };
        // (1 - 0.2)^3 expanded: 1 - 3(0.2) + 3(0.04) - 0.008
        let expanded: f64 = 1.0 - 0.6 + 0.12 - 0.008;
        let got = per_line_log_likelihood(&pl, &params(0.5), 0.2).unwrap();
        assert!((got - expanded.ln()).abs() < 1e-12);
        assert!((got - 0.512f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn per_line_matches_term_by_term_product() {
        let pl = PerLineStats {
            m: 2,
            successes: vec![LineTraversal {
                debug_count: 1,
                lines: 10,
            }],
        };
        let p: f64 = 0.1;
        let mut product = p * p;
        let mut q_to_k = 1.0;
        for _ in 0..10 {
            q_to_k *= 1.0 - p;
        }
        product *= 1.0 - (1.0 - q_to_k) * 0.5;
        let got = per_line_log_likelihood(&pl, &params(0.5), p).unwrap();
        assert!((got - product.ln()).abs() < 1e-12);
    }

    #[test]
    fn per_line_is_not_concave_in_general() {
        // A perfect two-line traversal at debug count 1 with alpha = 0.9
        // bends the curve upward near p = 1 by about 2 alpha / (1 - alpha) = 18,
        // which a single bug (curvature -1/p^2) cannot offset.
        let pl = PerLineStats {
            m: 1,
            successes: vec![LineTraversal {
                debug_count: 1,
                lines: 2,
            }],
        };
        let a = params(0.9);
        let h = 1e-4;
        let p = 0.99;
        let f = |x| per_line_log_likelihood(&pl, &a, x).unwrap();
        assert!(f(p + h) - 2.0 * f(p) + f(p - h) > 0.0);
    }

    #[test]
    fn per_class_sums_terms() {
        let cp = ModelParams::with_variant(
            0.9,
            Variant::PerClass,
            BTreeMap::from([("numeric".into(), 0.5), ("init".into(), 0.8)]),
        )
        .unwrap();
        let stats = PerClassStats::from([
            ("numeric".into(), SufficientStats::new(2, [(1, 3)])),
            ("init".into(), SufficientStats::new(1, [(0, 4)])),
        ]);
        let p = 0.3;
        let expected = log_likelihood(&stats["numeric"], &params(0.5), p).unwrap()
            + log_likelihood(&stats["init"], &params(0.8), p).unwrap();
        assert!((per_class_log_likelihood(&stats, &cp, p).unwrap() - expected).abs() < 1e-12);
        assert_eq!(cp.alpha_for(Some("other")), 0.9);
        assert_eq!(cp.alpha_for(None), 0.9);
    }

    #[test]
    fn diagnosis_examples() {
        let eps = 1e-9;
        assert_eq!(
            mle_diagnosis(&SufficientStats::new(0, [(0, 7)]), &params(0.9), eps),
            MleDiagnosis::Undefined
        );
        assert_eq!(
            mle_diagnosis(&worked_example(), &params(0.9), eps),
            MleDiagnosis::InteriorGuaranteed
        );
        let s = SufficientStats::new(2, [(1, 3)]);
        assert!(per_index_condition(&s, 0.5));
        assert_eq!(
            mle_diagnosis(&s, &params(0.5), eps),
            MleDiagnosis::InteriorGuaranteed
        );
        assert_eq!(
            mle_diagnosis(&SufficientStats::new(2, []), &params(0.5), eps),
            MleDiagnosis::BoundaryHigh
        );
    }

    #[test]
    fn per_index_condition_alone_is_not_enough_with_many_bugs() {
        // n_1 = 3 > 1/0.5 - 1 but the score at p -> 1 is 5 - 3 > 0.
        let s = SufficientStats::new(5, [(1, 3)]);
        assert!(per_index_condition(&s, 0.5));
        assert!(score(&s, &params(0.5), 1.0 - 1e-9).unwrap() > 0.0);
        assert_eq!(
            mle_diagnosis(&s, &params(0.5), 1e-9),
            MleDiagnosis::BoundaryHigh
        );
    }
}
