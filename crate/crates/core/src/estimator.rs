//! Bisection on the score over `[epsilon, 1 - epsilon]`.
//!
//! The homogeneous log-likelihood is strictly concave, so its score is
//! strictly decreasing and a single sign change brackets the maximizer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Homogeneous, Likelihood, ModelError, ModelParams, PerClass, PerLine, SufficientStats, Variant,
};
use crate::records::SessionState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("bisection did not converge in {iterations} iterations; last bracket [{lo}, {hi}]")]
    NoConvergence { iterations: u32, lo: f64, hi: f64 },
    #[error("score is not finite at p = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-9,
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), EstimateError> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(EstimateError::Config(format!(
                "epsilon {} must lie in (0, 0.5)",
                self.epsilon
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(EstimateError::Config(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(EstimateError::Config(
                "max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Interior,
    BoundaryLow,
    BoundaryHigh,
    Undefined,
}

impl std::fmt::Display for EstimateStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimateStatus::Interior => "interior",
            EstimateStatus::BoundaryLow => "boundary_low",
            EstimateStatus::BoundaryHigh => "boundary_high",
            EstimateStatus::Undefined => "undefined",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p_hat: Option<f64>,
    pub status: EstimateStatus,
    pub iterations: u32,
    pub bracket_width: f64,
}

/// Maximizes any single-parameter likelihood whose score is decreasing.
pub fn maximize<L: Likelihood + ?Sized>(
    likelihood: &L,
    config: &SolverConfig,
) -> Result<Estimate, EstimateError> {
    config.validate()?;
    if likelihood.bug_count() == 0 {
        return Ok(Estimate {
            p_hat: None,
            status: EstimateStatus::Undefined,
            iterations: 0,
            bracket_width: 0.0,
        });
    }

    let mut lo = config.epsilon;
    let mut hi = 1.0 - config.epsilon;
    let eval = |p: f64| {
        let s = likelihood.score_unchecked(p);
        if s.is_nan() {
            Err(EstimateError::NonFinite(p))
        } else {
            Ok(s)
        }
    };

    if eval(hi)? >= 0.0 {
        return Ok(Estimate {
            p_hat: Some(hi),
            status: EstimateStatus::BoundaryHigh,
            iterations: 0,
            bracket_width: 0.0,
        });
    }
    if eval(lo)? <= 0.0 {
        return Ok(Estimate {
            p_hat: Some(lo),
            status: EstimateStatus::BoundaryLow,
            iterations: 0,
            bracket_width: 0.0,
        });
    }

    let mut iterations = 0;
    while hi - lo > config.tolerance {
        if iterations == config.max_iterations {
            return Err(EstimateError::NoConvergence { iterations, lo, hi });
        }
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            // Bracket has collapsed to adjacent floats.
            break;
        }
        if eval(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }

    Ok(Estimate {
        p_hat: Some(lo + 0.5 * (hi - lo)),
        status: EstimateStatus::Interior,
        iterations,
        bracket_width: hi - lo,
    })
}

/// MLE of `p` for homogeneous statistics.
pub fn estimate_mle(
    stats: &SufficientStats,
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<Estimate, EstimateError> {
    maximize(
        &Homogeneous {
            stats,
            alpha: params.alpha(),
        },
        config,
    )
}

/// MLE of `p` under the session's variant, using the matching statistics.
pub fn estimate_session(
    state: &SessionState,
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<Estimate, EstimateError> {
    match params.variant() {
        Variant::Homogeneous => estimate_mle(&state.stats, params, config),
        Variant::PerLine => maximize(
            &PerLine {
                stats: &state.per_line_stats,
                alpha: params.alpha(),
            },
            config,
        ),
        Variant::PerClass => maximize(
            &PerClass {
                stats: &state.per_class_stats,
                params,
            },
            config,
        ),
    }
}

/// Log-likelihood of the session's variant at `p`.
pub fn session_log_likelihood(
    state: &SessionState,
    params: &ModelParams,
    p: f64,
) -> Result<f64, ModelError> {
    match params.variant() {
        Variant::Homogeneous => Homogeneous {
            stats: &state.stats,
            alpha: params.alpha(),
        }
        .log_likelihood(p),
        Variant::PerLine => PerLine {
            stats: &state.per_line_stats,
            alpha: params.alpha(),
        }
        .log_likelihood(p),
        Variant::PerClass => PerClass {
            stats: &state.per_class_stats,
            params,
        }
        .log_likelihood(p),
    }
}

/// Per-chunk unreliability `p_hat * alpha^d`, with `d` the chunk's debug count.
///
/// `classes` supplies chunk class labels for the per-class variant; chunks
/// without a label fall back to the session `alpha`.
pub fn chunk_unreliability(
    p_hat: f64,
    debug_counts: &BTreeMap<String, u32>,
    params: &ModelParams,
    classes: Option<&BTreeMap<String, String>>,
) -> BTreeMap<String, f64> {
    debug_counts
        .iter()
        .map(|(chunk, &d)| {
            let class = classes.and_then(|c| c.get(chunk)).map(String::as_str);
            let alpha = params.alpha_for(class);
            (chunk.clone(), p_hat * alpha.powi(d as i32))
        })
        .collect()
}
