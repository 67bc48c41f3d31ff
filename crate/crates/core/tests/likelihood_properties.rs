use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use resid_core::estimator::{estimate_mle, EstimateStatus, SolverConfig};
use resid_core::model::{
    log_likelihood, mle_diagnosis, per_line_log_likelihood, score, LineTraversal, MleDiagnosis,
    ModelParams, PerLineStats, SufficientStats,
};

/// Independent evaluation of `m ln p + sum n_i ln(1 - p a^i)` by plain logs.
fn oracle_loglik(m: u64, n: &[(u32, u64)], alpha: f64, p: f64) -> f64 {
    let mut total = m as f64 * p.ln();
    for &(i, c) in n {
        let mut a = 1.0;
        for _ in 0..i {
            a *= alpha;
        }
        total += c as f64 * (1.0 - p * a).ln();
    }
    total
}

/// Argmax of the log-likelihood over the grid `j / 10^6`, `j = 1..10^6`.
fn grid_argmax(m: u64, n: &[(u32, u64)], alpha: f64) -> f64 {
    let mut best = (0.0, f64::NEG_INFINITY);
    for j in 1..1_000_000u32 {
        let p = f64::from(j) / 1e6;
        let l = oracle_loglik(m, n, alpha, p);
        if l > best.1 {
            best = (p, l);
        }
    }
    best.0
}

fn stats_strategy() -> impl Strategy<Value = (u64, Vec<(u32, u64)>)> {
    (
        1u64..=50,
        prop::collection::btree_map(0u32..12, 0u64..=50, 1..=6),
    )
        .prop_map(|(m, n)| (m, n.into_iter().collect()))
}

fn alpha_strategy() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.3, 0.6, 0.9])
}

fn params(alpha: f64) -> ModelParams {
    ModelParams::new(alpha).unwrap()
}

#[test]
fn worked_example_mle_matches_grid() {
    // Frozen from a 10^6-point grid search (numpy): argmax at 0.550952.
    let s = SufficientStats::new(4, [(0, 1), (1, 2), (2, 1)]);
    let e = estimate_mle(&s, &params(0.9), &SolverConfig::default()).unwrap();
    assert_eq!(e.status, EstimateStatus::Interior);
    let p = e.p_hat.unwrap();
    assert!((p - 0.550952).abs() <= 1e-5, "{p}");
    assert!((p - grid_argmax(4, &[(0, 1), (1, 2), (2, 1)], 0.9)).abs() <= 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matches_independent_formula((m, n) in stats_strategy(), alpha in alpha_strategy()) {
        let s = SufficientStats::new(m, n.iter().copied());
        for j in 1..100 {
            let p = f64::from(j) / 100.0;
            let got = log_likelihood(&s, &params(alpha), p).unwrap();
            let want = oracle_loglik(m, &n, alpha, p);
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn homogeneous_is_concave((m, n) in stats_strategy(), alpha in alpha_strategy()) {
        let s = SufficientStats::new(m, n.iter().copied());
        let h = 1e-4;
        for j in 1..100 {
            let p = f64::from(j) / 100.0;
            let f = |x| log_likelihood(&s, &params(alpha), x).unwrap();
            prop_assert!(f(p + h) - 2.0 * f(p) + f(p - h) <= 0.0, "p = {}", p);
        }
    }

    #[test]
    fn score_matches_central_difference((m, n) in stats_strategy(), alpha in alpha_strategy()) {
        let s = SufficientStats::new(m, n.iter().copied());
        let a = params(alpha);
        let h = 1e-6;
        for j in 1..10 {
            let p = f64::from(j) / 10.0;
            let fd = (log_likelihood(&s, &a, p + h).unwrap() - log_likelihood(&s, &a, p - h).unwrap()) / (2.0 * h);
            let g = score(&s, &a, p).unwrap();
            prop_assert!((g - fd).abs() <= 1e-5, "p = {}: {} vs {}", p, g, fd);
        }
    }

    #[test]
    fn score_strictly_decreasing((m, n) in stats_strategy(), alpha in alpha_strategy()) {
        let s = SufficientStats::new(m, n.iter().copied());
        let a = params(alpha);
        let scores: Vec<f64> = (1..100).map(|j| score(&s, &a, f64::from(j) / 100.0).unwrap()).collect();
        prop_assert!(scores.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn single_line_chunks_reduce_to_homogeneous((m, n) in stats_strategy(), alpha in alpha_strategy()) {
        let s = SufficientStats::new(m, n.iter().copied());
        let pl = PerLineStats {
            m,
            successes: n
                .iter()
                .flat_map(|&(i, c)| std::iter::repeat_n(LineTraversal { debug_count: i, lines: 1 }, c as usize))
                .collect(),
        };
        for j in 1..100 {
            let p = f64::from(j) / 100.0;
            let x = per_line_log_likelihood(&pl, &params(alpha), p).unwrap();
            let y = log_likelihood(&s, &params(alpha), p).unwrap();
            prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn bracketed_root((m, n) in stats_strategy(), alpha in alpha_strategy()) {
        let s = SufficientStats::new(m, n.iter().copied());
        let a = params(alpha);
        let cfg = SolverConfig::default();
        let e = estimate_mle(&s, &a, &cfg).unwrap();
        if e.status == EstimateStatus::Interior {
            let p = e.p_hat.unwrap();
            let d = 10.0 * cfg.tolerance;
            prop_assert!(score(&s, &a, p - d).unwrap() > 0.0);
            prop_assert!(score(&s, &a, p + d).unwrap() < 0.0);
        }
    }

    #[test]
    fn more_evidence_moves_estimate((m, n) in stats_strategy(), alpha in alpha_strategy(), pick in 0usize..6) {
        let a = params(alpha);
        let cfg = SolverConfig::default();
        let base = SufficientStats::new(m, n.iter().copied());
        let e = estimate_mle(&base, &a, &cfg).unwrap();
        prop_assume!(e.status == EstimateStatus::Interior);
        let p = e.p_hat.unwrap();

        let more_bugs = SufficientStats { m: m + 1, ..base.clone() };
        let e1 = estimate_mle(&more_bugs, &a, &cfg).unwrap();
        prop_assert!(e1.status != EstimateStatus::Interior || e1.p_hat.unwrap() > p);

        let (i, _) = n[pick % n.len()];
        let mut more_ok = base.clone();
        more_ok.add_successes(i, 1);
        let e2 = estimate_mle(&more_ok, &a, &cfg).unwrap();
        prop_assert!(e2.p_hat.unwrap() < p);
    }

    #[test]
    fn diagnosis_is_consistent_with_solver((m, n) in stats_strategy(), alpha in alpha_strategy()) {
        let s = SufficientStats::new(m, n.iter().copied());
        let a = params(alpha);
        let cfg = SolverConfig::default();
        let e = estimate_mle(&s, &a, &cfg).unwrap();
        match mle_diagnosis(&s, &a, cfg.epsilon) {
            MleDiagnosis::InteriorGuaranteed => prop_assert_eq!(e.status, EstimateStatus::Interior),
            MleDiagnosis::BoundaryHigh => prop_assert_eq!(e.status, EstimateStatus::BoundaryHigh),
            MleDiagnosis::Undefined => prop_assert_eq!(e.status, EstimateStatus::Undefined),
            MleDiagnosis::Undetermined => {}
        }
    }

    #[test]
    fn run_order_does_not_matter_given_stats((m, n) in stats_strategy(), alpha in alpha_strategy()) {
        // Building the same (m, n) in a different insertion order gives the same function.
        let forward = SufficientStats::new(m, n.iter().copied());
        let backward = SufficientStats::new(m, n.iter().rev().copied());
        for j in 1..100 {
            let p = f64::from(j) / 100.0;
            prop_assert_eq!(
                log_likelihood(&forward, &params(alpha), p).unwrap(),
                log_likelihood(&backward, &params(alpha), p).unwrap()
            );
        }
    }
}

#[test]
fn estimator_agrees_with_grid_oracle() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = (stats_strategy(), alpha_strategy());
    let mut checked = 0;
    while checked < 20 {
        let ((m, n), alpha) = strategy.new_tree(&mut runner).unwrap().current();
        let s = SufficientStats::new(m, n.iter().copied());
        let e = estimate_mle(&s, &params(alpha), &SolverConfig::default()).unwrap();
        if e.status != EstimateStatus::Interior {
            continue;
        }
        let oracle = grid_argmax(m, &n, alpha);
        assert!(
            (e.p_hat.unwrap() - oracle).abs() <= 1e-5,
            "m={m} n={n:?} alpha={alpha}: {} vs {oracle}",
            e.p_hat.unwrap()
        );
        checked += 1;
    }
}

#[test]
fn sparse_counts_with_gaps() {
    let s = SufficientStats {
        m: 2,
        n: BTreeMap::from([(0, 0), (40, 3)]),
    };
    assert_eq!(s.k(), 40);
    let l = log_likelihood(&s, &params(0.9), 0.5).unwrap();
    assert!(l.is_finite());
}
