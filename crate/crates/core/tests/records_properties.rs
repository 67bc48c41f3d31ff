use std::collections::BTreeSet;

use proptest::prelude::*;
use resid_core::model::ModelParams;
use resid_core::records::{
    extract_statistics, process_run, truncate, Outcome, RunRecord, SessionState,
};

const CHUNKS: [&str; 5] = ["a", "b", "c", "d", "e"];

fn record_strategy() -> impl Strategy<Value = RunRecord> {
    (
        prop::collection::vec(prop::sample::select(CHUNKS.to_vec()), 1..12),
        prop::option::of((any::<prop::sample::Index>(), any::<bool>())),
    )
        .prop_map(|(visits, bug)| {
            let visits: Vec<String> = visits.into_iter().map(String::from).collect();
            let outcome = match bug {
                None => Outcome::Success,
                Some((at, removed)) => Outcome::BugFound {
                    buggy_chunks: BTreeSet::from([visits[at.index(visits.len())].clone()]),
                    removed,
                },
            };
            RunRecord::new("r", visits, outcome)
        })
}

fn params() -> ModelParams {
    ModelParams::new(0.7).unwrap()
}

proptest! {
    #[test]
    fn truncation_is_idempotent(r in record_strategy()) {
        let once = truncate(&r).unwrap().to_vec();
        let again = RunRecord::new("r", once.clone(), Outcome::Success);
        prop_assert_eq!(truncate(&again).unwrap(), once.as_slice());
    }

    #[test]
    fn truncation_keeps_a_prefix_ending_at_the_bug(r in record_strategy()) {
        let t = truncate(&r).unwrap();
        prop_assert!(r.visits.starts_with(t));
        if let Outcome::BugFound { buggy_chunks, .. } = &r.outcome {
            prop_assert!(buggy_chunks.contains(t.last().unwrap()));
            prop_assert!(t[..t.len() - 1].iter().all(|c| !buggy_chunks.contains(c)));
        }
    }

    #[test]
    fn traversals_are_conserved(runs in prop::collection::vec(record_strategy(), 0..30)) {
        let mut state = SessionState::new();
        let mut survivors = 0u64;
        for r in &runs {
            let before = state.clone();
            state = process_run(&state, r, &params(), None).unwrap();
            let distinct: BTreeSet<_> = truncate(r).unwrap().iter().collect();
            survivors += distinct.len() as u64;

            prop_assert!(state.stats.m >= before.stats.m);
            for (chunk, &d) in &before.debug_counts {
                prop_assert!(state.debug_count(chunk) >= d);
            }
        }
        let stats = extract_statistics(&state);
        prop_assert_eq!(
            stats.total_successes() + state.removed_bugs + state.unremoved_bugs,
            survivors
        );
        prop_assert_eq!(stats.m, state.removed_bugs + state.unremoved_bugs);
    }

    #[test]
    fn reordering_clean_runs_keeps_statistics(
        runs in prop::collection::vec(record_strategy(), 1..20),
        seed in any::<u64>(),
    ) {
        // Without removals debug counts never move, so every ordering yields
        // the same (chunk, debug count, outcome) events.
        let clean: Vec<RunRecord> = runs
            .into_iter()
            .map(|mut r| {
                if let Outcome::BugFound { removed, .. } = &mut r.outcome {
                    *removed = false;
                }
                r
            })
            .collect();
        let mut shuffled = clean.clone();
        let mut x = seed | 1;
        for i in (1..shuffled.len()).rev() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            shuffled.swap(i, (x % (i as u64 + 1)) as usize);
        }
        let run = |rs: &[RunRecord]| {
            rs.iter().try_fold(SessionState::new(), |s, r| process_run(&s, r, &params(), None))
        };
        prop_assert_eq!(
            extract_statistics(&run(&clean).unwrap()),
            extract_statistics(&run(&shuffled).unwrap())
        );
    }

    #[test]
    fn input_state_is_untouched(r in record_strategy()) {
        let state = SessionState::new();
        let snapshot = state.clone();
        let _ = process_run(&state, &r, &params(), None).unwrap();
        prop_assert_eq!(state, snapshot);
    }
}
