use std::collections::BTreeSet;

use itertools::Itertools;
use proptest::prelude::*;
use tierk::engine::{cost_from_events, run_single_tier, run_two_tier, run_two_tier_with, RentalMode};
use tierk::{PerDocCosts, PlacementEvent, StrategySpec, TierId, WorkloadSpec};

/// Document `i` is written iff fewer than `k` earlier documents beat it.
fn brute_force_writes(scores: &[f64], k: usize) -> Vec<bool> {
    (0..scores.len())
        .map(|i| scores[..i].iter().filter(|&&s| s >= scores[i]).count() < k)
        .collect()
}

fn exact_top_k(scores: &[f64], k: usize) -> BTreeSet<u64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // Higher score first, earlier index first among ties.
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|i| i as u64).collect()
}

fn costs() -> PerDocCosts {
    PerDocCosts {
        write_a: 0.25,
        write_b: 1.5,
        read_a: 2.0,
        read_b: 0.125,
        rental_a: 3.0,
        rental_b: 0.5,
    }
}

fn scores_strategy() -> impl Strategy<Value = Vec<f64>> {
    // Small integer range so ties are common.
    prop::collection::vec((0u8..20).prop_map(f64::from), 1..60)
}

proptest! {
    #[test]
    fn writes_match_brute_force(scores in scores_strategy(), k in 1usize..8) {
        let st = run_single_tier(&scores, k).unwrap();
        let want: Vec<u64> = brute_force_writes(&scores, k)
            .iter()
            .enumerate()
            .filter(|(_, w)| **w)
            .map(|(i, _)| i as u64)
            .collect();
        prop_assert_eq!(st.written_indices().collect::<Vec<_>>(), want);
    }

    #[test]
    fn two_tier_invariants(scores in scores_strategy(), k in 1u64..8, r_frac in 0.0f64..=1.0, migrate: bool, exact: bool) {
        let n = scores.len() as u64;
        let k = k.min(n);
        let r = k + ((n - k) as f64 * r_frac).round() as u64;
        let spec = WorkloadSpec::unit(n, k).unwrap();
        let strat = StrategySpec::two_tier(r, migrate);
        let mode = if exact { RentalMode::Exact } else { RentalMode::Bound };
        let st = run_two_tier_with(&scores, &spec, &strat, &costs(), mode).unwrap();

        // Argmax safety: survivors are exactly the top-K.
        let resident: BTreeSet<u64> = st.resident.keys().copied().collect();
        prop_assert_eq!(&resident, &exact_top_k(&scores, k as usize));

        // Replay the log: evictions only of live documents, residency never above K.
        let mut live = BTreeSet::new();
        let mut migrations = 0;
        for (j, e) in st.events.iter().enumerate() {
            match *e {
                PlacementEvent::Write { doc_index, tier } => {
                    prop_assert_eq!(tier, if doc_index < r { TierId::A } else { TierId::B });
                    prop_assert!(live.insert(doc_index));
                }
                PlacementEvent::Evict { doc_index, .. } => {
                    prop_assert!(live.remove(&doc_index));
                }
                PlacementEvent::MigrateAll { at_index, .. } => {
                    prop_assert!(migrate);
                    prop_assert_eq!(at_index, r);
                    migrations += 1;
                }
                PlacementEvent::FinalRead { doc_index, .. } => {
                    prop_assert!(live.contains(&doc_index));
                }
            }
            // A write may momentarily exceed K; the prune follows immediately.
            let pruned_next = matches!(st.events.get(j + 1), Some(PlacementEvent::Evict { .. }));
            prop_assert!(live.len() as u64 <= k || (live.len() as u64 == k + 1 && pruned_next));
        }
        prop_assert!(migrations <= 1);
        let writes = st.events.iter().filter(|e| matches!(e, PlacementEvent::Write { .. })).count() as u64;
        prop_assert_eq!(writes - st.evictions, k.min(n));

        // Realized accounting agrees with the event log (rental aside).
        let from_log = cost_from_events(&st.events, &costs());
        prop_assert!((from_log.writes - st.realized_cost.writes).abs() < 1e-9);
        prop_assert!((from_log.reads - st.realized_cost.reads).abs() < 1e-9);
        prop_assert!((from_log.migration - st.realized_cost.migration).abs() < 1e-9);
        let c = st.realized_cost;
        prop_assert!((c.total - (c.writes + c.reads + c.rental + c.migration)).abs() <= 1e-9 * c.total.abs().max(1.0));
    }

    #[test]
    fn prefix_residency_is_top_min_m_k(scores in scores_strategy(), k in 1usize..6) {
        for m in 1..=scores.len() {
            let st = run_single_tier(&scores[..m], k).unwrap();
            let resident: BTreeSet<u64> = st.resident.keys().copied().collect();
            prop_assert_eq!(resident.len(), k.min(m));
            prop_assert_eq!(resident, exact_top_k(&scores[..m], k));
        }
    }

    #[test]
    fn runs_are_deterministic(scores in scores_strategy(), migrate: bool) {
        let n = scores.len() as u64;
        let spec = WorkloadSpec::unit(n, 1).unwrap();
        let strat = StrategySpec::two_tier(n.div_ceil(2).max(1), migrate);
        let a = run_two_tier(&scores, &spec, &strat, &costs()).unwrap();
        let b = run_two_tier(&scores, &spec, &strat, &costs()).unwrap();
        prop_assert_eq!(a.events, b.events);
        prop_assert_eq!(a.realized_cost.total.to_bits(), b.realized_cost.total.to_bits());
    }
}

#[test]
fn exhaustive_tier_writes_n8() {
    // Independent of the engine: rank-count rule over all 8! orderings.
    let (n, k, r) = (8usize, 2usize, 4usize);
    let (mut a, mut b, mut perms) = (0u64, 0u64, 0u64);
    for perm in (0..n).permutations(n) {
        let scores: Vec<f64> = perm.iter().map(|&p| p as f64).collect();
        for (i, w) in brute_force_writes(&scores, k).into_iter().enumerate() {
            if w {
                if i < r {
                    a += 1;
                } else {
                    b += 1;
                }
            }
        }
        perms += 1;
    }
    let mean_a = a as f64 / perms as f64;
    let mean_b = b as f64 / perms as f64;
    assert!((mean_a - 3.166_666_666_666_666_5).abs() < 1e-12);
    assert!((mean_b - 1.269_047_619_047_619).abs() < 1e-12);

    let sim = tierk::simulator::exhaustive_oracle(8, 2, &StrategySpec::two_tier(4, true), &PerDocCosts::zero()).unwrap();
    assert_eq!(sim.writes_a.mean, mean_a);
    assert_eq!(sim.writes_b.mean, mean_b);
}

#[test]
fn exhaustive_mean_writes_n10_k2() {
    // Mean cumulative writes over all 10! orderings, counted by brute force.
    let (n, k) = (10usize, 2usize);
    let (mut total, mut perms) = (0u64, 0u64);
    for perm in (0..n).permutations(n) {
        let scores: Vec<f64> = perm.iter().map(|&p| p as f64).collect();
        total += brute_force_writes(&scores, k).into_iter().filter(|w| *w).count() as u64;
        perms += 1;
    }
    let mean = total as f64 / perms as f64;
    assert!((mean - 4.857_936_507_936_508).abs() < 1e-12, "{mean}");
}
