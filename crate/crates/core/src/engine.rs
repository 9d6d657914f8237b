//! Online top-K rank tracking and the placement state machines.
//!
//! Every engine consumes one score per document, in stream order, and emits a
//! [`PlacementEvent`] log. A document enters the running top-K only when its
//! score strictly exceeds the current K-th best, so among equal scores the
//! earlier document wins.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostBreakdown, PerDocCosts, PlacementEvent, StrategyKind, StrategySpec, TierId, WorkloadSpec};

#[derive(Debug, Clone, Copy)]
struct Ranked {
    score: f64,
    index: u64,
}

// Higher score ranks higher; on equal scores the earlier index ranks higher.
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

/// Outcome of offering a score to a [`RankTracker`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Rejected,
    Admitted { evicted: Option<u64> },
}

/// Exact running top-K over every score seen so far.
///
/// Only the K best entries are kept in a min-heap; everything below the K-th
/// best can never re-enter, so the rest of the multiset is tracked as a count.
#[derive(Debug, Clone)]
pub struct RankTracker {
    k: usize,
    top: BinaryHeap<Reverse<Ranked>>,
    seen: u64,
}

impl RankTracker {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "top-K capacity must be at least 1");
        Self {
            k,
            top: BinaryHeap::with_capacity(k + 1),
            seen: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of scores observed.
    pub fn len(&self) -> u64 {
        self.seen
    }

    pub fn is_empty(&self) -> bool {
        self.seen == 0
    }

    /// Current K-th best score, once at least K scores have been seen.
    pub fn kth_best(&self) -> Option<f64> {
        if self.top.len() == self.k {
            self.top.peek().map(|Reverse(r)| r.score)
        } else {
            None
        }
    }

    /// Offers document `index` with `score`. The caller assigns increasing indices.
    pub fn insert(&mut self, index: u64, score: f64) -> Admission {
        self.seen += 1;
        let entry = Ranked { score, index };
        if self.top.len() < self.k {
            self.top.push(Reverse(entry));
            return Admission::Admitted { evicted: None };
        }
        let worst = self.top.peek().expect("heap is full").0;
        if entry > worst {
            self.top.pop();
            self.top.push(Reverse(entry));
            Admission::Admitted {
                evicted: Some(worst.index),
            }
        } else {
            Admission::Rejected
        }
    }

    /// Indices of the current top entries, best first.
    pub fn top_indices(&self) -> Vec<u64> {
        let mut v: Vec<Ranked> = self.top.iter().map(|r| r.0).collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v.into_iter().map(|r| r.index).collect()
    }
}

/// How realized runs charge storage rental.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RentalMode {
    /// The K final residents are charged the full window at their final tier.
    #[default]
    Bound,
    /// Each document is charged for the fraction of the window it was resident.
    Exact,
}

#[derive(Debug, Clone)]
pub struct EngineState {
    pub tracker: RankTracker,
    /// Currently stored documents and their tier.
    pub resident: BTreeMap<u64, TierId>,
    pub events: Vec<PlacementEvent>,
    pub realized_cost: CostBreakdown,
    pub writes_a: u64,
    pub writes_b: u64,
    pub evictions: u64,
    /// Documents moved from A to B by the bulk migration.
    pub migrated: u64,
}

impl EngineState {
    pub fn writes(&self) -> u64 {
        self.writes_a + self.writes_b
    }

    /// Indices that produced a `Write` event, in stream order.
    pub fn written_indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.events.iter().filter_map(|e| match e {
            PlacementEvent::Write { doc_index, .. } => Some(*doc_index),
            _ => None,
        })
    }
}

/// Incremental placement engine: first `changeover` documents go to tier A,
/// later ones to tier B, with an optional bulk A→B migration at the changeover.
#[derive(Debug, Clone)]
pub struct PlacementEngine {
    changeover: u64,
    migrate: bool,
    costs: PerDocCosts,
    rental_mode: RentalMode,
    window_docs: u64,
    since: HashMap<u64, u64>,
    state: EngineState,
}

impl PlacementEngine {
    /// `window_docs` is the stream length used to express residency as a
    /// fraction of the window in [`RentalMode::Exact`].
    pub fn new(k: usize, changeover: u64, migrate: bool, costs: PerDocCosts, rental_mode: RentalMode, window_docs: u64) -> Self {
        Self {
            changeover,
            migrate,
            costs,
            rental_mode,
            window_docs: window_docs.max(1),
            since: HashMap::with_capacity(k + 1),
            state: EngineState {
                tracker: RankTracker::new(k),
                resident: BTreeMap::new(),
                events: Vec::new(),
                realized_cost: CostBreakdown::zero(),
                writes_a: 0,
                writes_b: 0,
                evictions: 0,
                migrated: 0,
            },
        }
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    fn charge_residency(&mut self, doc: u64, tier: TierId, until: u64) {
        let since = self.since.remove(&doc).unwrap_or(until);
        if self.rental_mode == RentalMode::Exact {
            let frac = (until - since) as f64 / self.window_docs as f64;
            self.state.realized_cost.rental += frac * self.costs.rental(tier);
        }
    }

    fn migrate_all(&mut self, at: u64) {
        let in_a: Vec<u64> = self
            .state
            .resident
            .iter()
            .filter(|(_, t)| **t == TierId::A)
            .map(|(d, _)| *d)
            .collect();
        for &doc in &in_a {
            self.charge_residency(doc, TierId::A, at);
            self.since.insert(doc, at);
            self.state.resident.insert(doc, TierId::B);
            self.state.realized_cost.migration += self.costs.read_a + self.costs.write_b;
        }
        self.state.migrated += in_a.len() as u64;
        self.state.events.push(PlacementEvent::MigrateAll {
            from: TierId::A,
            to: TierId::B,
            at_index: at,
            count: in_a.len() as u64,
        });
    }

    /// Feeds the next document's score. Returns true if it was written.
    pub fn observe(&mut self, score: f64) -> Result<bool> {
        let i = self.state.tracker.len();
        if !score.is_finite() {
            return Err(Error::NonFiniteScore { index: i as usize });
        }
        if self.migrate && i == self.changeover {
            self.migrate_all(i);
        }
        match self.state.tracker.insert(i, score) {
            Admission::Rejected => Ok(false),
            Admission::Admitted { evicted } => {
                let tier = if i < self.changeover { TierId::A } else { TierId::B };
                self.state.events.push(PlacementEvent::Write { doc_index: i, tier });
                self.state.realized_cost.writes += self.costs.write(tier);
                match tier {
                    TierId::A => self.state.writes_a += 1,
                    TierId::B => self.state.writes_b += 1,
                }
                self.state.resident.insert(i, tier);
                self.since.insert(i, i);
                if let Some(out) = evicted {
                    let out_tier = self
                        .state
                        .resident
                        .remove(&out)
                        .expect("evicted document must be resident");
                    self.charge_residency(out, out_tier, i);
                    self.state.events.push(PlacementEvent::Evict {
                        doc_index: out,
                        tier: out_tier,
                    });
                    self.state.evictions += 1;
                }
                Ok(true)
            }
        }
    }

    /// Closes the stream: final reads of every resident plus remaining rental.
    pub fn finish(mut self) -> EngineState {
        let end = self.state.tracker.len();
        let residents: Vec<(u64, TierId)> = self.state.resident.iter().map(|(d, t)| (*d, *t)).collect();
        for (doc, tier) in residents {
            self.state.events.push(PlacementEvent::FinalRead { doc_index: doc, tier });
            self.state.realized_cost.reads += self.costs.read(tier);
            match self.rental_mode {
                RentalMode::Bound => self.state.realized_cost.rental += self.costs.rental(tier),
                RentalMode::Exact => self.charge_residency(doc, tier, end),
            }
        }
        self.state.realized_cost = self.state.realized_cost.retotal();
        self.state
    }
}

fn check_scores(scores: &[f64]) -> Result<()> {
    match scores.iter().position(|s| !s.is_finite()) {
        Some(index) => Err(Error::NonFiniteScore { index }),
        None => Ok(()),
    }
}

/// Result of one classic hire-once run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShpOutcome {
    pub hired_index: usize,
    pub hired_is_best: bool,
}

/// Classic secretary rule over `scores`: observe the first `r - 1`, then hire
/// the first candidate beating all of them. If nobody does, the last candidate
/// is hired.
pub fn run_classic_shp(scores: &[f64], r: u64) -> Result<ShpOutcome> {
    if scores.is_empty() {
        return Err(Error::EmptyStream);
    }
    check_scores(scores)?;
    let n = scores.len() as u64;
    if r < 1 || r > n {
        return Err(Error::ChangeoverOutOfRange { r, k: 1, n });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    if let Some(w) = order.windows(2).find(|w| scores[w[0]] == scores[w[1]]) {
        let index = w[0].max(w[1]);
        return Err(Error::DuplicateScore {
            index,
            score: scores[index],
        });
    }
    Ok(classic_shp_unchecked(scores, r as usize))
}

/// Same rule as [`run_classic_shp`] without validation; scores must be distinct.
pub(crate) fn classic_shp_unchecked(scores: &[f64], r: usize) -> ShpOutcome {
    let observed = r - 1;
    let benchmark = scores[..observed].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hired_index = scores[observed..]
        .iter()
        .position(|&s| s > benchmark)
        .map(|p| p + observed)
        .unwrap_or(scores.len() - 1);
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ShpOutcome {
        hired_index,
        hired_is_best: scores[hired_index] == best,
    }
}

/// Single-tier overwrite: keep the running top-`k` in tier A. No costs are charged.
pub fn run_single_tier(scores: &[f64], k: usize) -> Result<EngineState> {
    run_placement(scores, k, u64::MAX, false, PerDocCosts::zero(), RentalMode::Bound)
}

/// Two-tier changeover run with the default rental accounting.
pub fn run_two_tier(scores: &[f64], spec: &WorkloadSpec, strat: &StrategySpec, costs: &PerDocCosts) -> Result<EngineState> {
    run_two_tier_with(scores, spec, strat, costs, RentalMode::default())
}

pub fn run_two_tier_with(
    scores: &[f64],
    spec: &WorkloadSpec,
    strat: &StrategySpec,
    costs: &PerDocCosts,
    rental_mode: RentalMode,
) -> Result<EngineState> {
    if strat.kind != StrategyKind::TwoTierChangeover {
        return Err(Error::UnsupportedStrategy(strat.kind));
    }
    spec.check_changeover(strat.r)?;
    if scores.len() as u64 != spec.n_docs {
        return Err(Error::StreamLength {
            expected: spec.n_docs,
            got: scores.len(),
        });
    }
    run_placement(scores, spec.top_k as usize, strat.r, strat.migrate, *costs, rental_mode)
}

pub(crate) fn run_placement(
    scores: &[f64],
    k: usize,
    changeover: u64,
    migrate: bool,
    costs: PerDocCosts,
    rental_mode: RentalMode,
) -> Result<EngineState> {
    if k < 1 {
        return Err(Error::InvalidField {
            field: "top_k",
            expected: "document count >= 1",
        });
    }
    check_scores(scores)?;
    let mut engine = PlacementEngine::new(k, changeover, migrate, costs, rental_mode, scores.len() as u64);
    for &s in scores {
        engine.observe(s)?;
    }
    Ok(engine.finish())
}

/// Recomputes the write, read and migration charges of a run from its event log.
pub fn cost_from_events(events: &[PlacementEvent], costs: &PerDocCosts) -> CostBreakdown {
    let mut c = CostBreakdown::zero();
    for e in events {
        match *e {
            PlacementEvent::Write { tier, .. } => c.writes += costs.write(tier),
            PlacementEvent::FinalRead { tier, .. } => c.reads += costs.read(tier),
            PlacementEvent::MigrateAll { count, .. } => c.migration += count as f64 * (costs.read_a + costs.write_b),
            PlacementEvent::Evict { .. } => {}
        }
    }
    c.retotal()
}
