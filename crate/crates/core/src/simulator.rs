//! Monte-Carlo, exhaustive and trace-replay runs of the placement engines.
//!
//! Trial `t` draws its randomness from ChaCha8 seeded with the run seed on
//! stream `t`, so a result depends only on `(seed, config)` and never on how
//! trials are scheduled across threads. Per-index write counts are integers
//! and reduce exactly; per-trial statistics are folded in trial order.

use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::cumulative_write_curve;
use crate::engine::{classic_shp_unchecked, run_placement, EngineState, RentalMode};
use crate::error::{Error, Result};
use crate::model::{CostBreakdown, PerDocCosts, StrategyKind, StrategySpec, WorkloadSpec};

/// Generator identity recorded alongside every simulated result.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), stream = trial index";

/// Largest stream length [`exhaustive_oracle`] will enumerate.
pub const ORACLE_MAX_N: u64 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    /// Distinct random 53-bit integers, exactly representable as `f64`.
    UniformRandom,
    /// A uniformly shuffled permutation of `0..N`.
    Permutation,
    /// Scores read from a trace file, shuffled independently in each trial.
    TraceFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub score_source: ScoreSource,
    #[serde(default)]
    pub rental_mode: RentalMode,
}

impl SimConfig {
    pub fn new(trials: u64, seed: u64, score_source: ScoreSource) -> Self {
        Self {
            trials,
            seed,
            score_source,
            rental_mode: RentalMode::default(),
        }
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stddev: f64,
}

impl Stat {
    pub fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let (n, sum) = values.clone().fold((0u64, 0.0), |(n, s), v| (n + 1, s + v));
        if n == 0 {
            return Stat::default();
        }
        let mean = sum / n as f64;
        if n == 1 {
            return Stat { mean, stddev: 0.0 };
        }
        let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
        Stat {
            mean,
            stddev: (ss / (n - 1) as f64).sqrt(),
        }
    }

    /// Standard error of the mean over `n` samples.
    pub fn std_error(&self, n: u64) -> f64 {
        self.stddev / (n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostStats {
    pub writes: Stat,
    pub reads: Stat,
    pub rental: Stat,
    pub migration: Stat,
    pub total: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub trials: u64,
    pub writes_a: Stat,
    pub writes_b: Stat,
    pub writes_total: Stat,
    pub evictions: Stat,
    pub migrated: Stat,
    pub cost: CostStats,
    /// Fraction of trials in which the hired candidate was the overall best
    /// (classic hire-once strategy only).
    pub shp_success: Option<Stat>,
    /// Mean write indicator of each document index.
    pub write_rate_curve: Vec<f64>,
    /// Mean number of writes among documents `0..=i`.
    pub cumulative_writes: Vec<f64>,
    pub rng: String,
}

#[derive(Debug, Clone, Copy, Default)]
struct TrialOutcome {
    writes_a: u64,
    writes_b: u64,
    evictions: u64,
    migrated: u64,
    cost: CostBreakdown,
    shp_success: Option<bool>,
}

fn run_trial(scores: &[f64], spec: &WorkloadSpec, strat: &StrategySpec, costs: &PerDocCosts, mode: RentalMode, written: &mut Vec<u64>) -> Result<TrialOutcome> {
    written.clear();
    match strat.kind {
        StrategyKind::ClassicShp => {
            let out = classic_shp_unchecked(scores, strat.r as usize);
            written.push(out.hired_index as u64);
            Ok(TrialOutcome {
                writes_a: 1,
                cost: CostBreakdown::new(costs.write_a, costs.read_a, costs.rental_a, 0.0),
                shp_success: Some(out.hired_is_best),
                ..TrialOutcome::default()
            })
        }
        StrategyKind::SingleTierOverwrite | StrategyKind::TwoTierChangeover => {
            let (changeover, migrate) = match strat.kind {
                StrategyKind::TwoTierChangeover => (strat.r, strat.migrate),
                _ => (u64::MAX, false),
            };
            let st: EngineState = run_placement(scores, spec.top_k as usize, changeover, migrate, *costs, mode)?;
            written.extend(st.written_indices());
            Ok(TrialOutcome {
                writes_a: st.writes_a,
                writes_b: st.writes_b,
                evictions: st.evictions,
                migrated: st.migrated,
                cost: st.realized_cost,
                shp_success: None,
            })
        }
    }
}

fn check_strategy(spec: &WorkloadSpec, strat: &StrategySpec) -> Result<()> {
    spec.validate()?;
    match strat.kind {
        StrategyKind::TwoTierChangeover => spec.check_changeover(strat.r),
        StrategyKind::ClassicShp if strat.r < 1 || strat.r > spec.n_docs => Err(Error::ChangeoverOutOfRange {
            r: strat.r,
            k: 1,
            n: spec.n_docs,
        }),
        _ => Ok(()),
    }
}

fn summarize(outcomes: &[TrialOutcome], counts: Vec<u64>) -> SimResult {
    let trials = outcomes.len() as u64;
    let stat = |f: fn(&TrialOutcome) -> f64| Stat::of(outcomes.iter().map(f));
    let write_rate_curve: Vec<f64> = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    let cumulative_writes = counts
        .iter()
        .scan(0u64, |acc, &c| {
            *acc += c;
            Some(*acc as f64 / trials as f64)
        })
        .collect();
    let shp_success = outcomes
        .first()
        .and_then(|o| o.shp_success)
        .map(|_| stat(|o| if o.shp_success == Some(true) { 1.0 } else { 0.0 }));
    SimResult {
        trials,
        writes_a: stat(|o| o.writes_a as f64),
        writes_b: stat(|o| o.writes_b as f64),
        writes_total: stat(|o| (o.writes_a + o.writes_b) as f64),
        evictions: stat(|o| o.evictions as f64),
        migrated: stat(|o| o.migrated as f64),
        cost: CostStats {
            writes: stat(|o| o.cost.writes),
            reads: stat(|o| o.cost.reads),
            rental: stat(|o| o.cost.rental),
            migration: stat(|o| o.cost.migration),
            total: stat(|o| o.cost.total),
        },
        shp_success,
        write_rate_curve,
        cumulative_writes,
        rng: RNG_ALGORITHM.to_string(),
    }
}

/// Draws `n` distinct 53-bit integers as scores.
pub fn distinct_uniform_scores<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = rng.random::<u64>() >> 11;
        if seen.insert(v) {
            out.push(v as f64);
        }
    }
    out
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Runs `sim.trials` independent trials over random rank orderings.
pub fn monte_carlo(spec: &WorkloadSpec, strat: &StrategySpec, costs: &PerDocCosts, sim: &SimConfig) -> Result<SimResult> {
    check_strategy(spec, strat)?;
    if sim.trials < 1 {
        return Err(Error::InvalidField {
            field: "trials",
            expected: "count >= 1",
        });
    }
    let base: Option<Vec<f64>> = match &sim.score_source {
        ScoreSource::TraceFile(path) => {
            let trace = load_trace(path)?;
            if trace.len() as u64 != spec.n_docs {
                return Err(Error::StreamLength {
                    expected: spec.n_docs,
                    got: trace.len(),
                });
            }
            Some(trace)
        }
        ScoreSource::Permutation => Some((0..spec.n_docs).map(|i| i as f64).collect()),
        ScoreSource::UniformRandom => None,
    };
    let n = spec.n_docs as usize;
    let counts: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    let mut outcomes = vec![TrialOutcome::default(); sim.trials as usize];
    outcomes
        .par_iter_mut()
        .enumerate()
        .try_for_each_init(
            || (Vec::new(), Vec::new()),
            |(scores, written), (t, slot)| -> Result<()> {
                let mut rng = trial_rng(sim.seed, t as u64);
                match &base {
                    Some(b) => {
                        scores.clear();
                        scores.extend_from_slice(b);
                        scores.shuffle(&mut rng);
                    }
                    None => *scores = distinct_uniform_scores(&mut rng, n),
                }
                *slot = run_trial(scores, spec, strat, costs, sim.rental_mode, written)?;
                for &i in written.iter() {
                    counts[i as usize].fetch_add(1, Ordering::Relaxed);
                }
                Ok(())
            },
        )?;
    Ok(summarize(&outcomes, counts.into_iter().map(AtomicU64::into_inner).collect()))
}

/// Exact expectation over all `n!` rank orderings, for `n <= 8`.
pub fn exhaustive_oracle(n: u64, k: u64, strat: &StrategySpec, costs: &PerDocCosts) -> Result<SimResult> {
    if n > ORACLE_MAX_N {
        return Err(Error::OracleTooLarge { n, max: ORACLE_MAX_N });
    }
    let spec = WorkloadSpec::unit(n, k)?;
    check_strategy(&spec, strat)?;
    let mut counts = vec![0u64; n as usize];
    let mut written = Vec::new();
    let mut outcomes = Vec::new();
    for perm in (0..n as usize).permutations(n as usize) {
        let scores: Vec<f64> = perm.iter().map(|&p| p as f64).collect();
        outcomes.push(run_trial(&scores, &spec, strat, costs, RentalMode::default(), &mut written)?);
        for &i in &written {
            counts[i as usize] += 1;
        }
    }
    Ok(summarize(&outcomes, counts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub result: SimResult,
    /// Expected cumulative writes under random rank order.
    pub analytic_curve: Vec<f64>,
    /// Standard deviation of the cumulative count under the same model.
    pub sigma_curve: Vec<f64>,
    pub max_abs_deviation: f64,
    /// Largest deviation in units of sigma, over indices where sigma > 0.
    pub max_z: f64,
    /// True when the first `min(K, N)` documents were all written.
    pub first_k_all_written: bool,
}

impl ReplayReport {
    pub fn within_band(&self, sigmas: f64) -> bool {
        self.result
            .cumulative_writes
            .iter()
            .zip(&self.analytic_curve)
            .zip(&self.sigma_curve)
            .all(|((o, a), s)| (o - a).abs() <= sigmas * s)
    }
}

/// One deterministic run over a recorded score trace.
pub fn replay(trace: &[f64], spec: &WorkloadSpec, strat: &StrategySpec, costs: &PerDocCosts) -> Result<ReplayReport> {
    replay_with(trace, spec, strat, costs, RentalMode::default())
}

pub fn replay_with(trace: &[f64], spec: &WorkloadSpec, strat: &StrategySpec, costs: &PerDocCosts, mode: RentalMode) -> Result<ReplayReport> {
    check_strategy(spec, strat)?;
    if let Some(index) = trace.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore { index });
    }
    if trace.len() as u64 != spec.n_docs {
        return Err(Error::StreamLength {
            expected: spec.n_docs,
            got: trace.len(),
        });
    }
    if strat.kind == StrategyKind::ClassicShp {
        // The unchecked path assumes distinct scores.
        crate::engine::run_classic_shp(trace, strat.r)?;
    }
    let mut written = Vec::new();
    let outcome = run_trial(trace, spec, strat, costs, mode, &mut written)?;
    let mut counts = vec![0u64; trace.len()];
    for &i in &written {
        counts[i as usize] += 1;
    }
    let result = summarize(&[outcome], counts);
    let (analytic_curve, sigma_curve) = cumulative_write_curve(spec.n_docs, spec.top_k);
    let mut max_abs_deviation: f64 = 0.0;
    let mut max_z: f64 = 0.0;
    for ((o, a), s) in result.cumulative_writes.iter().zip(&analytic_curve).zip(&sigma_curve) {
        let d = (o - a).abs();
        max_abs_deviation = max_abs_deviation.max(d);
        if *s > 0.0 {
            max_z = max_z.max(d / s);
        }
    }
    let head = spec.top_k.min(spec.n_docs) as usize;
    let first_k_all_written = result.write_rate_curve[..head].iter().all(|&w| w == 1.0);
    Ok(ReplayReport {
        result,
        analytic_curve,
        sigma_curve,
        max_abs_deviation,
        max_z,
        first_k_all_written,
    })
}

#[derive(Debug, Deserialize, Serialize)]
struct TraceRow {
    index: u64,
    score: f64,
}

/// Reads an `index,score` CSV trace; indices must run `0..N` in order.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let fail = |message: String| Error::Trace {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(|e| fail(e.to_string()))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| fail(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "score"] {
        return Err(fail(format!("expected header `index,score`, found `{}`", headers.iter().join(","))));
    }
    let mut scores = Vec::new();
    for (expected, row) in rdr.deserialize::<TraceRow>().enumerate() {
        let row = row.map_err(|e| fail(e.to_string()))?;
        if row.index != expected as u64 {
            return Err(fail(format!("row {}: index {} out of sequence", expected + 1, row.index)));
        }
        if !row.score.is_finite() {
            return Err(fail(format!("score at index {} is not finite", row.index)));
        }
        scores.push(row.score);
    }
    Ok(scores)
}

pub fn write_trace(path: impl AsRef<Path>, scores: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (index, &score) in scores.iter().enumerate() {
        w.serialize(TraceRow { index: index as u64, score })?;
    }
    w.flush()?;
    Ok(())
}

/// A trace of `n` distinct uniform scores, fully determined by `seed`.
pub fn synthetic_trace(n: usize, seed: u64) -> Vec<f64> {
    distinct_uniform_scores(&mut trial_rng(seed, u64::MAX), n)
}
