//! Closed-form expectations for the changeover strategy and its optimal index.
//!
//! Documents are assumed to arrive in uniformly random rank order, so document
//! `i` (0-based) enters the running top-K with probability `min(1, K/(i+1))`
//! independently of the others. Summing those rates gives expected write
//! counts in terms of harmonic numbers; the `LogApprox` form replaces each
//! harmonic difference by a difference of logarithms.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::model::{CostBreakdown, PerDocCosts, StrategyKind, StrategySpec, WorkloadSpec};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Largest `n` for which [`harmonic`] sums directly.
pub const HARMONIC_DIRECT_LIMIT: u64 = 1_000_000;

fn harmonic_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        // Neumaier-compensated running sum, H_0 = 0.
        let mut table = Vec::with_capacity(HARMONIC_DIRECT_LIMIT as usize + 1);
        table.push(0.0);
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for k in 1..=HARMONIC_DIRECT_LIMIT {
            let term = 1.0 / k as f64;
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
            table.push(sum + comp);
        }
        table
    })
}

/// `H_n = 1 + 1/2 + ... + 1/n`, with `H_0 = 0`.
///
/// Exact prefix summation up to [`HARMONIC_DIRECT_LIMIT`], the asymptotic
/// expansion `ln n + γ + 1/(2n) - 1/(12n²) + 1/(120n⁴)` above it.
pub fn harmonic(n: u64) -> f64 {
    if n <= HARMONIC_DIRECT_LIMIT {
        harmonic_table()[n as usize]
    } else {
        let x = n as f64;
        let inv2 = 1.0 / (x * x);
        x.ln() + EULER_GAMMA + 0.5 / x - inv2 / 12.0 + inv2 * inv2 / 120.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticForm {
    #[default]
    ExactHarmonic,
    LogApprox,
}

/// Probability that document `i` is in the running top-`k` when observed.
pub fn write_rate(i: u64, k: u64) -> f64 {
    if i < k {
        1.0
    } else {
        k as f64 / (i + 1) as f64
    }
}

/// Variance of the Bernoulli write indicator of document `i`.
pub fn write_variance(i: u64, k: u64) -> f64 {
    let p = write_rate(i, k);
    p * (1.0 - p)
}

/// Expected number of writes among the first `m` documents.
pub fn expected_cum_writes(m: u64, k: u64, form: AnalyticForm) -> f64 {
    if m <= k {
        return m as f64;
    }
    let kf = k as f64;
    match form {
        AnalyticForm::ExactHarmonic => kf + kf * (harmonic(m) - harmonic(k)),
        AnalyticForm::LogApprox => kf + kf * (m as f64).ln(),
    }
}

/// Expected cumulative-write curve `E[writes in 0..=i]` for `i` in `0..n`,
/// together with the standard deviation of each prefix count.
pub fn cumulative_write_curve(n: u64, k: u64) -> (Vec<f64>, Vec<f64>) {
    let mut mean = Vec::with_capacity(n as usize);
    let mut sd = Vec::with_capacity(n as usize);
    let (mut m, mut v) = (0.0, 0.0);
    for i in 0..n {
        m += write_rate(i, k);
        v += write_variance(i, k);
        mean.push(m);
        sd.push(v.sqrt());
    }
    (mean, sd)
}

/// Expected writes landing in tier A and tier B for changeover index `r`.
pub fn expected_tier_writes(spec: &WorkloadSpec, r: u64) -> Result<(f64, f64)> {
    spec.check_changeover(r)?;
    let k = spec.top_k as f64;
    let a = k + k * (harmonic(r) - harmonic(spec.top_k));
    let b = k * (harmonic(spec.n_docs) - harmonic(r));
    Ok((a, b))
}

pub fn expected_write_cost(spec: &WorkloadSpec, r: u64, costs: &PerDocCosts, form: AnalyticForm) -> Result<f64> {
    spec.check_changeover(r)?;
    let k = spec.top_k as f64;
    let (early, late) = match form {
        AnalyticForm::ExactHarmonic => (
            harmonic(r) - harmonic(spec.top_k),
            harmonic(spec.n_docs) - harmonic(r),
        ),
        AnalyticForm::LogApprox => {
            let (lr, lk, ln) = ((r as f64).ln(), k.ln(), (spec.n_docs as f64).ln());
            (lr - lk, ln - lr)
        }
    };
    Ok(k * costs.write_a + k * early * costs.write_a + k * late * costs.write_b)
}

/// Final reads of the K survivors, which are spread uniformly over the stream.
pub fn expected_read_cost(spec: &WorkloadSpec, r: u64, costs: &PerDocCosts) -> f64 {
    let f = spec.fraction_of(r);
    spec.top_k as f64 * (f * costs.read_a + (1.0 - f) * costs.read_b)
}

/// K slots rented in A up to the changeover and in B afterwards.
pub fn expected_rental_cost(spec: &WorkloadSpec, r: u64, costs: &PerDocCosts) -> f64 {
    let f = spec.fraction_of(r);
    spec.top_k as f64 * (f * costs.rental_a + (1.0 - f) * costs.rental_b)
}

/// Bulk move of K documents from A to B.
pub fn migration_cost(spec: &WorkloadSpec, costs: &PerDocCosts) -> f64 {
    spec.top_k as f64 * (costs.read_a + costs.write_b)
}

/// Rental upper bound used without migration: all K slots at the dearer tier.
pub fn rental_upper_bound(spec: &WorkloadSpec, costs: &PerDocCosts) -> f64 {
    spec.top_k as f64 * costs.rental_a.max(costs.rental_b)
}

/// Whether a strategy's rental component is an expectation or an upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RentalBasis {
    Expected,
    UpperBound,
}

pub fn rental_basis(strat: &StrategySpec) -> RentalBasis {
    if strat.kind == StrategyKind::TwoTierChangeover && !strat.migrate {
        RentalBasis::UpperBound
    } else {
        RentalBasis::Expected
    }
}

/// Expected cost of a strategy.
///
/// * changeover without migration: writes + final reads + rental upper bound;
/// * changeover with migration: writes + rental + migration (survivors all end
///   in B and the final read is not part of this total);
/// * single tier: everything in A for the whole window;
/// * classic hire-once: one document written, rented and read in A.
pub fn total_cost(spec: &WorkloadSpec, strat: &StrategySpec, costs: &PerDocCosts, form: AnalyticForm) -> Result<CostBreakdown> {
    let k = spec.top_k as f64;
    match strat.kind {
        StrategyKind::TwoTierChangeover if strat.migrate => {
            let writes = expected_write_cost(spec, strat.r, costs, form)?;
            Ok(CostBreakdown::new(
                writes,
                0.0,
                expected_rental_cost(spec, strat.r, costs),
                migration_cost(spec, costs),
            ))
        }
        StrategyKind::TwoTierChangeover => {
            let writes = expected_write_cost(spec, strat.r, costs, form)?;
            Ok(CostBreakdown::new(
                writes,
                expected_read_cost(spec, strat.r, costs),
                rental_upper_bound(spec, costs),
                0.0,
            ))
        }
        StrategyKind::SingleTierOverwrite => {
            let writes = expected_write_cost(spec, spec.n_docs, costs, form)?;
            Ok(CostBreakdown::new(writes, k * costs.read_a, k * costs.rental_a, 0.0))
        }
        StrategyKind::ClassicShp => {
            spec.check_changeover(strat.r.max(spec.top_k))?;
            Ok(CostBreakdown::new(costs.write_a, costs.read_a, costs.rental_a, 0.0))
        }
    }
}

/// Changeover variant being optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostVariant {
    NoMigration,
    Migration,
}

impl CostVariant {
    pub fn migrate(self) -> bool {
        self == CostVariant::Migration
    }

    pub fn strategy(self, r: u64) -> StrategySpec {
        StrategySpec::two_tier(r, self.migrate())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Changeover {
    pub r: u64,
    pub fraction: f64,
}

/// Why a closed-form optimum was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum InvalidOptimum {
    #[error("equal read costs")]
    EqualReadCosts,
    #[error("equal rentals")]
    EqualRentals,
    #[error("r/N = {fraction} lies outside (0, 1)")]
    FractionOutOfRange { fraction: f64 },
    #[error("stationary point at r/N = {fraction} is a maximum (needs write_a < write_b)")]
    NotAMinimum { fraction: f64 },
    #[error("r = {r} is not strictly between K = {k} and N = {n}")]
    IndexOutOfRange { r: u64, fraction: f64, k: u64, n: u64 },
}

impl InvalidOptimum {
    /// Stationary fraction, when one exists.
    pub fn fraction(&self) -> Option<f64> {
        match *self {
            InvalidOptimum::EqualReadCosts | InvalidOptimum::EqualRentals => None,
            InvalidOptimum::FractionOutOfRange { fraction }
            | InvalidOptimum::NotAMinimum { fraction }
            | InvalidOptimum::IndexOutOfRange { fraction, .. } => Some(fraction),
        }
    }
}

// The cost difference between r and r-1 is K(wA - wB)/r + K·slope/N, which
// vanishes at r = N(wA - wB)/(-slope). Its curvature is -K(wA - wB)/r², so
// the stationary point is a minimum only when writing to A is cheaper.
fn classify(spec: &WorkloadSpec, costs: &PerDocCosts, denom: f64) -> Result<Changeover, InvalidOptimum> {
    let fraction = (costs.write_a - costs.write_b) / denom;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(InvalidOptimum::FractionOutOfRange { fraction });
    }
    if costs.write_a >= costs.write_b {
        return Err(InvalidOptimum::NotAMinimum { fraction });
    }
    let r = (fraction * spec.n_docs as f64).round() as u64;
    if !spec.changeover_is_valid(r) {
        return Err(InvalidOptimum::IndexOutOfRange {
            r,
            fraction,
            k: spec.top_k,
            n: spec.n_docs,
        });
    }
    Ok(Changeover { r, fraction })
}

/// Optimal changeover without migration (write + read trade-off).
pub fn r_opt_no_migration(spec: &WorkloadSpec, costs: &PerDocCosts) -> Result<Changeover, InvalidOptimum> {
    let denom = costs.read_b - costs.read_a;
    if denom == 0.0 {
        return Err(InvalidOptimum::EqualReadCosts);
    }
    classify(spec, costs, denom)
}

/// Optimal changeover with bulk migration (write + rental trade-off).
pub fn r_opt_migration(spec: &WorkloadSpec, costs: &PerDocCosts) -> Result<Changeover, InvalidOptimum> {
    let denom = costs.rental_b - costs.rental_a;
    if denom == 0.0 {
        return Err(InvalidOptimum::EqualRentals);
    }
    classify(spec, costs, denom)
}

pub fn r_opt(spec: &WorkloadSpec, costs: &PerDocCosts, variant: CostVariant) -> Result<Changeover, InvalidOptimum> {
    match variant {
        CostVariant::NoMigration => r_opt_no_migration(spec, costs),
        CostVariant::Migration => r_opt_migration(spec, costs),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub r: u64,
    pub r_over_n: f64,
    pub cost: CostBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variant: CostVariant,
    pub points: Vec<SweepPoint>,
    /// Position in `points` of the first minimum of `total`.
    pub argmin: usize,
}

impl Sweep {
    pub fn best(&self) -> &SweepPoint {
        &self.points[self.argmin]
    }

    /// Distance between neighbouring grid points, in documents.
    pub fn step(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) if self.points.len() > 1 => (b.r - a.r) as f64 / (self.points.len() - 1) as f64,
            _ => 0.0,
        }
    }
}

/// Evenly spaced changeover indices from K to N inclusive.
pub fn grid_points(spec: &WorkloadSpec, grid: usize) -> Result<Vec<u64>> {
    if grid < 2 {
        return Err(Error::GridTooSmall(grid));
    }
    let (lo, hi) = (spec.top_k as f64, spec.n_docs as f64);
    let step = (hi - lo) / (grid - 1) as f64;
    Ok((0..grid)
        .map(|j| {
            if j == grid - 1 {
                spec.n_docs
            } else {
                (lo + step * j as f64).round() as u64
            }
        })
        .collect())
}

/// Expected total cost over an evenly spaced grid of changeover indices.
pub fn sweep(spec: &WorkloadSpec, costs: &PerDocCosts, variant: CostVariant, grid: usize, form: AnalyticForm) -> Result<Sweep> {
    let rs = grid_points(spec, grid)?;
    let points = rs
        .par_iter()
        .map(|&r| {
            total_cost(spec, &variant.strategy(r), costs, form).map(|cost| SweepPoint {
                r,
                r_over_n: spec.fraction_of(r),
                cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let argmin = points
        .iter()
        .enumerate()
        .fold(0, |best, (j, p)| if p.cost.total < points[best].cost.total { j } else { best });
    Ok(Sweep { variant, points, argmin })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementPlan {
    AllA,
    AllB,
    ChangeoverNoMigration,
    ChangeoverMigration,
}

/// Where a row's changeover index came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimumSource {
    NotApplicable,
    ClosedForm,
    SweepFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub plan: PlacementPlan,
    pub r: Option<u64>,
    pub fraction: Option<f64>,
    pub source: OptimumSource,
    pub rental_basis: RentalBasis,
    pub cost: CostBreakdown,
    /// Set when the closed form was rejected and the sweep minimum is shown.
    pub invalid: Option<InvalidOptimum>,
}

/// Grid size used when a closed-form optimum is rejected.
pub const FALLBACK_GRID: usize = 1001;

/// Expected cost of the single-tier plans and of both changeover variants,
/// each changeover at its optimum.
pub fn compare_strategies(spec: &WorkloadSpec, costs: &PerDocCosts, form: AnalyticForm) -> Result<Vec<StrategyRow>> {
    let single = StrategySpec::single_tier();
    let all_a = total_cost(spec, &single, costs, form)?;
    let all_b = total_cost(spec, &single, &costs.swapped(), form)?;
    let mut rows = vec![
        StrategyRow {
            plan: PlacementPlan::AllA,
            r: None,
            fraction: None,
            source: OptimumSource::NotApplicable,
            rental_basis: RentalBasis::Expected,
            cost: all_a,
            invalid: None,
        },
        StrategyRow {
            plan: PlacementPlan::AllB,
            r: None,
            fraction: None,
            source: OptimumSource::NotApplicable,
            rental_basis: RentalBasis::Expected,
            cost: all_b,
            invalid: None,
        },
    ];
    for (plan, variant) in [
        (PlacementPlan::ChangeoverNoMigration, CostVariant::NoMigration),
        (PlacementPlan::ChangeoverMigration, CostVariant::Migration),
    ] {
        let strat_basis = rental_basis(&variant.strategy(spec.n_docs));
        let row = match r_opt(spec, costs, variant) {
            Ok(opt) => StrategyRow {
                plan,
                r: Some(opt.r),
                fraction: Some(opt.fraction),
                source: OptimumSource::ClosedForm,
                rental_basis: strat_basis,
                cost: total_cost(spec, &variant.strategy(opt.r), costs, form)?,
                invalid: None,
            },
            Err(why) => {
                let s = sweep(spec, costs, variant, FALLBACK_GRID, form)?;
                let best = s.best();
                StrategyRow {
                    plan,
                    r: Some(best.r),
                    fraction: Some(best.r_over_n),
                    source: OptimumSource::SweepFallback,
                    rental_basis: strat_basis,
                    cost: best.cost,
                    invalid: Some(why),
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}
