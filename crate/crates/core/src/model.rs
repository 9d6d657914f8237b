//! Domain types shared by the engine, the analytic model and the simulator.
//!
//! Units are decimal: sizes in GB (1 GB = 1000 MB), durations in days, and
//! rental rates are quoted per GB-month with a month of [`DAYS_PER_MONTH`]
//! days. Currency is whatever unit the tariff declares.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Month length used to turn per-GB-month rental rates into per-window costs.
pub const DAYS_PER_MONTH: f64 = 30.0;

/// Shape of one fixed-length stream (or one independent window of a stream).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    /// Number of documents in the stream.
    pub n_docs: u64,
    /// Number of top-ranked documents retained and finally read.
    pub top_k: u64,
    pub doc_size_gb: f64,
    pub window_duration_days: f64,
}

impl WorkloadSpec {
    pub fn new(n_docs: u64, top_k: u64, doc_size_gb: f64, window_duration_days: f64) -> Result<Self> {
        let spec = Self {
            n_docs,
            top_k,
            doc_size_gb,
            window_duration_days,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Workload used where only ranks matter (oracles, property tests).
    pub fn unit(n_docs: u64, top_k: u64) -> Result<Self> {
        Self::new(n_docs, top_k, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k < 1 {
            return Err(Error::InvalidField {
                field: "workload.top_k",
                expected: "document count >= 1",
            });
        }
        if self.top_k > self.n_docs {
            return Err(Error::InvalidField {
                field: "workload.top_k",
                expected: "document count <= workload.n_docs",
            });
        }
        if !(self.doc_size_gb.is_finite() && self.doc_size_gb > 0.0) {
            return Err(Error::InvalidField {
                field: "workload.doc_size_gb",
                expected: "decimal gigabytes > 0",
            });
        }
        if !(self.window_duration_days.is_finite() && self.window_duration_days > 0.0) {
            return Err(Error::InvalidField {
                field: "workload.window_duration_days",
                expected: "days > 0",
            });
        }
        Ok(())
    }

    /// True iff the changeover index lies strictly inside `(top_k, n_docs)`.
    pub fn changeover_is_valid(&self, r: u64) -> bool {
        self.top_k < r && r < self.n_docs
    }

    /// Checks the weaker engine precondition `top_k <= r <= n_docs`.
    pub fn check_changeover(&self, r: u64) -> Result<()> {
        if r < self.top_k || r > self.n_docs {
            return Err(Error::ChangeoverOutOfRange {
                r,
                k: self.top_k,
                n: self.n_docs,
            });
        }
        Ok(())
    }

    /// `r / n_docs` as a real fraction of the stream.
    pub fn fraction_of(&self, r: u64) -> f64 {
        r as f64 / self.n_docs as f64
    }
}

/// Free-function form of [`WorkloadSpec::changeover_is_valid`].
pub fn derive_validity(spec: &WorkloadSpec, r: u64) -> bool {
    spec.changeover_is_valid(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TierId {
    A,
    B,
}

impl fmt::Display for TierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TierId::A => f.write_str("A"),
            TierId::B => f.write_str("B"),
        }
    }
}

/// Per-document costs for both tiers. Rental is per document per full window,
/// already multiplied out by document size and window duration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerDocCosts {
    pub write_a: f64,
    pub write_b: f64,
    pub read_a: f64,
    pub read_b: f64,
    pub rental_a: f64,
    pub rental_b: f64,
}

impl PerDocCosts {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn write(&self, tier: TierId) -> f64 {
        match tier {
            TierId::A => self.write_a,
            TierId::B => self.write_b,
        }
    }

    pub fn read(&self, tier: TierId) -> f64 {
        match tier {
            TierId::A => self.read_a,
            TierId::B => self.read_b,
        }
    }

    pub fn rental(&self, tier: TierId) -> f64 {
        match tier {
            TierId::A => self.rental_a,
            TierId::B => self.rental_b,
        }
    }

    /// Same prices with the tier labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            write_a: self.write_b,
            write_b: self.write_a,
            read_a: self.read_b,
            read_b: self.read_a,
            rental_a: self.rental_b,
            rental_b: self.rental_a,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            write_a: self.write_a * factor,
            write_b: self.write_b * factor,
            read_a: self.read_a * factor,
            read_b: self.read_b * factor,
            rental_a: self.rental_a * factor,
            rental_b: self.rental_b * factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("costs.write_a", self.write_a),
            ("costs.write_b", self.write_b),
            ("costs.read_a", self.read_a),
            ("costs.read_b", self.read_b),
            ("costs.rental_a", self.rental_a),
            ("costs.rental_b", self.rental_b),
        ];
        for (field, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidField {
                    field,
                    expected: "currency per document >= 0",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Hire-once secretary rule: observe `r - 1`, then take the first better one.
    ClassicShp,
    /// One tier, overwrite whenever a document enters the running top-K.
    SingleTierOverwrite,
    /// Documents before index `r` go to tier A, the rest to tier B.
    TwoTierChangeover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// Changeover (or observation) index. Unused by `SingleTierOverwrite`.
    pub r: u64,
    pub migrate: bool,
}

impl StrategySpec {
    pub fn classic(r: u64) -> Self {
        Self {
            kind: StrategyKind::ClassicShp,
            r,
            migrate: false,
        }
    }

    pub fn single_tier() -> Self {
        Self {
            kind: StrategyKind::SingleTierOverwrite,
            r: 0,
            migrate: false,
        }
    }

    pub fn two_tier(r: u64, migrate: bool) -> Self {
        Self {
            kind: StrategyKind::TwoTierChangeover,
            r,
            migrate,
        }
    }
}

/// Cost split by component. `total` is always the sum of the other four.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub writes: f64,
    pub reads: f64,
    pub rental: f64,
    pub migration: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(writes: f64, reads: f64, rental: f64, migration: f64) -> Self {
        Self {
            writes,
            reads,
            rental,
            migration,
            total: writes + reads + rental + migration,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Recomputes `total` from the components.
    pub fn retotal(mut self) -> Self {
        self.total = self.writes + self.reads + self.rental + self.migration;
        self
    }
}

impl Add for CostBreakdown {
    type Output = CostBreakdown;

    fn add(self, rhs: Self) -> Self {
        CostBreakdown::new(
            self.writes + rhs.writes,
            self.reads + rhs.reads,
            self.rental + rhs.rental,
            self.migration + rhs.migration,
        )
    }
}

impl AddAssign for CostBreakdown {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sum for CostBreakdown {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(CostBreakdown::zero(), Add::add)
    }
}

/// One step of the online placement log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PlacementEvent {
    Write { doc_index: u64, tier: TierId },
    Evict { doc_index: u64, tier: TierId },
    MigrateAll { from: TierId, to: TierId, at_index: u64, count: u64 },
    FinalRead { doc_index: u64, tier: TierId },
}
