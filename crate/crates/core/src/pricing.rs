//! Provider price sheets and their reduction to per-document costs.
//!
//! A scenario file is TOML. Transaction prices are quoted the way providers
//! publish them (`price` per `per_txns` requests), rental per GB-month, and
//! transfer per GB. Which transfer legs a write or read crosses is listed
//! explicitly for each tier.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};
use crate::model::{PerDocCosts, WorkloadSpec, DAYS_PER_MONTH};

fn one() -> f64 {
    1.0
}

fn default_month_days() -> f64 {
    DAYS_PER_MONTH
}

/// `price` per `per_txns` transactions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxnPrice {
    pub price: f64,
    #[serde(default = "one")]
    pub per_txns: f64,
}

impl TxnPrice {
    pub fn per_txn(&self) -> f64 {
        self.price / self.per_txns
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierTariff {
    pub name: String,
    pub location: String,
    /// Currency label, if it differs from the scenario's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub currency: Option<String>,
    pub put: TxnPrice,
    pub get: TxnPrice,
    pub rental_per_gb_month: f64,
}

impl TierTariff {
    pub fn put_per_txn(&self) -> f64 {
        self.put.per_txn()
    }

    pub fn get_per_txn(&self) -> f64 {
        self.get.per_txn()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferLeg {
    pub from: String,
    pub to: String,
    pub price_per_gb: f64,
}

/// Reference to a transfer leg by its endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegRef {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub currency: String,
    #[serde(default = "default_month_days")]
    pub month_days: f64,
    pub producer_location: String,
    pub consumer_location: String,
    pub workload: WorkloadSpec,
    pub tier_a: TierTariff,
    pub tier_b: TierTariff,
    #[serde(default)]
    pub transfer_legs: Vec<TransferLeg>,
    #[serde(default)]
    pub write_legs_a: Vec<LegRef>,
    #[serde(default)]
    pub write_legs_b: Vec<LegRef>,
    #[serde(default)]
    pub read_legs_a: Vec<LegRef>,
    #[serde(default)]
    pub read_legs_b: Vec<LegRef>,
}

fn non_negative(field: &'static str, expected: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidField { field, expected })
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.workload.validate()?;
        if !(self.month_days.is_finite() && self.month_days > 0.0) {
            return Err(Error::InvalidField {
                field: "month_days",
                expected: "days > 0",
            });
        }
        for (prefix, t) in [("tier_a", &self.tier_a), ("tier_b", &self.tier_b)] {
            let (put, get, rent, per) = match prefix {
                "tier_a" => ("tier_a.put.price", "tier_a.get.price", "tier_a.rental_per_gb_month", "tier_a.*.per_txns"),
                _ => ("tier_b.put.price", "tier_b.get.price", "tier_b.rental_per_gb_month", "tier_b.*.per_txns"),
            };
            non_negative(put, "currency per batch of transactions >= 0", t.put.price)?;
            non_negative(get, "currency per batch of transactions >= 0", t.get.price)?;
            non_negative(rent, "currency per GB-month >= 0", t.rental_per_gb_month)?;
            for p in [t.put.per_txns, t.get.per_txns] {
                if !(p.is_finite() && p > 0.0) {
                    return Err(Error::InvalidField {
                        field: per,
                        expected: "transaction count > 0",
                    });
                }
            }
        }
        for leg in &self.transfer_legs {
            non_negative("transfer_legs.price_per_gb", "currency per GB >= 0", leg.price_per_gb)?;
        }
        Ok(())
    }

    fn leg_price(&self, leg: &LegRef) -> Option<f64> {
        self.transfer_legs
            .iter()
            .find(|l| l.from == leg.from && l.to == leg.to)
            .map(|l| l.price_per_gb)
    }

    fn legs_per_gb(&self, legs: &[LegRef]) -> f64 {
        legs.iter().map(|l| self.leg_price(l).unwrap_or(0.0)).sum()
    }

    /// Non-fatal problems: missing transfer legs (priced at 0) and tiers
    /// declaring a different currency.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let lists = [
            ("write_legs_a", &self.write_legs_a),
            ("write_legs_b", &self.write_legs_b),
            ("read_legs_a", &self.read_legs_a),
            ("read_legs_b", &self.read_legs_b),
        ];
        for (name, legs) in lists {
            for leg in legs.iter().filter(|l| self.leg_price(l).is_none()) {
                out.push(format!("{name}: no transfer leg {} -> {}, priced at 0", leg.from, leg.to));
            }
        }
        let mixed = [&self.tier_a, &self.tier_b]
            .iter()
            .filter_map(|t| t.currency.as_deref())
            .any(|c| c != self.currency);
        if mixed {
            out.push(format!(
                "tiers declare currencies other than {}; no conversion is applied",
                self.currency
            ));
        }
        out
    }

    pub fn per_doc_costs(&self) -> PerDocCosts {
        derive_per_doc_costs(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is always representable as TOML")
    }
}

/// Per-document write, read and per-window rental costs for both tiers.
pub fn derive_per_doc_costs(cfg: &ScenarioConfig) -> PerDocCosts {
    let gb = cfg.workload.doc_size_gb;
    let months = cfg.workload.window_duration_days / cfg.month_days;
    PerDocCosts {
        write_a: cfg.tier_a.put_per_txn() + cfg.legs_per_gb(&cfg.write_legs_a) * gb,
        write_b: cfg.tier_b.put_per_txn() + cfg.legs_per_gb(&cfg.write_legs_b) * gb,
        read_a: cfg.tier_a.get_per_txn() + cfg.legs_per_gb(&cfg.read_legs_a) * gb,
        read_b: cfg.tier_b.get_per_txn() + cfg.legs_per_gb(&cfg.read_legs_b) * gb,
        rental_a: cfg.tier_a.rental_per_gb_month * gb * months,
        rental_b: cfg.tier_b.rental_per_gb_month * gb * months,
    }
}

pub fn parse_scenario(text: &str, path: &Path) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Scenario {
        path: path.to_path_buf(),
        message: e.message().to_string(),
    })?;
    cfg.validate().map_err(|e| Error::Scenario {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    for w in cfg.warnings() {
        warn!(scenario = %path.display(), "{w}");
    }
    Ok(cfg)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Scenario {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_scenario(&text, path)
}

/// The two shipped scenarios, embedded so tests and tools need no file paths.
pub mod builtin {
    pub const CASE_STUDY_1: &str = include_str!("../../../scenarios/case_study_1.toml");
    pub const CASE_STUDY_2: &str = include_str!("../../../scenarios/case_study_2.toml");
}
