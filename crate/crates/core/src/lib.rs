//! Hot/cold storage tier placement for top-K stream workloads.
//!
//! A stream of `N` documents is scored by an interestingness function and
//! only the `K` best are kept for later reading. Documents seen early are
//! likely to be overwritten, so they can go to a tier that is cheap to write
//! to; late documents are likely to survive and are better placed in a tier
//! that is cheap to read or rent. [`analytic`] gives the expected cost of
//! changing tier at index `r` and the optimal `r`, [`engine`] runs the
//! placement online, and [`simulator`] checks one against the other.

pub mod analytic;
pub mod engine;
pub mod error;
pub mod model;
pub mod pricing;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{derive_validity, CostBreakdown, PerDocCosts, PlacementEvent, StrategyKind, StrategySpec, TierId, WorkloadSpec};
