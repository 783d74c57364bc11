//! Buying instead of borrowing: patron-driven pools with rent-then-buy
//! triggers, purchase-on-demand eligibility, evidence-based selection and
//! cost per use.

mod eba;
mod pda;
mod pod;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eba::{eba_select, month_spread, read_usage_csv, EbaUsageRow};
pub use pda::{on_use_event, pool_contains, Charge, Deposit, PdaAction, PdaPool, PdaTitleState, TitleMeta, PURCHASE_MODEL};
pub use pod::{pod_eligibility, PodCandidate, PodParams, PodVerdict};

use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AcquisitionError {
    #[error("deposit balance {balance} cannot cover {needed}")]
    InsufficientDeposit { needed: Money, balance: Money },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("usage file: {0}")]
    Usage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostPerUse {
    PerUse(Money),
    Unused,
}

impl fmt::Display for CostPerUse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostPerUse::PerUse(m) => write!(f, "{m}"),
            CostPerUse::Unused => f.write_str("unused"),
        }
    }
}

/// Spend divided by uses, rounded half-up to the cent.
pub fn cost_per_use(total_spend: Money, uses: u64) -> CostPerUse {
    total_spend.div_round(uses).map_or(CostPerUse::Unused, CostPerUse::PerUse)
}
