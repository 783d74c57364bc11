//! Reciprocity accounting, scenario cost comparison and service statistics.

mod book;
mod scenario;
mod stats;

use thiserror::Error;

pub use book::{settle, CostPolicy, Direction, Invoice, Ledger, LedgerEntry, LedgerTotals, Period};
pub use scenario::{compare_scenarios, ScenarioInputs, ScenarioReport, ScenarioSide};
pub use stats::{avg_turnaround, fill_rate, Counters, FillRateMode, Percent, StatsWindow};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("invalid ledger entry: {0}")]
    InvalidEntry(String),
    #[error("invalid scenario inputs: {0}")]
    InvalidInputs(String),
    #[error("no documents to average over")]
    DivisionByZero,
    #[error("stats window has nothing to report")]
    EmptyWindow,
}
