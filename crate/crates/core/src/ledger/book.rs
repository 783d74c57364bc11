use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LedgerError;
use crate::clock::Timestamp;
use crate::money::Money;

/// Community billing rule for exchanges between two libraries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CostPolicy {
    #[default]
    Free,
    /// Free until the net imbalance passes `threshold_units`; the excess
    /// is billed per unit.
    FreeWithThreshold { threshold_units: u32, unit_price: Money },
    FixedUnit { unit_price: Money },
}

impl CostPolicy {
    pub fn validate(&self) -> Result<(), LedgerError> {
        match self {
            CostPolicy::Free => Ok(()),
            CostPolicy::FreeWithThreshold { unit_price, .. } | CostPolicy::FixedUnit { unit_price } => {
                if unit_price.is_negative() {
                    Err(LedgerError::InvalidEntry(format!("negative unit price {unit_price}")))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    Lent,
    Borrowed,
    ShippingOut,
    ShippingReturn,
    UserInvoice,
    PartnerInvoice,
}

/// One ledger line. `amount` is signed: revenue positive, cost negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub at: Timestamp,
    pub direction: Direction,
    /// Partner library or patron.
    pub counterparty: String,
    pub units: u32,
    pub amount: Money,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<String>,
}

impl LedgerEntry {
    pub fn new(at: Timestamp, direction: Direction, counterparty: impl Into<String>, units: u32, amount: Money) -> Self {
        LedgerEntry { at, direction, counterparty: counterparty.into(), units, amount, request: None }
    }

    pub fn validate(&self) -> Result<(), LedgerError> {
        let fail = |why: &str| Err(LedgerError::InvalidEntry(format!("{:?}: {why}", self.direction)));
        match self.direction {
            Direction::Lent | Direction::Borrowed if self.units < 1 => fail("needs at least one unit"),
            Direction::ShippingOut | Direction::ShippingReturn if self.amount > Money::ZERO => {
                fail("shipping is a cost and cannot be positive")
            }
            Direction::UserInvoice if self.amount.is_negative() => fail("user invoices cannot be negative"),
            _ if self.counterparty.trim().is_empty() => fail("empty counterparty"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub units: BTreeMap<Direction, u64>,
    pub amounts: BTreeMap<Direction, Money>,
    pub balance: Money,
}

/// Append-only ledger with running totals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    entries: Vec<LedgerEntry>,
    totals: LedgerTotals,
}

/// Half-open interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Period {
    pub fn contains(&self, at: Timestamp) -> bool {
        self.start <= at && at < self.end
    }
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn post(&mut self, entry: LedgerEntry) -> Result<(), LedgerError> {
        entry.validate()?;
        *self.totals.units.entry(entry.direction).or_default() += u64::from(entry.units);
        *self.totals.amounts.entry(entry.direction).or_default() += entry.amount;
        self.totals.balance += entry.amount;
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn totals(&self) -> &LedgerTotals {
        &self.totals
    }

    pub fn units(&self, direction: Direction) -> u64 {
        self.totals.units.get(&direction).copied().unwrap_or(0)
    }

    /// Units of `direction` with `counterparty` inside `period`.
    pub fn units_with(&self, direction: Direction, counterparty: &str, period: &Period) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.direction == direction && e.counterparty == counterparty && period.contains(e.at))
            .map(|e| u64::from(e.units))
            .sum()
    }

    pub fn counterparties(&self) -> Vec<String> {
        let mut all: Vec<String> = self.entries.iter().map(|e| e.counterparty.clone()).collect();
        all.sort();
        all.dedup();
        all
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invoice {
    pub counterparty: String,
    pub units_billed: u64,
    pub amount: Money,
}

/// What this library bills `counterparty` for the period. Under the
/// threshold policy only the net excess of lending over borrowing beyond
/// the threshold is billed.
pub fn settle(ledger: &Ledger, period: &Period, policy: &CostPolicy, counterparty: &str) -> Invoice {
    let lent = ledger.units_with(Direction::Lent, counterparty, period);
    let borrowed = ledger.units_with(Direction::Borrowed, counterparty, period);
    let (units_billed, price) = match *policy {
        CostPolicy::Free => (0, Money::ZERO),
        CostPolicy::FixedUnit { unit_price } => (lent, unit_price),
        CostPolicy::FreeWithThreshold { threshold_units, unit_price } => {
            let net = lent as i128 - borrowed as i128;
            ((net - i128::from(threshold_units)).max(0) as u64, unit_price)
        }
    };
    Invoice { counterparty: counterparty.to_string(), units_billed, amount: price * units_billed as i64 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::reference_epoch;
    use chrono::Duration;

    fn period() -> Period {
        Period { start: reference_epoch(), end: reference_epoch() + Duration::days(365) }
    }

    fn exchange(lent: u32, borrowed: u32) -> Ledger {
        let mut l = Ledger::new();
        let at = reference_epoch() + Duration::days(1);
        if lent > 0 {
            l.post(LedgerEntry::new(at, Direction::Lent, "B", lent, Money::ZERO)).unwrap();
        }
        if borrowed > 0 {
            l.post(LedgerEntry::new(at, Direction::Borrowed, "B", borrowed, Money::ZERO)).unwrap();
        }
        l
    }

    #[test]
    fn policies() {
        let eight = Money::from_euros(8);
        let l = exchange(3, 0);
        assert_eq!(settle(&l, &period(), &CostPolicy::Free, "B").amount, Money::ZERO);
        assert_eq!(settle(&l, &period(), &CostPolicy::FixedUnit { unit_price: eight }, "B").amount, Money::from_euros(24));
        let t = CostPolicy::FreeWithThreshold { threshold_units: 100, unit_price: eight };
        let inv = settle(&exchange(150, 20), &period(), &t, "B");
        assert_eq!((inv.units_billed, inv.amount), (30, Money::from_euros(240)));
        assert_eq!(settle(&exchange(20, 150), &period(), &t, "B").amount, Money::ZERO);
    }

    #[test]
    fn entry_validation() {
        let at = reference_epoch();
        assert!(LedgerEntry::new(at, Direction::Lent, "B", 1, Money::ZERO).validate().is_ok());
        assert!(LedgerEntry::new(at, Direction::Lent, "B", 0, Money::ZERO).validate().is_err());
        assert!(LedgerEntry::new(at, Direction::ShippingOut, "B", 1, Money::from_cents(-700)).validate().is_ok());
        assert!(LedgerEntry::new(at, Direction::ShippingOut, "B", 1, Money::from_cents(700)).validate().is_err());
        assert!(LedgerEntry::new(at, Direction::UserInvoice, "p1", 1, Money::from_cents(-1)).validate().is_err());
    }

    #[test]
    fn policy_json() {
        let p: CostPolicy =
            serde_json::from_str(r#"{"policy":"FREE_WITH_THRESHOLD","threshold_units":100,"unit_price":"8.00"}"#).unwrap();
        assert_eq!(p, CostPolicy::FreeWithThreshold { threshold_units: 100, unit_price: Money::from_euros(8) });
        assert_eq!(serde_json::to_string(&CostPolicy::Free).unwrap(), r#"{"policy":"FREE"}"#);
    }
}
