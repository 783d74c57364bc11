use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::AcquisitionError;
use crate::money::Money;

/// Licence model for PDA purchases: a single simultaneous user.
pub const PURCHASE_MODEL: &str = "1U";

/// Which titles a patron-driven acquisition pool exposes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdaPool {
    pub subjects_allowed: BTreeSet<String>,
    pub languages_allowed: BTreeSet<String>,
    pub price_min: Money,
    pub price_max: Money,
    pub moving_wall_years: u32,
    #[serde(default)]
    pub excluded_publishers: BTreeSet<String>,
}

impl PdaPool {
    pub fn validate(&self) -> Result<(), AcquisitionError> {
        if self.price_min > self.price_max {
            return Err(AcquisitionError::InvalidConfig(format!(
                "price_min {} above price_max {}",
                self.price_min, self.price_max
            )));
        }
        Ok(())
    }
}

/// What the pool filter reads about a title.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleMeta {
    pub subject: String,
    pub language: String,
    pub list_price: Money,
    pub yop: i32,
    pub publisher: String,
}

pub fn pool_contains(meta: &TitleMeta, pool: &PdaPool, current_year: i32) -> bool {
    pool.subjects_allowed.contains(&meta.subject)
        && pool.languages_allowed.contains(&meta.language)
        && pool.price_min <= meta.list_price
        && meta.list_price <= pool.price_max
        && i64::from(current_year) - i64::from(meta.yop) < i64::from(pool.moving_wall_years)
        && !pool.excluded_publishers.contains(&meta.publisher)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdaTitleState {
    pub key: String,
    pub list_price: Money,
    #[serde(default)]
    pub stl_price: Option<Money>,
    #[serde(default)]
    pub rentals: u32,
    #[serde(default)]
    pub purchased: bool,
}

impl PdaTitleState {
    pub fn new(key: impl Into<String>, list_price: Money, stl_price: Option<Money>) -> Self {
        PdaTitleState { key: key.into(), list_price, stl_price, rentals: 0, purchased: false }
    }

    /// A short-term loan is offered when it costs under 100 or under half
    /// the list price.
    pub fn stl_eligible(&self) -> bool {
        self.stl_price
            .is_some_and(|stl| stl < Money::from_euros(100) || stl * 2 < self.list_price)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Charge {
    pub title: String,
    pub action: PdaAction,
    pub amount: Money,
}

/// Prepaid PDA budget. The balance never goes negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deposit {
    pub initial: Money,
    pub topups: Money,
    pub balance: Money,
    pub history: Vec<Charge>,
}

impl Deposit {
    pub fn new(initial: Money) -> Self {
        Deposit { initial, topups: Money::ZERO, balance: initial, history: Vec::new() }
    }

    pub fn top_up(&mut self, amount: Money) {
        self.topups += amount;
        self.balance += amount;
    }

    pub fn charged(&self) -> Money {
        self.history.iter().map(|c| c.amount).sum()
    }

    fn charge(&mut self, title: &str, action: PdaAction, amount: Money) -> Result<(), AcquisitionError> {
        if amount > self.balance {
            return Err(AcquisitionError::InsufficientDeposit { needed: amount, balance: self.balance });
        }
        self.balance -= amount;
        self.history.push(Charge { title: title.to_string(), action, amount });
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action")]
pub enum PdaAction {
    Rent { price: Money },
    Purchase { model: String, price: Money },
    NoOp,
}

/// One patron use of a pool title. With an eligible short-term loan the
/// first two uses rent and the third buys; without one the first use buys.
/// On a failed charge nothing changes.
pub fn on_use_event(state: &mut PdaTitleState, deposit: &mut Deposit) -> Result<PdaAction, AcquisitionError> {
    if state.purchased {
        return Ok(PdaAction::NoOp);
    }
    match state.stl_price {
        Some(stl) if state.stl_eligible() && state.rentals < 2 => {
            let action = PdaAction::Rent { price: stl };
            deposit.charge(&state.key, action.clone(), stl)?;
            state.rentals += 1;
            Ok(action)
        }
        _ => {
            let action = PdaAction::Purchase { model: PURCHASE_MODEL.to_string(), price: state.list_price };
            deposit.charge(&state.key, action.clone(), state.list_price)?;
            state.purchased = true;
            Ok(action)
        }
    }
}
