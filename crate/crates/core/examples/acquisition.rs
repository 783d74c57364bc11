//! Patron-driven acquisition against a deposit, evidence-based selection
//! under a budget, and a purchase-on-demand check.

use interlend_core::acquisition::{
    cost_per_use, eba_select, on_use_event, pod_eligibility, Deposit, EbaUsageRow, PdaTitleState, PodCandidate, PodParams,
};
use interlend_core::request::Flow;
use interlend_core::Money;

fn eur(amount: &str) -> Money {
    Money::parse(amount).expect("valid amount")
}

fn main() {
    let mut deposit = Deposit::new(Money::from_euros(400));
    let mut titles = vec![
        PdaTitleState::new("organic-chem", eur("65.00"), Some(eur("9.30"))),
        PdaTitleState::new("grid-design", Money::from_euros(40), None),
        PdaTitleState::new("big-atlas", Money::from_euros(150), Some(Money::from_euros(90))),
    ];
    for round in 1..=4 {
        for title in &mut titles {
            match on_use_event(title, &mut deposit) {
                Ok(action) => println!("use {round} of {:<13} {action:?}", title.key),
                Err(e) => println!("use {round} of {:<13} {e}", title.key),
            }
        }
    }
    println!("deposit left: {} of {}", deposit.balance, deposit.initial);
    let (bought, rented) = (cost_per_use(eur("5346.96"), 96), cost_per_use(eur("2384.30"), 221));
    println!("cost per use: purchases {bought}, rentals {rented}");

    let row = |key: &str, price, uses: [u32; 12]| EbaUsageRow {
        key: key.into(),
        subject: "chemistry".into(),
        yop: 2020,
        list_price: Money::from_euros(price),
        monthly_uses: uses,
        monthly_denials: [0; 12],
        in_program: true,
        prepicked: false,
    };
    let rows = [
        row("spectroscopy", 90, [3, 2, 0, 0, 1, 0, 0, 0, 4, 2, 1, 0]),
        row("catalysis", 120, [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]),
        row("polymers", 75, [0, 1, 1, 1, 1, 0, 1, 0, 1, 0, 1, 1]),
    ];
    println!("EBA picks within 180 EUR: {:?}", eba_select(&rows, Money::from_euros(180)));

    let candidate = PodCandidate {
        flow: Flow::Returnable,
        print_only: true,
        patron_group: "staff".into(),
        genre: None,
        high_demand: false,
    };
    println!("purchase on demand at 48 EUR: {:?}", pod_eligibility(&candidate, Money::from_euros(48), &PodParams::default()));
}
