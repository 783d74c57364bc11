//! Yearly cost with and without free reciprocal lending, fill rates and a
//! threshold settlement.

use chrono::Duration;
use interlend_core::clock::reference_epoch;
use interlend_core::ledger::{
    compare_scenarios, fill_rate, settle, CostPolicy, Counters, Direction, FillRateMode, Ledger, LedgerEntry, Period,
    ScenarioInputs,
};
use interlend_core::Money;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inputs = ScenarioInputs {
        sent_requests: 2621,
        lent_documents: 2060,
        avg_fee_per_doc: Money::from_euros(8),
        shipping_return_total: Money::from_euros(19_185),
        shipping_out_total: Money::from_euros(15_080),
        user_invoice_total: Money::from_euros(778),
        fee_paid_to_nonreciprocal: Money::from_euros(1790),
        fee_received_from_nonreciprocal: Money::from_euros(376),
    };
    let report = compare_scenarios(&inputs)?;
    print!("{}", report.to_csv_string());

    let counters = Counters { filled: 2650, unfilled: 622, total_requests: 3272, ..Counters::default() };
    for mode in [FillRateMode::OfTotal, FillRateMode::OfDecided] {
        println!("fill rate {mode:?}: {}", fill_rate(&counters, mode, 1)?);
    }

    let at = reference_epoch() + Duration::days(30);
    let mut ledger = Ledger::new();
    ledger.post(LedgerEntry::new(at, Direction::Lent, "NAMUR", 150, Money::ZERO))?;
    ledger.post(LedgerEntry::new(at, Direction::Borrowed, "NAMUR", 20, Money::ZERO))?;
    let year = Period { start: reference_epoch(), end: reference_epoch() + Duration::days(365) };
    for policy in [
        CostPolicy::Free,
        CostPolicy::FreeWithThreshold { threshold_units: 100, unit_price: Money::from_euros(8) },
        CostPolicy::FixedUnit { unit_price: Money::from_euros(8) },
    ] {
        let invoice = settle(&ledger, &year, &policy, "NAMUR");
        println!("{policy:?}: {} units, {}", invoice.units_billed, invoice.amount);
    }
    Ok(())
}
