//! Seeded multi-node simulation: a realistic mix, then a uniform load that
//! should spread evenly across lenders.

use interlend_core::ledger::CostPolicy;
use interlend_core::Money;
use interlend_node::sim::{run_simulation, Scenario};
use interlend_node::NodeError;

fn main() -> Result<(), NodeError> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let scenario = Scenario {
        cost_policy: CostPolicy::FreeWithThreshold { threshold_units: 10, unit_price: Money::from_euros(8) },
        ..Scenario::default()
    };
    let report = run_simulation(seed, 4, 300, &scenario)?;
    println!("seed {seed}: {}/{} requests finished, {} in flight", report.terminal, report.generated, report.in_flight);
    println!("statuses: {:?}", report.statuses);
    println!("unfulfilled because: {:?}", report.unfulfil_reasons);
    println!("messages: {:?}", report.messages);
    for node in &report.per_node {
        println!(
            "{}: lent {:>3} borrowed {:>3} fill rate {:>6} turnaround {:?} days, threshold invoices {}",
            node.id,
            node.lent_units,
            node.borrowed_units,
            node.fill_rate_of_decided.map_or("-".to_string(), |p| p.to_string()),
            node.avg_turnaround_days,
            node.settlements.get("THRESHOLD").map_or(Money::ZERO, |s| s.total),
        );
    }
    println!("network balanced: {}", report.balanced);

    let uniform = run_simulation(seed, 5, 250, &Scenario::uniform())?;
    for (borrower, spread) in uniform.assignment_spread() {
        println!("uniform load, {borrower} spread its requests across lenders within {spread}");
    }
    Ok(())
}
