use interlend_core::ledger::CostPolicy;
use interlend_core::money::Money;
use interlend_node::sim::{run_simulation, Scenario};
use interlend_node::NodeError;

#[test]
fn equal_seeds_give_identical_reports() {
    let a = run_simulation(42, 3, 200, &Scenario::default()).unwrap().to_json();
    let b = run_simulation(42, 3, 200, &Scenario::default()).unwrap().to_json();
    assert_eq!(a, b);
    let c = run_simulation(43, 3, 200, &Scenario::default()).unwrap().to_json();
    assert_ne!(a, c);
}

#[test]
fn every_request_is_accounted_for() {
    let r = run_simulation(7, 4, 120, &Scenario::default()).unwrap();
    assert_eq!(r.generated, 120);
    assert_eq!(r.terminal + r.in_flight, r.generated);
    assert_eq!(r.statuses.values().sum::<usize>(), r.generated);
    assert!(r.balanced);
    assert_eq!(r.messages.undelivered, 0);
    for n in &r.per_node {
        assert!(n.stats.aggregate.is_consistent());
        assert!(n.settlements.contains_key("FREE") && n.settlements.contains_key("THRESHOLD") && n.settlements.contains_key("FIXED"));
    }
}

#[test]
fn free_policy_gives_zero_invoices() {
    let scenario = Scenario { cost_policy: CostPolicy::Free, ..Scenario::default() };
    let r = run_simulation(11, 3, 150, &scenario).unwrap();
    assert!(r.network_lent > 0);
    for n in &r.per_node {
        let free = &n.settlements["FREE"];
        assert_eq!(free.total, Money::ZERO);
        assert!(free.invoices.iter().all(|i| i.amount == Money::ZERO));
    }
}

#[test]
fn uniform_scenario_spreads_assignments_evenly() {
    let r = run_simulation(5, 5, 200, &Scenario::uniform()).unwrap();
    // Recount from the per-lender assignment tallies.
    for n in &r.per_node {
        let counts: Vec<u32> = r.per_node.iter().filter(|m| m.id != n.id).map(|m| n.assignments.get(&m.id).copied().unwrap_or(0)).collect();
        let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
        assert!(spread <= 1, "{} assigned {counts:?}", n.id);
    }
    assert_eq!(r.assignment_spread().values().max(), Some(&0));
}

#[test]
fn fewer_than_two_nodes_is_invalid() {
    assert!(matches!(run_simulation(1, 1, 10, &Scenario::default()), Err(NodeError::ConfigInvalid(_))));
    let bad = Scenario { accept_probability: 1.5, ..Scenario::default() };
    assert!(matches!(run_simulation(1, 3, 10, &bad), Err(NodeError::ConfigInvalid(_))));
}

#[test]
fn scenario_files_fill_in_defaults() {
    let s: Scenario = serde_json::from_str(r#"{ "horizon_days": 60, "cost_policy": { "policy": "FIXED_UNIT", "unit_price": "8.00" } }"#).unwrap();
    assert_eq!(s.horizon_days, 60);
    assert_eq!(s.loan_days, Scenario::default().loan_days);
    assert_eq!(s.cost_policy, CostPolicy::FixedUnit { unit_price: Money::from_euros(8) });
}
