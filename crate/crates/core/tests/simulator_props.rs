use chainfis::dataset::{load_dataset, reference_indicators, DatasetError};
use chainfis::ledger::{verify_chain, EventKind, LedgerChain};
use chainfis::simulator::{
    run_policy, run_simulation, step_day, LedgerSession, MetricsFile, NodeRole, Policy, Scenario,
    SupplyChainState,
};
use proptest::prelude::*;

fn small(seed: u64) -> Scenario {
    let mut s = Scenario::reference();
    s.seed = seed;
    s.replications = 4;
    s
}

#[test]
fn same_seed_same_outputs() {
    let s = small(42);
    let (a, chain_a) = run_simulation(&s).unwrap();
    let (b, chain_b) = run_simulation(&s).unwrap();
    assert_eq!(a.metrics_file().to_csv(), b.metrics_file().to_csv());
    assert_eq!(chain_a.to_jsonl(), chain_b.to_jsonl());
}

#[test]
fn policies_see_identical_demand() {
    let (report, _) = run_simulation(&small(3)).unwrap();
    assert_eq!(report.baseline_run.demand_log, report.anfis_run.demand_log);
    assert_eq!(report.anfis_run.demand_log, small(3).demand_streams(1.0));
}

#[test]
fn every_committed_reorder_is_on_chain() {
    let (report, chain) = run_simulation(&small(8)).unwrap();
    let committed: usize = report.anfis_run.orders.iter().map(Vec::len).sum();
    assert!(committed > 0);
    assert_eq!(chain.count_events(EventKind::Reorder), committed);
    assert!(verify_chain(&chain).is_ok());
    let k = report.scenario.ledger.k;
    for block in &chain.blocks()[1 + report.scenario.ledger.n..] {
        for tx in &block.transactions {
            assert!(tx.signatures.len() >= k);
        }
    }
}

#[test]
fn reports_eight_perturbed_states() {
    let (report, _) = run_simulation(&small(1)).unwrap();
    assert_eq!(report.perturbed.len(), 8);
    for z in &report.perturbed {
        let total: f64 = z.metrics.iter().sum();
        assert!((total - 1.0).abs() < 1e-12 || total == 0.0);
    }
}

#[test]
fn reference_direction_holds() {
    let (report, _) = run_simulation(&Scenario::reference()).unwrap();
    assert!(report.anfis.avg_order_quantity > report.baseline.avg_order_quantity);
    assert!(report.anfis.avg_reorder_interval_days < report.baseline.avg_reorder_interval_days);
    assert!((report.baseline.avg_reorder_interval_days - 5.0).abs() < 1e-12);
    assert!((report.baseline.avg_order_quantity - 6.0).abs() < 1e-12);
}

#[test]
fn metrics_file_has_table_sections() {
    let (report, _) = run_simulation(&small(42)).unwrap();
    let file = MetricsFile::from_csv(&report.metrics_file().to_csv()).unwrap();
    for section in [
        "run",
        "comparison",
        "indicators",
        "perturbed",
        "economics",
        "daily",
    ] {
        assert!(file.section(section).next().is_some(), "{section}");
    }
    let first: Vec<&str> = file
        .section("indicators")
        .map(|r| r.row.as_str())
        .take(2)
        .collect();
    assert_eq!(first, ["quality_p1", "quality_p1"]);
    assert!(matches!(
        MetricsFile::from_csv("section,row,column,value\ncomparison,a,b,zz\n"),
        Err(chainfis::simulator::SimulationError::Metrics { line: 2, .. })
    ));
}

#[test]
fn reference_table_loads() {
    let rows = reference_indicators();
    assert_eq!(rows.len(), 9);
    assert!(matches!(
        load_dataset("".as_bytes()),
        Err(DatasetError::Empty)
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flows_balance_and_stock_stays_physical(
        demand in prop::collection::vec(prop_oneof![3 => Just(0u64), 1 => 1u64..30], 1..40),
        anfis in any::<bool>(),
    ) {
        let mut s = Scenario::reference();
        s.horizon_days = demand.len() as u32;
        let signers = s.signers();
        let mut chain = LedgerChain::new(s.epoch);
        for p in &signers {
            chain.register_signer(p).unwrap();
        }
        let policy = if anfis { Policy::Anfis } else { Policy::Baseline };
        let mut session = LedgerSession { chain: &mut chain, signers: &signers, threshold: s.ledger.k };
        let mut state = SupplyChainState::new(&s, 0).unwrap();
        let mut committed = 0;
        for (d, &units) in demand.iter().enumerate() {
            let day = d as u32 + 1;
            let before = state.node(NodeRole::Retailer).inventory;
            let arriving: u64 = state
                .node(NodeRole::Retailer)
                .pipeline
                .iter()
                .filter(|p| p.arrival_day <= day)
                .map(|p| p.quantity)
                .sum();
            let out = step_day(&mut state, day, units, policy, &s, &mut session).unwrap();
            state.flow_balance().unwrap();
            prop_assert_eq!(out.sales + out.lost, units);
            prop_assert_eq!(state.node(NodeRole::Retailer).inventory, before + arriving - out.sales);
            if !anfis {
                prop_assert_eq!(out.order.is_some(), day.is_multiple_of(5));
            }
            committed += usize::from(out.order.is_some());
            for node in &state.nodes {
                prop_assert!(node.pipeline.iter().all(|p| p.arrival_day > day));
            }
        }
        if anfis {
            prop_assert_eq!(chain.count_events(EventKind::Reorder), committed);
        }
        prop_assert!(verify_chain(&chain).is_ok());
    }

    #[test]
    fn baseline_run_never_touches_ledger(seed in 0u64..1000) {
        let s = small(seed);
        let signers = s.signers();
        let mut chain = LedgerChain::new(s.epoch);
        for p in &signers {
            chain.register_signer(p).unwrap();
        }
        let height = chain.height();
        run_policy(&s, Policy::Baseline, &s.demand_streams(1.0), &mut chain, &signers).unwrap();
        prop_assert_eq!(chain.height(), height);
    }
}
