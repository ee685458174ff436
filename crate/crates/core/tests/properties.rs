//! Randomized invariants of the solver, mechanism and simulator.

use flexmarket::dp::{
    build_value_tables, feasible_service_set, feasible_variety_set, stage_value, vstar, ServiceVector, SolveOptions,
    SortedReportSummary, SupplyVector, ValueTables,
};
use flexmarket::market::{build_example_config, MarketConfig};
use flexmarket::mechanism::{interim_profile, InterimBackend, Mechanism, Report, ReportSet, Threshold};
use flexmarket::oracle::{brute_stage_value, check_monotonicity, random_instance, DEFAULT_MATRIX_BUDGET};
use flexmarket::simulator::Simulator;
use proptest::prelude::*;

fn solved(seed: u64) -> (MarketConfig, ValueTables) {
    let cfg = random_instance(seed, None).unwrap();
    let tables = build_value_tables(&cfg, &SolveOptions::exact()).unwrap();
    (cfg, tables)
}

fn small_example() -> (MarketConfig, ValueTables) {
    let cfg = build_example_config(&[2.0, 3.0, 4.0], 0.7, 3, 41).unwrap();
    let tables = build_value_tables(&cfg, &SolveOptions::exact()).unwrap();
    (cfg, tables)
}

/// Picks a period, a supply vector from that period's box and up to
/// `n_max` reports.
fn scenario(cfg: &MarketConfig, tables: &ValueTables, pick: &[u64], n_max: usize) -> (usize, SupplyVector, ReportSet) {
    let t = 1 + (pick[0] as usize % cfg.horizon());
    let boxed = tables.supply_box(t);
    let y = boxed.vector(pick[1] as usize % boxed.len());
    let n = pick[2] as usize % (n_max + 1);
    let g = cfg.grid().len();
    let k = cfg.varieties();
    let reports = (0..n)
        .map(|m| Report::at_index(cfg, pick[3 + 2 * m] as usize % g, 1 + pick[4 + 2 * m] as usize % k, m + 1).unwrap())
        .collect();
    (t, y, ReportSet::new(cfg, reports).unwrap())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn service_and_variety_sets_are_consistent(counts in prop::collection::vec(0u32..3, 1..4), ys in prop::collection::vec(0u32..3, 3)) {
        let k = counts.len();
        let y = SupplyVector(ys[..k].to_vec());
        let services = feasible_service_set(&counts, &y);
        prop_assert!(services.iter().any(|u| u.iter().all(|&x| x == 0)));
        for u in &services {
            prop_assert!(u.iter().zip(&counts).all(|(a, b)| a <= b));
            let varieties = feasible_variety_set(u, &y);
            prop_assert!(!varieties.is_empty());
            let star = vstar(u, &y).unwrap();
            prop_assert!(varieties.contains(&star));
            for v in &varieties {
                prop_assert_eq!(v.total(), u.total());
                prop_assert!(v.iter().zip(y.iter()).all(|(a, b)| a <= b));
            }
        }
    }

    #[test]
    fn simplified_stage_equals_brute_force(seed in 0u64..10_000, pick in prop::collection::vec(any::<u64>(), 9)) {
        let (cfg, tables) = solved(seed);
        let (t, y, reports) = scenario(&cfg, &tables, &pick, 3);
        let pairs: Vec<(usize, f64)> = reports
            .reports()
            .iter()
            .map(|r| (r.flexibility, cfg.virtual_value_at(t, r.valuation_index, r.flexibility)))
            .collect();
        let summary = SortedReportSummary::from_pairs(cfg.varieties(), pairs.iter().copied());
        let fast = stage_value(&summary, &y, |m| tables.continuation(t, m)).value;
        let slow = brute_stage_value(&pairs, &y, |m: &[u32]| tables.continuation(t, m), DEFAULT_MATRIX_BUDGET).unwrap();
        prop_assert!(close(fast, slow), "t {} y {:?}: {} vs {}", t, y, fast, slow);
    }

    #[test]
    fn vstar_maximizes_continuation(seed in 0u64..10_000, pick in prop::collection::vec(any::<u64>(), 3)) {
        let (cfg, tables) = solved(seed);
        let t = 1 + (pick[0] as usize % cfg.horizon());
        let boxed = tables.supply_box(t);
        let y = boxed.vector(pick[1] as usize % boxed.len());
        let services = feasible_service_set(&vec![2; cfg.varieties()], &y);
        let u: &ServiceVector = &services[pick[2] as usize % services.len()];
        let star = vstar(u, &y).unwrap();
        let at = |v: &[u32]| tables.continuation(t, &y.checked_remove(v).unwrap());
        let best = at(&star);
        for v in feasible_variety_set(u, &y) {
            prop_assert!(at(&v) <= best + 1e-12 * (1.0 + best.abs()));
        }
    }

    #[test]
    fn solved_tables_are_monotone(seed in 0u64..10_000) {
        let (_, tables) = solved(seed);
        let violations = check_monotonicity(&tables);
        prop_assert!(violations.is_empty(), "{:?}", violations);
    }

    #[test]
    fn served_iff_report_reaches_threshold(pick in prop::collection::vec(any::<u64>(), 9), focal in any::<u64>()) {
        let (cfg, tables) = small_example();
        let mech = Mechanism::new(&cfg, &tables).unwrap();
        let (t, y, reports) = scenario(&cfg, &tables, &pick, 3);
        let n = reports.len();
        prop_assume!(n > 0);
        let i = focal as usize % n;
        let me = reports.reports()[i];
        let others: Vec<Report> = reports.reports().iter().enumerate().filter(|(m, _)| *m != i).map(|(_, r)| *r).collect();
        let th = mech.payment_threshold(t, &others, i + 1, me.flexibility, &y).unwrap();
        for r in 0..cfg.grid().len() {
            let mut rs = reports.reports().to_vec();
            rs[i] = Report::at_index(&cfg, r, me.flexibility, i + 1).unwrap();
            let rs = ReportSet::new(&cfg, rs).unwrap();
            let out = mech.run_period(t, &rs, &y).unwrap();
            let served = out.allocation.variety_of(i).is_some();
            prop_assert_eq!(served, th.serves(r), "report {} threshold {:?}", r, th);
            if served {
                prop_assert_eq!(out.payments[i], th.price().unwrap());
                prop_assert!(out.payments[i] <= cfg.grid().point(r));
            } else {
                prop_assert_eq!(out.payments[i], 0.0);
            }
        }
        if let Threshold::Price { index, .. } = th {
            prop_assert!(index >= cfg.reserve_index(t, me.flexibility).unwrap());
        }
    }

    #[test]
    fn allocations_fit_supply(pick in prop::collection::vec(any::<u64>(), 11)) {
        let (cfg, tables) = small_example();
        let mech = Mechanism::new(&cfg, &tables).unwrap();
        let (t, y, reports) = scenario(&cfg, &tables, &pick, 4);
        let (alloc, u, v) = mech.allocate(t, &reports, &y).unwrap();
        let levels: Vec<usize> = reports.reports().iter().map(|r| r.flexibility).collect();
        prop_assert!(alloc.is_feasible(&levels, &y));
        prop_assert_eq!(alloc.column_sums(), v.0.clone());
        prop_assert_eq!(alloc.service_counts(&levels), u.clone());
        for (m, r) in reports.reports().iter().enumerate() {
            if let Some(j) = alloc.variety_of(m) {
                prop_assert!(j <= r.flexibility);
                prop_assert!(cfg.virtual_value_at(t, r.valuation_index, r.flexibility) >= 0.0);
            }
        }
    }

    #[test]
    fn interim_allocation_is_monotone(seed in 0u64..10_000, pick in prop::collection::vec(any::<u64>(), 3)) {
        let (cfg, tables) = solved(seed);
        let mech = Mechanism::new(&cfg, &tables).unwrap();
        let t = 1 + (pick[0] as usize % cfg.horizon());
        let c = 1 + (pick[1] as usize % cfg.varieties());
        let n_max = cfg.arrivals().max_arrivals(t);
        prop_assume!(n_max > 0);
        let n = 1 + (pick[2] as usize % n_max);
        let profile = interim_profile(&mech, t, n, 1, c, InterimBackend::Exact { budget: 1_000_000 }).unwrap();
        prop_assert_eq!(profile[0].p, 0.0);
        for w in profile.windows(2) {
            prop_assert!(w[1].q >= w[0].q - 1e-12, "{:?}", w);
        }
        for pt in &profile {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pt.q));
            // expected utility of truth-telling is non-negative
            prop_assert!(pt.valuation * pt.q - pt.p >= -1e-12);
        }
    }

    #[test]
    fn episodes_conserve_goods(seed in any::<u64>(), inst in 0u64..10_000) {
        let (cfg, tables) = solved(inst);
        let sim = Simulator::new(&cfg, &tables).unwrap();
        let trace = sim.sample_episode(seed).unwrap();
        prop_assert_eq!(&trace, &sim.sample_episode(seed).unwrap());
        let k = cfg.varieties();
        let mut supplied = vec![0u32; k];
        let mut used = vec![0u32; k];
        let mut revenue = 0.0;
        for p in &trace.periods {
            for (s, x) in supplied.iter_mut().zip(&p.supply_arrivals) {
                *s += x;
            }
            for (j, n) in p.outcome.v_star.iter().enumerate() {
                used[j] += n;
            }
            prop_assert!(used.iter().zip(&supplied).all(|(a, b)| a <= b));
            for (m, r) in p.reports.reports().iter().enumerate() {
                prop_assert!(p.outcome.payments[m] <= r.valuation);
                revenue += p.outcome.payments[m];
            }
        }
        prop_assert!((revenue - trace.revenue).abs() < 1e-9);
    }
}
