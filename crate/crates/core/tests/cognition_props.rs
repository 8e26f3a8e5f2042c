mod common;

use civitas_core::cognition::{repair_plan, validate_plan, ActivityPlan, PathSpec, PlanEntry, ValidationContext, ViolationCode};
use civitas_core::net::{NetworkGraph, TravelMode};
use civitas_core::ClockTime;
use common::{driver, plan_corpus};
use proptest::prelude::*;

#[test]
fn corpus_yields_coded_violations() {
    let g = NetworkGraph::nguyen_dupuis();
    let a = driver("Midtown apartment");
    let ctx = ValidationContext::new(&g, 1);
    for (name, plan, want) in plan_corpus() {
        let r = validate_plan(&plan, &a, &ctx);
        match want {
            None => assert!(r.is_valid(), "{name}: {:?}", r.violations),
            Some(code) => assert!(r.has(code), "{name}: wanted {code}, got {:?}", r.violations),
        }
    }
}

#[test]
fn only_the_fixture_violation_is_raised() {
    let g = NetworkGraph::nguyen_dupuis();
    let a = driver("Midtown apartment");
    let ctx = ValidationContext::new(&g, 1);
    // Dropping the home return also strands the car, so only these two are exclusive.
    for (name, plan, want) in plan_corpus().into_iter().filter(|c| matches!(c.0, "clean" | "invalid path")) {
        let codes: Vec<ViolationCode> = validate_plan(&plan, &a, &ctx).violations.iter().map(|v| v.code).collect();
        assert!(codes.iter().all(|c| Some(*c) == want), "{name}: {codes:?}");
    }
}

#[test]
fn lunch_in_the_evening_is_only_a_warning() {
    let g = NetworkGraph::nguyen_dupuis();
    let plan = ActivityPlan::from_json(
        r#"[["Midtown apartment", "06:00", "30", "none", "none", "Morning routine."],
        ["Food court", "19:00", "none", "drive", "shortest", "Lunch at the food court."],
        ["Midtown apartment", "20:30", "none", "drive", "shortest", "Home."]]"#,
    )
    .unwrap();
    let r = validate_plan(&plan, &driver("Midtown apartment"), &ValidationContext::new(&g, 1));
    assert!(r.is_valid(), "{:?}", r.violations);
    assert!(!r.warnings.is_empty());
}

#[test]
fn unknown_facility_is_coded() {
    let g = NetworkGraph::nguyen_dupuis();
    let mut plan = ActivityPlan::from_json(common::REASONING_PLAN).unwrap();
    plan.entries[2].facility = "Aquarium".into();
    let r = validate_plan(&plan, &driver("Midtown apartment"), &ValidationContext::new(&g, 1));
    assert!(r.has(ViolationCode::UnknownFacility), "{:?}", r.violations);
}

#[test]
fn plans_round_trip_as_six_field_arrays() {
    for (name, plan, _) in plan_corpus() {
        let json = plan.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v.as_array().unwrap().iter().all(|e| e.as_array().unwrap().len() == 6), "{name}");
        assert_eq!(ActivityPlan::from_json(&json).unwrap(), plan, "{name}");
    }
}

fn arb_entry() -> impl Strategy<Value = PlanEntry> {
    let facilities = NetworkGraph::nguyen_dupuis().facilities().iter().map(|f| f.id.clone()).collect::<Vec<_>>();
    (
        proptest::sample::select(facilities),
        proptest::option::of(0u32..24 * 60),
        proptest::option::of(0u32..240),
        proptest::sample::select(vec![TravelMode::None, TravelMode::Drive, TravelMode::Transit]),
        proptest::sample::select(vec!["shortest", "none", "Ave_2", "Metro_1", "Ave_4_link_1, St_4_link_2"]),
    )
        .prop_map(|(f, dep, dur, mode, path)| PlanEntry::new(f, dep.map(|m| ClockTime::hm(m / 60, m % 60)), dur, mode, PathSpec::parse(path), "generated"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn repair_always_yields_a_valid_plan(
        entries in proptest::collection::vec(arb_entry(), 0..8),
        licensed in any::<bool>(),
        vehicles in 0u32..=2,
        claimed in 0u32..=2,
        now in 0u32..12 * 60,
    ) {
        let g = NetworkGraph::nguyen_dupuis();
        let mut a = driver("Midtown apartment");
        a.licensed_driver = licensed;
        let mut ctx = ValidationContext::new(&g, vehicles);
        ctx.vehicles_claimed = claimed;
        ctx.now = ClockTime::hm(now / 60, now % 60);
        let fixed = repair_plan(&ActivityPlan::new(entries), &a, &ctx);
        let r = validate_plan(&fixed, &a, &ctx);
        prop_assert!(r.is_valid(), "{:?}\n{}", r.violations, fixed.to_json());
    }

    #[test]
    fn unlicensed_drive_legs_are_flagged(idx in 1usize..5) {
        let g = NetworkGraph::nguyen_dupuis();
        let mut plan = ActivityPlan::from_json(common::REASONING_PLAN).unwrap();
        for e in plan.entries.iter_mut().skip(1) {
            e.mode = TravelMode::Transit;
            e.path = PathSpec::Shortest;
        }
        plan.entries[idx].mode = TravelMode::Drive;
        let mut a = driver("Midtown apartment");
        a.licensed_driver = false;
        prop_assert!(validate_plan(&plan, &a, &ValidationContext::new(&g, 1)).has(ViolationCode::UnlicensedDriver));
    }

    #[test]
    fn swapped_departures_are_nonmonotone(i in 1usize..4) {
        let g = NetworkGraph::nguyen_dupuis();
        let mut plan = ActivityPlan::from_json(common::REASONING_PLAN).unwrap();
        let (a, b) = (plan.entries[i].departure, plan.entries[i + 1].departure);
        plan.entries[i].departure = b;
        plan.entries[i + 1].departure = a;
        prop_assert!(validate_plan(&plan, &driver("Midtown apartment"), &ValidationContext::new(&g, 1)).has(ViolationCode::TimeNonmonotone));
    }
}
