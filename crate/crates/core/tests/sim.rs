use std::collections::HashSet;

use agmule_core::gateway::{read_uplink_csv, Route, Waypoint};
use agmule_core::sim::{
    compute_pickup_zones, distance, run, whatif_route, Scenario, Simulation, DAY_S,
};
use proptest::prelude::*;

const FIELD: &str = r#"
[field]
polygon = [[0, 0], [2000, 0], [2000, 2000], [0, 2000]]
"#;

fn scenario(body: &str) -> Scenario {
    Scenario::from_toml_str(&format!("schema_version = 1\nrng_seed = 11\n{body}\n{FIELD}")).unwrap()
}

fn one_node(extra: &str) -> String {
    format!("duration_days = 1\n{extra}\n[[nodes]]\nid = 1\nposition = [10, 10]\nsoil = \"osco\"\n")
}

#[test]
fn always_reachable_node_delivers_everything_promptly() {
    let s = scenario(&format!(
        "{}\n[weather]\nconstant_klux = 80\n[[routes]]\nwaypoints = [[0, 0, 0], [0, 0, 86400]]\n",
        one_node("")
    ));
    let mut sim = Simulation::new(s).unwrap();
    sim.run_to_end();
    let m = sim.metrics();
    let n = m.node(1).unwrap();
    assert_eq!(n.generated, 72);
    assert_eq!(n.completeness, 1.0);
    assert_eq!(n.path_counts[&'A'], 72);
    assert!(sim.latencies(1).unwrap().iter().all(|l| (0.0..=1200.0).contains(l)));
    assert!(n.conserves_records());
}

#[test]
fn unreachable_node_buffers_every_cycle() {
    let s = scenario(&one_node(""));
    let out = run(s).unwrap();
    let n = out.metrics.node(1).unwrap();
    assert_eq!(n.completeness, 0.0);
    assert_eq!(n.delivered, 0);
    assert_eq!(n.buffered, n.generated);
    assert_eq!(n.generated, 72);
    assert_eq!(n.max_buffer_occupancy, 72);
}

#[test]
fn daily_visit_buffers_about_a_day_then_clears() {
    let s = scenario(
        "duration_days = 4\n[[routes]]\nwaypoints = [[0, 0, 36000], [0, 0, 37200]]\n\
         [[nodes]]\nid = 1\nposition = [10, 10]\nsoil = \"osco\"\n",
    );
    let mut sim = Simulation::new(s).unwrap();
    sim.run_to_end();
    let n = sim.metrics().node(1).unwrap().clone();
    assert!((70..=75).contains(&n.max_buffer_occupancy), "{}", n.max_buffer_occupancy);
    let cleared = sim
        .trace_lines()
        .iter()
        .filter(|l| l.contains("\"path\":\"A\""))
        .all(|l| l.contains("\"buffered\":0"));
    assert!(cleared);
    assert_eq!(n.path_counts[&'A'], 4);
}

#[test]
fn all_dark_node_dies_after_1464_wakes() {
    let body = one_node("").replace("duration_days = 1", "duration_days = 25");
    let s = scenario(&format!("{body}[weather]\nconstant_klux = 0\n"));
    let out = run(s).unwrap();
    let n = out.metrics.node(1).unwrap();
    assert_eq!(n.generated, 1464);
    assert_eq!(n.path_counts[&'F'], 1464);
    assert_eq!(n.dead_wakes, 25 * 72 - 1464);
    assert!(n.min_capacitor_v >= 3.3);
}

fn demo() -> Scenario {
    Scenario::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/demo.toml")).unwrap()
}

#[test]
fn demo_runs_are_reproducible() {
    let a = run(demo()).unwrap();
    let b = run(demo()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.metrics.trace_hash, b.metrics.trace_hash);
    let mut other = demo();
    other.rng_seed += 1;
    assert_ne!(run(other).unwrap().metrics.trace_hash, a.metrics.trace_hash);
}

#[test]
fn demo_uplink_round_trips_without_duplicates() {
    let out = run(demo()).unwrap();
    let log = read_uplink_csv(out.uplink_csv.as_bytes()).unwrap();
    let keys: HashSet<_> = log.iter().map(|e| (e.node_id, e.record.cycle_index)).collect();
    assert_eq!(keys.len(), log.len());
    for n in &out.metrics.nodes {
        assert!(n.conserves_records());
        assert_eq!(n.delivered, n.acknowledged);
        assert!(n.energy_balance_error_j.abs() < 1e-9);
    }
    assert_eq!(out.metrics.recency_timeline.len(), 7);
}

#[test]
fn lossy_links_retransmit_without_duplicating() {
    let mut s = demo();
    s.nodes[0].position = [300.0, 250.0];
    s.nodes[0].antenna = agmule_core::sim::AntennaPlacement::InCanopy;
    s.link.canopy_range_m = 400.0;
    s.link.rolloff_width_m = 300.0;
    let mut sim = Simulation::new(s).unwrap();
    sim.run_to_end();
    let m = sim.metrics();
    let n = m.node(1).unwrap();
    assert!(n.path_counts[&'C'] > 0, "{:?}", n.path_counts);
    assert!(n.conserves_records());
    assert!(n.delivered >= n.acknowledged);

    let mut gw = sim.gateway().clone();
    let before = gw.uplink_log().to_vec();
    for id in sim.node_ids() {
        let batch: Vec<_> = before.iter().filter(|e| e.node_id == id).map(|e| e.record).collect();
        assert_eq!(gw.ingest_records(id, &batch, sim.end_s()).new_records, 0);
    }
    assert_eq!(gw.uplink_log(), before.as_slice());
}

#[test]
fn stepping_matches_a_single_run() {
    let whole = run(demo()).unwrap();
    let mut sim = Simulation::new(demo()).unwrap();
    while !sim.is_finished() {
        sim.advance(3571.0);
        assert!(sim.metrics().nodes.iter().all(|n| n.conserves_records()));
    }
    assert_eq!(sim.output(), whole);
}

#[test]
fn zone_examples() {
    let s = scenario(
        "duration_days = 1\n\
         [[roads]]\npoints = [[0, 0], [2000, 0]]\n\
         [[roads]]\npoints = [[0, 1000], [600, 1000]]\n\
         [[nodes]]\nid = 1\nposition = [500, 100]\nsoil = \"osco\"\n\
         [[nodes]]\nid = 2\nposition = [1000, 300]\nsoil = \"catlin\"\nantenna = \"in_canopy\"\n",
    );
    let zones = compute_pickup_zones(&s);
    let z1 = &zones[0];
    assert_eq!(z1.dwell_minutes, 20.0);
    assert_eq!(z1.segments.len(), 2);
    assert!(z1.segments[0].length_m > 1400.0);
    assert!(zones[1].segments.is_empty());
}

fn visit(x: f64, y: f64, start: f64, dwell: f64) -> Route {
    Route {
        waypoints: vec![
            Waypoint { x_m: x, y_m: y, t_s: start },
            Waypoint { x_m: x, y_m: y, t_s: start + dwell },
        ],
        looped: false,
    }
}

fn no_routes(mut s: Scenario) -> Scenario {
    s.routes.clear();
    s.duration_days = 3.0;
    s
}

#[test]
fn whatif_examples() {
    let s = no_routes(demo());
    let sim = Simulation::new(s).unwrap();
    let through = whatif_route(&sim, &visit(300.0, 0.0, DAY_S + 10.0 * 3600.0, 1500.0)).unwrap();
    assert!(through.iter().all(|p| p.will_contact), "{through:?}");
    assert!(through.iter().all(|p| p.required_dwell_minutes == Some(0.0)));

    let far = whatif_route(&sim, &visit(300.0, 2500.0, DAY_S + 10.0 * 3600.0, 1500.0)).unwrap();
    let node2 = far.iter().find(|p| p.node_id == 2).unwrap();
    assert!(!node2.will_contact);
    assert_eq!(node2.required_dwell_minutes, None);

    let empty = whatif_route(&sim, &Route { waypoints: vec![], looped: false }).unwrap();
    assert!(empty.iter().all(|p| !p.will_contact));

    let bad = Route {
        waypoints: vec![Waypoint { x_m: 0.0, y_m: 0.0, t_s: 10.0 }, Waypoint { x_m: 0.0, y_m: 0.0, t_s: 5.0 }],
        looped: false,
    };
    assert!(whatif_route(&sim, &bad).is_err());
}

#[test]
fn whatif_leaves_state_alone() {
    let mut sim = Simulation::new(no_routes(demo())).unwrap();
    sim.step_until(DAY_S / 2.0);
    let before = sim.output();
    whatif_route(&sim, &visit(300.0, 0.0, DAY_S, 3600.0)).unwrap();
    assert_eq!(sim.output(), before);
}

fn assert_matches_run(base: &Scenario, route: &Route, from_s: f64) {
    let mut probe = Simulation::with_routes(base.clone(), vec![route.clone()]).unwrap();
    probe.step_until(from_s);
    let predicted = whatif_route(&probe, route).unwrap();
    let contacts_before: Vec<_> = probe.metrics().nodes.iter().map(|n| n.data_exchanges).collect();
    probe.run_to_end();
    let m = probe.metrics();
    for (i, p) in predicted.iter().enumerate() {
        let n = m.node(p.node_id).unwrap();
        let contacted = n.data_exchanges > contacts_before[i];
        assert_eq!(p.will_contact, contacted, "node {} route {route:?}", p.node_id);
        if from_s == 0.0 {
            assert_eq!(p.earliest_contact_time_s, n.first_contact_wake_s, "node {}", p.node_id);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn whatif_agrees_with_full_run(
        x in 0.0..600.0f64,
        y in -300.0..700.0f64,
        start_h in 0.0..60.0f64,
        dwell_min in 0.0..45.0f64,
    ) {
        let base = no_routes(demo());
        let route = visit(x, y, start_h * 3600.0, dwell_min * 60.0);
        assert_matches_run(&base, &route, 0.0);
    }

    #[test]
    fn whatif_agrees_mid_run(start_h in 20.0..60.0f64, dwell_min in 5.0..45.0f64, x in 0.0..600.0f64) {
        let base = no_routes(demo());
        let route = visit(x, 0.0, start_h * 3600.0, dwell_min * 60.0);
        assert_matches_run(&base, &route, 18.0 * 3600.0);
    }

    #[test]
    fn zone_points_are_in_range(
        nx in 0.0..2000.0f64, ny in 0.0..2000.0f64,
        ax in -500.0..2500.0f64, ay in -500.0..2500.0f64,
        bx in -500.0..2500.0f64, by in -500.0..2500.0f64,
        canopy in any::<bool>(),
    ) {
        let antenna = if canopy { "in_canopy" } else { "above_canopy" };
        let s = scenario(&format!(
            "duration_days = 1\n[[roads]]\npoints = [[{ax}, {ay}], [{bx}, {by}]]\n\
             [[nodes]]\nid = 1\nposition = [{nx}, {ny}]\nsoil = \"osco\"\nantenna = \"{antenna}\"\n"
        ));
        let zones = compute_pickup_zones(&s);
        for seg in &zones[0].segments {
            let mid = [(seg.from[0] + seg.to[0]) / 2.0, (seg.from[1] + seg.to[1]) / 2.0];
            for p in [seg.from, seg.to, mid] {
                let d = distance(p, [nx, ny]);
                prop_assert_eq!(s.link.success_probability(d, canopy), 1.0);
            }
        }
    }
}
