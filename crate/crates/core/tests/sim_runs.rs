mod common;

use std::path::Path;
use std::sync::OnceLock;

use civitas_core::analysis::{
    compare_days, link_flow_report, parse_snapshot_time, snapshot_at, snapshot_export, AnalysisError, CompareOptions, Metric, RunData,
    SnapshotFormat, SnapshotRequest,
};
use civitas_core::net::{CongestionLevel, TravelMode};
use civitas_core::sim::{Checkpoint, SimConfig, World};
use civitas_core::ClockTime;

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn small(agents: usize, days: u32, seed: u64) -> SimConfig {
    let mut c = SimConfig::new(common::t0().date(), days, seed);
    c.agent_limit = Some(agents);
    c
}

/// One full baseline day of the bundled population, shared across tests.
fn monday() -> &'static RunData {
    static RUN: OnceLock<RunData> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut c = SimConfig::load(&configs().join("baseline.toml")).unwrap();
        c.days = 1;
        let mut w = World::new(c).unwrap();
        w.run().unwrap();
        RunData::from_world(&w)
    })
}

#[test]
fn bundled_configs_load_and_validate() {
    for name in ["baseline.toml", "incident.toml", "remote.toml"] {
        let c = SimConfig::load(&configs().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let inc = SimConfig::load(&configs().join("incident.toml")).unwrap();
    assert_eq!(inc.events.len(), 1);
    assert!(inc.scenario.is_none());
    assert!(SimConfig::from_toml("start_date = \"2025-03-03\"\nbogus = 1").is_err());
}

#[test]
fn same_seed_same_hash() {
    let run = |seed| {
        let mut w = World::new(small(8, 1, seed)).unwrap();
        w.run().unwrap();
        w.state.hash()
    };
    assert_eq!(run(7), run(7));
}

#[test]
fn restore_then_continue_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let mut full = World::new(small(8, 2, 3)).unwrap();
    full.run().unwrap();

    let mut first = World::new(small(8, 2, 3)).unwrap();
    first.run_until(1440 + 7 * 60 + 13).unwrap();
    let path = dir.path().join("cp.json");
    first.checkpoint().save(&path).unwrap();
    drop(first);
    let mut resumed = World::restore(Checkpoint::load(&path).unwrap()).unwrap();
    resumed.run().unwrap();
    assert_eq!(resumed.state.hash(), full.state.hash());
    assert_eq!(resumed.log(), full.log());
}

#[test]
fn tampered_checkpoint_is_rejected() {
    let mut w = World::new(small(2, 1, 1)).unwrap();
    w.run_until(30).unwrap();
    let mut cp = w.checkpoint();
    cp.state.tick += 1;
    assert!(World::restore(cp).is_err());
    let mut cp = w.checkpoint();
    cp.config.seed += 1;
    assert!(World::restore(cp).is_err());
}

#[test]
fn logs_written_to_disk_read_back_equal() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = World::new(small(6, 1, 5)).unwrap();
    w.set_out_dir(Some(dir.path().to_path_buf()));
    w.run().unwrap();
    let run = RunData::load(dir.path()).unwrap();
    assert_eq!(&run.log, w.log());
    assert_eq!(run.info.final_hash.as_deref(), Some(w.state.hash().as_str()));
    assert!(matches!(RunData::load(&dir.path().join("nope")), Err(AnalysisError::MissingRun(_))));
}

#[test]
fn link_entries_match_trip_paths() {
    let run = monday();
    let entered: usize = run.log.link_entries().count();
    let walked: usize = run.log.trips.iter().map(|t| t.links().count()).sum();
    assert_eq!(entered, walked);
    let total: usize = run.graph.links().iter().map(|l| link_flow_report(&run.log, &run.graph, &l.id, 0).unwrap().entries).sum();
    assert_eq!(total, entered);
}

#[test]
fn every_agent_ends_the_day_at_home() {
    let mut w = World::new(small(20, 1, 9)).unwrap();
    w.run().unwrap();
    for a in &w.state.agents {
        assert_eq!(a.rt.facility(), Some(a.profile.home_facility.as_str()), "{}", a.profile.name);
    }
}

#[test]
fn roomy_roads_have_no_drive_delay() {
    let mut c = small(30, 1, 11);
    c.road_capacity = Some(1000);
    let mut w = World::new(c).unwrap();
    w.run().unwrap();
    let drives: Vec<_> = w.log().trips.iter().filter(|t| t.mode == TravelMode::Drive && t.arrive.is_some()).collect();
    assert!(!drives.is_empty());
    for t in drives {
        assert_eq!(t.delay, Some(0), "{t:?}");
    }
}

#[test]
fn snapshots() {
    let run = monday();
    let night = snapshot_at(run, 0, ClockTime::hm(3, 0)).unwrap();
    assert_eq!(night.len(), run.graph.links().len());
    assert!(night.iter().all(|s| s.level == CongestionLevel::Free && s.occupancy == 0));
    let peak = snapshot_at(run, 0, ClockTime::hm(7, 30)).unwrap();
    assert!(peak.iter().any(|s| s.level != CongestionLevel::Free), "no congestion at 07:30");
    assert!(matches!(parse_snapshot_time("25:00"), Err(AnalysisError::TimeOutOfRange(_))));
    assert!(matches!(parse_snapshot_time("24:00"), Err(AnalysisError::TimeOutOfRange(_))));
    assert!(matches!(snapshot_at(run, 1, ClockTime::hm(7, 30)), Err(AnalysisError::DayOutOfRange { .. })));

    let dir = tempfile::tempdir().unwrap();
    let req = SnapshotRequest::new(vec![], &["07:30", "08:00"], SnapshotFormat::Csv).unwrap();
    let files = snapshot_export(run, &req, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let rows = csv::Reader::from_path(&files[0]).unwrap().records().count();
    assert_eq!(rows, run.graph.links().len());
    let req = SnapshotRequest::new(vec![0], &["07:30"], SnapshotFormat::Png).unwrap();
    let png = snapshot_export(run, &req, dir.path()).unwrap();
    assert!(image::open(&png[0]).is_ok());
}

#[test]
fn report_errors() {
    let run = monday();
    assert!(matches!("mean_delay".parse::<Metric>(), Err(AnalysisError::UnknownMetric(_))));
    let e = link_flow_report(&run.log, &run.graph, "Ave_9_link_9", 0).unwrap_err();
    assert!(e.to_string().contains("Ave_2_link_2"));
    let s = compare_days(run, Metric::MeanArrivalDelay, &CompareOptions::default());
    assert_eq!(s.values.len(), 1);
    assert!(s.values[0].unwrap() >= 0.0);
}

#[test]
fn unused_links_report_zero() {
    let mut w = World::new(small(1, 1, 4)).unwrap();
    w.run().unwrap();
    let run = RunData::from_world(&w);
    let vols = civitas_core::analysis::daily_link_volumes(&run.log, &run.graph, 0);
    let unused: Vec<&String> = vols.iter().filter(|(_, n)| **n == 0).map(|(l, _)| l).collect();
    assert!(!unused.is_empty());
    for l in unused {
        assert_eq!(link_flow_report(&run.log, &run.graph, l, 0).unwrap().entries, 0);
    }
}
