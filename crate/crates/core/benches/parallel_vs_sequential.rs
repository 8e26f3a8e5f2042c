use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use civitas_core::exec::{self, ExecMode};
use civitas_core::memory::{ConceptKind, HashEmbedder, MemoryStore, NewConcept, RetrievalQuery, RetrievalWeights, TimeScope};
use civitas_core::sim::{SimConfig, World};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 3, 3).unwrap()
}

/// Thirty minutes of the morning peak with the full population.
fn world_steps(c: &mut Criterion) {
    let mut g = c.benchmark_group("world_morning_peak");
    g.sample_size(10);
    for (name, mode) in MODES {
        let mut config = SimConfig::new(start(), 1, 42);
        config.exec = mode;
        let mut w = World::new(config).unwrap();
        w.run_until(7 * 60).unwrap();
        let cp = w.checkpoint();
        g.bench_function(name, |b| {
            b.iter_batched(
                || World::restore(cp.clone()).unwrap(),
                |mut w| {
                    for _ in 0..30 {
                        w.step().unwrap();
                    }
                    w
                },
                BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

/// Ranking every agent's store against the same query.
fn store_scoring(c: &mut Criterion) {
    let e = HashEmbedder::default();
    let t0 = start().and_hms_opt(0, 0, 0).unwrap();
    let words = ["metro", "delay", "morning", "office", "queue", "coffee", "late", "park"];
    let stores: Vec<MemoryStore> = (0..70)
        .map(|a| {
            let mut s = MemoryStore::new(format!("agent {a}"));
            for i in 0..300 {
                let text = format!("{} {} {}", words[i % 8], words[(i / 8 + a) % 8], words[(i * 7) % 8]);
                s.add(NewConcept::new(ConceptKind::Event, text, (i % 11) as f64 / 10.0, t0 + Duration::minutes(i as i64 * 13)), &e).unwrap();
            }
            s
        })
        .collect();
    let q = RetrievalQuery::from_text("morning metro delay", &e, BTreeSet::from(["Ave_2_link_2".to_string()]), TimeScope::empty(), t0 + Duration::days(3));
    let w = RetrievalWeights::default();
    let mut g = c.benchmark_group("store_scoring");
    for (name, mode) in MODES {
        g.bench_function(name, |b| b.iter(|| exec::map(mode, &stores, |s| s.peek(&q, &w))));
    }
    g.finish();
}

criterion_group!(benches, world_steps, store_scoring);
criterion_main!(benches);
