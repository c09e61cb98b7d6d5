use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use minesentinel_core::exec::ExecMode;
use minesentinel_core::harness::{run_many, RunOptions, Scenario, Simulation};
use serde_json::json;

const TICKS: u64 = 300;

fn fleet(helmets: usize) -> Scenario {
    let zones: Vec<_> = (0..8)
        .map(|z| json!({ "zone_id": format!("z{z}"), "position": [z as f64 * 10.0, 0.0] }))
        .collect();
    let hs: Vec<_> = (0..helmets)
        .map(|i| {
            json!({ "helmet_id": format!("h{i:04}"), "zone_id": format!("z{}", i % 8),
                    "position": [(i % 8) as f64 * 10.0, 1.0] })
        })
        .collect();
    let events = json!([
        { "kind": { "type": "gas_leak", "gas": "co", "magnitude": 150.0, "rise_time_constant": 5.0 },
          "onset": 5000, "location": "z3" },
        { "kind": { "type": "noise_burst", "level": 95.0, "duration": 10.0 },
          "onset": 12000, "location": "z5" }
    ]);
    let v = json!({ "zones": zones, "helmets": hs, "events": events,
                    "config": { "horizon_ms": TICKS * 100 } });
    Scenario::from_json_str(&v.to_string()).expect("bench scenario is valid")
}

fn tick_loop(c: &mut Criterion) {
    let mut group = c.benchmark_group("tick_loop");
    group.sample_size(10);
    for helmets in [16, 128, 512] {
        let scenario = fleet(helmets);
        group.throughput(Throughput::Elements(helmets as u64 * TICKS));
        for (name, mode) in [
            ("sequential", ExecMode::Sequential),
            ("parallel", ExecMode::Parallel),
        ] {
            group.bench_with_input(BenchmarkId::new(name, helmets), &scenario, |b, s| {
                b.iter(|| {
                    let opts = RunOptions {
                        mode,
                        ..RunOptions::default()
                    };
                    let sim = Simulation::new(s, 42, opts).unwrap();
                    black_box(sim.run_to_end().log.len())
                })
            });
        }
    }
    group.finish();
}

fn seed_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("seed_sweep");
    group.sample_size(10);
    let scenario = fleet(16);
    let seeds: Vec<u64> = (0..16).collect();
    for (name, mode) in [
        ("sequential", ExecMode::Sequential),
        ("parallel", ExecMode::Parallel),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| black_box(run_many(&scenario, &seeds, mode).unwrap().len()))
        });
    }
    group.finish();
}

criterion_group!(benches, tick_loop, seed_sweep);
criterion_main!(benches);
