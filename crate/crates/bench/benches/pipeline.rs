use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use smartfab_bench::{plant_topics, signal};
use smartfab_core::analytics::AnomalyDetector;
use smartfab_core::transport::TopicFilter;

fn topics(c: &mut Criterion) {
    let topics = plant_topics();
    let filters: Vec<TopicFilter> = ["plant/+/energy", "plant/#", "plant/alerts/+", "plant/m03/fire", "#"]
        .iter()
        .map(|f| TopicFilter::parse(f).unwrap())
        .collect();
    let mut g = c.benchmark_group("topic");
    g.throughput(Throughput::Elements((topics.len() * filters.len()) as u64));
    g.bench_function("match", |b| {
        b.iter(|| {
            let mut hits = 0;
            for f in &filters {
                for t in &topics {
                    hits += f.matches(black_box(t)) as usize;
                }
            }
            hits
        })
    });
    g.finish();
}

fn detector(c: &mut Criterion) {
    let series = signal(100_000);
    let id = "m01-energy".into();
    let mut g = c.benchmark_group("anomaly");
    g.throughput(Throughput::Elements(series.len() as u64));
    for window in [30usize, 300] {
        g.bench_function(format!("window-{window}"), |b| {
            b.iter(|| {
                let mut det = AnomalyDetector::new(window, 4.0);
                series.iter().filter(|&&(t, v)| det.push(&id, t, v).is_some()).count()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, topics, detector);
criterion_main!(benches);
