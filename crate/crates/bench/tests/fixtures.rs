use smartfab_bench::{plant, plant_topics, signal};
use smartfab_core::analytics::detect_anomaly;
use smartfab_core::scenario::{run_scenario, NullSink, RunMode};
use smartfab_core::transport::validate_topic;

#[test]
fn plant_fixture_runs() {
    let s = plant(4, 200);
    assert_eq!(s.machines.len(), 4);
    assert_eq!(s.machines[1].gateway, "gw2");
    let summary = run_scenario(s, RunMode::Optimized, &[], &mut NullSink).unwrap();
    assert_eq!(summary.header.ticks, 200);
}

#[test]
fn topics_are_valid() {
    for t in plant_topics() {
        validate_topic(&t).unwrap();
    }
}

#[test]
fn signal_has_spikes() {
    let s = signal(5000);
    assert!(!detect_anomaly(&"s".into(), &s, 300, 4.0).is_empty());
}
