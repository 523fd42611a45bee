//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use smartfab_core::scenario::Scenario;

/// A plant of `machines` default machines split over two gateways, running
/// for `ticks` ticks with every policy at its default.
pub fn plant(machines: usize, ticks: u64) -> Arc<Scenario> {
    let mut text = format!("[run]\nticks = {ticks}\nseed = 11\n\n[network]\ngateways = [\"gw1\", \"gw2\"]\n\n");
    for i in 0..machines {
        let gw = if i % 2 == 0 { "gw1" } else { "gw2" };
        text.push_str(&format!("[[plant.machines]]\nid = \"m{i:02}\"\ngateway = \"{gw}\"\n\n"));
    }
    Arc::new(Scenario::from_toml(&text).expect("fixture scenario is valid"))
}

/// Topics a ten-machine plant publishes on.
pub fn plant_topics() -> Vec<String> {
    let mut out = Vec::new();
    for m in 0..10 {
        for level in ["energy", "temperature", "pressure", "fire", "cmd", "anomaly"] {
            out.push(format!("plant/m{m:02}/{level}"));
        }
    }
    out.extend(["plant/alerts/fire", "plant/alerts/temperature", "plant/kpi"].map(String::from));
    out
}

/// A noisy sine with rare spikes, for detector benchmarks.
pub fn signal(n: usize) -> Vec<(u64, f64)> {
    (0..n)
        .map(|i| {
            let x = i as f64;
            let spike = if i % 997 == 0 { 25.0 } else { 0.0 };
            (i as u64, 50.0 + 5.0 * (x / 60.0).sin() + ((x * 12.9898).sin() * 43758.5453).fract() + spike)
        })
        .collect()
}
