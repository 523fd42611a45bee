use std::sync::Arc;

use proptest::prelude::*;
use smartfab_core::edge::SafetyKind;
use smartfab_core::plant::SensorKind;
use smartfab_core::scenario::{NullSink, RunMode, Scenario};
use smartfab_core::transport::LinkModel;
use smartfab_core::world::{LiveEvent, SafetyActivation, World};

fn fire_scenario(seed: u64, machines: usize, fire_machine: usize, fire_tick: u64, jitter: u64, uplink_drop: f64) -> Scenario {
    let mut text = format!("[run]\nticks = 400\nseed = {seed}\n\n");
    for i in 0..machines {
        text.push_str(&format!("[[plant.machines]]\nid = \"m{i}\"\n\n"));
    }
    text.push_str(&format!(
        "[[plant.fires]]\nmachine = \"m{fire_machine}\"\ntick = {fire_tick}\n\n\
         [network.device_link]\nbase_latency = 1\njitter = {jitter}\ndrop_probability = 0.0\n\n\
         [network.uplink]\nbase_latency = 1\njitter = 2\ndrop_probability = {uplink_drop:?}\n"
    ));
    Scenario::from_toml(&text).unwrap()
}

struct FireRun {
    crossing: u64,
    activation: SafetyActivation,
    sprinklers: Vec<SafetyActivation>,
}

fn run(scenario: Scenario, fire_machine: usize, fire_tick: u64) -> FireRun {
    let threshold = scenario.edge.sprinkler.threshold;
    let mut world = World::new(Arc::new(scenario), RunMode::Optimized).unwrap();
    world.set_capture(true);
    let mut crossing = None;
    while !world.finished() {
        world.step(&mut NullSink).unwrap();
        for e in world.take_events() {
            if let LiveEvent::Reading { reading, .. } = e {
                if reading.kind == SensorKind::Fire
                    && crossing.is_none()
                    && reading.tick >= fire_tick
                    && reading.value >= threshold
                    && reading.machine_id.as_ref() == format!("m{fire_machine}")
                {
                    crossing = Some(reading.tick);
                }
            }
        }
    }
    let sprinklers: Vec<_> = world
        .safety_log()
        .iter()
        .filter(|a| a.kind == SafetyKind::FireSprinkler)
        .copied()
        .collect();
    let activation = *sprinklers
        .iter()
        .find(|a| a.machine == fire_machine && a.on)
        .expect("sprinkler never activated");
    FireRun {
        crossing: crossing.expect("fire never crossed the threshold"),
        activation,
        sprinklers,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sprinkler_meets_deadline_whatever_the_uplink(
        seed in any::<u64>(),
        machines in 1..=3usize,
        pick in any::<usize>(),
        fire_tick in 5..300u64,
        jitter in 0..=1u64,
    ) {
        let fm = pick % machines;
        let mut runs = Vec::new();
        for drop in [0.0, 0.5, 0.95] {
            let s = fire_scenario(seed, machines, fm, fire_tick, jitter, drop);
            let deadline = s.edge.sprinkler.response_deadline;
            let r = run(s, fm, fire_tick);
            prop_assert_eq!(r.activation.reading_tick, r.crossing);
            prop_assert!(r.activation.applied_tick - r.crossing <= deadline);
            let cycle: Vec<bool> = r.sprinklers.iter().filter(|a| a.machine == fm).map(|a| a.on).collect();
            prop_assert_eq!(cycle, vec![true, false]);
            runs.push(r);
        }
        for r in &runs[1..] {
            prop_assert_eq!(&r.sprinklers, &runs[0].sprinklers);
        }
    }
}

#[test]
fn sprinkler_keeps_working_through_a_dead_uplink() {
    let s = fire_scenario(3, 2, 1, 100, 0, 0.0);
    let reference = run(s.clone(), 1, 100);

    let mut world = World::new(Arc::new(s), RunMode::Optimized).unwrap();
    world.set_uplink(LinkModel::dead(1, 0));
    world.run(&mut NullSink).unwrap();
    let log: Vec<_> = world
        .safety_log()
        .iter()
        .filter(|a| a.kind == SafetyKind::FireSprinkler)
        .copied()
        .collect();
    assert_eq!(log, reference.sprinklers);
}
