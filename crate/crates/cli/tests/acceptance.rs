//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use serde_json::Value;
use smartfab_core::edge::SafetyKind;
use smartfab_core::plant::{SensorKind, SensorReading};
use smartfab_core::rng::{split_rng, RngStream};
use smartfab_core::scenario::{
    read_trace, run_compare, summarize, JsonlWriter, NullSink, RunMode, Scenario, TraceRecord,
};
use smartfab_core::transport::{Hop, HopStreams, LinkModel, Payload, Qos, StarNetwork, TopicFilter, Topology};
use smartfab_core::world::{LiveEvent, World};

type Outcome = Result<String, String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn default_scenario() -> Scenario {
    Scenario::load(root().join("default.scenario")).expect("default.scenario loads")
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_smartfab"));
    c.current_dir(root());
    c
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Headline {
    report: Value,
}

fn headline(tmp: &Path) -> Result<(Headline, String), String> {
    let report = tmp.join("report.json");
    let start = Instant::now();
    let out = bin()
        .args(["compare", "--config", "default.scenario", "--seed", "42", "--report"])
        .arg(&report)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(out.status.success(), || {
        format!("compare exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr))
    })?;
    let report: Value = serde_json::from_slice(&std::fs::read(&report).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let r = &report["reductions"];
    let get = |k: &str| r[k].as_f64().ok_or_else(|| format!("{k} is null"));
    let (e, d, w) = (get("energy_reduction_pct")?, get("downtime_reduction_pct")?, get("waste_reduction_pct")?);
    let detail = format!("energy {e:.2}%, downtime {d:.2}%, waste {w:.2}% in {elapsed:.1} s");
    ensure(elapsed < 30.0, || format!("too slow: {detail}"))?;
    ensure((13.0..=23.0).contains(&e), || format!("energy outside [13, 23]: {detail}"))?;
    ensure((17.0..=27.0).contains(&d), || format!("downtime outside [17, 27]: {detail}"))?;
    ensure((10.0..=20.0).contains(&w), || format!("waste outside [10, 20]: {detail}"))?;
    Ok((Headline { report }, detail))
}

fn seed_robustness() -> Outcome {
    let base = default_scenario();
    let mut good = 0;
    let mut misses = Vec::new();
    for seed in 1..=20 {
        let s = Arc::new(base.clone().with_seed(seed));
        let k = run_compare(s, &[], &mut NullSink, &mut NullSink).map_err(|e| e.to_string())?;
        let r = &k.reductions;
        let all = [r.energy_reduction_pct, r.downtime_reduction_pct, r.waste_reduction_pct];
        if all.iter().all(|v| v.is_some_and(|v| v > 0.0)) {
            good += 1;
        } else {
            misses.push(format!("seed {seed}: {all:?}"));
        }
    }
    let detail = format!("{good}/20 seeds with all three reductions positive");
    ensure(good >= 19, || format!("{detail}; {}", misses.join("; ")))?;
    Ok(detail)
}

fn determinism(tmp: &Path, headline: Option<&Headline>) -> Outcome {
    let mut lines = 0;
    for mode in ["baseline", "optimized"] {
        let paths: Vec<PathBuf> = (0..2).map(|i| tmp.join(format!("{mode}-{i}.jsonl"))).collect();
        for p in &paths {
            let out = bin()
                .args(["simulate", "--config", "default.scenario", "--seed", "42", "--mode", mode, "--out"])
                .arg(p)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(out.status.success(), || format!("simulate {mode} failed: {}", String::from_utf8_lossy(&out.stderr)))?;
        }
        let a = std::fs::read(&paths[0]).map_err(|e| e.to_string())?;
        let b = std::fs::read(&paths[1]).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{mode} traces differ"))?;
        drop((a, b));

        let records = read_trace(&paths[0]).map_err(|e| e.to_string())?;
        lines += records.len();
        let Some(TraceRecord::KpiAccumulator(acc)) = records.last().cloned() else {
            return Err(format!("{mode} trace has no accumulator record"));
        };
        let summary = summarize(records).map_err(|e| format!("{mode}: {e}"))?;
        ensure(summary.accumulator == acc, || format!("{mode}: recomputation differs from accumulators"))?;
        if let Some(h) = headline {
            let reported = &h.report[mode];
            let totals = serde_json::to_value(&summary.totals).map_err(|e| e.to_string())?;
            ensure(*reported == totals, || format!("{mode}: trace totals differ from the compare report"))?;
        }
        for p in &paths {
            let _ = std::fs::remove_file(p);
        }
    }
    Ok(format!("byte-identical reruns, exact recomputation over {lines} records"))
}

fn trace_bytes(s: Arc<Scenario>, mode: RunMode) -> Result<Vec<u8>, String> {
    let mut w = World::new(s, mode).map_err(|e| e.to_string())?;
    let mut out = JsonlWriter::new(Vec::new());
    w.run(&mut out).map_err(|e| e.to_string())?;
    out.finish().map_err(|e| e.to_string())
}

fn noop_equivalence() -> Outcome {
    let mut s = default_scenario();
    s.policies = s.policies.disabled();
    let s = Arc::new(s);
    let b = trace_bytes(s.clone(), RunMode::Baseline)?;
    let o = trace_bytes(s, RunMode::Optimized)?;
    ensure(b == o, || "optimized trace with every policy off differs from baseline".into())?;
    Ok(format!("{} identical bytes", b.len()))
}

fn random_small_toml(rng: &mut RngStream) -> String {
    let machines = rng.uniform_u64(1, 3);
    let ticks = rng.uniform_u64(20, 1000);
    let tick_ms = [100, 250, 1000, 1500][rng.uniform_u64(0, 3) as usize];
    let mut s = format!("[run]\nticks = {ticks}\nseed = {}\ntick_duration_ms = {tick_ms}\n\n", rng.next_u64());
    for i in 0..machines {
        let p_run = rng.uniform(500.0, 9000.0);
        let floor = rng.uniform(0.1, 1.0);
        let standby = p_run * floor * rng.uniform(0.0, 1.0);
        s.push_str(&format!(
            "[[plant.machines]]\nid = \"m{i}\"\nessential = {}\nparams = {{ p_run_w = {p_run:?}, load_floor = {floor:?}, p_standby_w = {standby:?}, p_maint_w = {:?}, initial_wear = {:?} }}\n\n",
            rng.bernoulli(0.3),
            rng.uniform(0.0, 1500.0),
            rng.uniform(0.0, 0.9),
        ));
    }
    s.push_str("[plant.workload]\ninitial_idle_ticks = [0, 30]\nbusy_ticks = [20, 200]\nidle_ticks = [20, 400]\n\n");
    if rng.bernoulli(0.5) {
        s.push_str(&format!("[[plant.fires]]\nmachine = \"m{}\"\ntick = {}\n\n", rng.uniform_u64(0, machines - 1), rng.uniform_u64(0, ticks - 1)));
    }
    if rng.bernoulli(0.5) {
        s.push_str(&format!(
            "[[plant.faults]]\nmachine = \"m{}\"\ntick = {}\nkind = \"BREAKDOWN\"\nrepair_ticks = 40\n\n",
            rng.uniform_u64(0, machines - 1),
            rng.uniform_u64(0, ticks - 1)
        ));
    }
    s.push_str("[policies.idle_shutdown]\nidle_threshold_ticks = 30\nwake_delay_ticks = 10\n");
    s
}

fn mw_from_text(text: &str) -> Option<u64> {
    let (whole, frac) = text.split_once('.')?;
    (frac.len() == 3).then_some(())?;
    Some(whole.parse::<u64>().ok()? * 1000 + frac.parse::<u64>().ok()?)
}

fn energy_conservation() -> Outcome {
    let mut rng = split_rng(2024, "acceptance-configs");
    let mut ticks_total = 0;
    for case in 0..100 {
        let text = random_small_toml(&mut rng);
        let s = Arc::new(Scenario::from_toml(&text).map_err(|e| format!("config {case}: {e}"))?);
        let mode = if case % 2 == 0 { RunMode::Optimized } else { RunMode::Baseline };
        let bytes = trace_bytes(s.clone(), mode)?;
        let trace = String::from_utf8(bytes).map_err(|e| e.to_string())?;
        let ids: Vec<&str> = s.machines.iter().map(|m| m.id.as_str()).collect();
        let mut summed = vec![0u64; ids.len()];
        let mut reported: Option<Vec<u64>> = None;
        for line in trace.lines() {
            let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
            match v["kind"].as_str() {
                Some("machine-state") => {
                    let raw = line.split(r#""power_w":"#).nth(1).and_then(|r| r.split(',').next()).unwrap_or("");
                    let mw = mw_from_text(raw).ok_or_else(|| format!("config {case}: power {raw:?} is not fixed-point"))?;
                    let m = ids.iter().position(|id| v["machine"] == *id).ok_or("unknown machine")?;
                    summed[m] += mw * s.run.tick_duration_ms;
                    ticks_total += 1;
                }
                Some("kpi-accumulator") => reported = serde_json::from_value(v["energy_uj"].clone()).ok(),
                _ => {}
            }
        }
        let reported = reported.ok_or_else(|| format!("config {case}: no accumulator"))?;
        ensure(summed == reported, || format!("config {case}: summed {summed:?} != reported {reported:?}\n{text}"))?;
    }
    Ok(format!("100 configs, {ticks_total} machine-ticks summed exactly"))
}

fn sensor_bounds() -> Outcome {
    let mut checked = 0u64;
    let mut worst_energy = 0.0f64;
    let mut worst_temp = 0.0f64;
    for seed in [42, 43] {
        let s = Arc::new(default_scenario().with_seed(seed));
        let mut world = World::new(s, RunMode::Optimized).map_err(|e| e.to_string())?;
        world.set_capture(true);
        let ids = world.machine_ids().to_vec();
        while !world.finished() {
            world.step(&mut NullSink).map_err(|e| e.to_string())?;
            let events = world.take_events();
            let machines = world.machines();
            for e in events {
                let LiveEvent::Reading { reading, .. } = e else { continue };
                let m = &machines[ids.iter().position(|id| *id == reading.machine_id).ok_or("unknown machine")?];
                match reading.kind {
                    SensorKind::Energy => {
                        let w = m.power_mw as f64 / 1000.0;
                        let err = (reading.value - w).abs();
                        ensure(err <= 0.001 * w, || format!("energy {} vs {w} at tick {}", reading.value, reading.tick))?;
                        if w > 0.0 {
                            worst_energy = worst_energy.max(err / w);
                        }
                    }
                    SensorKind::Temperature => {
                        let err = (reading.value - m.temperature_c).abs();
                        ensure(err <= 0.5, || format!("temperature {} vs {} at tick {}", reading.value, m.temperature_c, reading.tick))?;
                        worst_temp = worst_temp.max(err);
                    }
                    _ => continue,
                }
                checked += 1;
            }
        }
    }
    ensure(checked >= 1_000_000, || format!("only {checked} readings sampled"))?;
    Ok(format!(
        "{checked} readings, worst energy error {:.4}%, worst temperature error {worst_temp:.3} C",
        worst_energy * 100.0
    ))
}

const NAMES: [&str; 3] = ["a", "b", "c"];

fn universe() -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<String>> = vec![Vec::new()];
    for _ in 0..3 {
        layer = layer
            .iter()
            .flat_map(|p| NAMES.iter().map(move |n| [p.clone(), vec![n.to_string()]].concat()))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

fn all_filters() -> Vec<Vec<&'static str>> {
    let mut out = Vec::new();
    let mut open = vec![Vec::new()];
    for _ in 0..3 {
        let mut next = Vec::new();
        for p in &open {
            for l in ["a", "b", "c", "+", "#"] {
                let mut q: Vec<&str> = p.clone();
                q.push(l);
                out.push(q.clone());
                if l != "#" {
                    next.push(q);
                }
            }
        }
        open = next;
    }
    out
}

/// Level-by-level definition, written independently of the library.
fn oracle(filter: &[&str], topic: &[String]) -> bool {
    match (filter.first(), topic.first()) {
        (Some(&"#"), _) => true,
        (None, None) => true,
        (None, Some(_)) | (Some(_), None) => false,
        (Some(&f), Some(t)) => (f == "+" || f == t) && oracle(&filter[1..], &topic[1..]),
    }
}

fn reading(machine: &str, seq: u64) -> Payload {
    Payload::Reading(SensorReading {
        sensor_id: format!("{machine}-energy").into(),
        machine_id: machine.into(),
        kind: SensorKind::Energy,
        tick: 0,
        value: 1.0,
        seq_no: seq,
    })
}

/// Pushes `count` messages through a two-gateway star at `drop` loss on both
/// hops. Returns cloud deliveries per message id.
fn pump(seed: u64, count: u64, qos: Qos, drop: f64) -> Result<HashMap<u64, usize>, String> {
    let devices = ["m1", "m2", "m3", "m4"];
    let topology = Topology::new(
        vec!["gw1".into(), "gw2".into()],
        devices.iter().enumerate().map(|(i, d)| ((*d).into(), ["gw1", "gw2"][i % 2].into())),
    )
    .map_err(|e| e.to_string())?;
    let link = LinkModel::new(1, 2, drop).map_err(|e| e.to_string())?;
    let mut net = StarNetwork::new(topology, link, link, 512);
    let mut draws = HopStreams {
        device: split_rng(seed, "device-link"),
        uplink: split_rng(seed, "link-loss"),
    };
    let mut forwarded = BTreeSet::new();
    let mut delivered = HashMap::new();
    let (mut now, mut sent) = (0u64, 0u64);
    while sent < count || net.in_flight() > 0 {
        for d in devices {
            if sent < count {
                net.publish(d, format!("plant/{d}/energy").into(), qos, reading(d, sent), now, &mut draws)
                    .map_err(|e| e.to_string())?;
                sent += 1;
            }
        }
        for delivery in net.poll(now, &mut draws) {
            let env = &delivery.envelope;
            let device = env.route.device.clone().ok_or("delivery without a device")?;
            let home = net.topology().gateway_of(&device).ok_or("unknown device")?;
            ensure(delivery.gateway == home && env.route.gateway == Some(home), || {
                format!("message {} from {device} left its star branch", env.msg_id)
            })?;
            match delivery.hop {
                Hop::ToGateway => {
                    ensure(env.route.hops == 1, || "gateway delivery is not one hop".into())?;
                    if forwarded.insert(env.msg_id) {
                        net.forward(delivery.gateway, delivery.envelope, qos, now, &mut draws);
                    }
                }
                Hop::ToCloud => {
                    ensure(env.route.hops == 2, || format!("message {} took {} hops", env.msg_id, env.route.hops))?;
                    *delivered.entry(env.msg_id).or_insert(0) += 1;
                }
            }
        }
        now += 1;
        ensure(now < 50_000_000, || "network did not drain".into())?;
    }
    Ok(delivered)
}

fn transport() -> Outcome {
    let topics = universe();
    let filters = all_filters();
    for f in &filters {
        let parsed = TopicFilter::parse(&f.join("/")).map_err(|e| e.to_string())?;
        for t in &topics {
            let joined = t.join("/");
            ensure(parsed.matches(&joined) == oracle(f, t), || format!("filter {} vs topic {joined}", f.join("/")))?;
        }
    }
    let pairs = filters.len() * topics.len();

    let amo = pump(7, 10_000, Qos::AtMostOnce, 0.5)?;
    let worst = amo.values().copied().max().unwrap_or(0);
    ensure(worst <= 1, || format!("AT_MOST_ONCE delivered a message {worst} times"))?;
    let alo = pump(8, 10_000, Qos::AtLeastOnce, 0.5)?;
    ensure(alo.len() == 10_000, || format!("AT_LEAST_ONCE delivered {} of 10000", alo.len()))?;
    let dups = alo.values().filter(|&&c| c > 1).count();
    Ok(format!(
        "{pairs} filter/topic pairs agree; AT_MOST_ONCE {} of 10000 delivered once; AT_LEAST_ONCE 10000 of 10000 ({dups} duplicated)",
        amo.len()
    ))
}

fn safety_deadline() -> Outcome {
    let mut rng = split_rng(99, "acceptance-fires");
    let mut worst = 0;
    for run in 0..100 {
        let machines = rng.uniform_u64(1, 4);
        let fm = rng.uniform_u64(0, machines - 1);
        let fire_tick = rng.uniform_u64(5, 400);
        let seed = rng.next_u64();
        let jitter = rng.uniform_u64(0, 1);
        let mut reference = None;
        for drop in [0.0, 0.3, 0.7, 0.95] {
            let mut text = format!("[run]\nticks = 500\nseed = {seed}\n\n");
            for i in 0..machines {
                text.push_str(&format!("[[plant.machines]]\nid = \"m{i}\"\n\n"));
            }
            text.push_str(&format!(
                "[[plant.fires]]\nmachine = \"m{fm}\"\ntick = {fire_tick}\n\n\
                 [network.device_link]\nbase_latency = 1\njitter = {jitter}\ndrop_probability = 0.0\n\n\
                 [network.uplink]\nbase_latency = 1\njitter = 2\ndrop_probability = {drop:?}\n"
            ));
            let s = Scenario::from_toml(&text).map_err(|e| e.to_string())?;
            let threshold = s.edge.sprinkler.threshold;
            let deadline = s.edge.sprinkler.response_deadline;
            let mut world = World::new(Arc::new(s), RunMode::Optimized).map_err(|e| e.to_string())?;
            world.set_capture(true);
            let target = format!("m{fm}");
            let mut crossing = None;
            while !world.finished() {
                world.step(&mut NullSink).map_err(|e| e.to_string())?;
                for e in world.take_events() {
                    if let LiveEvent::Reading { reading, .. } = e {
                        if crossing.is_none()
                            && reading.kind == SensorKind::Fire
                            && reading.machine_id.as_ref() == target
                            && reading.tick >= fire_tick
                            && reading.value >= threshold
                        {
                            crossing = Some(reading.tick);
                        }
                    }
                }
            }
            let crossing = crossing.ok_or_else(|| format!("run {run}: fire never crossed the threshold"))?;
            let activation = world
                .safety_log()
                .iter()
                .find(|a| a.kind == SafetyKind::FireSprinkler && a.on && a.machine == fm as usize)
                .copied()
                .ok_or_else(|| format!("run {run}: sprinkler never activated"))?;
            let delay = activation.applied_tick.saturating_sub(crossing);
            ensure(activation.reading_tick == crossing && delay <= deadline, || {
                format!("run {run}: crossing at {crossing}, activation {activation:?}, deadline {deadline}")
            })?;
            worst = worst.max(delay);
            match reference {
                None => reference = Some(activation.applied_tick),
                Some(t) => ensure(t == activation.applied_tick, || {
                    format!("run {run}: activation moved from {t} to {} at uplink loss {drop}", activation.applied_tick)
                })?,
            }
        }
    }
    Ok(format!("100 fires x 4 uplink loss levels, worst response {worst} ticks, activation tick unchanged by uplink loss"))
}

fn brute_force(values: &[f64], window: usize, k: f64) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    for i in window..values.len() {
        let w = &values[i - window..i];
        if w.iter().all(|&x| x == w[0]) {
            continue;
        }
        let mean = w.iter().sum::<f64>() / window as f64;
        let std = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / window as f64).sqrt();
        if (values[i] - mean).abs() / std > k {
            out.push((i, mean, std));
        }
    }
    out
}

fn anomaly_oracle() -> Outcome {
    let mut rng = split_rng(5, "acceptance-streams");
    let mut events = 0;
    for case in 0..1000 {
        let window = rng.uniform_u64(10, 300) as usize;
        let k = rng.uniform(2.0, 6.0);
        let n = window + rng.uniform_u64(0, 1500) as usize;
        let level = rng.uniform(-1e4, 1e4);
        let scale = rng.uniform(0.01, 100.0);
        let flat_every = rng.uniform_u64(20, 400) as usize;
        let values: Vec<f64> = (0..n)
            .map(|i| {
                if (i / flat_every) % 4 == 1 {
                    return level;
                }
                let spike = if rng.bernoulli(0.01) { scale * rng.uniform(-30.0, 30.0) } else { 0.0 };
                level + scale * rng.uniform(-1.0, 1.0) + spike
            })
            .collect();
        let series: Vec<(u64, f64)> = values.iter().enumerate().map(|(i, v)| (i as u64, *v)).collect();
        let got = smartfab_core::analytics::detect_anomaly(&"s".into(), &series, window, k);
        let want = brute_force(&values, window, k);
        ensure(got.len() == want.len(), || format!("stream {case}: {} events vs {} expected", got.len(), want.len()))?;
        for (g, (i, mean, std)) in got.iter().zip(&want) {
            ensure(
                g.tick == *i as u64
                    && (g.rolling_mean - mean).abs() <= 1e-9 * mean.abs().max(scale)
                    && (g.rolling_std - std).abs() <= 1e-7 * std,
                || format!("stream {case}: event {g:?} vs ({i}, {mean}, {std})"),
            )?;
        }
        events += got.len();
    }
    Ok(format!("1000 streams, {events} anomalies, all matching"))
}

fn per_machine(h: &Headline) -> Outcome {
    let scenario = default_scenario();
    let mut worst: Option<(String, f64)> = None;
    for row in h.report["per_machine"].as_array().ok_or("report has no per_machine")? {
        let id = row["machine"].as_str().ok_or("row without machine")?;
        let essential = scenario.machines.iter().find(|m| m.id == id).ok_or("unknown machine")?.essential;
        if essential {
            continue;
        }
        let b = row["baseline_energy_wh"].as_f64().ok_or("missing baseline")?;
        let o = row["optimized_energy_wh"].as_f64().ok_or("missing optimized")?;
        ensure(o <= b, || format!("{id}: optimized {o} Wh > baseline {b} Wh"))?;
        let pct = 100.0 * (b - o) / b;
        if worst.as_ref().is_none_or(|w| pct < w.1) {
            worst = Some((id.to_owned(), pct));
        }
    }
    let (id, pct) = worst.ok_or("no non-essential machines")?;
    Ok(format!("every non-essential machine saves energy; smallest saving {pct:.2}% on {id}"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("PASS  {name}: {detail}"),
        Err(detail) => {
            failed += 1;
            println!("FAIL  {name}: {detail}");
        }
    };

    let headline = match headline(tmp.path()) {
        Ok((h, detail)) => {
            report("calibrated headline run", Ok(detail));
            Some(h)
        }
        Err(e) => {
            report("calibrated headline run", Err(e));
            None
        }
    };
    report("seed robustness", seed_robustness());
    report("determinism", determinism(tmp.path(), headline.as_ref()));
    report("no-op equivalence", noop_equivalence());
    report("energy conservation", energy_conservation());
    report("sensor bounds", sensor_bounds());
    report("transport correctness", transport());
    report("safety deadline", safety_deadline());
    report("anomaly oracle", anomaly_oracle());
    report(
        "per-machine savings",
        headline.as_ref().map_or(Err("headline run did not complete".into()), per_machine),
    );

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
