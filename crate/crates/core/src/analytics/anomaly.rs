use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::Id;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    pub sensor_id: Id,
    pub tick: u64,
    pub observed: f64,
    pub rolling_mean: f64,
    pub rolling_std: f64,
    pub score: f64,
}

/// Streaming z-score detector over the trailing `window` values, excluding
/// the value under test.
///
/// Sums are kept relative to an anchor taken from the window and rebuilt
/// from the buffer every `window` pushes, which bounds cancellation error.
/// A window whose values are all equal has zero spread and never emits;
/// that case is detected exactly with rolling min/max rather than from the
/// rounded variance.
#[derive(Debug, Clone)]
pub struct AnomalyDetector {
    window: usize,
    k: f64,
    buf: VecDeque<f64>,
    anchor: f64,
    sum: f64,
    sum_sq: f64,
    since_rebase: usize,
    pushed: u64,
    mins: VecDeque<(u64, f64)>,
    maxs: VecDeque<(u64, f64)>,
}

impl AnomalyDetector {
    pub fn new(window: usize, k: f64) -> Self {
        assert!(window >= 2, "window must be at least 2");
        assert!(k > 0.0, "k must be positive");
        AnomalyDetector {
            window,
            k,
            buf: VecDeque::with_capacity(window + 1),
            anchor: 0.0,
            sum: 0.0,
            sum_sq: 0.0,
            since_rebase: 0,
            pushed: 0,
            mins: VecDeque::new(),
            maxs: VecDeque::new(),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn warmed_up(&self) -> bool {
        self.buf.len() == self.window
    }

    /// Mean and population standard deviation of the current window.
    pub fn stats(&self) -> Option<(f64, f64)> {
        if self.buf.is_empty() {
            return None;
        }
        let n = self.buf.len() as f64;
        let d = self.sum / n;
        let var = ((self.sum_sq - self.sum * d) / n).max(0.0);
        let constant = self.mins.front().map(|m| m.1) == self.maxs.front().map(|m| m.1);
        Some((self.anchor + d, if constant { 0.0 } else { var.sqrt() }))
    }

    /// Tests `value` against the window, then adds it.
    pub fn push(&mut self, sensor_id: &Id, tick: u64, value: f64) -> Option<AnomalyEvent> {
        let event = match (self.warmed_up(), self.stats()) {
            (true, Some((mean, std))) if std > 0.0 => {
                let score = (value - mean).abs() / std;
                (score > self.k).then(|| AnomalyEvent {
                    sensor_id: sensor_id.clone(),
                    tick,
                    observed: value,
                    rolling_mean: mean,
                    rolling_std: std,
                    score,
                })
            }
            _ => None,
        };
        self.insert(value);
        event
    }

    fn insert(&mut self, value: f64) {
        let idx = self.pushed;
        self.pushed += 1;
        if self.buf.is_empty() {
            self.anchor = value;
        }
        if self.buf.len() == self.window {
            let old = self.buf.pop_front().expect("full window");
            let d = old - self.anchor;
            self.sum -= d;
            self.sum_sq -= d * d;
        }
        self.buf.push_back(value);
        let d = value - self.anchor;
        self.sum += d;
        self.sum_sq += d * d;

        let oldest = idx + 1 - self.buf.len() as u64;
        while self.mins.back().is_some_and(|m| m.1 >= value) {
            self.mins.pop_back();
        }
        self.mins.push_back((idx, value));
        while self.mins.front().is_some_and(|m| m.0 < oldest) {
            self.mins.pop_front();
        }
        while self.maxs.back().is_some_and(|m| m.1 <= value) {
            self.maxs.pop_back();
        }
        self.maxs.push_back((idx, value));
        while self.maxs.front().is_some_and(|m| m.0 < oldest) {
            self.maxs.pop_front();
        }

        self.since_rebase += 1;
        if self.since_rebase >= self.window {
            self.rebase();
        }
    }

    fn rebase(&mut self) {
        self.since_rebase = 0;
        self.anchor = self.buf[0];
        self.sum = 0.0;
        self.sum_sq = 0.0;
        for &x in &self.buf {
            let d = x - self.anchor;
            self.sum += d;
            self.sum_sq += d * d;
        }
    }
}

/// Runs a fresh detector over a whole stream of `(tick, value)` pairs.
pub fn detect_anomaly(sensor_id: &Id, stream: &[(u64, f64)], window: usize, k: f64) -> Vec<AnomalyEvent> {
    let mut det = AnomalyDetector::new(window, k);
    stream
        .iter()
        .filter_map(|&(t, v)| det.push(sensor_id, t, v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::split_rng;

    /// Direct two-pass recomputation for every position.
    fn brute_force(values: &[f64], window: usize, k: f64) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for i in window..values.len() {
            let w = &values[i - window..i];
            if w.iter().all(|&x| x == w[0]) {
                continue;
            }
            let mean = w.iter().sum::<f64>() / window as f64;
            let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / window as f64;
            let std = var.sqrt();
            if (values[i] - mean).abs() / std > k {
                out.push((i, mean, std));
            }
        }
        out
    }

    #[test]
    fn constant_stream_is_silent() {
        let s: Vec<(u64, f64)> = (0..1000).map(|t| (t, 42.0)).collect();
        assert!(detect_anomaly(&"s".into(), &s, 10, 2.0).is_empty());
    }

    #[test]
    fn warm_up_is_silent() {
        let s: Vec<(u64, f64)> = (0..10).map(|t| (t, if t == 9 { 1e6 } else { t as f64 % 2.0 })).collect();
        assert!(detect_anomaly(&"s".into(), &s, 10, 2.0).is_empty());
        let s: Vec<(u64, f64)> = (0..11).map(|t| (t, if t == 10 { 1e6 } else { t as f64 % 2.0 })).collect();
        assert_eq!(detect_anomaly(&"s".into(), &s, 10, 2.0).len(), 1);
    }

    #[test]
    fn ten_sigma_step_fires_on_first_tick() {
        // Alternating +-1 has mean 0 and std 1 over an even window.
        let mut s: Vec<(u64, f64)> = (0..100).map(|t| (t, if t % 2 == 0 { 1.0 } else { -1.0 })).collect();
        s.extend((100..110).map(|t| (t, 10.0)));
        let ev = detect_anomaly(&"s".into(), &s, 20, 4.0);
        assert_eq!(ev[0].tick, 100);
        assert!((ev[0].score - 10.0).abs() < 1e-12);
        assert!((ev[0].rolling_std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_on_random_streams() {
        let mut rng = split_rng(7, "test-anomaly");
        for _ in 0..100 {
            let window = rng.uniform_u64(2, 60) as usize;
            let k = rng.uniform(1.5, 5.0);
            let level = rng.uniform(-1e3, 1e3);
            let n = rng.uniform_u64(0, 600) as usize;
            let values: Vec<f64> = (0..n)
                .map(|i| {
                    let spike = if rng.bernoulli(0.02) { rng.uniform(-50.0, 50.0) } else { 0.0 };
                    let flat = (i / 40) % 3 == 0;
                    if flat { level } else { level + rng.uniform(-1.0, 1.0) + spike }
                })
                .collect();
            let stream: Vec<(u64, f64)> = values.iter().enumerate().map(|(i, v)| (i as u64, *v)).collect();
            let got = detect_anomaly(&"s".into(), &stream, window, k);
            let want = brute_force(&values, window, k);
            assert_eq!(got.len(), want.len());
            for (g, (i, mean, std)) in got.iter().zip(want) {
                assert_eq!(g.tick, i as u64);
                assert!((g.rolling_mean - mean).abs() <= 1e-9 * mean.abs().max(1.0));
                assert!((g.rolling_std - std).abs() <= 1e-6 * std.max(1e-9));
            }
        }
    }
}
