use proptest::prelude::*;
use smartfab_core::analytics::{detect_anomaly, AnomalyDetector};
use smartfab_core::rng::split_rng;

/// Mean, population std and verdict for every position, recomputed from
/// scratch over the preceding `window` values.
fn brute_force(values: &[f64], window: usize, k: f64) -> Vec<(usize, f64, f64, f64)> {
    let mut out = Vec::new();
    for i in window..values.len() {
        let w = &values[i - window..i];
        let mean = w.iter().sum::<f64>() / window as f64;
        let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / window as f64;
        let std = var.sqrt();
        if w.iter().all(|&x| x == w[0]) {
            continue;
        }
        let score = (values[i] - mean).abs() / std;
        if score > k {
            out.push((i, mean, std, score));
        }
    }
    out
}

fn stream(seed: u64, n: usize, level: f64, scale: f64, quantized: bool) -> Vec<f64> {
    let mut rng = split_rng(seed, "stream");
    let flat_every = rng.uniform_u64(20, 400) as usize;
    (0..n)
        .map(|i| {
            if (i / flat_every) % 4 == 1 {
                return level;
            }
            let mut v = level + scale * rng.uniform(-1.0, 1.0);
            if rng.bernoulli(0.01) {
                v += scale * rng.uniform(-30.0, 30.0);
            }
            if quantized {
                v = (v / scale * 4.0).round() * scale / 4.0;
            }
            v
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn detector_equals_recomputation(
        seed in any::<u64>(),
        window in 10..=300usize,
        k in 2.0..=6.0f64,
        extra in 0..1000usize,
        level in -1e4..1e4f64,
        scale in 0.01..100.0f64,
        quantized in any::<bool>(),
    ) {
        let values = stream(seed, window + extra, level, scale, quantized);
        let series: Vec<(u64, f64)> = values.iter().enumerate().map(|(i, v)| (i as u64, *v)).collect();
        let got = detect_anomaly(&"s".into(), &series, window, k);
        let want = brute_force(&values, window, k);
        prop_assert_eq!(got.len(), want.len());
        for (g, (i, mean, std, score)) in got.iter().zip(want) {
            prop_assert_eq!(g.tick, i as u64);
            prop_assert_eq!(g.observed, values[i]);
            prop_assert!((g.rolling_mean - mean).abs() <= 1e-9 * mean.abs().max(scale));
            prop_assert!((g.rolling_std - std).abs() <= 1e-7 * std);
            prop_assert!((g.score - score).abs() <= 1e-7 * score);
        }
    }
}

#[test]
fn no_verdicts_before_the_window_fills() {
    let mut det = AnomalyDetector::new(10, 2.0);
    for i in 0..10 {
        assert!(det.push(&"s".into(), i, if i == 9 { 1e9 } else { (i % 2) as f64 }).is_none());
    }
    assert!(det.warmed_up());
    assert!(det.push(&"s".into(), 10, 1e9).is_some());
}
