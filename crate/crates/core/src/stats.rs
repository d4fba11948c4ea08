//! Small statistics helpers shared by the aggregator and the test suites.

/// Median of a sample (linear interpolation between the middle pair).
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&q));
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN values"));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Interquartile range, `q75 - q25`.
pub fn iqr(values: &[f64]) -> f64 {
    quantile(values, 0.75) - quantile(values, 0.25)
}

/// Trailing moving average with the given window.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        acc += values[i];
        if i >= window {
            acc -= values[i - window];
        }
        let n = (i + 1).min(window);
        out.push(acc / n as f64);
    }
    out
}

/// Ranks with ties averaged, as used by the Spearman coefficient.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("non-NaN values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Average 1-based rank of the tie group [i, j].
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    assert!(a.len() >= 2, "need at least two points");
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Chi-square statistic of observed counts against the uniform expectation,
/// plus a generous acceptance bound (mean + 5 sigma of the chi-square
/// distribution). Seeded draws make the comparison reproducible.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    let cells = counts.len();
    assert!(cells >= 2);
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / cells as f64;
    assert!(expected > 0.0, "no samples");
    let stat = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let df = (cells - 1) as f64;
    let bound = df + 5.0 * (2.0 * df).sqrt();
    (stat, bound)
}

/// Percentile bootstrap confidence interval for the mean of paired
/// differences. Returns `(low, high)` at the given coverage.
pub fn bootstrap_mean_ci(diffs: &[f64], coverage: f64, resamples: usize, seed: u64) -> (f64, f64) {
    use rand::{Rng, SeedableRng};
    assert!(!diffs.is_empty());
    assert!((0.0..1.0).contains(&coverage) && coverage > 0.0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = diffs.len();
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += diffs[rng.random_range(0..n)];
        }
        means.push(acc / n as f64);
    }
    let tail = (1.0 - coverage) / 2.0;
    (quantile(&means, tail), quantile(&means, 1.0 - tail))
}
