//! Empirical checks on the sampler: goodness of fit and the e^epsilon
//! likelihood-ratio bound of the unfolded mechanism.
//!
//! The folded pipeline used for reporting is not a symmetric Laplace mechanism,
//! so the ratio audit runs on `x + raw` only.

use rand::Rng;

use super::{sample_laplace, PrivacyParams};

pub fn laplace_cdf(x: f64, mu: f64, scale: f64) -> f64 {
    let z = (x - mu) / scale;
    if z < 0.0 {
        0.5 * z.exp()
    } else {
        1.0 - 0.5 * (-z).exp()
    }
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Unfolded Laplace mechanism `x + Lap(mu, scale)`; for auditing only.
pub fn symmetric_release<R: Rng + ?Sized>(x: f64, params: &PrivacyParams, rng: &mut R) -> f64 {
    x + sample_laplace(params.mu(), params.scale(), rng).raw
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinRatio {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    pub count_adjacent: u64,
}

#[derive(Debug, Clone)]
pub struct RatioAudit {
    pub epsilon: f64,
    pub samples: usize,
    pub z: f64,
    pub bins: Vec<BinRatio>,
    /// Bins where one direction exceeded `e^epsilon` by more than the slack.
    pub violations: usize,
    /// Largest observed `ln(p_a / p_b)` over bins with both counts non-zero.
    pub max_log_ratio: f64,
}

impl RatioAudit {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Histograms `samples` releases on `x` and on `x_adjacent` over `edges` and checks
/// `p_a <= e^eps * p_b + z * sqrt(var_a + e^(2 eps) var_b)` in both directions,
/// where the variances are the binomial variances of the bin frequencies.
pub fn audit_ratio<F: FnMut(f64) -> f64>(
    mut release: F,
    x: f64,
    x_adjacent: f64,
    epsilon: f64,
    edges: &[f64],
    samples: usize,
    z: f64,
) -> RatioAudit {
    assert!(edges.len() >= 2, "need at least one bin");
    let n_bins = edges.len() - 1;
    let mut hist = |input: f64| {
        let mut counts = vec![0u64; n_bins];
        for _ in 0..samples {
            let y = release(input);
            let idx = edges.partition_point(|&e| e <= y);
            if idx >= 1 && idx <= n_bins {
                counts[idx - 1] += 1;
            }
        }
        counts
    };
    let a = hist(x);
    let b = hist(x_adjacent);

    let n = samples as f64;
    let bound = epsilon.exp();
    let exceeds = |ca: u64, cb: u64| {
        let pa = ca as f64 / n;
        let pb = cb as f64 / n;
        let var = pa * (1.0 - pa) / n + bound * bound * pb * (1.0 - pb) / n;
        pa > bound * pb + z * var.sqrt()
    };

    let mut violations = 0;
    let mut max_log_ratio = f64::NEG_INFINITY;
    let mut bins = Vec::with_capacity(n_bins);
    for i in 0..n_bins {
        if exceeds(a[i], b[i]) || exceeds(b[i], a[i]) {
            violations += 1;
        }
        if a[i] > 0 && b[i] > 0 {
            let lr = (a[i] as f64 / b[i] as f64).ln().abs();
            max_log_ratio = max_log_ratio.max(lr);
        }
        bins.push(BinRatio {
            lo: edges[i],
            hi: edges[i + 1],
            count: a[i],
            count_adjacent: b[i],
        });
    }

    RatioAudit {
        epsilon,
        samples,
        z,
        bins,
        violations,
        max_log_ratio,
    }
}

/// Evenly spaced edges covering `[lo, hi]`.
pub fn linear_edges(lo: f64, hi: f64, n_bins: usize) -> Vec<f64> {
    let width = (hi - lo) / n_bins as f64;
    (0..=n_bins).map(|i| lo + width * i as f64).collect()
}
