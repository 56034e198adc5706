use serde::{Deserialize, Serialize};

use crate::quadrature::gauss_legendre;

/// Kolmogorov–Smirnov statistic D and asymptotic p-value of `samples` against `cdf`.
pub fn kolmogorov_smirnov(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let root = n.sqrt();
    (d, kolmogorov_tail((root + 0.12 + 0.11 / root) * d))
}

/// P(K > λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub bins: usize,
    pub within: usize,
    /// (bin centre, observed count, expected count) per bin.
    pub table: Vec<(f64, usize, f64)>,
}

impl BandReport {
    pub fn fraction(&self) -> f64 {
        self.within as f64 / self.bins as f64
    }
}

/// Bins [lo, hi] into `bins` cells and tests |observed − expected| ≤ 3√expected, expected from ∫ density.
pub fn histogram_band_check(samples: &[f64], lo: f64, hi: f64, bins: usize, density: impl Fn(f64) -> f64) -> BandReport {
    let h = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        if x >= lo && x < hi {
            counts[(((x - lo) / h) as usize).min(bins - 1)] += 1;
        }
    }
    let (gx, gw) = gauss_legendre::<f64>(8);
    let total = samples.len() as f64;
    let mut within = 0;
    let table = counts
        .iter()
        .enumerate()
        .map(|(b, &obs)| {
            let (a, c) = (lo + b as f64 * h, lo + (b + 1) as f64 * h);
            let mass: f64 = gx.iter().zip(&gw).map(|(&u, &w)| w * density(a + (u + 1.0) * h / 2.0)).sum::<f64>() * h / 2.0;
            let expected = total * mass;
            if (obs as f64 - expected).abs() <= 3.0 * expected.sqrt() {
                within += 1;
            }
            ((a + c) / 2.0, obs, expected)
        })
        .collect();
    BandReport { bins, within, table }
}
