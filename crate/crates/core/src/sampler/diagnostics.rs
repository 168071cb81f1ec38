use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided rank-sum test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumTest {
    /// Rank sum of the first sample.
    pub statistic: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Wilcoxon rank-sum test of `a` against `b`: normal approximation with
/// tie-corrected variance and a continuity correction. A zero variance
/// (all values tied) gives `p = 1`.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<RankSumTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::SeriesTooShort {
            needed: 2,
            found: a.len() + b.len(),
        });
    }
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let n = n1 + n2;
    let mut all: Vec<(f64, bool)> = a.iter().map(|&v| (v, true)).chain(b.iter().map(|&v| (v, false))).collect();
    if all.iter().any(|(v, _)| v.is_nan()) {
        return Err(Error::InvalidData("NaN in rank-sum input".into()));
    }
    all.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut statistic = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        statistic += all[i..=j].iter().filter(|(_, first)| *first).count() as f64 * rank;
        i = j + 1;
    }

    let mean = n1 * (n + 1.0) / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(RankSumTest {
            statistic,
            z: 0.0,
            p_value: 1.0,
        });
    }
    let dev = statistic - mean;
    let corrected = (dev.abs() - 0.5).max(0.0) * dev.signum();
    let z = corrected / var.sqrt();
    let p_value = (2.0 * normal_sf(z.abs())).min(1.0);
    Ok(RankSumTest { statistic, z, p_value })
}

/// Rank-sum test of the first half of `values` against the second half
/// (the middle value is dropped for odd lengths).
pub fn wilcoxon_split_half(values: &[f64]) -> Result<RankSumTest> {
    if values.len() < 10 {
        return Err(Error::SeriesTooShort {
            needed: 10,
            found: values.len(),
        });
    }
    let half = values.len() / 2;
    rank_sum_test(&values[..half], &values[values.len() - half..])
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsTest> {
    if samples.is_empty() {
        return Err(Error::SeriesTooShort { needed: 1, found: 0 });
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    let p_value = kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
    Ok(KsTest { statistic: d, p_value })
}

/// `P(K > x)` for the Kolmogorov distribution.
fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Upper tail of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

pub fn normal_cdf(z: f64) -> f64 {
    normal_sf(-z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_has_p_one() {
        let r = wilcoxon_split_half(&[2.0; 20]).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn complete_separation_is_significant() {
        let r = rank_sum_test(&[1.0, 2.0, 3.0], &[100.0, 200.0, 300.0]).unwrap();
        assert_eq!(r.statistic, 6.0);
        // smallest attainable two-sided p for n = m = 3 under the normal approximation
        assert!(r.p_value < 0.1);
        let long: Vec<f64> = (0..40).map(|i| if i < 20 { i as f64 } else { 100.0 + i as f64 }).collect();
        assert!(wilcoxon_split_half(&long).unwrap().p_value < 0.01);
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            wilcoxon_split_half(&[1.0; 9]),
            Err(Error::SeriesTooShort { needed: 10, found: 9 })
        ));
    }

    /// Exact two-sided p-value for rank sums with distinct values, by
    /// enumerating all subsets of ranks.
    fn exact_p(n1: usize, n2: usize, w: f64) -> f64 {
        let n = n1 + n2;
        let mean = n1 as f64 * (n + 1) as f64 / 2.0;
        let mut total = 0usize;
        let mut extreme = 0usize;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != n1 {
                continue;
            }
            total += 1;
            let s: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
            if (s as f64 - mean).abs() >= (w - mean).abs() - 1e-9 {
                extreme += 1;
            }
        }
        extreme as f64 / total as f64
    }

    #[test]
    fn normal_approximation_tracks_exact_distribution() {
        // every arrangement of n = m = 4 distinct values; the approximation is
        // within 0.02 wherever the exact p is at most 0.2, and within 0.035
        // across the bulk of the distribution
        let mut worst_tail: f64 = 0.0;
        let mut worst: f64 = 0.0;
        for mask in 0u32..256 {
            if mask.count_ones() != 4 {
                continue;
            }
            let (a, b): (Vec<f64>, Vec<f64>) = (0..8).map(|i| (i as f64, mask & (1 << i) != 0)).fold(
                (vec![], vec![]),
                |(mut a, mut b), (v, first)| {
                    if first {
                        a.push(v)
                    } else {
                        b.push(v)
                    }
                    (a, b)
                },
            );
            let r = rank_sum_test(&a, &b).unwrap();
            let exact = exact_p(4, 4, r.statistic);
            let gap = (r.p_value - exact).abs();
            worst = worst.max(gap);
            if exact <= 0.2 {
                worst_tail = worst_tail.max(gap);
            }
        }
        assert!(worst_tail <= 0.02, "{worst_tail}");
        assert!(worst <= 0.035, "{worst}");
        let sep = rank_sum_test(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0, 7.0, 8.0]).unwrap();
        assert!((sep.p_value - 2.0 / 70.0).abs() < 0.02);
    }

    #[test]
    fn ks_detects_shift() {
        let grid: Vec<f64> = (1..=999).map(|i| i as f64 / 1000.0).collect();
        let uniform = |x: f64| x.clamp(0.0, 1.0);
        assert!(ks_test(&grid, uniform).unwrap().p_value > 0.99);
        let shifted: Vec<f64> = grid.iter().map(|x| x * 0.8).collect();
        let r = ks_test(&shifted, uniform).unwrap();
        assert!((r.statistic - 0.2).abs() < 2e-3);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // standard table: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
    }
}
