use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{feature_value, Dataset, DEFAULT_FEATURES};
use crate::error::{Error, Result};

/// Intercept of the simulated log-odds.
pub const TRUE_INTERCEPT: f64 = -0.5;
/// Target empirical standard deviation of the simulated log-odds.
pub const TRUE_LOG_ODDS_SD: f64 = 1.5;
/// Frequencies `m` with non-zero true coefficients.
pub const TRUE_FREQUENCIES: std::ops::RangeInclusive<usize> = 4..=16;

/// Ground truth of a simulated logistic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticTruth {
    pub c_star: f64,
    pub b_star: f64,
    /// Coefficients per covariate, indexed `[k][m - 1]`.
    pub a_star: Vec<Vec<f64>>,
    pub seed: u64,
}

impl LogisticTruth {
    pub fn log_odds(&self, x: &[f64], half_width: f64) -> f64 {
        let mut f = self.b_star;
        for (k, coefs) in self.a_star.iter().enumerate() {
            for (m0, a) in coefs.iter().enumerate() {
                if *a != 0.0 {
                    f += a * feature_value(m0 + 1, x[k], half_width);
                }
            }
        }
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateOptions {
    pub features: usize,
    /// Force `a* = 0` and `b* = 0`, so labels are fair coin flips.
    pub zero_truth: bool,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            features: DEFAULT_FEATURES,
            zero_truth: false,
        }
    }
}

/// Standard-normal covariates, a sparse sinusoidal log-odds rescaled to an
/// empirical SD of 1.5, and +/-1 labels drawn from the logistic model.
pub fn simulate_logistic(
    dims: usize,
    n: usize,
    half_width: f64,
    seed: u64,
    options: SimulateOptions,
) -> Result<(Dataset, LogisticTruth)> {
    if dims == 0 || n < 2 {
        return Err(Error::InvalidConfig(format!(
            "simulation needs dims >= 1 and n >= 2, got dims = {dims}, n = {n}"
        )));
    }
    if options.features < *TRUE_FREQUENCIES.end() {
        return Err(Error::InvalidConfig(format!(
            "simulation needs at least {} features",
            TRUE_FREQUENCIES.end()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, dims), |_| rng.sample::<f64, _>(StandardNormal));

    // unit-scale draws a_m ~ N(0, 1/m); rescaled by sqrt(c*) below
    let mut unit: Vec<Vec<f64>> = vec![vec![0.0; options.features]; dims];
    for coefs in unit.iter_mut() {
        for m in TRUE_FREQUENCIES {
            let z: f64 = rng.sample(StandardNormal);
            coefs[m - 1] = z / (m as f64).sqrt();
        }
    }

    let (c_star, b_star, a_star) = if options.zero_truth {
        (0.0, 0.0, vec![vec![0.0; options.features]; dims])
    } else {
        let shape = LogisticTruth {
            c_star: 1.0,
            b_star: 0.0,
            a_star: unit.clone(),
            seed,
        };
        let g: Vec<f64> = x
            .rows()
            .into_iter()
            .map(|row| shape.log_odds(row.as_slice().unwrap(), half_width))
            .collect();
        let sd = sample_sd(&g);
        if sd == 0.0 {
            return Err(Error::InvalidData("degenerate simulated covariates".into()));
        }
        let c = (TRUE_LOG_ODDS_SD / sd).powi(2);
        let scale = c.sqrt();
        let a = unit
            .iter()
            .map(|coefs| coefs.iter().map(|v| v * scale).collect())
            .collect();
        (c, TRUE_INTERCEPT, a)
    };
    let truth = LogisticTruth {
        c_star,
        b_star,
        a_star,
        seed,
    };

    let y = x
        .rows()
        .into_iter()
        .map(|row| {
            let f = truth.log_odds(row.as_slice().unwrap(), half_width);
            let p = 1.0 / (1.0 + (-f).exp());
            if rng.random::<f64>() < p {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Ok((Dataset::new(x, y)?, truth))
}

/// Heteroscedastic regression data with `continuous` standard-normal
/// covariates followed by `binary` 0/1 covariates.
///
/// Mean `f_1 = sum_k 1.5 sin(1.5 x_k) / k + 0.7 sum_b x_b` (nonlinear) and
/// log-variance `f_2 = -1 + x_1 + 0.4 sum_b x_b`, target
/// `y = f_1 + sqrt(delta + exp f_2) * eps`.
pub fn simulate_mean_variance(
    continuous: usize,
    binary: usize,
    n: usize,
    delta: f64,
    seed: u64,
) -> Result<Dataset> {
    if continuous == 0 || n < 2 {
        return Err(Error::InvalidConfig(
            "mean/variance simulation needs a continuous covariate and n >= 2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = continuous + binary;
    let mut x = Array2::<f64>::zeros((n, dims));
    for i in 0..n {
        for k in 0..continuous {
            x[[i, k]] = rng.sample(StandardNormal);
        }
        for k in continuous..dims {
            x[[i, k]] = if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 };
        }
    }
    let y = (0..n)
        .map(|i| {
            let mut f1 = 0.0;
            for k in 0..continuous {
                f1 += 1.5 * (1.5 * x[[i, k]]).sin() / (k + 1) as f64;
            }
            let bsum: f64 = (continuous..dims).map(|k| x[[i, k]]).sum();
            f1 += 0.7 * bsum;
            let f2 = -1.0 + x[[i, 0]] + 0.4 * bsum;
            let eps: f64 = rng.sample(StandardNormal);
            f1 + (delta + f2.exp()).sqrt() * eps
        })
        .collect();
    Dataset::new(x, y)
}

pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_odds_sd_is_exactly_rescaled() {
        let (data, truth) = simulate_logistic(1, 500, 8.0, 7, SimulateOptions::default()).unwrap();
        assert_eq!(data.len(), 500);
        assert_eq!(data.dims(), 1);
        let f: Vec<f64> = data
            .x
            .rows()
            .into_iter()
            .map(|r| truth.log_odds(r.as_slice().unwrap(), 8.0))
            .collect();
        assert!((sample_sd(&f) - 1.5).abs() < 1e-12);
        assert_eq!(truth.b_star, -0.5);
        for coefs in &truth.a_star {
            for (m0, a) in coefs.iter().enumerate() {
                assert_eq!(*a == 0.0, !(3..16).contains(&m0));
            }
        }
        assert!(data.y.iter().all(|&y| y == 1.0 || y == -1.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = simulate_logistic(3, 50, 8.0, 11, SimulateOptions::default()).unwrap();
        let b = simulate_logistic(3, 50, 8.0, 11, SimulateOptions::default()).unwrap();
        assert_eq!(a, b);
        let c = simulate_logistic(3, 50, 8.0, 12, SimulateOptions::default()).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn zero_truth_gives_fair_coin() {
        let opts = SimulateOptions {
            zero_truth: true,
            ..Default::default()
        };
        let (data, truth) = simulate_logistic(1, 20_000, 8.0, 3, opts).unwrap();
        assert_eq!(truth.b_star, 0.0);
        let pos = data.y.iter().filter(|&&y| y > 0.0).count() as f64 / 20_000.0;
        // 5 binomial standard errors
        assert!((pos - 0.5).abs() < 5.0 * (0.25f64 / 20_000.0).sqrt(), "{pos}");
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(simulate_logistic(0, 10, 8.0, 1, SimulateOptions::default()).is_err());
        assert!(simulate_logistic(1, 1, 8.0, 1, SimulateOptions::default()).is_err());
    }

    #[test]
    fn mean_variance_layout() {
        let d = simulate_mean_variance(2, 1, 100, 1e-3, 5).unwrap();
        assert_eq!(d.dims(), 3);
        assert_eq!(d.binary_columns(), vec![false, false, true]);
    }
}
