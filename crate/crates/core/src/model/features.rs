use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};

use super::{KernelKind, ModelSpec};
use crate::error::{Error, Result};

/// Sinusoidal basis function `sin(pi m (x + L) / (2L))`.
///
/// The `1/L` normalization of the Laplacian eigenfunction is dropped; it is
/// absorbed into the amplitude hyperparameter. Values outside `[-L, L]` use
/// the same formula (periodic extension).
pub fn feature_value(m: usize, x: f64, half_width: f64) -> f64 {
    (PI * m as f64 * (x + half_width) / (2.0 * half_width)).sin()
}

/// Prior variance of the `m`-th coefficient of a Gaussian-kernel component:
/// the spectral density `sqrt(pi sigma) exp(-sigma w^2 / 4)` evaluated at the
/// basis frequency `w = pi m / (2L)`.
pub fn spectral_variance(m: usize, sigma: f64, half_width: f64) -> f64 {
    let omega = PI * m as f64 / (2.0 * half_width);
    (PI * sigma).sqrt() * (-sigma * omega * omega / 4.0).exp()
}

/// Per-function design matrices `Phi_j` (samples x coefficients), with the
/// intercept as a trailing column of ones. Independent of hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    blocks: Vec<Array2<f64>>,
}

impl FeatureCache {
    pub fn new(spec: &ModelSpec, x: ArrayView2<'_, f64>) -> Result<Self> {
        let (n, dims) = x.dim();
        if let Some(max) = spec.max_covariate() {
            if max >= dims {
                return Err(Error::InvalidData(format!(
                    "model uses covariate {} but data has {dims} columns",
                    max + 1
                )));
            }
        }
        let blocks = spec
            .functions
            .iter()
            .map(|kernels| {
                let width: usize = kernels.iter().map(|k| k.features).sum::<usize>() + 1;
                let mut phi = Array2::zeros((n, width));
                for i in 0..n {
                    let mut col = 0;
                    for kernel in kernels {
                        let xi = x[[i, kernel.covariate]];
                        match kernel.kind {
                            KernelKind::Gaussian { half_width } => {
                                for m in 1..=kernel.features {
                                    phi[[i, col]] = feature_value(m, xi, half_width);
                                    col += 1;
                                }
                            }
                            KernelKind::Linear => {
                                phi[[i, col]] = xi;
                                col += 1;
                            }
                        }
                    }
                    phi[[i, col]] = 1.0;
                }
                phi
            })
            .collect();
        Ok(Self { blocks })
    }

    pub fn block(&self, j: usize) -> ArrayView2<'_, f64> {
        self.blocks[j].view()
    }

    pub fn num_functions(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_samples(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.nrows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn feature_values_at_landmarks() {
        assert!(feature_value(1, -8.0, 8.0).abs() < 1e-15);
        assert!((feature_value(1, 0.0, 8.0) - 1.0).abs() < 1e-15);
        assert!(feature_value(2, 0.0, 8.0).abs() < 1e-15);
        // outside the box: no clamping
        let outside = feature_value(3, 9.5, 8.0);
        let expected = (PI * 3.0 * 17.5 / 16.0).sin();
        assert_eq!(outside, expected);
    }

    #[test]
    fn spectral_variance_unit_exponent() {
        let l: f64 = 8.0;
        let sigma = 16.0 * l * l / (PI * PI);
        let v = spectral_variance(1, sigma, l);
        let expected = (PI * sigma).sqrt() * (-1.0f64).exp();
        assert!((v - expected).abs() < 1e-12 * expected);
        assert!(spectral_variance(1, 1e-300, l) < 1e-140);
    }

    proptest! {
        #[test]
        fn spectral_variance_positive_and_decreasing(
            sigma in 1e-3f64..50.0,
            l in 0.5f64..20.0,
            m in 1usize..60,
        ) {
            let a = spectral_variance(m, sigma, l);
            let b = spectral_variance(m + 1, sigma, l);
            // far tails underflow to zero; otherwise strictly positive and decreasing
            prop_assert!(a >= 0.0 && b >= 0.0);
            prop_assert!(b < a || a == 0.0);
            let omega = PI * (m + 1) as f64 / (2.0 * l);
            if sigma * omega * omega / 4.0 < 700.0 {
                prop_assert!(a > 0.0 && b > 0.0 && b < a);
            }
        }

        #[test]
        fn gaussian_features_bounded(x in -40.0f64..40.0, m in 1usize..40) {
            let v = feature_value(m, x, 8.0);
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }
}
