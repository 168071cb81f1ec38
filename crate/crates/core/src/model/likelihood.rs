use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of latent functions any likelihood uses.
pub const MAX_FUNCTIONS: usize = 2;

/// Per-sample negative log-likelihood `U(f_1, ..., f_J)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Likelihood {
    /// `ln(1 + exp(-y f))` with labels `y` in {-1, +1}; `J = 1`.
    Logistic,
    /// `y ~ N(f_1, delta + exp f_2)`; `J = 2`.
    GaussianMeanVar { delta: f64 },
    /// `y ~ N(f_1, noise_variance)`; `J = 1`. Conjugate with the linear
    /// kernel and used as an analytically tractable reference.
    Gaussian { noise_variance: f64 },
}

/// `U` and its partial derivatives up to third order with respect to the
/// latent function values at one sample. Entries beyond `J` are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Potential {
    pub value: f64,
    pub d1: [f64; MAX_FUNCTIONS],
    pub d2: [[f64; MAX_FUNCTIONS]; MAX_FUNCTIONS],
    pub d3: [[[f64; MAX_FUNCTIONS]; MAX_FUNCTIONS]; MAX_FUNCTIONS],
}

impl Likelihood {
    pub fn num_functions(&self) -> usize {
        match self {
            Likelihood::Logistic | Likelihood::Gaussian { .. } => 1,
            Likelihood::GaussianMeanVar { .. } => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Likelihood::Logistic => "logistic",
            Likelihood::GaussianMeanVar { .. } => "gaussian_meanvar",
            Likelihood::Gaussian { .. } => "gaussian",
        }
    }

    pub fn validate_target(&self, y: f64) -> Result<()> {
        match self {
            Likelihood::Logistic if y != 1.0 && y != -1.0 => Err(Error::InvalidData(format!(
                "logistic labels must be -1 or +1, got {y}"
            ))),
            _ if !y.is_finite() => Err(Error::InvalidData(format!("non-finite target {y}"))),
            _ => Ok(()),
        }
    }

    /// Analytic `U` and derivatives at one sample.
    pub fn potential(&self, f: &[f64], y: f64) -> Result<Potential> {
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite latent value {f:?}")));
        }
        let mut out = Potential::default();
        match *self {
            Likelihood::Logistic => {
                let s = y * f[0];
                // ln(1 + e^{-s}), stable for both signs
                out.value = if s > 0.0 {
                    (-s).exp().ln_1p()
                } else {
                    -s + s.exp().ln_1p()
                };
                let p = sigmoid(s);
                let q = 1.0 - p;
                out.d1[0] = -y * q;
                out.d2[0][0] = p * q;
                out.d3[0][0][0] = y * p * q * (q - p);
            }
            Likelihood::Gaussian { noise_variance } => {
                let r = y - f[0];
                out.value =
                    0.5 * (2.0 * std::f64::consts::PI * noise_variance).ln() + r * r / (2.0 * noise_variance);
                out.d1[0] = -r / noise_variance;
                out.d2[0][0] = 1.0 / noise_variance;
            }
            Likelihood::GaussianMeanVar { delta } => {
                let r = y - f[0];
                let e = f[1].exp();
                let v = delta + e;
                let r2 = r * r;
                let v2 = v * v;
                let v3 = v2 * v;
                out.value = 0.5 * (2.0 * std::f64::consts::PI * v).ln() + r2 / (2.0 * v);
                out.d1[0] = -r / v;
                out.d1[1] = 0.5 * e / v - 0.5 * r2 * e / v2;

                let u11 = 1.0 / v;
                let u12 = r * e / v2;
                let u22 = 0.5 * e * delta / v2 - 0.5 * r2 * e * (delta - e) / v3;
                out.d2 = [[u11, u12], [u12, u22]];

                let u111 = 0.0;
                let u112 = -e / v2;
                let u122 = r * e * (delta - e) / v3;
                let u222 = 0.5 * delta * e * (delta - e) / v3
                    - 0.5 * r2 * (e * (delta - 2.0 * e) / v3 - 3.0 * e * e * (delta - e) / (v3 * v));
                out.d3 = [[[u111, u112], [u112, u122]], [[u112, u122], [u122, u222]]];
            }
        }
        if !out.value.is_finite() {
            return Err(Error::Divergence(format!("non-finite potential at f = {f:?}")));
        }
        Ok(out)
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}
