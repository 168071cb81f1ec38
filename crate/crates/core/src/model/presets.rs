use serde::{Deserialize, Serialize};

use super::{
    Dataset, HyperMode, HyperPriors, HyperTransform, KernelSpec, Likelihood, ModelSpec, DEFAULT_FEATURES,
    DEFAULT_HALF_WIDTH, DEFAULT_VARIANCE_FLOOR,
};
use crate::error::{Error, Result};

/// Named model families assembled from a dataset's columns.
///
/// "Nonlinear" families give every continuous column a Gaussian-kernel
/// component; "linear" ones a linear component. Binary (0/1) columns always
/// get a linear component. Mean-only families model the variance with an
/// intercept alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Logistic,
    LMean,
    NlMean,
    LMeanvar,
    NlMeanvar,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Logistic,
        Preset::LMean,
        Preset::NlMean,
        Preset::LMeanvar,
        Preset::NlMeanvar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Logistic => "logistic",
            Preset::LMean => "l-mean",
            Preset::NlMean => "nl-mean",
            Preset::LMeanvar => "l-meanvar",
            Preset::NlMeanvar => "nl-meanvar",
        }
    }

    /// Default hyperpriors: the sampling-speed settings for the logistic
    /// family, the evidence settings for the regression families.
    pub fn default_priors(self) -> HyperPriors {
        match self {
            Preset::Logistic => HyperPriors::speed(),
            _ => HyperPriors::evidence(),
        }
    }

    pub fn build(self, data: &Dataset, options: &PresetOptions) -> Result<ModelSpec> {
        if data.dims() == 0 {
            return Err(Error::InvalidData("dataset has no covariate columns".into()));
        }
        let binary = data.binary_columns();
        let kernels = |nonlinear: bool| -> Vec<KernelSpec> {
            binary
                .iter()
                .enumerate()
                .map(|(k, &is_binary)| {
                    if nonlinear && !is_binary {
                        KernelSpec::gaussian(k, options.features, options.half_width)
                    } else {
                        KernelSpec::linear(k)
                    }
                })
                .collect()
        };
        let (functions, likelihood) = match self {
            Preset::Logistic => (vec![kernels(true)], Likelihood::Logistic),
            Preset::LMean => (vec![kernels(false), vec![]], self.meanvar(options)),
            Preset::NlMean => (vec![kernels(true), vec![]], self.meanvar(options)),
            Preset::LMeanvar => (vec![kernels(false), kernels(false)], self.meanvar(options)),
            Preset::NlMeanvar => (vec![kernels(true), kernels(true)], self.meanvar(options)),
        };
        let spec = ModelSpec {
            functions,
            likelihood,
            intercept_variance: options.intercept_variance,
            priors: options.priors.unwrap_or_else(|| self.default_priors()),
            hypers: [HyperMode::Sampled; 3],
            transform: HyperTransform::Log,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn meanvar(self, options: &PresetOptions) -> Likelihood {
        Likelihood::GaussianMeanVar { delta: options.delta }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown model '{s}' (expected logistic, l-mean, nl-mean, l-meanvar or nl-meanvar)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetOptions {
    /// Features `M` per Gaussian-kernel component.
    pub features: usize,
    /// Domain half-width `L`.
    pub half_width: f64,
    /// Variance floor `delta` of the mean/variance likelihood.
    pub delta: f64,
    /// Intercept prior variance `Sigma`.
    pub intercept_variance: f64,
    /// `None` picks [`Preset::default_priors`].
    pub priors: Option<HyperPriors>,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self {
            features: DEFAULT_FEATURES,
            half_width: DEFAULT_HALF_WIDTH,
            delta: DEFAULT_VARIANCE_FLOOR,
            intercept_variance: 1.0,
            priors: None,
        }
    }
}
