//! Hierarchical reduced-rank Gaussian-process models.
//!
//! Each latent function `f_j` is a sum of kernel components plus an
//! intercept. A Gaussian-kernel component is represented by `M` fixed
//! sinusoidal features whose coefficients have prior variance
//! `c_g * V_m(sigma_g)`; a linear component is the raw covariate with a
//! coefficient of prior variance `c_l`. The three hyperparameters
//! `(c_g, sigma_g, c_l)` are shared across all components of their kind and
//! carry inverse-gamma priors.

mod data;
mod features;
mod likelihood;
mod presets;
mod simulate;

pub use data::Dataset;
pub use features::{feature_value, spectral_variance, FeatureCache};
pub use likelihood::{Likelihood, Potential, MAX_FUNCTIONS};
pub use presets::{Preset, PresetOptions};
pub use simulate::{simulate_logistic, simulate_mean_variance, LogisticTruth, SimulateOptions};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of features per Gaussian-kernel component.
pub const DEFAULT_FEATURES: usize = 30;
/// Default domain half-width for Gaussian-kernel features.
pub const DEFAULT_HALF_WIDTH: f64 = 8.0;
/// Default variance floor for the mean/variance likelihood.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelKind {
    /// One-dimensional Gaussian kernel `exp(-(x - x')^2 / sigma)`.
    Gaussian { half_width: f64 },
    /// Linear kernel: the covariate itself is the single feature.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub covariate: usize,
    pub features: usize,
}

impl KernelSpec {
    pub fn gaussian(covariate: usize, features: usize, half_width: f64) -> Self {
        Self {
            kind: KernelKind::Gaussian { half_width },
            covariate,
            features,
        }
    }

    pub fn linear(covariate: usize) -> Self {
        Self {
            kind: KernelKind::Linear,
            covariate,
            features: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.features == 0 {
            return Err(Error::InvalidModel("kernel with zero features".into()));
        }
        match self.kind {
            KernelKind::Gaussian { half_width } => {
                if !(half_width > 0.0 && half_width.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "gaussian kernel half-width must be positive, got {half_width}"
                    )));
                }
            }
            KernelKind::Linear => {
                if self.features != 1 {
                    return Err(Error::InvalidModel(
                        "linear kernels have exactly one feature".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The shared hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hyper {
    /// Amplitude `c_g` of every Gaussian-kernel component.
    Amplitude,
    /// Bandwidth `sigma_g` of every Gaussian-kernel component.
    Bandwidth,
    /// Amplitude `c_l` of every linear component.
    LinearAmplitude,
}

impl Hyper {
    pub const ALL: [Hyper; 3] = [Hyper::Amplitude, Hyper::Bandwidth, Hyper::LinearAmplitude];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Hyper::Amplitude => "c_g",
            Hyper::Bandwidth => "sigma_g",
            Hyper::LinearAmplitude => "c_l",
        }
    }
}

/// Inverse-gamma prior with shape `alpha` and scale `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGamma {
    pub shape: f64,
    pub scale: f64,
}

impl InvGamma {
    pub fn new(shape: f64, scale: f64) -> Self {
        Self { shape, scale }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.ln_norm() - (self.shape + 1.0) * x.ln() - self.scale / x
    }

    /// `alpha ln beta - ln Gamma(alpha)`.
    pub fn ln_norm(&self) -> f64 {
        self.shape * self.scale.ln() - statrs::function::gamma::ln_gamma(self.shape)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPriors {
    pub amplitude: InvGamma,
    pub bandwidth: InvGamma,
    pub linear_amplitude: InvGamma,
}

impl HyperPriors {
    /// `alpha = beta = 2` for every hyperparameter (sampling-speed settings).
    pub fn speed() -> Self {
        Self {
            amplitude: InvGamma::new(2.0, 2.0),
            bandwidth: InvGamma::new(2.0, 2.0),
            linear_amplitude: InvGamma::new(2.0, 2.0),
        }
    }

    /// Settings used for model-evidence runs.
    pub fn evidence() -> Self {
        Self {
            amplitude: InvGamma::new(5.0, 0.5),
            bandwidth: InvGamma::new(1.0, 1.0),
            linear_amplitude: InvGamma::new(5.0, 0.5),
        }
    }

    pub fn get(&self, hyper: Hyper) -> InvGamma {
        match hyper {
            Hyper::Amplitude => self.amplitude,
            Hyper::Bandwidth => self.bandwidth,
            Hyper::LinearAmplitude => self.linear_amplitude,
        }
    }
}

/// How a hyperparameter enters the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HyperMode {
    Sampled,
    Fixed(f64),
}

/// Coordinate used for sampled hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HyperTransform {
    /// Sample `eta = ln theta`; the density picks up the Jacobian `e^eta`.
    #[default]
    Log,
    /// Sample `theta` directly; `theta <= 0` is outside the domain.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Kernel components of each latent function.
    pub functions: Vec<Vec<KernelSpec>>,
    pub likelihood: Likelihood,
    /// Prior variance of every intercept.
    pub intercept_variance: f64,
    pub priors: HyperPriors,
    /// Indexed by [`Hyper::index`].
    pub hypers: [HyperMode; 3],
    pub transform: HyperTransform,
}

impl ModelSpec {
    /// Additive logistic regression with one Gaussian-kernel component per
    /// covariate.
    pub fn logistic(dims: usize, features: usize, half_width: f64) -> Self {
        let kernels = (0..dims)
            .map(|k| KernelSpec::gaussian(k, features, half_width))
            .collect();
        Self {
            functions: vec![kernels],
            likelihood: Likelihood::Logistic,
            intercept_variance: 1.0,
            priors: HyperPriors::speed(),
            hypers: [HyperMode::Sampled; 3],
            transform: HyperTransform::Log,
        }
    }

    /// Mean/variance regression with the given kernels for `f_1` and `f_2`.
    pub fn mean_variance(mean: Vec<KernelSpec>, log_variance: Vec<KernelSpec>, delta: f64) -> Self {
        Self {
            functions: vec![mean, log_variance],
            likelihood: Likelihood::GaussianMeanVar { delta },
            intercept_variance: 1.0,
            priors: HyperPriors::evidence(),
            hypers: [HyperMode::Sampled; 3],
            transform: HyperTransform::Log,
        }
    }

    pub fn with_priors(mut self, priors: HyperPriors) -> Self {
        self.priors = priors;
        self
    }

    pub fn with_transform(mut self, transform: HyperTransform) -> Self {
        self.transform = transform;
        self
    }

    pub fn with_hyper(mut self, hyper: Hyper, mode: HyperMode) -> Self {
        self.hypers[hyper.index()] = mode;
        self
    }

    pub fn num_functions(&self) -> usize {
        self.functions.len()
    }

    pub fn has_kernel(&self, linear: bool) -> bool {
        self.functions
            .iter()
            .flatten()
            .any(|k| matches!(k.kind, KernelKind::Linear) == linear)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.functions.len();
        if j != self.likelihood.num_functions() {
            return Err(Error::InvalidModel(format!(
                "{} likelihood requires J = {}, got {j}",
                self.likelihood.name(),
                self.likelihood.num_functions()
            )));
        }
        for kernel in self.functions.iter().flatten() {
            kernel.validate()?;
        }
        if !(self.intercept_variance > 0.0) {
            return Err(Error::InvalidModel("intercept variance must be positive".into()));
        }
        for hyper in Hyper::ALL {
            let prior = self.priors.get(hyper);
            if !(prior.shape > 0.0 && prior.scale > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "prior parameters of {} must be positive",
                    hyper.name()
                )));
            }
            if let HyperMode::Fixed(v) = self.hypers[hyper.index()] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "fixed {} must be positive, got {v}",
                        hyper.name()
                    )));
                }
            }
        }
        if let Likelihood::GaussianMeanVar { delta } = self.likelihood {
            if !(delta > 0.0) {
                return Err(Error::InvalidModel("variance floor delta must be positive".into()));
            }
        }
        if let Likelihood::Gaussian { noise_variance } = self.likelihood {
            if !(noise_variance > 0.0) {
                return Err(Error::InvalidModel("noise variance must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn max_covariate(&self) -> Option<usize> {
        self.functions.iter().flatten().map(|k| k.covariate).max()
    }
}

/// One latent function's slice of the parameter vector: the coefficients of
/// each kernel component followed by the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionBlock {
    pub offset: usize,
    pub len: usize,
    pub kernels: Vec<Range<usize>>,
    pub intercept: usize,
}

impl FunctionBlock {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Index map of the flat parameter vector `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    pub functions: Vec<FunctionBlock>,
    /// Coordinate of each sampled hyperparameter, by [`Hyper::index`].
    pub hypers: [Option<usize>; 3],
    /// Number of coefficient coordinates (all function blocks).
    pub num_coefficients: usize,
    pub dim: usize,
}

impl BlockLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut offset = 0;
        let mut functions = Vec::with_capacity(spec.functions.len());
        for kernels in &spec.functions {
            let start = offset;
            let spans = kernels
                .iter()
                .map(|k| {
                    let span = offset..offset + k.features;
                    offset += k.features;
                    span
                })
                .collect();
            let intercept = offset;
            offset += 1;
            functions.push(FunctionBlock {
                offset: start,
                len: offset - start,
                kernels: spans,
                intercept,
            });
        }
        let num_coefficients = offset;
        let mut hypers = [None; 3];
        for hyper in Hyper::ALL {
            if spec.hypers[hyper.index()] == HyperMode::Sampled {
                hypers[hyper.index()] = Some(offset);
                offset += 1;
            }
        }
        Self {
            functions,
            hypers,
            num_coefficients,
            dim: offset,
        }
    }

    pub fn hyper(&self, hyper: Hyper) -> Option<usize> {
        self.hypers[hyper.index()]
    }
}

/// How each coefficient's prior variance depends on the hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum CoefPrior {
    /// Variance `c_g * sqrt(pi sigma) exp(-sigma * freq2 / 4)`.
    Gaussian { freq2: f64 },
    /// Variance `c_l`.
    Linear,
    /// Variance `Sigma`.
    Intercept,
}

pub(crate) fn coefficient_priors(spec: &ModelSpec) -> Vec<CoefPrior> {
    let mut out = Vec::new();
    for kernels in &spec.functions {
        for kernel in kernels {
            match kernel.kind {
                KernelKind::Gaussian { half_width } => {
                    for m in 1..=kernel.features {
                        let omega = std::f64::consts::PI * m as f64 / (2.0 * half_width);
                        out.push(CoefPrior::Gaussian { freq2: omega * omega });
                    }
                }
                KernelKind::Linear => out.push(CoefPrior::Linear),
            }
        }
        out.push(CoefPrior::Intercept);
    }
    out
}

/// Starting point with all coefficients zero and every hyperparameter at 1.
pub fn default_initial_point(layout: &BlockLayout, transform: HyperTransform) -> Vec<f64> {
    let mut q = vec![0.0; layout.dim];
    if transform == HyperTransform::Identity {
        for idx in layout.hypers.iter().flatten() {
            q[*idx] = 1.0;
        }
    }
    q
}
