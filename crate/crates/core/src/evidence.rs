//! Log model evidence: thermodynamic integration over a temperature ladder,
//! plus Laplace-type approximations used as cross-checks.
//!
//! Thermodynamic integration uses
//!
//! ```text
//! ln Z = ∫₀¹ E_τ[ln P(X | a)] dτ
//! ```
//!
//! where `E_τ` is the expectation under the posterior with the likelihood
//! raised to the power `τ`. Each chain walks the ladder from `τ = 1` down to
//! `τ = 0`, starting every rung from the previous rung's endpoint.

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{static_eigendecompose, JacobiConfig};
use crate::model::{Hyper, HyperMode, KernelKind};
use crate::optim::{max_abs, minimize, LbfgsConfig};
use crate::posterior::Posterior;
use crate::sampler::{wilcoxon_split_half, ChainConfig, Sampler};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Strictly decreasing temperatures from exactly 1 to exactly 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperLadder {
    taus: Vec<f64>,
}

impl TemperLadder {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if taus.len() < 2 {
            return Err(Error::InvalidConfig("a ladder needs at least two rungs".into()));
        }
        if taus[0] != 1.0 || *taus.last().unwrap() != 0.0 {
            return Err(Error::InvalidConfig("a ladder must run from 1 down to 0".into()));
        }
        if let Some(w) = taus.windows(2).find(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidConfig(format!(
                "ladder not strictly decreasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { taus })
    }

    /// `S` evenly spaced rungs.
    pub fn uniform(rungs: usize) -> Result<Self> {
        if rungs < 2 {
            return Err(Error::InvalidConfig("a ladder needs at least two rungs".into()));
        }
        let last = (rungs - 1) as f64;
        Self::new((0..rungs).map(|s| 1.0 - s as f64 / last).collect())
    }

    /// Parses one temperature per line; blank lines and `#` comments are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let taus = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, l)| {
                l.parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("ladder line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(taus)
    }

    /// Inserts the midpoint between every pair of neighbouring rungs.
    pub fn refined(&self) -> Self {
        let mut taus = Vec::with_capacity(2 * self.taus.len() - 1);
        for w in self.taus.windows(2) {
            taus.push(w[0]);
            taus.push(0.5 * (w[0] + w[1]));
        }
        taus.push(0.0);
        Self { taus }
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }
}

/// The 101-rung piecewise-linear schedule, dense near `τ = 0`.
pub fn default_ladder() -> TemperLadder {
    let taus = (1..=101)
        .map(|s| {
            let s = s as f64;
            let tau = if s <= 41.0 {
                1.0 - 0.02 * (s - 1.0)
            } else if s <= 71.0 {
                0.2 - 0.005 * (s - 41.0)
            } else if s <= 91.0 {
                0.05 - 0.002 * (s - 71.0)
            } else {
                0.01 - 0.001 * (s - 91.0)
            };
            // the schedule is exact on paper; snap the float noise at the end
            if tau.abs() < 1e-12 {
                0.0
            } else {
                tau
            }
        })
        .collect();
    TemperLadder { taus }
}

/// Trapezoid rule for `∫₀¹ g(τ) dτ` from values at the (decreasing) rungs.
pub fn trapezoid(ladder: &TemperLadder, values: &[f64]) -> f64 {
    ladder
        .taus
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[0] - t[1]))
        .sum()
}

/// Variance of a single chain's trapezoid estimate when the rung values are
/// independent with the given variances.
pub fn ti_variance(rung_variances: &[f64], ladder: &TemperLadder) -> f64 {
    let t = &ladder.taus;
    let s_max = t.len();
    rung_variances
        .iter()
        .enumerate()
        .map(|(s, v)| {
            let before = if s > 0 { (t[s] - t[s - 1]).powi(2) } else { 0.0 };
            let after = if s + 1 < s_max { (t[s + 1] - t[s]).powi(2) } else { 0.0 };
            0.25 * v * (before + after)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceConfig {
    /// Settings shared by every chain; `moves` and `burnin` are ignored.
    pub chain: ChainConfig,
    /// Moves per rung `A`.
    pub moves_per_rung: usize,
    /// Ladder chains `Z`.
    pub chains: usize,
    /// Moves per convergence check of the shared warm-up chain.
    pub warmup_block: usize,
    /// Cap on warm-up moves.
    pub warmup_max: usize,
    /// Moves each chain runs at `τ = 1` after the warm-up, to decorrelate
    /// the chains before descending.
    pub spread_moves: usize,
    /// Average `ln P(X | a)` over all moves of a rung instead of using the
    /// rung's endpoint draw.
    pub average_rungs: bool,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        Self {
            chain: ChainConfig::default(),
            moves_per_rung: 50,
            chains: 50,
            warmup_block: 200,
            warmup_max: 10_000,
            spread_moves: 500,
            average_rungs: false,
        }
    }
}

impl EvidenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if self.moves_per_rung == 0 || self.chains == 0 {
            return Err(Error::InvalidConfig("moves per rung and chain count must be at least 1".into()));
        }
        if self.warmup_block < 10 && self.warmup_max > 0 {
            return Err(Error::InvalidConfig("warm-up blocks need at least 10 moves".into()));
        }
        Ok(())
    }
}

/// Result of one ladder chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainIntegral {
    pub chain: usize,
    pub integral: f64,
    /// `ln P(X | a)` per rung (endpoint draw, or rung average).
    pub rung_values: Vec<f64>,
    pub accept_rate: f64,
    pub divergent_moves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub bme_mean: f64,
    /// Sample SD of the per-chain integrals over `√Z`.
    pub bme_stderr: f64,
    /// Standard error from the per-rung variance formula.
    pub ti_stderr: f64,
    pub per_chain: Vec<f64>,
    pub ladder: Vec<f64>,
    pub rung_means: Vec<f64>,
    pub warnings: Vec<String>,
    pub warmup_moves: usize,
    pub warmup_p_value: Option<f64>,
    pub chains: Vec<ChainIntegral>,
}

/// Thermodynamic integration with `config.chains` chains run in parallel.
pub fn thermo_integrate(posterior: &Posterior, ladder: &TemperLadder, config: &EvidenceConfig) -> Result<EvidenceReport> {
    config.validate()?;
    let mut warnings = Vec::new();
    let base = posterior.with_temperature(1.0)?;
    let seed = config.chain.seed;

    // shared warm-up at τ = 1
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut sampler = Sampler::with_rng(&base, config.chain, None, rng)?;
    let mut trace = Vec::new();
    let mut warmup_p = None;
    while trace.len() < config.warmup_max {
        for _ in 0..config.warmup_block.min(config.warmup_max - trace.len()) {
            trace.push(sampler.step()?.logpost);
        }
        let window = &trace[trace.len().saturating_sub(config.warmup_block)..];
        if let Ok(test) = wilcoxon_split_half(window) {
            warmup_p = Some(test.p_value);
            if test.p_value > 0.05 {
                break;
            }
        }
    }
    if config.warmup_max > 0 && !warmup_p.is_some_and(|p| p > 0.05) {
        warnings.push(format!(
            "warm-up chain did not pass the split-half test within {} moves",
            trace.len()
        ));
    }
    let shared = sampler.q().to_owned();
    drop(sampler);

    let results: Vec<Result<ChainIntegral>> = (0..config.chains)
        .into_par_iter()
        .map(|z| run_ladder_chain(&base, ladder, config, shared.view(), z))
        .collect();

    let mut chains = Vec::new();
    for (z, r) in results.into_iter().enumerate() {
        match r {
            Ok(c) => {
                if c.divergent_moves > 0 {
                    warnings.push(format!("chain {z}: {} divergent moves rejected", c.divergent_moves));
                }
                chains.push(c)
            }
            Err(e) if e.is_rejection() => warnings.push(format!("chain {z} dropped: {e}")),
            Err(e) => return Err(e),
        }
    }
    if chains.is_empty() {
        return Err(Error::Evidence("every ladder chain failed".into()));
    }
    if chains.len() < config.chains {
        warnings.push(format!(
            "estimate uses {} of {} chains",
            chains.len(),
            config.chains
        ));
    }

    let per_chain: Vec<f64> = chains.iter().map(|c| c.integral).collect();
    let z = per_chain.len() as f64;
    let bme_mean = per_chain.iter().sum::<f64>() / z;
    let bme_stderr = if per_chain.len() > 1 {
        (sample_variance(&per_chain) / z).sqrt()
    } else {
        warnings.push("a single surviving chain has no cross-chain standard error".into());
        f64::NAN
    };
    let rungs = ladder.len();
    let column = |s: usize| chains.iter().map(|c| c.rung_values[s]).collect::<Vec<_>>();
    let rung_means: Vec<f64> = (0..rungs).map(|s| column(s).iter().sum::<f64>() / z).collect();
    let ti_stderr = if per_chain.len() > 1 {
        let vars: Vec<f64> = (0..rungs).map(|s| sample_variance(&column(s))).collect();
        (ti_variance(&vars, ladder) / z).sqrt()
    } else {
        f64::NAN
    };

    Ok(EvidenceReport {
        bme_mean,
        bme_stderr,
        ti_stderr,
        per_chain,
        ladder: ladder.taus.clone(),
        rung_means,
        warnings,
        warmup_moves: trace.len(),
        warmup_p_value: warmup_p,
        chains,
    })
}

fn run_ladder_chain(
    base: &Posterior,
    ladder: &TemperLadder,
    config: &EvidenceConfig,
    start: ArrayView1<'_, f64>,
    z: usize,
) -> Result<ChainIntegral> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.chain.seed);
    rng.set_stream(z as u64 + 1);
    let mut q = start.to_owned();
    let mut rung_values = Vec::with_capacity(ladder.len());
    let (mut accepted, mut moves, mut divergent) = (0usize, 0usize, 0usize);

    for (s, &tau) in ladder.taus.iter().enumerate() {
        let post = base.with_temperature(tau)?;
        let mut sampler = Sampler::with_rng(&post, config.chain, Some(q.view()), rng)
            .map_err(|e| rung_error(e, z, s, tau))?;
        let n = if s == 0 { config.spread_moves } else { config.moves_per_rung };
        let mut sum = 0.0;
        let tail_from = n.saturating_sub(config.moves_per_rung);
        for m in 0..n {
            let rec = sampler.step().map_err(|e| rung_error(e, z, s, tau))?;
            moves += 1;
            accepted += rec.accept as usize;
            divergent += rec.divergent as usize;
            if m >= tail_from {
                sum += sampler.log_likelihood();
            }
        }
        let value = if config.average_rungs && n > 0 {
            sum / (n - tail_from) as f64
        } else {
            sampler.log_likelihood()
        };
        if !value.is_finite() {
            return Err(Error::Divergence(format!("chain {z}: non-finite log-likelihood at τ = {tau}")));
        }
        rung_values.push(value);
        q = sampler.q().to_owned();
        rng = sampler.into_rng();
    }

    Ok(ChainIntegral {
        chain: z,
        integral: trapezoid(ladder, &rung_values),
        rung_values,
        accept_rate: if moves > 0 { accepted as f64 / moves as f64 } else { 0.0 },
        divergent_moves: divergent,
    })
}

fn rung_error(e: Error, z: usize, s: usize, tau: f64) -> Error {
    match e {
        Error::Divergence(m) | Error::Domain(m) => {
            Error::Divergence(format!("chain {z} at rung {} (τ = {tau}): {m}", s + 1))
        }
        other => other,
    }
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceConfig {
    pub lbfgs: LbfgsConfig,
    /// Newton steps used to polish the quasi-Newton optimum.
    pub newton_iters: usize,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        Self {
            lbfgs: LbfgsConfig::default(),
            newton_iters: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LaplaceResult {
    pub log_evidence: f64,
    pub mode: Array1<f64>,
    /// `ln P(q̂)`, unnormalized.
    pub log_peak: f64,
    /// `ln |Ĥ|`.
    pub log_det: f64,
    pub min_eigenvalue: f64,
}

/// Laplace approximation over every coordinate of `posterior`:
/// `ln Z ≈ ln P(q̂) + (d/2) ln 2π − ½ ln |Ĥ|`.
pub fn laplace_full(posterior: &Posterior, config: &LaplaceConfig) -> Result<LaplaceResult> {
    let objective = |x: ArrayView1<'_, f64>| {
        let st = posterior.evaluate(x)?;
        Ok((st.value(), st.gradient()))
    };
    let min = minimize(objective, posterior.initial_point().view(), config.lbfgs)?;
    let mut x = min.x;
    let mut fx = min.value;
    let gtol = config.lbfgs.gtol;
    let mut h = posterior.hessian(x.view())?;
    let jacobi = JacobiConfig::default();

    for _ in 0..config.newton_iters {
        let st = posterior.evaluate(x.view())?;
        let g = st.gradient();
        if max_abs(g.view()) <= gtol {
            break;
        }
        let eig = static_eigendecompose(h.view(), jacobi)?;
        if eig.values.iter().any(|&l| l <= 0.0) {
            break;
        }
        let coords = eig.vectors.t().dot(&g) / &eig.values;
        let step = eig.vectors.dot(&coords);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let trial = &x - &(&step * t);
            if let Ok(v) = posterior.neg_log_posterior(trial.view()) {
                if v <= fx {
                    x = trial;
                    fx = v;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
        h = posterior.hessian(x.view())?;
    }

    let grad_norm = max_abs(posterior.gradient(x.view())?.view());
    if !(grad_norm <= gtol) {
        return Err(Error::Optimizer(format!(
            "no stationary point found: gradient max-norm {grad_norm:.3e} > {gtol:e}"
        )));
    }
    let eig = static_eigendecompose(h.view(), jacobi)?;
    let min_eigenvalue = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eigenvalue = eig.values.iter().copied().fold(0.0, f64::max);
    if !(min_eigenvalue > 1e-12 * max_eigenvalue.max(1.0)) {
        return Err(Error::LaplaceInvalid(format!(
            "Hessian at the mode has eigenvalue {min_eigenvalue:.3e}"
        )));
    }
    let log_det: f64 = eig.values.iter().map(|l| l.ln()).sum();
    let d = x.len() as f64;
    Ok(LaplaceResult {
        log_evidence: -fx + 0.5 * d * LN_2PI - 0.5 * log_det,
        log_peak: -fx,
        mode: x,
        log_det,
        min_eigenvalue,
    })
}

/// Midpoint grid over `(c_g, sigma_g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub amplitude: (f64, f64),
    pub bandwidth: (f64, f64),
    pub amplitude_step: f64,
    pub bandwidth_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            amplitude: (0.0, 4.0),
            bandwidth: (0.0, 4.0),
            amplitude_step: 0.01,
            bandwidth_step: 0.02,
        }
    }
}

impl GridSpec {
    /// A single cell of the given widths centred on `(c_g, sigma_g)`.
    pub fn single(amplitude: f64, bandwidth: f64, amplitude_step: f64, bandwidth_step: f64) -> Self {
        Self {
            amplitude: (amplitude - 0.5 * amplitude_step, amplitude + 0.5 * amplitude_step),
            bandwidth: (bandwidth - 0.5 * bandwidth_step, bandwidth + 0.5 * bandwidth_step),
            amplitude_step,
            bandwidth_step,
        }
    }

    fn axis(range: (f64, f64), step: f64) -> Result<Vec<f64>> {
        let (lo, hi) = range;
        if !(step > 0.0 && lo >= 0.0 && hi > lo) {
            return Err(Error::InvalidConfig(format!("bad grid axis {range:?} with step {step}")));
        }
        let n = ((hi - lo) / step).round() as usize;
        if n == 0 || ((hi - lo) - n as f64 * step).abs() > 1e-9 * (hi - lo) {
            return Err(Error::InvalidConfig(format!(
                "grid step {step} does not divide {range:?}"
            )));
        }
        Ok((0..n).map(|i| lo + (i as f64 + 0.5) * step).collect())
    }

    pub fn amplitudes(&self) -> Result<Vec<f64>> {
        Self::axis(self.amplitude, self.amplitude_step)
    }

    pub fn bandwidths(&self) -> Result<Vec<f64>> {
        Self::axis(self.bandwidth, self.bandwidth_step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub log_evidence: f64,
    pub nodes: usize,
    pub skipped: usize,
    pub warnings: Vec<String>,
}

/// Largest tolerated fraction of skipped grid nodes.
pub const MAX_SKIPPED_FRACTION: f64 = 0.01;

/// Gradient max-norm at which the conditional optimizer hands over from
/// L-BFGS to Newton steps.
const NEWTON_HANDOVER_GTOL: f64 = 1e-3;
const NEWTON_POLISH_STEPS: usize = 20;

/// Conditional Laplace approximation at fixed hyperparameters: maximizes
/// over the coefficients in prior-whitened coordinates, starting from
/// `start` (whitened) if given. Returns the log value and the whitened
/// optimum.
pub fn laplace_conditional(
    posterior: &Posterior,
    theta: [f64; 3],
    start: Option<ArrayView1<'_, f64>>,
    lbfgs: LbfgsConfig,
) -> Result<(f64, Array1<f64>)> {
    let cond = posterior.with_temperature(1.0)?.conditional(theta)?;
    let d = cond.dim();
    let scales = cond.evaluate(Array1::zeros(d).view())?.prior_scales();
    if scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Domain(format!("degenerate coefficient prior at θ = {theta:?}")));
    }
    let objective = |u: ArrayView1<'_, f64>| {
        let a = &u * &scales;
        let st = cond.evaluate(a.view())?;
        Ok((st.value(), st.gradient() * &scales))
    };
    let u0 = start.map_or_else(|| Array1::zeros(d), |u| u.to_owned());
    // quasi-Newton to a loose tolerance, then Newton to the requested one
    let loose = LbfgsConfig {
        gtol: lbfgs.gtol.max(NEWTON_HANDOVER_GTOL),
        ..lbfgs
    };
    let min = minimize(objective, u0.view(), loose)?;

    let whitened_hessian = |u: &Array1<f64>| -> Result<Array2<f64>> {
        let mut h = cond.hessian((u * &scales).view())?;
        for i in 0..d {
            for k in 0..d {
                h[[i, k]] *= scales[i] * scales[k];
            }
        }
        Ok(h)
    };
    let (mut u, mut fu, mut g) = (min.x, min.value, min.gradient);
    let mut chol = cholesky(whitened_hessian(&u)?);
    for _ in 0..NEWTON_POLISH_STEPS {
        if max_abs(g.view()) <= lbfgs.gtol {
            break;
        }
        let Some(l) = &chol else { break };
        let step = cholesky_solve(l, &g);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..20 {
            let trial = &u - &(&step * t);
            if let Ok((v, gt)) = objective(trial.view()) {
                if v <= fu + 1e-12 * fu.abs() {
                    (u, fu, g) = (trial, v, gt);
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
        chol = cholesky(whitened_hessian(&u)?);
    }
    if !(max_abs(g.view()) <= lbfgs.gtol) {
        return Err(Error::Optimizer(format!(
            "inner optimizer stalled at θ = {theta:?} (gradient {:.3e})",
            max_abs(g.view())
        )));
    }
    let l = chol
        .ok_or_else(|| Error::LaplaceInvalid(format!("conditional Hessian not positive definite at θ = {theta:?}")))?;
    let log_det_u = 2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>();
    let log_det = log_det_u - 2.0 * scales.iter().map(|s| s.ln()).sum::<f64>();
    Ok((-fu + 0.5 * d as f64 * LN_2PI - 0.5 * log_det, u))
}

/// Lower Cholesky factor, or `None` if `a` is not positive definite.
fn cholesky(mut a: Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= a[[j, k]] * a[[j, k]];
        }
        if !(diag > 0.0) {
            return None;
        }
        let l = diag.sqrt();
        a[[j, j]] = l;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = v / l;
        }
        for k in j + 1..n {
            a[[j, k]] = 0.0;
        }
    }
    Some(a)
}

fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut x = b.clone();
    for i in 0..n {
        let mut v = x[i];
        for k in 0..i {
            v -= l[[i, k]] * x[k];
        }
        x[i] = v / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut v = x[i];
        for k in i + 1..n {
            v -= l[[k, i]] * x[k];
        }
        x[i] = v / l[[i, i]];
    }
    x
}

/// Conditional-Laplace evidence integrated over a `(c_g, sigma_g)` grid by
/// the midpoint rule, with the hyperpriors in their natural scale.
///
/// Models with linear kernels need `c_l` pinned. Nodes whose inner
/// optimization fails are skipped; more than 1% skipped is an error.
pub fn laplace_grid_oracle(posterior: &Posterior, grid: &GridSpec, lbfgs: LbfgsConfig) -> Result<GridResult> {
    let spec = posterior.spec();
    for hyper in [Hyper::Amplitude, Hyper::Bandwidth] {
        if spec.hypers[hyper.index()] != HyperMode::Sampled {
            return Err(Error::InvalidModel(format!(
                "grid oracle integrates over {}, which is pinned",
                hyper.name()
            )));
        }
    }
    if !spec.functions.iter().flatten().any(|k| matches!(k.kind, KernelKind::Gaussian { .. })) {
        return Err(Error::InvalidModel("grid oracle needs a Gaussian-kernel component".into()));
    }
    let linear_amplitude = match spec.hypers[Hyper::LinearAmplitude.index()] {
        HyperMode::Fixed(v) => v,
        HyperMode::Sampled if spec.has_kernel(true) => {
            return Err(Error::InvalidModel(
                "grid oracle covers (c_g, sigma_g) only; pin c_l for models with linear kernels".into(),
            ))
        }
        // no linear kernel: c_l only meets its own normalized prior
        HyperMode::Sampled => 1.0,
    };
    let amps = grid.amplitudes()?;
    let bws = grid.bandwidths()?;
    let prior_c = spec.priors.get(Hyper::Amplitude);
    let prior_s = spec.priors.get(Hyper::Bandwidth);

    let rows: Vec<(Vec<f64>, Vec<String>)> = amps
        .par_iter()
        .map(|&c| {
            let mut values = Vec::with_capacity(bws.len());
            let mut failures = Vec::new();
            let mut warm: Option<Array1<f64>> = None;
            for &sg in &bws {
                match laplace_conditional(posterior, [c, sg, linear_amplitude], warm.as_ref().map(|u| u.view()), lbfgs) {
                    Ok((v, u)) => {
                        values.push(v + prior_c.ln_pdf(c) + prior_s.ln_pdf(sg));
                        warm = Some(u);
                    }
                    Err(e) => failures.push(format!("node (c_g = {c}, sigma_g = {sg}) skipped: {e}")),
                }
            }
            (values, failures)
        })
        .collect();

    let nodes = amps.len() * bws.len();
    let mut terms = Vec::with_capacity(nodes);
    let mut warnings = Vec::new();
    for (values, failures) in rows {
        terms.extend(values);
        warnings.extend(failures);
    }
    let skipped = warnings.len();
    if skipped as f64 > MAX_SKIPPED_FRACTION * nodes as f64 {
        return Err(Error::Evidence(format!(
            "grid oracle skipped {skipped} of {nodes} nodes; first: {}",
            warnings[0]
        )));
    }
    let log_evidence = log_sum_exp(&terms) + (grid.amplitude_step * grid.bandwidth_step).ln();
    Ok(GridResult {
        log_evidence,
        nodes,
        skipped,
        warnings,
    })
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
