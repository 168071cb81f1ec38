//! Riemannian-manifold HMC with the softabs metric, plus a Euclidean HMC
//! baseline.
//!
//! The Hamiltonian is
//!
//! ```text
//! H(q, p) = E(q) + ln|G(q)| / 2 + (d/2) ln 2π + pᵀ G(q)⁻¹ p / 2
//! ```
//!
//! and its position gradient is
//!
//! ```text
//! dH/dq_i = dE/dq_i + tr(W2 dH_E/dq_i) / 2 - tr(W1 dH_E/dq_i) / 2
//! ```
//!
//! with `W1`, `W2` from [`MetricState`] and `H_E` the Hessian of `E`.
//! Because the kinetic energy couples `q` and `p`, the leapfrog is the
//! implicit generalized leapfrog: a fixed-point solve for the first momentum
//! half-step, a fixed-point solve for the position step, then an explicit
//! momentum half-step.

mod diagnostics;

pub use diagnostics::{ks_test, normal_cdf, normal_sf, rank_sum_test, wilcoxon_split_half, KsTest, RankSumTest};

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{JacobiConfig, MetricState};
use crate::posterior::{Posterior, PosteriorState};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// Softabs metric, eigendecomposition warm-started from the previous one.
    SoftabsDynamic,
    /// Softabs metric, every eigendecomposition from scratch.
    SoftabsStatic,
    /// Identity metric (ordinary HMC).
    Euclidean,
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softabs-dynamic" => Ok(MetricKind::SoftabsDynamic),
            "softabs-static" => Ok(MetricKind::SoftabsStatic),
            "euclidean" => Ok(MetricKind::Euclidean),
            other => Err(Error::InvalidConfig(format!(
                "unknown metric '{other}' (expected softabs-dynamic, softabs-static or euclidean)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Leapfrog step size `epsilon`.
    pub step_size: f64,
    /// Leapfrogs per move `C`.
    pub leapfrogs: usize,
    /// Total moves `A`.
    pub moves: usize,
    /// Burn-in moves `A0`, excluded from summaries.
    pub burnin: usize,
    /// Softabs scale `kappa`.
    pub kappa: f64,
    /// Jacobi tolerance `zeta`.
    pub zeta: f64,
    pub max_sweeps: usize,
    pub fp_max_iters: usize,
    pub fp_tol: f64,
    /// Warm-started decompositions between Gram–Schmidt refreshes.
    pub gs_interval: usize,
    pub seed: u64,
    pub metric: MetricKind,
    /// Store the position in every move record.
    pub record_q: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            step_size: 0.001,
            leapfrogs: 100,
            moves: 9600,
            burnin: 2400,
            kappa: 1.0,
            zeta: 1e-13,
            max_sweeps: 30,
            fp_max_iters: 6,
            fp_tol: 1e-10,
            gs_interval: 10,
            seed: 0,
            metric: MetricKind::SoftabsDynamic,
            record_q: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("epsilon", self.step_size)?;
        positive("kappa", self.kappa)?;
        positive("zeta", self.zeta)?;
        positive("fp_tol", self.fp_tol)?;
        if self.leapfrogs == 0 {
            return Err(Error::InvalidConfig("leapfrogs must be at least 1".into()));
        }
        if self.burnin > self.moves {
            return Err(Error::InvalidConfig(format!(
                "burn-in {} exceeds total moves {}",
                self.burnin, self.moves
            )));
        }
        if self.fp_max_iters == 0 || self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("iteration caps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn jacobi(&self) -> JacobiConfig {
        JacobiConfig {
            zeta: self.zeta,
            max_sweeps: self.max_sweeps,
        }
    }
}

/// Position-dependent quantities: posterior derivatives and the metric.
#[derive(Debug, Clone)]
pub struct Point<'a> {
    state: PosteriorState<'a>,
    grad: Array1<f64>,
    metric: Option<MetricState>,
    /// `tr(W2 dH/dq_i)`.
    tr_w2: Array1<f64>,
}

impl<'a> Point<'a> {
    pub fn q(&self) -> ArrayView1<'_, f64> {
        self.state.q()
    }

    pub fn state(&self) -> &PosteriorState<'a> {
        &self.state
    }

    /// `-ln P(q)` at the posterior's temperature.
    pub fn potential(&self) -> f64 {
        self.state.value()
    }

    pub fn gradient(&self) -> ArrayView1<'_, f64> {
        self.grad.view()
    }

    pub fn metric(&self) -> Option<&MetricState> {
        self.metric.as_ref()
    }

    /// `G⁻¹ p`.
    pub fn velocity(&self, p: ArrayView1<'_, f64>) -> Array1<f64> {
        match &self.metric {
            Some(m) => m.apply_inverse(p),
            None => p.to_owned(),
        }
    }
}

/// Per-leapfrog diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepDiagnostics {
    /// Sweeps of the first decomposition: the previous step's eigenvectors
    /// against the Hessian at the first position estimate.
    pub sweeps: usize,
    pub total_sweeps: usize,
    pub p_iters: usize,
    pub q_iters: usize,
}

/// Hamiltonian dynamics of one posterior under one metric choice.
#[derive(Debug, Clone, Copy)]
pub struct Dynamics<'a> {
    posterior: &'a Posterior,
    config: ChainConfig,
}

impl<'a> Dynamics<'a> {
    pub fn new(posterior: &'a Posterior, config: ChainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { posterior, config })
    }

    pub fn posterior(&self) -> &'a Posterior {
        self.posterior
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    /// Evaluates everything needed at `q`. With a dynamic metric and a
    /// `warm` state the eigendecomposition is warm-started from it.
    pub fn point(&self, q: ArrayView1<'_, f64>, warm: Option<&MetricState>) -> Result<Point<'a>> {
        let state = self.posterior.evaluate(q)?;
        let grad = state.gradient();
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
        if self.config.metric == MetricKind::Euclidean {
            return Ok(Point {
                state,
                grad,
                metric: None,
                tr_w2: Array1::zeros(0),
            });
        }
        let hess = state.hessian();
        if hess.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite Hessian".into()));
        }
        let jacobi = self.config.jacobi();
        let metric = match (self.config.metric, warm) {
            (MetricKind::SoftabsDynamic, Some(prev)) => {
                prev.rebuild_dynamic(hess.view(), jacobi, self.config.gs_interval)?
            }
            _ => MetricState::from_hessian(hess.view(), self.config.kappa, jacobi)?,
        };
        let tr_w2 = state.trace_contraction(metric.w2())?;
        Ok(Point {
            state,
            grad,
            metric: Some(metric),
            tr_w2,
        })
    }

    /// `H(q, p)`.
    pub fn hamiltonian(&self, point: &Point<'_>, p: ArrayView1<'_, f64>) -> f64 {
        let kinetic = 0.5 * p.dot(&point.velocity(p));
        match &point.metric {
            Some(m) => point.potential() + 0.5 * m.log_det() + 0.5 * m.dim() as f64 * LN_2PI + kinetic,
            None => point.potential() + kinetic,
        }
    }

    /// `dH/dq` at `(q, p)`.
    pub fn grad_q_hamiltonian(&self, point: &Point<'_>, p: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let Some(metric) = &point.metric else {
            return Ok(point.grad.clone());
        };
        let w1 = metric.w1(p);
        let tr_w1 = point.state.trace_contraction(w1.view())?;
        let mut g = point.grad.clone();
        g.scaled_add(0.5, &point.tr_w2);
        g.scaled_add(-0.5, &tr_w1);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite Hamiltonian gradient".into()));
        }
        Ok(g)
    }

    /// Draws `p ~ N(0, G(q))`.
    pub fn sample_momentum<R: Rng + ?Sized>(&self, point: &Point<'_>, rng: &mut R) -> Array1<f64> {
        match &point.metric {
            Some(m) => m.sample_momentum(rng),
            None => Array1::from_shape_fn(point.q().len(), |_| rng.sample(StandardNormal)),
        }
    }

    /// One leapfrog of size `eps` from `(point, p)`.
    pub fn leapfrog_step(
        &self,
        point: &Point<'a>,
        p: ArrayView1<'_, f64>,
        eps: f64,
    ) -> Result<(Point<'a>, Array1<f64>, StepDiagnostics)> {
        let half = 0.5 * eps;
        let q = point.q();
        let mut diag = StepDiagnostics::default();

        if point.metric.is_none() {
            let ph = &p - &(half * &point.grad);
            let q1 = &q + &(eps * &ph);
            let next = self.point(q1.view(), None)?;
            let p1 = &ph - &(half * &next.grad);
            check_finite(&p1)?;
            return Ok((next, p1, diag));
        }

        let tol = self.config.fp_tol;
        let max_iters = self.config.fp_max_iters;

        // p(t + eps/2) = p - eps/2 dH/dq(q, p(t + eps/2))
        let mut ph = &p - &(half * &self.grad_q_hamiltonian(point, p)?);
        let mut converged = false;
        for _ in 0..max_iters {
            diag.p_iters += 1;
            let next = &p - &(half * &self.grad_q_hamiltonian(point, ph.view())?);
            let delta = max_abs_diff(&next, &ph);
            ph = next;
            if delta <= tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Divergence("momentum fixed point did not converge".into()));
        }

        // q(t + eps) = q + eps/2 (G⁻¹(q) + G⁻¹(q(t + eps))) p(t + eps/2)
        let v0 = point.velocity(ph.view());
        let mut q_cur = &q + &(eps * &v0);
        let mut cur = self.point(q_cur.view(), point.metric.as_ref())?;
        let first = cur.metric.as_ref().map_or(0, |m| m.sweeps);
        diag.sweeps = first;
        diag.total_sweeps = first;
        converged = false;
        for _ in 0..max_iters {
            diag.q_iters += 1;
            let v1 = cur.velocity(ph.view());
            let q_next = &q + &(half * &(&v0 + &v1));
            if max_abs_diff(&q_next, &q_cur) <= tol {
                converged = true;
                break;
            }
            q_cur = q_next;
            cur = self.point(q_cur.view(), cur.metric.as_ref())?;
            diag.total_sweeps += cur.metric.as_ref().map_or(0, |m| m.sweeps);
        }
        if !converged {
            return Err(Error::Divergence("position fixed point did not converge".into()));
        }

        let p1 = &ph - &(half * &self.grad_q_hamiltonian(&cur, ph.view())?);
        check_finite(&p1)?;
        Ok((cur, p1, diag))
    }
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_finite(p: &Array1<f64>) -> Result<()> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence("non-finite momentum".into()))
    }
}

/// One Metropolis–Hastings move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    #[serde(rename = "move")]
    pub index: usize,
    /// `ln P(q)` after the move (up to the normalizing constant).
    pub logpost: f64,
    pub h_before: f64,
    /// `None` when the trajectory diverged.
    pub h_after: Option<f64>,
    pub accept: bool,
    pub divergent: bool,
    /// Mean warm-start Jacobi sweeps per leapfrog.
    pub sweeps_mean: f64,
    pub wall_ms: f64,
    /// `ln u` of the uniform draw compared against `h_before - h_after`.
    pub log_u: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
}

/// A single chain that can be advanced one move at a time.
pub struct Sampler<'a> {
    dynamics: Dynamics<'a>,
    point: Point<'a>,
    rng: ChaCha8Rng,
    moves_done: usize,
}

impl<'a> Sampler<'a> {
    /// Starts at `init`, or at the default initial point (coefficients 0,
    /// hyperparameters 1). Fails if the posterior cannot be evaluated there.
    pub fn new(posterior: &'a Posterior, config: ChainConfig, init: Option<ArrayView1<'_, f64>>) -> Result<Self> {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(posterior, config, init, rng)
    }

    pub fn with_rng(
        posterior: &'a Posterior,
        config: ChainConfig,
        init: Option<ArrayView1<'_, f64>>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let dynamics = Dynamics::new(posterior, config)?;
        let q0 = match init {
            Some(q) => q.to_owned(),
            None => posterior.initial_point(),
        };
        let point = dynamics.point(q0.view(), None).map_err(|e| match e {
            Error::Domain(m) | Error::Divergence(m) => Error::Divergence(format!("initial state: {m}")),
            other => other,
        })?;
        Ok(Self {
            dynamics,
            point,
            rng,
            moves_done: 0,
        })
    }

    pub fn dynamics(&self) -> &Dynamics<'a> {
        &self.dynamics
    }

    pub fn point(&self) -> &Point<'a> {
        &self.point
    }

    pub fn q(&self) -> ArrayView1<'_, f64> {
        self.point.q()
    }

    pub fn log_posterior(&self) -> f64 {
        -self.point.potential()
    }

    /// `ln P(X | a)` at the current position, untempered.
    pub fn log_likelihood(&self) -> f64 {
        self.point.state.log_likelihood()
    }

    pub fn into_rng(self) -> ChaCha8Rng {
        self.rng
    }

    /// Refreshes the momentum, integrates `C` leapfrogs and applies the
    /// Metropolis correction. Divergences are recorded as rejections.
    pub fn step(&mut self) -> Result<MoveRecord> {
        let start = Instant::now();
        let config = *self.dynamics.config();
        let p0 = self.dynamics.sample_momentum(&self.point, &mut self.rng);
        let log_u = self.rng.random::<f64>().ln();
        let h_before = self.dynamics.hamiltonian(&self.point, p0.view());

        let mut sweeps = 0usize;
        let mut proposal: Option<Point<'a>> = None;
        let mut p = p0;
        let mut outcome: Result<()> = Ok(());
        for _ in 0..config.leapfrogs {
            let from = proposal.as_ref().unwrap_or(&self.point);
            match self.dynamics.leapfrog_step(from, p.view(), config.step_size) {
                Ok((next, p1, diag)) => {
                    sweeps += diag.sweeps;
                    proposal = Some(next);
                    p = p1;
                }
                Err(e) if e.is_rejection() => {
                    outcome = Err(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }

        let (h_after, divergent) = match (&outcome, &proposal) {
            (Ok(()), Some(next)) => {
                let h = self.dynamics.hamiltonian(next, p.view());
                (h.is_finite().then_some(h), !h.is_finite())
            }
            _ => (None, true),
        };
        let accept = match h_after {
            Some(h) => log_u < h_before - h,
            None => false,
        };
        if accept {
            self.point = proposal.expect("accepted move has a proposal");
        } else if config.metric == MetricKind::SoftabsDynamic {
            // the warm-start chain is broken; restart it from a static decomposition
            let q = self.point.q().to_owned();
            self.point = self.dynamics.point(q.view(), None)?;
        }

        let record = MoveRecord {
            index: self.moves_done,
            logpost: self.log_posterior(),
            h_before,
            h_after,
            accept,
            divergent,
            sweeps_mean: sweeps as f64 / config.leapfrogs as f64,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            log_u,
            q: config.record_q.then(|| self.point.q().to_vec()),
        };
        self.moves_done += 1;
        Ok(record)
    }
}

/// Records of a finished chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub records: Vec<MoveRecord>,
    pub final_q: Array1<f64>,
    pub burnin: usize,
}

impl ChainOutput {
    pub fn kept(&self) -> &[MoveRecord] {
        &self.records[self.burnin.min(self.records.len())..]
    }

    /// Acceptance rate over the kept moves.
    pub fn acceptance_rate(&self) -> f64 {
        let kept = self.kept();
        if kept.is_empty() {
            return 0.0;
        }
        kept.iter().filter(|r| r.accept).count() as f64 / kept.len() as f64
    }

    pub fn divergences(&self) -> usize {
        self.records.iter().filter(|r| r.divergent).count()
    }

    pub fn kept_logpost(&self) -> Vec<f64> {
        self.kept().iter().map(|r| r.logpost).collect()
    }

    /// Split-half Wilcoxon test on the kept log-posterior values.
    pub fn wilcoxon(&self) -> Result<RankSumTest> {
        wilcoxon_split_half(&self.kept_logpost())
    }
}

/// Runs `config.moves` moves, passing each record to `on_record` as it is
/// produced.
pub fn rmhmc_run_with(
    posterior: &Posterior,
    config: ChainConfig,
    init: Option<ArrayView1<'_, f64>>,
    mut on_record: impl FnMut(&MoveRecord) -> Result<()>,
) -> Result<ChainOutput> {
    let mut sampler = Sampler::new(posterior, config, init)?;
    let mut records = Vec::with_capacity(config.moves);
    for _ in 0..config.moves {
        let rec = sampler.step()?;
        on_record(&rec)?;
        records.push(rec);
    }
    Ok(ChainOutput {
        records,
        final_q: sampler.q().to_owned(),
        burnin: config.burnin,
    })
}

pub fn rmhmc_run(posterior: &Posterior, config: ChainConfig, init: Option<ArrayView1<'_, f64>>) -> Result<ChainOutput> {
    rmhmc_run_with(posterior, config, init, |_| Ok(()))
}

/// Ordinary HMC: same loop with the identity metric.
pub fn euclidean_hmc_run(
    posterior: &Posterior,
    config: ChainConfig,
    init: Option<ArrayView1<'_, f64>>,
) -> Result<ChainOutput> {
    let config = ChainConfig {
        metric: MetricKind::Euclidean,
        ..config
    };
    rmhmc_run(posterior, config, init)
}

/// Writes records as JSON lines.
pub fn write_jsonl<W: Write>(mut out: W, records: &[MoveRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses JSON lines; errors name the offending line.
pub fn read_jsonl(text: &str) -> Result<Vec<MoveRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::InvalidData(format!("line {}: {e}", i + 1)))
        })
        .collect()
}
