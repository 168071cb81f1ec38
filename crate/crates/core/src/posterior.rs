//! Negative log-posterior of a reduced-rank GP model and its derivatives.
//!
//! The parameter vector is laid out by [`BlockLayout`]: per latent function
//! `j` a block `beta_j` (kernel coefficients then intercept), followed by the
//! sampled hyperparameter coordinates. With `Phi_j` the feature matrix of
//! function `j`, `f_j = Phi_j beta_j` and
//!
//! ```text
//! E(q) = tau * sum_i U(f_{1,i}, ..., f_{J,i})
//!      + sum_t [ beta_t^2 / (2 v_t) + ln(2 pi v_t) / 2 ]
//!      + sum_h [ -ln InvGamma(theta_h) - ln |d theta_h / d x_h| ]
//! ```
//!
//! where `v_t(theta)` is the prior variance of coefficient `t`. Writing
//! `w_t = ln v_t`, each `w_t` is a sum of one-variable functions of the
//! hyperparameter coordinates, which keeps the prior's third-derivative
//! tensor sparse.
//!
//! [`PosteriorState::trace_contraction`] evaluates `tr(W dH/dq_i)` for all
//! `i` without forming the `d x d x d` tensor: for every pair of latent
//! functions it multiplies `Phi_{j1} W_{j1 j2}`, takes the row sums of the
//! Hadamard product with `Phi_{j2}`, weights them per sample by `U'''`, and
//! projects back with `Phi_j^T`. The cost is `O(N d^2)` against the
//! `O(N d^3)` of materializing the tensor.

use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::model::{
    coefficient_priors, BlockLayout, CoefPrior, Dataset, FeatureCache, Hyper, HyperMode,
    HyperTransform, ModelSpec,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Largest dimension the dense oracle accepts unless told otherwise.
pub const DENSE_ORACLE_MAX_DIM: usize = 200;

/// A model bound to its data, at a fixed likelihood temperature.
#[derive(Debug, Clone)]
pub struct Posterior {
    spec: ModelSpec,
    layout: BlockLayout,
    coef_priors: Arc<Vec<CoefPrior>>,
    features: Arc<FeatureCache>,
    target: Arc<Vec<f64>>,
    temperature: f64,
}

impl Posterior {
    pub fn new(spec: ModelSpec, data: &Dataset) -> Result<Self> {
        spec.validate()?;
        for &y in &data.y {
            spec.likelihood.validate_target(y)?;
        }
        let features = FeatureCache::new(&spec, data.x.view())?;
        Ok(Self {
            layout: BlockLayout::new(&spec),
            coef_priors: Arc::new(coefficient_priors(&spec)),
            features: Arc::new(features),
            target: Arc::new(data.y.clone()),
            spec,
            temperature: 1.0,
        })
    }

    /// Same model and data with the likelihood raised to the power `tau`.
    /// Priors are never tempered.
    pub fn with_temperature(&self, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidConfig(format!("temperature {tau} outside [0, 1]")));
        }
        let mut out = self.clone();
        out.temperature = tau;
        Ok(out)
    }

    /// The model conditioned on all three hyperparameters, sharing the
    /// feature cache. The coefficient coordinates keep their indices.
    pub fn conditional(&self, theta: [f64; 3]) -> Result<Self> {
        let mut spec = self.spec.clone();
        for hyper in Hyper::ALL {
            spec.hypers[hyper.index()] = HyperMode::Fixed(theta[hyper.index()]);
        }
        spec.validate()?;
        Ok(Self {
            layout: BlockLayout::new(&spec),
            spec,
            coef_priors: Arc::clone(&self.coef_priors),
            features: Arc::clone(&self.features),
            target: Arc::clone(&self.target),
            temperature: self.temperature,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn features(&self) -> &FeatureCache {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn num_samples(&self) -> usize {
        self.target.len()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// All coefficients zero and every hyperparameter equal to one.
    pub fn initial_point(&self) -> Array1<f64> {
        Array1::from(crate::model::default_initial_point(&self.layout, self.spec.transform))
    }

    /// Evaluates latent functions and per-sample potential derivatives at `q`.
    pub fn evaluate(&self, q: ArrayView1<'_, f64>) -> Result<PosteriorState<'_>> {
        PosteriorState::new(self, q)
    }

    pub fn neg_log_posterior(&self, q: ArrayView1<'_, f64>) -> Result<f64> {
        Ok(self.evaluate(q)?.value())
    }

    /// `ln P(X | a)`, untempered.
    pub fn log_likelihood(&self, q: ArrayView1<'_, f64>) -> Result<f64> {
        Ok(self.evaluate(q)?.log_likelihood())
    }

    pub fn gradient(&self, q: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.evaluate(q)?.gradient())
    }

    pub fn hessian(&self, q: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.evaluate(q)?.hessian())
    }

    /// `(tr(W1 dH/dq_i), tr(W2 dH/dq_i))` for every coordinate `i`.
    pub fn trace_contractions(
        &self,
        w1: ArrayView2<'_, f64>,
        w2: ArrayView2<'_, f64>,
        q: ArrayView1<'_, f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let state = self.evaluate(q)?;
        Ok((state.trace_contraction(w1)?, state.trace_contraction(w2)?))
    }

    /// Reference `tr(W dH/dq_i)`: every `dH/dq_i` is materialized by a
    /// five-point central difference of the analytic Hessian. Costs
    /// `4 d` Hessian evaluations. Refuses `d > 200`.
    pub fn dense_oracle(&self, w: ArrayView2<'_, f64>, q: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.dense_oracle_with_limit(w, q, DENSE_ORACLE_MAX_DIM)
    }

    pub fn dense_oracle_with_limit(
        &self,
        w: ArrayView2<'_, f64>,
        q: ArrayView1<'_, f64>,
        limit: usize,
    ) -> Result<Array1<f64>> {
        let d = self.dim();
        if d > limit {
            return Err(Error::Guard { dim: d, limit });
        }
        check_square(w, d)?;
        check_len(q, d)?;
        let h = 1e-3;
        let mut out = Array1::zeros(d);
        let mut x = q.to_owned();
        for i in 0..d {
            let mut at = |offset: f64| -> Result<Array2<f64>> {
                x[i] = q[i] + offset;
                let hess = self.hessian(x.view());
                x[i] = q[i];
                hess
            };
            let p1 = at(h)?;
            let m1 = at(-h)?;
            let p2 = at(2.0 * h)?;
            let m2 = at(-2.0 * h)?;
            let mut acc = 0.0;
            Zip::from(&w)
                .and(&p1)
                .and(&m1)
                .and(&p2)
                .and(&m2)
                .for_each(|&wv, &a, &b, &c, &e| {
                    acc += wv * (8.0 * (a - b) - (c - e));
                });
            out[i] = acc / (12.0 * h);
        }
        Ok(out)
    }
}

fn check_len(q: ArrayView1<'_, f64>, d: usize) -> Result<()> {
    if q.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: q.len(),
        });
    }
    Ok(())
}

fn check_square(w: ArrayView2<'_, f64>, d: usize) -> Result<()> {
    if w.nrows() != d || w.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: if w.nrows() != d { w.nrows() } else { w.ncols() },
        });
    }
    Ok(())
}

/// Value and first three derivatives of a one-variable function.
type Jet = [f64; 3];

#[derive(Debug, Clone, Copy, Default)]
struct HyperEval {
    theta: f64,
    coord: Option<usize>,
    /// Derivatives of `ln theta` with respect to the coordinate.
    ln_theta: Jet,
    /// Derivatives of `theta` with respect to the coordinate.
    theta_d: Jet,
    /// `-ln` prior density in the coordinate (with Jacobian), and derivatives.
    prior_value: f64,
    prior: Jet,
}

impl HyperEval {
    fn new(spec: &ModelSpec, layout: &BlockLayout, hyper: Hyper, q: ArrayView1<'_, f64>) -> Result<Self> {
        match (spec.hypers[hyper.index()], layout.hyper(hyper)) {
            (HyperMode::Fixed(theta), _) => Ok(Self {
                theta,
                ..Default::default()
            }),
            (HyperMode::Sampled, Some(coord)) => {
                let x = q[coord];
                let prior = spec.priors.get(hyper);
                let (a, b) = (prior.shape, prior.scale);
                let norm = prior.ln_norm();
                match spec.transform {
                    HyperTransform::Log => {
                        let theta = x.exp();
                        let be = b * (-x).exp();
                        Ok(Self {
                            theta,
                            coord: Some(coord),
                            ln_theta: [1.0, 0.0, 0.0],
                            theta_d: [theta, theta, theta],
                            prior_value: -norm + a * x + be,
                            prior: [a - be, be, -be],
                        })
                    }
                    HyperTransform::Identity => {
                        if !(x > 0.0) {
                            return Err(Error::Domain(format!("{} = {x} is not positive", hyper.name())));
                        }
                        let a1 = a + 1.0;
                        Ok(Self {
                            theta: x,
                            coord: Some(coord),
                            ln_theta: [1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x)],
                            theta_d: [1.0, 0.0, 0.0],
                            prior_value: -norm + a1 * x.ln() + b / x,
                            prior: [
                                a1 / x - b / (x * x),
                                -a1 / (x * x) + 2.0 * b / x.powi(3),
                                2.0 * a1 / x.powi(3) - 6.0 * b / x.powi(4),
                            ],
                        })
                    }
                }
            }
            (HyperMode::Sampled, None) => unreachable!("layout always indexes sampled hyperparameters"),
        }
    }
}

/// `w_t = ln v_t` for one coefficient and its dependence on at most two
/// hyperparameter coordinates.
#[derive(Debug, Clone, Copy)]
struct CoefTerms {
    w: f64,
    deps: [(usize, Jet); 2],
    n: usize,
}

impl CoefTerms {
    fn deps(&self) -> &[(usize, Jet)] {
        &self.deps[..self.n]
    }

    fn push(&mut self, coord: usize, jet: Jet) {
        self.deps[self.n] = (coord, jet);
        self.n += 1;
    }
}

/// Everything the derivative routines need at one parameter point.
#[derive(Debug, Clone)]
pub struct PosteriorState<'a> {
    posterior: &'a Posterior,
    q: Array1<f64>,
    hypers: [HyperEval; 3],
    terms: Vec<CoefTerms>,
    /// Latent values `f_j` per function.
    f: Vec<Array1<f64>>,
    /// `dU/df_j` per sample.
    d1: Vec<Array1<f64>>,
    /// `d2U/df_a df_b`, flattened `a * J + b`.
    d2: Vec<Array1<f64>>,
    /// `d3U/df_a df_b df_c`, flattened `(a * J + b) * J + c`.
    d3: Vec<Array1<f64>>,
    sum_potential: f64,
    neg_log_prior: f64,
}

impl<'a> PosteriorState<'a> {
    fn new(posterior: &'a Posterior, q: ArrayView1<'_, f64>) -> Result<Self> {
        let layout = &posterior.layout;
        let spec = &posterior.spec;
        check_len(q, layout.dim)?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite parameter vector".into()));
        }
        let hypers = [
            HyperEval::new(spec, layout, Hyper::Amplitude, q)?,
            HyperEval::new(spec, layout, Hyper::Bandwidth, q)?,
            HyperEval::new(spec, layout, Hyper::LinearAmplitude, q)?,
        ];

        let jn = layout.functions.len();
        let n = posterior.num_samples();
        let f: Vec<Array1<f64>> = layout
            .functions
            .iter()
            .enumerate()
            .map(|(j, block)| posterior.features.block(j).dot(&q.slice(s![block.range()])))
            .collect();

        let mut d1 = vec![Array1::zeros(n); jn];
        let mut d2 = vec![Array1::zeros(n); jn * jn];
        let mut d3 = vec![Array1::zeros(n); jn * jn * jn];
        let mut sum_potential = 0.0;
        let mut fi = [0.0; crate::model::MAX_FUNCTIONS];
        for i in 0..n {
            for j in 0..jn {
                fi[j] = f[j][i];
            }
            let pot = spec.likelihood.potential(&fi[..jn], posterior.target[i])?;
            sum_potential += pot.value;
            for a in 0..jn {
                d1[a][i] = pot.d1[a];
                for b in 0..jn {
                    d2[a * jn + b][i] = pot.d2[a][b];
                    for c in 0..jn {
                        d3[(a * jn + b) * jn + c][i] = pot.d3[a][b][c];
                    }
                }
            }
        }

        let terms: Vec<CoefTerms> = posterior
            .coef_priors
            .iter()
            .map(|prior| coef_terms(prior, &hypers, spec.intercept_variance))
            .collect();

        let beta = q.slice(s![..layout.num_coefficients]);
        let mut neg_log_prior = 0.0;
        for (t, term) in terms.iter().enumerate() {
            neg_log_prior += 0.5 * beta[t] * beta[t] * (-term.w).exp() + 0.5 * term.w + 0.5 * LN_2PI;
        }
        for h in &hypers {
            if h.coord.is_some() {
                neg_log_prior += h.prior_value;
            }
        }
        if !neg_log_prior.is_finite() {
            return Err(Error::Divergence("non-finite prior density".into()));
        }

        Ok(Self {
            posterior,
            q: q.to_owned(),
            hypers,
            terms,
            f,
            d1,
            d2,
            d3,
            sum_potential,
            neg_log_prior,
        })
    }

    pub fn q(&self) -> ArrayView1<'_, f64> {
        self.q.view()
    }

    /// Negative log-posterior (tempered likelihood plus priors).
    pub fn value(&self) -> f64 {
        self.posterior.temperature * self.sum_potential + self.neg_log_prior
    }

    /// `ln P(X | a)`, untempered.
    pub fn log_likelihood(&self) -> f64 {
        -self.sum_potential
    }

    pub fn neg_log_prior(&self) -> f64 {
        self.neg_log_prior
    }

    /// Latent function values `f_j(X_i)`.
    pub fn latent(&self, j: usize) -> ArrayView1<'_, f64> {
        self.f[j].view()
    }

    /// Current value of each hyperparameter in its natural scale.
    pub fn hyper_values(&self) -> [f64; 3] {
        [self.hypers[0].theta, self.hypers[1].theta, self.hypers[2].theta]
    }

    /// Prior standard deviation of every coefficient.
    pub fn prior_scales(&self) -> Array1<f64> {
        self.terms.iter().map(|t| (0.5 * t.w).exp()).collect()
    }

    fn jn(&self) -> usize {
        self.f.len()
    }

    pub fn gradient(&self) -> Array1<f64> {
        let p = self.posterior;
        let tau = p.temperature;
        let mut g = Array1::zeros(p.dim());
        for (j, block) in p.layout.functions.iter().enumerate() {
            if tau != 0.0 {
                let lik = p.features.block(j).t().dot(&self.d1[j]);
                g.slice_mut(s![block.range()]).scaled_add(tau, &lik);
            }
        }
        for (t, term) in self.terms.iter().enumerate() {
            let beta = self.q[t];
            let e = (-term.w).exp();
            let qv = 0.5 * beta * beta * e;
            g[t] += beta * e;
            for &(k, wd) in term.deps() {
                g[k] += (0.5 - qv) * wd[0];
            }
        }
        for h in &self.hypers {
            if let Some(c) = h.coord {
                g[c] += h.prior[0];
            }
        }
        g
    }

    pub fn hessian(&self) -> Array2<f64> {
        let p = self.posterior;
        let tau = p.temperature;
        let jn = self.jn();
        let d = p.dim();
        let mut hess = Array2::zeros((d, d));
        if tau != 0.0 {
            for j1 in 0..jn {
                let b1 = p.layout.functions[j1].range();
                let phi1 = p.features.block(j1);
                for j2 in j1..jn {
                    let b2 = p.layout.functions[j2].range();
                    let phi2 = p.features.block(j2);
                    let weights = &self.d2[j1 * jn + j2];
                    let mut scaled = phi2.to_owned();
                    Zip::from(scaled.rows_mut())
                        .and(weights)
                        .for_each(|mut row, &wt| row *= tau * wt);
                    let block = phi1.t().dot(&scaled);
                    hess.slice_mut(s![b1.clone(), b2.clone()]).assign(&block);
                    if j1 != j2 {
                        hess.slice_mut(s![b2, b1.clone()]).assign(&block.t());
                    }
                }
            }
        }
        for (t, term) in self.terms.iter().enumerate() {
            let beta = self.q[t];
            let e = (-term.w).exp();
            let qv = 0.5 * beta * beta * e;
            hess[[t, t]] += e;
            let deps = term.deps();
            for (a, &(k, wk)) in deps.iter().enumerate() {
                let cross = -beta * e * wk[0];
                hess[[t, k]] += cross;
                hess[[k, t]] += cross;
                hess[[k, k]] += qv * wk[0] * wk[0] + (0.5 - qv) * wk[1];
                for &(l, wl) in &deps[a + 1..] {
                    let v = qv * wk[0] * wl[0];
                    hess[[k, l]] += v;
                    hess[[l, k]] += v;
                }
            }
        }
        for h in &self.hypers {
            if let Some(c) = h.coord {
                hess[[c, c]] += h.prior[1];
            }
        }
        // the diagonal blocks come out of a GEMM and are only symmetric to rounding
        for i in 0..d {
            for k in i + 1..d {
                let v = 0.5 * (hess[[i, k]] + hess[[k, i]]);
                hess[[i, k]] = v;
                hess[[k, i]] = v;
            }
        }
        hess
    }

    /// `tr(W dH/dq_i)` for every coordinate `i`, in `O(N d^2)`.
    ///
    /// `W` must be symmetric.
    pub fn trace_contraction(&self, w: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let p = self.posterior;
        let d = p.dim();
        check_square(w, d)?;
        let tau = p.temperature;
        let jn = self.jn();
        let n = p.num_samples();
        let mut out = Array1::zeros(d);

        if tau != 0.0 {
            // per-sample weights accumulated for each output function j
            let mut acc: Vec<Array1<f64>> = vec![Array1::zeros(n); jn];
            for j1 in 0..jn {
                let b1 = p.layout.functions[j1].range();
                let phi1 = p.features.block(j1);
                for j2 in j1..jn {
                    let b2 = p.layout.functions[j2].range();
                    let phi2 = p.features.block(j2);
                    let mixed = phi1.dot(&w.slice(s![b1.clone(), b2]));
                    let mut rowsum = Array1::<f64>::zeros(n);
                    Zip::from(&mut rowsum)
                        .and(mixed.rows())
                        .and(phi2.rows())
                        .for_each(|r, a, b| *r = a.dot(&b));
                    let mult = if j1 == j2 { 1.0 } else { 2.0 };
                    for (j, slot) in acc.iter_mut().enumerate() {
                        let third = &self.d3[(j1 * jn + j2) * jn + j];
                        Zip::from(slot)
                            .and(third)
                            .and(&rowsum)
                            .for_each(|s, &u3, &r| *s += mult * u3 * r);
                    }
                }
            }
            for (j, block) in p.layout.functions.iter().enumerate() {
                let proj = p.features.block(j).t().dot(&acc[j]);
                out.slice_mut(s![block.range()]).scaled_add(tau, &proj);
            }
        }

        for (t, term) in self.terms.iter().enumerate() {
            let deps = term.deps();
            if deps.is_empty() {
                continue;
            }
            let beta = self.q[t];
            let e = (-term.w).exp();
            let qv = 0.5 * beta * beta * e;
            // third derivatives of the per-coefficient prior term
            let p_bbk = |wk: &Jet| -e * wk[0];
            let p_bkl = |a: usize, b: usize| {
                let (wa, wb) = (deps[a].1, deps[b].1);
                let wab = if a == b { wa[1] } else { 0.0 };
                beta * e * (wa[0] * wb[0] - wab)
            };
            let p_klm = |a: usize, b: usize, c: usize| {
                let (wa, wb, wc) = (deps[a].1, deps[b].1, deps[c].1);
                let w2 = |x: usize, y: usize| if x == y { deps[x].1[1] } else { 0.0 };
                let w3 = if a == b && b == c { wa[2] } else { 0.0 };
                qv * (-wa[0] * wb[0] * wc[0] + w2(a, c) * wb[0] + w2(b, c) * wa[0] + w2(a, b) * wc[0])
                    + (0.5 - qv) * w3
            };
            let mut out_t = 0.0;
            for (a, &(k, wk)) in deps.iter().enumerate() {
                out_t += 2.0 * w[[t, k]] * p_bbk(&wk);
                for (b, &(l, _)) in deps.iter().enumerate() {
                    out_t += w[[k, l]] * p_bkl(a, b);
                }
            }
            out[t] += out_t;
            for (a, &(k, wk)) in deps.iter().enumerate() {
                let mut v = w[[t, t]] * p_bbk(&wk);
                for (b, &(l, _)) in deps.iter().enumerate() {
                    v += 2.0 * w[[t, l]] * p_bkl(a, b);
                    for (c, &(m, _)) in deps.iter().enumerate() {
                        v += w[[l, m]] * p_klm(a, b, c);
                    }
                }
                out[k] += v;
            }
        }
        for h in &self.hypers {
            if let Some(c) = h.coord {
                out[c] += w[[c, c]] * h.prior[2];
            }
        }
        Ok(out)
    }
}

fn coef_terms(prior: &CoefPrior, hypers: &[HyperEval; 3], intercept_variance: f64) -> CoefTerms {
    let mut terms = CoefTerms {
        w: 0.0,
        deps: [(0, [0.0; 3]); 2],
        n: 0,
    };
    match *prior {
        CoefPrior::Gaussian { freq2 } => {
            let amp = &hypers[Hyper::Amplitude.index()];
            let bw = &hypers[Hyper::Bandwidth.index()];
            terms.w = amp.theta.ln() + 0.5 * LN_PI + 0.5 * bw.theta.ln() - bw.theta * freq2 / 4.0;
            if let Some(c) = amp.coord {
                terms.push(c, amp.ln_theta);
            }
            if let Some(c) = bw.coord {
                let jet = [0, 1, 2].map(|k| 0.5 * bw.ln_theta[k] - 0.25 * freq2 * bw.theta_d[k]);
                terms.push(c, jet);
            }
        }
        CoefPrior::Linear => {
            let amp = &hypers[Hyper::LinearAmplitude.index()];
            terms.w = amp.theta.ln();
            if let Some(c) = amp.coord {
                terms.push(c, amp.ln_theta);
            }
        }
        CoefPrior::Intercept => terms.w = intercept_variance.ln(),
    }
    terms
}
