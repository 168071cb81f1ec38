//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    /// Number of curvature pairs kept.
    pub memory: usize,
    /// Stop once the gradient's max-norm is at most this.
    pub gtol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            gtol: 1e-6,
            max_iters: 2000,
            c1: 1e-4,
            c2: 0.9,
            max_line_evals: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Array1<f64>,
    pub value: f64,
    pub gradient: Array1<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    /// Whether the gradient tolerance was reached. The optimizer also stops
    /// when the line search can make no further progress.
    pub converged: bool,
}

impl Minimum {
    pub fn grad_norm(&self) -> f64 {
        max_abs(self.gradient.view())
    }
}

pub(crate) fn max_abs(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `f`, which returns the value and gradient at a point.
///
/// Evaluation errors that count as rejections (a point outside the domain,
/// non-finite values) are treated as `+inf` inside the line search. Any
/// other error aborts the run, as does a failure at `x0`.
pub fn minimize<F>(mut f: F, x0: ArrayView1<'_, f64>, config: LbfgsConfig) -> Result<Minimum>
where
    F: FnMut(ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)>,
{
    if config.memory == 0 || !(0.0 < config.c1 && config.c1 < config.c2 && config.c2 < 1.0) {
        return Err(Error::InvalidConfig(format!("bad L-BFGS settings {config:?}")));
    }
    let mut x = x0.to_owned();
    let (mut fx, mut g) = f(x.view())?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Optimizer("non-finite objective at the starting point".into()));
    }
    let mut evaluations = 1;
    let mut history: VecDeque<(Array1<f64>, Array1<f64>, f64)> = VecDeque::with_capacity(config.memory);

    for iter in 0..config.max_iters {
        if max_abs(g.view()) <= config.gtol {
            return Ok(Minimum { x, value: fx, gradient: g, iterations: iter, evaluations, converged: true });
        }
        let mut dir = two_loop(&g, &history);
        let mut slope = dir.dot(&g);
        if !(slope < 0.0) {
            history.clear();
            dir = -&g;
            slope = dir.dot(&g);
        }
        let init = if history.is_empty() {
            (1.0 / max_abs(g.view())).min(1.0)
        } else {
            1.0
        };
        let found = line_search(&mut f, &x, fx, slope, &dir, init, &config, &mut evaluations)?;
        let Some((alpha, fnew, gnew)) = found else {
            if history.is_empty() {
                return Ok(Minimum { x, value: fx, gradient: g, iterations: iter, evaluations, converged: false });
            }
            // stale curvature can produce a poor direction; retry along -g once
            history.clear();
            continue;
        };
        let s = &dir * alpha;
        let y = &gnew - &g;
        let sy = s.dot(&y);
        x += &s;
        fx = fnew;
        g = gnew;
        if sy > 1e-12 * s.dot(&s).sqrt() * y.dot(&y).sqrt() {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
    }
    let converged = max_abs(g.view()) <= config.gtol;
    Ok(Minimum { x, value: fx, gradient: g, iterations: config.max_iters, evaluations, converged })
}

fn two_loop(g: &Array1<f64>, history: &VecDeque<(Array1<f64>, Array1<f64>, f64)>) -> Array1<f64> {
    let mut r = g.clone();
    let mut alphas = vec![0.0; history.len()];
    for (i, (s, y, rho)) in history.iter().enumerate().rev() {
        let a = rho * s.dot(&r);
        alphas[i] = a;
        r.scaled_add(-a, y);
    }
    if let Some((s, y, _)) = history.back() {
        r *= s.dot(y) / y.dot(y);
    }
    for (i, (s, y, rho)) in history.iter().enumerate() {
        let b = rho * y.dot(&r);
        r.scaled_add(alphas[i] - b, s);
    }
    -r
}

struct Trial {
    alpha: f64,
    value: f64,
    slope: f64,
    grad: Option<Array1<f64>>,
}

fn evaluate<F>(f: &mut F, x: &Array1<f64>, dir: &Array1<f64>, alpha: f64, evals: &mut usize) -> Result<Trial>
where
    F: FnMut(ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)>,
{
    *evals += 1;
    let xt = x + &(dir * alpha);
    match f(xt.view()) {
        Ok((v, g)) if v.is_finite() && g.iter().all(|e| e.is_finite()) => Ok(Trial {
            alpha,
            value: v,
            slope: g.dot(dir),
            grad: Some(g),
        }),
        Ok(_) => Ok(Trial { alpha, value: f64::INFINITY, slope: f64::NAN, grad: None }),
        Err(e) if e.is_rejection() => Ok(Trial { alpha, value: f64::INFINITY, slope: f64::NAN, grad: None }),
        Err(e) => Err(e),
    }
}

/// Bracketing phase followed by zoom with safeguarded cubic interpolation.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    f: &mut F,
    x: &Array1<f64>,
    f0: f64,
    slope0: f64,
    dir: &Array1<f64>,
    init: f64,
    cfg: &LbfgsConfig,
    evals: &mut usize,
) -> Result<Option<(f64, f64, Array1<f64>)>>
where
    F: FnMut(ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)>,
{
    let armijo = |t: &Trial| t.value <= f0 + cfg.c1 * t.alpha * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -cfg.c2 * slope0;

    let mut prev = Trial { alpha: 0.0, value: f0, slope: slope0, grad: None };
    let mut alpha = init;
    let mut used = 0;
    while used < cfg.max_line_evals {
        used += 1;
        let cur = evaluate(f, x, dir, alpha, evals)?;
        if !cur.value.is_finite() {
            // outside the domain: back off towards the last good point
            alpha = prev.alpha + 0.25 * (alpha - prev.alpha);
            if alpha - prev.alpha <= f64::EPSILON * prev.alpha.max(1.0) {
                return Ok(None);
            }
            continue;
        }
        if !armijo(&cur) || (prev.alpha > 0.0 && cur.value >= prev.value) {
            return zoom(f, x, f0, slope0, dir, prev, cur, cfg, evals, cfg.max_line_evals - used);
        }
        if curvature(&cur) {
            return Ok(Some((cur.alpha, cur.value, cur.grad.expect("finite trial"))));
        }
        if cur.slope >= 0.0 {
            return zoom(f, x, f0, slope0, dir, cur, prev, cfg, evals, cfg.max_line_evals - used);
        }
        alpha = cur.alpha * 2.0;
        prev = cur;
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    f: &mut F,
    x: &Array1<f64>,
    f0: f64,
    slope0: f64,
    dir: &Array1<f64>,
    mut lo: Trial,
    mut hi: Trial,
    cfg: &LbfgsConfig,
    evals: &mut usize,
    budget: usize,
) -> Result<Option<(f64, f64, Array1<f64>)>>
where
    F: FnMut(ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)>,
{
    for _ in 0..budget {
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= f64::EPSILON * b.max(1e-300) {
            break;
        }
        let mut alpha = cubic_min(&lo, &hi).unwrap_or(0.5 * (a + b));
        if !(alpha > a + 0.1 * width && alpha < b - 0.1 * width) {
            alpha = 0.5 * (a + b);
        }
        let cur = evaluate(f, x, dir, alpha, evals)?;
        if !(cur.value <= f0 + cfg.c1 * alpha * slope0) || cur.value >= lo.value {
            hi = cur;
        } else {
            if cur.slope.abs() <= -cfg.c2 * slope0 {
                return Ok(Some((cur.alpha, cur.value, cur.grad.expect("finite trial"))));
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // accept the best sufficient-decrease point found, if any
    match lo.grad {
        Some(g) if lo.alpha > 0.0 => Ok(Some((lo.alpha, lo.value, g))),
        _ => Ok(None),
    }
}

/// Minimizer of the cubic matching values and slopes at both trials.
fn cubic_min(p: &Trial, q: &Trial) -> Option<f64> {
    if !(p.value.is_finite() && q.value.is_finite() && p.slope.is_finite() && q.slope.is_finite()) {
        return None;
    }
    let d1 = p.slope + q.slope - 3.0 * (p.value - q.value) / (p.alpha - q.alpha);
    let disc = d1 * d1 - p.slope * q.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (q.alpha - p.alpha).signum() * disc.sqrt();
    let t = q.alpha - (q.alpha - p.alpha) * (q.slope + d2 - d1) / (q.slope - p.slope + 2.0 * d2);
    t.is_finite().then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rosenbrock(x: ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>)> {
        let n = x.len();
        let mut v = 0.0;
        let mut g = Array1::zeros(n);
        for i in 0..n - 1 {
            let a = x[i + 1] - x[i] * x[i];
            let b = 1.0 - x[i];
            v += 100.0 * a * a + b * b;
            g[i] += -400.0 * x[i] * a - 2.0 * b;
            g[i + 1] += 200.0 * a;
        }
        Ok((v, g))
    }

    #[test]
    fn quadratic_exact_minimum() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let b = array![1.0, -2.0, 0.5];
        let m = minimize(
            |x| Ok((0.5 * x.dot(&a.dot(&x)) - b.dot(&x), a.dot(&x) - &b)),
            Array1::zeros(3).view(),
            LbfgsConfig::default(),
        )
        .unwrap();
        assert!(m.converged);
        // residual of A x = b
        assert!(max_abs((a.dot(&m.x) - &b).view()) <= 1e-6);
    }

    #[test]
    fn rosenbrock_ten_dims() {
        let m = minimize(rosenbrock, Array1::from_elem(10, -1.2).view(), LbfgsConfig::default()).unwrap();
        assert!(m.converged, "{m:?}");
        assert!(m.x.iter().all(|v| (v - 1.0).abs() < 1e-5), "{:?}", m.x);
    }

    #[test]
    fn domain_errors_shrink_the_step() {
        // -ln x + x, minimized at 1; undefined for x <= 0
        let f = |x: ArrayView1<'_, f64>| {
            if x[0] <= 0.0 {
                return Err(Error::Domain("x <= 0".into()));
            }
            Ok((-x[0].ln() + x[0], array![-1.0 / x[0] + 1.0]))
        };
        let m = minimize(f, array![0.01].view(), LbfgsConfig::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bad_start_is_an_error() {
        let f = |_: ArrayView1<'_, f64>| Ok((f64::NAN, array![0.0]));
        assert!(matches!(minimize(f, array![0.0].view(), LbfgsConfig::default()), Err(Error::Optimizer(_))));
    }

    #[test]
    fn wolfe_conditions_hold_on_accepted_steps() {
        let mut f0 = 0.0;
        let cfg = LbfgsConfig::default();
        let x = array![-1.2, 1.0];
        let (v, g) = rosenbrock(x.view()).unwrap();
        f0 += v;
        let dir = -&g;
        let slope = dir.dot(&g);
        let mut evals = 0;
        let mut obj = rosenbrock;
        let (alpha, value, gnew) = line_search(&mut obj, &x, f0, slope, &dir, 1e-3, &cfg, &mut evals)
            .unwrap()
            .unwrap();
        assert!(value <= f0 + cfg.c1 * alpha * slope);
        assert!(gnew.dot(&dir).abs() <= -cfg.c2 * slope);
    }
}
