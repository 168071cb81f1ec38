//! Per-dimension timings along one short leapfrog trajectory.
//!
//! Methods: `dynamic-jacobi` and `static-jacobi` decompose each Hessian of
//! the trajectory warm and cold; `structured-trace` and `dense-trace` time
//! `tr(W2 dH/dq_i)` for all `i`; `leapfrog-block` is the wall time of 100
//! leapfrogs.

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use softabs::metric::MetricState;
use softabs::model::{simulate_logistic, ModelSpec, Preset, SimulateOptions};
use softabs::sampler::{ChainConfig, Dynamics, MetricKind};
use softabs::Posterior;

use crate::{load_config, CliError, RunConfig};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Covariate counts `D` (comma separated); `d = M D + 4`.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Leapfrogs in the measured trajectory.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(2..))]
    steps: u64,
    /// Largest `d` for which the dense oracle is timed.
    #[arg(long, default_value_t = 500)]
    dense_max_dim: usize,
    /// Repetitions of the dense oracle per `D`.
    #[arg(long, default_value_t = 1)]
    dense_reps: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Row {
    dims: usize,
    d: usize,
    method: &'static str,
    reps: usize,
    mean_ms: f64,
    sd_ms: f64,
    /// Empty for methods without a Jacobi solve.
    mean_sweeps: Option<f64>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn row(dims: usize, d: usize, method: &'static str, ms: &[f64], sweeps: Option<&[usize]>) -> Row {
    let (mean_ms, sd_ms) = mean_sd(ms);
    Row {
        dims,
        d,
        method,
        reps: ms.len(),
        mean_ms,
        sd_ms,
        mean_sweeps: sweeps.map(|s| s.iter().sum::<usize>() as f64 / s.len() as f64),
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn bench_dims(dims: usize, args: &Args, cfg: &RunConfig) -> Result<Vec<Row>, CliError> {
    let opts = &cfg.preset;
    let sim = SimulateOptions {
        features: opts.features,
        zero_truth: false,
    };
    let (data, _) = simulate_logistic(dims, args.n, opts.half_width, args.seed, sim)?;
    let spec = ModelSpec::logistic(dims, opts.features, opts.half_width).with_priors(cfg.priors_for(Preset::Logistic));
    let posterior = Posterior::new(spec, &data)?;
    let d = posterior.dim();
    let chain = ChainConfig {
        metric: MetricKind::SoftabsDynamic,
        ..cfg.chain
    };
    let dynamics = Dynamics::new(&posterior, chain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut point = dynamics.point(posterior.initial_point().view(), None)?;
    let mut p = dynamics.sample_momentum(&point, &mut rng);

    let mut leapfrog_ms = Vec::new();
    let mut trajectory = vec![point.q().to_owned()];
    for _ in 0..args.steps {
        let t = Instant::now();
        let (next, p1, _) = dynamics.leapfrog_step(&point, p.view(), chain.step_size)?;
        leapfrog_ms.push(ms_since(t) * 100.0);
        trajectory.push(next.q().to_owned());
        point = next;
        p = p1;
    }

    let jacobi = chain.jacobi();
    let hessians = trajectory
        .iter()
        .map(|q| posterior.hessian(q.view()))
        .collect::<softabs::Result<Vec<_>>>()?;
    let (mut warm_ms, mut warm_sweeps, mut cold_ms, mut cold_sweeps) = (vec![], vec![], vec![], vec![]);
    let mut prev = MetricState::from_hessian(hessians[0].view(), chain.kappa, jacobi)?;
    for h in &hessians[1..] {
        let t = Instant::now();
        let cold = MetricState::from_hessian(h.view(), chain.kappa, jacobi)?;
        cold_ms.push(ms_since(t));
        cold_sweeps.push(cold.sweeps);
        let t = Instant::now();
        let warm = prev.rebuild_dynamic(h.view(), jacobi, chain.gs_interval)?;
        warm_ms.push(ms_since(t));
        warm_sweeps.push(warm.sweeps);
        prev = warm;
    }

    let q = trajectory.last().expect("trajectory is non-empty");
    let state = posterior.evaluate(q.view())?;
    let mut structured_ms = Vec::new();
    for _ in 0..args.steps {
        let t = Instant::now();
        state.trace_contraction(prev.w2())?;
        structured_ms.push(ms_since(t));
    }

    let mut rows = vec![
        row(dims, d, "dynamic-jacobi", &warm_ms, Some(&warm_sweeps)),
        row(dims, d, "static-jacobi", &cold_ms, Some(&cold_sweeps)),
        row(dims, d, "structured-trace", &structured_ms, None),
    ];
    if d <= args.dense_max_dim && args.dense_reps > 0 {
        let mut dense_ms = Vec::new();
        for _ in 0..args.dense_reps {
            let t = Instant::now();
            posterior.dense_oracle_with_limit(prev.w2(), q.view(), usize::MAX)?;
            dense_ms.push(ms_since(t));
        }
        rows.push(row(dims, d, "dense-trace", &dense_ms, None));
    }
    rows.push(row(dims, d, "leapfrog-block", &leapfrog_ms, None));
    Ok(rows)
}

pub fn run(args: Args) -> Result<(), CliError> {
    if args.dims.is_empty() || args.dims.contains(&0) {
        return Err(CliError::Usage("--dims needs positive covariate counts".into()));
    }
    let cfg = load_config(args.config.as_deref())?;
    let sink: Box<dyn std::io::Write> = match &args.out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(CliError::io(p))?),
        None => Box::new(std::io::stdout()),
    };
    let mut writer = csv::Writer::from_writer(sink);
    // cells run one after another so their timings do not compete
    for &dims in &args.dims {
        for r in bench_dims(dims, &args, &cfg)? {
            writer.serialize(r).map_err(softabs::Error::from)?;
        }
        writer.flush().map_err(|e| CliError::Run(e.into()))?;
    }
    Ok(())
}
