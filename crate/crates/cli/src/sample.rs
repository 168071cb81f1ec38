use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use softabs::model::{Dataset, Preset};
use softabs::sampler::{rmhmc_run_with, write_jsonl, MetricKind};
use softabs::Posterior;

use crate::{load_config, sibling, write_json, CliError};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, default_value = "logistic")]
    model: Preset,
    /// CSV with columns x1..xD,y.
    #[arg(long)]
    data: PathBuf,
    /// `key = value` run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "softabs-dynamic")]
    metric: MetricKind,
    /// Overrides the `seed` key of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Chain JSONL; the summary goes next to it as `<stem>.summary.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub model: Preset,
    pub metric: MetricKind,
    pub d: usize,
    pub n: usize,
    pub moves: usize,
    pub burnin: usize,
    pub acceptance_rate: f64,
    /// `None` when too few kept moves for the test.
    pub wilcoxon_p: Option<f64>,
    pub divergences: usize,
    pub mean_sweeps: f64,
    /// Wall time of 100 leapfrogs, averaged over the kept moves.
    pub ms_per_100_leapfrogs: f64,
    pub wall_seconds: f64,
    pub final_q: Vec<f64>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let data = Dataset::load(&args.data)?;
    let spec = args.model.build(&data, &cfg.preset_options(cfg.priors_for(args.model)))?;
    let posterior = Posterior::new(spec, &data)?;
    let mut chain = cfg.chain;
    chain.metric = args.metric;
    if let Some(seed) = args.seed {
        chain.seed = seed;
    }

    let file = File::create(&args.out).map_err(CliError::io(&args.out))?;
    let mut out = BufWriter::new(file);
    let start = Instant::now();
    let output = rmhmc_run_with(&posterior, chain, None, |rec| write_jsonl(&mut out, std::slice::from_ref(rec)))?;
    out.flush().map_err(CliError::io(&args.out))?;

    let kept = output.kept();
    let mean = |f: fn(&softabs::sampler::MoveRecord) -> f64| {
        if kept.is_empty() {
            0.0
        } else {
            kept.iter().map(f).sum::<f64>() / kept.len() as f64
        }
    };
    let summary = Summary {
        model: args.model,
        metric: args.metric,
        d: posterior.dim(),
        n: data.len(),
        moves: chain.moves,
        burnin: chain.burnin,
        acceptance_rate: output.acceptance_rate(),
        wilcoxon_p: output.wilcoxon().ok().map(|t| t.p_value),
        divergences: output.divergences(),
        mean_sweeps: mean(|r| r.sweeps_mean),
        ms_per_100_leapfrogs: mean(|r| r.wall_ms) * 100.0 / chain.leapfrogs.max(1) as f64,
        wall_seconds: start.elapsed().as_secs_f64(),
        final_q: output.final_q.to_vec(),
    };
    if summary.divergences > 0 {
        eprintln!("warning: {} divergent moves", summary.divergences);
    }
    write_json(Some(&sibling(&args.out, "summary.json")), &summary)
}
