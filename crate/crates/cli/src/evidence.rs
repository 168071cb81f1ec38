use std::path::PathBuf;

use clap::ValueEnum;
use serde::Serialize;
use softabs::evidence::{default_ladder, laplace_grid_oracle, thermo_integrate, EvidenceReport, GridResult, GridSpec, TemperLadder};
use softabs::model::{Dataset, HyperPriors, Preset};
use softabs::optim::LbfgsConfig;
use softabs::Posterior;

use crate::{load_config, write_json, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Oracle {
    /// Conditional Laplace integrated over a `(c_g, sigma_g)` grid.
    LaplaceGrid,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, default_value = "logistic")]
    model: Preset,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ladder chains `Z` (overrides the configuration).
    #[arg(long)]
    chains: Option<usize>,
    /// Moves per rung `A` (overrides the configuration).
    #[arg(long)]
    moves_per_rung: Option<usize>,
    /// `default` for the built-in 101-rung schedule, or a file with one
    /// temperature per line from 1 down to 0.
    #[arg(long, default_value = "default")]
    ladder: String,
    #[arg(long, value_enum)]
    oracle: Option<Oracle>,
    #[arg(long, default_value_t = GridSpec::default().amplitude_step)]
    grid_amplitude_step: f64,
    #[arg(long, default_value_t = GridSpec::default().bandwidth_step)]
    grid_bandwidth_step: f64,
    /// Average each rung's moves instead of taking its final draw.
    #[arg(long)]
    average_rungs: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct OracleReport {
    method: &'static str,
    grid: GridSpec,
    #[serde(flatten)]
    result: GridResult,
}

#[derive(Debug, Serialize)]
struct Report {
    model: Preset,
    d: usize,
    n: usize,
    #[serde(flatten)]
    ti: EvidenceReport,
    oracle: Option<OracleReport>,
    /// `bme_mean - oracle`.
    gap: Option<f64>,
    /// `|gap| / |oracle|`.
    relative_gap: Option<f64>,
}

fn load_ladder(spec: &str) -> Result<TemperLadder, CliError> {
    if spec == "default" {
        return Ok(default_ladder());
    }
    let path = PathBuf::from(spec);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("--ladder: cannot read {spec}: {e}")))?;
    TemperLadder::parse(&text).map_err(|e| CliError::Usage(format!("--ladder {spec}: {e}")))
}

pub fn run(args: Args) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let ladder = load_ladder(&args.ladder)?;
    let data = Dataset::load(&args.data)?;
    // evidence runs use the evidence hyperpriors for every family
    let priors = cfg.override_priors(HyperPriors::evidence());
    let spec = args.model.build(&data, &cfg.preset_options(priors))?;
    let posterior = Posterior::new(spec, &data)?;

    let mut config = cfg.evidence_config();
    if let Some(z) = args.chains {
        config.chains = z;
    }
    if let Some(a) = args.moves_per_rung {
        config.moves_per_rung = a;
    }
    if let Some(seed) = args.seed {
        config.chain.seed = seed;
    }
    config.average_rungs |= args.average_rungs;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let oracle = match args.oracle {
        Some(Oracle::LaplaceGrid) => {
            let grid = GridSpec {
                amplitude_step: args.grid_amplitude_step,
                bandwidth_step: args.grid_bandwidth_step,
                ..GridSpec::default()
            };
            grid.amplitudes().map_err(|e| CliError::Usage(e.to_string()))?;
            grid.bandwidths().map_err(|e| CliError::Usage(e.to_string()))?;
            let result = laplace_grid_oracle(&posterior, &grid, LbfgsConfig::default())?;
            Some(OracleReport {
                method: "laplace-grid",
                grid,
                result,
            })
        }
        None => None,
    };

    let ti = thermo_integrate(&posterior, &ladder, &config)?;
    for w in &ti.warnings {
        eprintln!("warning: {w}");
    }
    let gap = oracle.as_ref().map(|o| ti.bme_mean - o.result.log_evidence);
    let relative_gap = oracle
        .as_ref()
        .zip(gap)
        .map(|(o, g)| g.abs() / o.result.log_evidence.abs());
    let report = Report {
        model: args.model,
        d: posterior.dim(),
        n: data.len(),
        ti,
        oracle,
        gap,
        relative_gap,
    };
    write_json(args.out.as_deref(), &report)
}
