use std::path::PathBuf;

use clap::ValueEnum;
use serde::Serialize;
use softabs::model::{simulate_logistic, simulate_mean_variance, LogisticTruth, SimulateOptions, DEFAULT_FEATURES, DEFAULT_HALF_WIDTH, DEFAULT_VARIANCE_FLOOR};

use crate::{sibling, write_json, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    /// Binary labels from a sparse sinusoidal log-odds.
    Logistic,
    /// Heteroscedastic regression with continuous and binary covariates.
    Meanvar,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Covariate columns (continuous columns for `meanvar`).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    dims: u64,
    /// Rows.
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(2..))]
    n: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// CSV output; the truth goes next to it as `<stem>.truth.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Family::Logistic)]
    family: Family,
    /// Extra binary covariates (`meanvar` only).
    #[arg(long, default_value_t = 0)]
    binary: usize,
    /// Features per covariate in the generating log-odds (`logistic` only).
    #[arg(long, default_value_t = DEFAULT_FEATURES)]
    features: usize,
    /// Domain half-width `L` of the generating log-odds (`logistic` only).
    #[arg(long, default_value_t = DEFAULT_HALF_WIDTH)]
    half_width: f64,
    /// Variance floor (`meanvar` only).
    #[arg(long, default_value_t = DEFAULT_VARIANCE_FLOOR)]
    delta: f64,
    /// Labels are fair coin flips (`logistic` only).
    #[arg(long)]
    zero_truth: bool,
}

#[derive(Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
enum Truth {
    Logistic {
        half_width: f64,
        #[serde(flatten)]
        truth: LogisticTruth,
    },
    Meanvar {
        continuous: usize,
        binary: usize,
        n: usize,
        delta: f64,
        seed: u64,
    },
}

pub fn run(args: Args) -> Result<(), CliError> {
    let n = args.n as usize;
    let dims = args.dims as usize;
    let (data, truth) = match args.family {
        Family::Logistic => {
            if args.binary > 0 {
                return Err(CliError::Usage("--binary applies to --family meanvar".into()));
            }
            let opts = SimulateOptions {
                features: args.features,
                zero_truth: args.zero_truth,
            };
            let (data, truth) = simulate_logistic(dims, n, args.half_width, args.seed, opts)?;
            let truth = Truth::Logistic {
                half_width: args.half_width,
                truth,
            };
            (data, truth)
        }
        Family::Meanvar => {
            let data = simulate_mean_variance(dims, args.binary, n, args.delta, args.seed)?;
            let truth = Truth::Meanvar {
                continuous: dims,
                binary: args.binary,
                n,
                delta: args.delta,
                seed: args.seed,
            };
            (data, truth)
        }
    };
    data.save(&args.out)?;
    write_json(Some(&sibling(&args.out, "truth.json")), &truth)
}
