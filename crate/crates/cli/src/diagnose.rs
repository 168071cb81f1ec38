use std::path::PathBuf;

use serde::Serialize;
use softabs::sampler::{read_jsonl, wilcoxon_split_half};

use crate::{write_json, CliError};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Chain JSONL written by `sample`.
    chain: PathBuf,
    /// Leading moves to drop before testing.
    #[arg(long, default_value_t = 0)]
    burnin: usize,
    /// Diagnostics JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    moves: usize,
    burnin: usize,
    wilcoxon_p: f64,
    wilcoxon_z: f64,
    acceptance_rate: f64,
    divergences: usize,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.chain).map_err(CliError::io(&args.chain))?;
    let records = read_jsonl(&text)?;
    if args.burnin >= records.len() {
        return Err(CliError::Usage(format!(
            "--burnin {} leaves nothing of {} moves",
            args.burnin,
            records.len()
        )));
    }
    let kept = &records[args.burnin..];
    let logpost: Vec<f64> = kept.iter().map(|r| r.logpost).collect();
    let test = wilcoxon_split_half(&logpost)?;
    let diag = Diagnostics {
        moves: records.len(),
        burnin: args.burnin,
        wilcoxon_p: test.p_value,
        wilcoxon_z: test.z,
        acceptance_rate: kept.iter().filter(|r| r.accept).count() as f64 / kept.len() as f64,
        divergences: records.iter().filter(|r| r.divergent).count(),
    };
    write_json(args.out.as_deref(), &diag)
}
