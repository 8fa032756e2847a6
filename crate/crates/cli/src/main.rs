mod convert;
mod manifest;
mod query;
mod train;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use manifest::RunManifest;
use tnprob::data::SequenceDataset;

#[derive(Debug, Parser)]
#[command(name = "tnprob", version, about = "Tensor-network probabilistic models: data, training, conversion, checks and queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a Bars-and-Stripes sequence dataset.
    GenData(GenDataArgs),
    /// Train UGM or DBM hidden-Markov mixtures and record NLL trajectories.
    Train(train::TrainArgs),
    /// Convert a model file between families.
    Convert(convert::ConvertArgs),
    /// Run randomized and witness checks of the family identities.
    Verify(verify::VerifyArgs),
    /// Marginalize or condition a model and write the distribution.
    Query(query::QueryArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenDataArgs {
    #[arg(long, default_value_t = 8)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    cols: usize,
    /// Length of each sequence cut from the row-major raster; must divide rows·cols.
    #[arg(long, default_value_t = 16)]
    segment_len: usize,
    /// Recorded in the dataset header; generation itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the duplicated constant images.
    #[arg(long)]
    no_dedup: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Ugm,
    Dbm,
}

fn gen_data(args: GenDataArgs) -> anyhow::Result<ExitCode> {
    let mut manifest = RunManifest::start("gen-data", &args, vec![("seed", args.seed)]);
    let ds = SequenceDataset::bars_and_stripes(args.rows, args.cols, args.segment_len, !args.no_dedup, args.seed)?;
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    manifest::write_file(&args.out, &buf)?;
    println!("wrote {} sequences of length {} to {}", ds.len(), ds.seq_len(), args.out.display());
    manifest.artifact(&args.out);
    manifest.finish(&manifest::sidecar(&args.out))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train::run(a),
        Command::Convert(a) => convert::run(a),
        Command::Verify(a) => verify::run(a),
        Command::Query(a) => query::run(a),
    }
    .context("tnprob failed");
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
