use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::Args;
use serde::Serialize;

use crate::manifest::{self, RunManifest};
use tnprob::models::Model;

#[derive(Debug, Args, Serialize)]
pub struct QueryArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated variables to sum out.
    #[arg(long, value_delimiter = ',')]
    marginalize: Vec<String>,
    /// Comma-separated `variable=value` evidence with 1-based values.
    #[arg(long, value_delimiter = ',')]
    condition: Vec<String>,
    /// Distribution CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn parse_evidence(items: &[String]) -> anyhow::Result<Vec<(String, usize)>> {
    items
        .iter()
        .map(|item| {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("evidence {item:?} must look like name=value"))?;
            let v: usize = value.trim().parse().with_context(|| format!("evidence value in {item:?}"))?;
            if v == 0 {
                return Err(anyhow!("evidence values are 1-based; got 0 in {item:?}"));
            }
            Ok((name.trim().to_string(), v - 1))
        })
        .collect()
}

pub fn run(args: QueryArgs) -> anyhow::Result<ExitCode> {
    let mut manifest = RunManifest::start("query", &args, vec![]);
    let model = Model::from_json(&manifest::read_file(&args.model)?)
        .with_context(|| format!("parsing {}", args.model.display()))?;
    let evidence = parse_evidence(&args.condition)?;
    let marg: Vec<&str> = args.marginalize.iter().map(String::as_str).collect();
    let cond: Vec<(&str, usize)> = evidence.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    let dist = model.query(&marg, &cond)?;
    manifest::write_file(&args.out, dist.to_csv().as_bytes())?;
    println!("wrote distribution over [{}] to {}", dist.names().join(", "), args.out.display());
    manifest.artifact(&args.out);
    manifest.finish(&manifest::sidecar(&args.out))?;
    Ok(ExitCode::SUCCESS)
}
