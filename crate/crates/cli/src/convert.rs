use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::manifest::{self, RunManifest};
use tnprob::models::{DecoheredBM, Model};
use tnprob::random::rng;
use tnprob::transforms::{
    dbm_to_lps, fdbm_to_ugm, lps_to_dbm, ugm_to_fdbm, EdgeToNodeAssignment, PhaseAssignment, TransformError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Ugm,
    Fdbm,
    Lps,
    Dbm,
}

#[derive(Debug, Args, Serialize)]
pub struct ConvertArgs {
    /// Source model file.
    #[arg(long)]
    from: PathBuf,
    #[arg(long, value_enum)]
    to: Target,
    /// Seed for uniform random phases when a UGM becomes a Born machine;
    /// without it all phases are zero.
    #[arg(long)]
    phase_seed: Option<u64>,
    /// `default` (each decohered edge goes to its smaller node id) or a JSON
    /// file mapping decohered edge ids to node ids; used by `--to lps`.
    #[arg(long, default_value = "default")]
    assignment: String,
    #[arg(long)]
    out: PathBuf,
}

fn phases(args: &ConvertArgs, m: &tnprob::models::Ugm) -> PhaseAssignment {
    match args.phase_seed {
        Some(s) => PhaseAssignment::random(m.net(), &mut rng(s)),
        None => PhaseAssignment::zero(),
    }
}

fn as_dbm(args: &ConvertArgs, model: Model) -> Result<DecoheredBM, TransformError> {
    Ok(match model {
        Model::Ugm(u) => ugm_to_fdbm(&u, &phases(args, &u))?,
        Model::Born(b) => DecoheredBM::new(b, BTreeSet::new())?,
        Model::Decohered(d) => d,
        Model::Lps(l) => lps_to_dbm(&l)?,
    })
}

fn convert(args: &ConvertArgs, model: Model) -> anyhow::Result<Model> {
    Ok(match args.to {
        Target::Ugm => match model {
            Model::Ugm(u) => Model::Ugm(u),
            other => Model::Ugm(fdbm_to_ugm(&as_dbm(args, other)?)?),
        },
        Target::Fdbm => {
            let d = as_dbm(args, model)?;
            if !d.is_fully_decohered() {
                return Err(TransformError::NotFullyDecohered.into());
            }
            Model::Decohered(d)
        }
        Target::Dbm => Model::Decohered(as_dbm(args, model)?),
        Target::Lps => match model {
            Model::Lps(l) => Model::Lps(l),
            other => {
                let d = as_dbm(args, other)?;
                let f = if args.assignment == "default" {
                    None
                } else {
                    let text = manifest::read_file(std::path::Path::new(&args.assignment))?;
                    let map = serde_json::from_str(&text)
                        .with_context(|| format!("{} must be a JSON object of edge → node", args.assignment))?;
                    Some(EdgeToNodeAssignment { map })
                };
                Model::Lps(dbm_to_lps(&d, f.as_ref())?)
            }
        },
    })
}

pub fn run(args: ConvertArgs) -> anyhow::Result<ExitCode> {
    let mut manifest = RunManifest::start("convert", &args, vec![]);
    if let Some(s) = args.phase_seed {
        manifest.seed("phase_seed", s);
    }
    let source = Model::from_json(&manifest::read_file(&args.from)?)
        .with_context(|| format!("parsing {}", args.from.display()))?;
    let from_family = source.family();
    let target = convert(&args, source).with_context(|| format!("cannot convert {from_family} to {:?}", args.to))?;
    let g = match &target {
        Model::Ugm(m) => m.net().graph(),
        Model::Born(m) => m.net().graph(),
        Model::Decohered(m) => m.net().graph(),
        Model::Lps(m) => m.net().graph(),
    };
    println!(
        "{from_family} -> {}: {} nodes, {} visible edges, {} hidden edges",
        target.family(),
        g.nodes.len(),
        g.visible_edges().count(),
        g.hidden_edges().count()
    );
    manifest::write_file(&args.out, target.to_json()?.as_bytes())?;
    manifest.artifact(&args.out);
    manifest.finish(&manifest::sidecar(&args.out))?;
    Ok(ExitCode::SUCCESS)
}
