use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::{self, RunManifest};
use crate::FamilyArg;
use tnprob::data::SequenceDataset;
use tnprob::learn::{build_hmm_bm, build_hmm_ugm, run_replication, Family, ReplicationResult, TrainConfig};
use tnprob::models::Model;

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Hidden dimension N of every chain.
    #[arg(long)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 15)]
    replications: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Fraction of each replication's permutation used for training.
    #[arg(long, default_value_t = 0.7)]
    split: f64,
    /// Global seed; split and initialization seeds derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset CSV written by `gen-data`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct ReplicationSummary {
    replication: usize,
    split_seed: u64,
    init_seed: u64,
    param_count: usize,
    best_epoch: Option<usize>,
    best_test_nll: Option<f64>,
    epochs_completed: usize,
    diverged: Option<String>,
}

pub const CSV_HEADER: &str = "family,N,replication,epoch,train_nll,test_nll,wall_seconds";

fn trajectory_csv(r: &ReplicationResult) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for e in &r.outcome.trajectory {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.family, r.n, r.replication, e.epoch, e.train_nll, e.test_nll, e.wall_seconds
        );
    }
    s
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-epoch mean and population standard deviation over the replications
/// that reached the epoch.
fn aggregate_csv(family: Family, n: usize, results: &[ReplicationResult]) -> String {
    let mut s = String::from("family,N,epoch,replications,train_nll_mean,train_nll_std,test_nll_mean,test_nll_std\n");
    let longest = results.iter().map(|r| r.outcome.trajectory.len()).max().unwrap_or(0);
    for epoch in 0..longest {
        let rows: Vec<_> = results.iter().filter_map(|r| r.outcome.trajectory.get(epoch)).collect();
        let train: Vec<f64> = rows.iter().map(|e| e.train_nll).collect();
        let test: Vec<f64> = rows.iter().map(|e| e.test_nll).collect();
        let (tm, ts) = mean_std(&train);
        let (vm, vs) = mean_std(&test);
        let _ = writeln!(s, "{family},{n},{epoch},{},{tm},{ts},{vm},{vs}", rows.len());
    }
    s
}

pub fn run(args: TrainArgs) -> anyhow::Result<ExitCode> {
    if args.hidden_dim == 0 {
        bail!("--hidden-dim must be at least 1");
    }
    if args.epochs == 0 {
        bail!("--epochs must be at least 1");
    }
    if args.replications == 0 {
        bail!("--replications must be at least 1");
    }
    let family = match args.family {
        FamilyArg::Ugm => Family::Ugm,
        FamilyArg::Dbm => Family::Dbm,
    };
    let cfg = TrainConfig {
        epochs: args.epochs,
        lr: args.lr,
        beta1: args.beta1,
        beta2: args.beta2,
        eps: args.eps,
        replications: args.replications,
        split_fraction: args.split,
        seed: args.seed,
    };
    cfg.validate()?;
    let mut manifest = RunManifest::start("train", &args, vec![("seed", args.seed)]);
    let file = std::fs::File::open(&args.data).with_context(|| format!("opening {}", args.data.display()))?;
    let ds = SequenceDataset::read_csv(std::io::BufReader::new(file))?;
    let n = args.hidden_dim;

    let outcomes: Vec<Result<ReplicationResult, String>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(family, n, &ds, &cfg, r).map_err(|e| e.to_string()))
        .collect();

    let prefix = format!("{family}_N{n}");
    let path = |name: String| args.out_dir.join(name);
    let mut summaries = Vec::new();
    let mut finished = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        manifest.seed(&format!("split_seed_{r}"), cfg.split_seed(r));
        manifest.seed(&format!("init_seed_{r}"), cfg.init_seed(family, n, r));
        match outcome {
            Ok(res) => {
                let csv = path(format!("{prefix}_rep{r}.csv"));
                manifest::write_file(&csv, trajectory_csv(&res).as_bytes())?;
                manifest.artifact(&csv);
                let best = &res.outcome.best_params;
                let params = path(format!("{prefix}_rep{r}_best_params.json"));
                manifest::write_file(&params, serde_json::to_string_pretty(best)?.as_bytes())?;
                manifest.artifact(&params);
                let components = match family {
                    Family::Ugm => vec![Model::Ugm(build_hmm_ugm(best, 1)?), Model::Ugm(build_hmm_ugm(best, 2)?)],
                    Family::Dbm => vec![Model::Ugm(build_hmm_ugm(best, 1)?), Model::Born(build_hmm_bm(best)?)],
                };
                for (k, m) in components.iter().enumerate() {
                    let file = path(format!("{prefix}_rep{r}_component{}.json", k + 1));
                    manifest::write_file(&file, m.to_json()?.as_bytes())?;
                    manifest.artifact(&file);
                }
                let diverged = res.outcome.diverged.as_ref().map(|d| format!("epoch {}: {}", d.epoch, d.message));
                if let Some(d) = &diverged {
                    eprintln!("replication {r} diverged at {d}");
                }
                summaries.push(ReplicationSummary {
                    replication: r,
                    split_seed: res.split_seed,
                    init_seed: res.init_seed,
                    param_count: res.param_count,
                    best_epoch: Some(res.outcome.best_epoch),
                    best_test_nll: Some(res.outcome.best_test_nll),
                    epochs_completed: res.outcome.trajectory.len() - 1,
                    diverged: diverged.clone(),
                });
                finished.push(res);
            }
            Err(e) => {
                eprintln!("replication {r} failed: {e}");
                summaries.push(ReplicationSummary {
                    replication: r,
                    split_seed: cfg.split_seed(r),
                    init_seed: cfg.init_seed(family, n, r),
                    param_count: 2 * tnprob::learn::table_size(n, ds.d_obs) + 1,
                    best_epoch: None,
                    best_test_nll: None,
                    epochs_completed: 0,
                    diverged: Some(e),
                });
            }
        }
    }
    if !finished.is_empty() {
        let agg = path(format!("{prefix}_aggregate.csv"));
        manifest::write_file(&agg, aggregate_csv(family, n, &finished).as_bytes())?;
        manifest.artifact(&agg);
    }
    let summary = path(format!("{prefix}_summary.json"));
    manifest::write_file(&summary, serde_json::to_string_pretty(&summaries)?.as_bytes())?;
    manifest.artifact(&summary);

    for s in &summaries {
        match (&s.diverged, s.best_epoch, s.best_test_nll) {
            (None, Some(e), Some(v)) => println!("{prefix} replication {}: best test NLL {v:.6} at epoch {e}", s.replication),
            (d, _, _) => println!("{prefix} replication {}: diverged ({})", s.replication, d.as_deref().unwrap_or("")),
        }
    }
    manifest.finish(&path(format!("{prefix}_manifest.json")))?;
    let all_diverged = summaries.iter().all(|s| s.diverged.is_some());
    Ok(if all_diverged { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}
