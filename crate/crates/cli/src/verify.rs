use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::Args;
use serde::Serialize;

use crate::manifest::{self, RunManifest};
use tnprob::verify::{run as run_suites, Bound, Suite, VerifyOptions};

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// thm1, cor1, thm2, lps, observer, gauge, nonneg, grad or all.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Random instances per randomized check.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Threshold for every upper-bound residual; each check has its own default.
    #[arg(long)]
    tol: Option<f64>,
    /// JSON report path.
    #[arg(long, default_value = "verify_report.json")]
    out: PathBuf,
}

pub fn run(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let suites = Suite::parse(&args.suite).ok_or_else(|| {
        anyhow!("unknown suite {:?}; expected thm1, cor1, thm2, lps, observer, gauge, nonneg, grad or all", args.suite)
    })?;
    let mut manifest = RunManifest::start("verify", &args, vec![("seed", args.seed)]);
    let opts = VerifyOptions { trials: args.trials, seed: args.seed, tol: args.tol };
    let report = run_suites(&suites, &opts)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for c in &report.checks {
        let op = match c.bound {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        };
        println!(
            "[{}] {}/{}: {:.3e} {op} {:.1e} ({} trials)",
            if c.passed { "PASS" } else { "FAIL" },
            c.suite,
            c.name,
            c.value,
            c.threshold,
            c.trials
        );
    }
    if let Some(m) = report.raw_dbm_min {
        println!("smallest raw decohered-model probability: {m:.3e}");
    }
    manifest::write_file(&args.out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    manifest.artifact(&args.out);
    manifest.finish(&manifest::sidecar(&args.out))?;
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
