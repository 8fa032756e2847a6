//! Randomized and witness-based checks of the model-family identities,
//! shared by the command-line `verify` command and the acceptance harness.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::learn::{gradient_check, init_params, mixture_prob, Family, LearnError};
use crate::models::{dbm_prob, ugm_prob, BornMachine, DecoheredBM, Distribution, ModelError};
use crate::network::{apply_gauge, checked_inverse, condition_number, factor_nonneg_gauge, GaugeTransform, NetworkError};
use crate::oracle::hmm_mixture_prob;
use crate::random::{self, derive_seed, GraphSpec};
use crate::tensor::DenseTensor;
use crate::transforms::witness::{gauge_witness, observer_witness, WITNESS_EDGE};
use crate::transforms::{
    check_cond_independence, coherent_cut_residual, dbm_to_lps, fdbm_to_ugm, force_readout_bm, lps_to_dbm,
    ugm_to_fdbm, PhaseAssignment, TransformError,
};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Thm1,
    Cor1,
    Thm2,
    Lps,
    Observer,
    Gauge,
    Nonneg,
    Grad,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Thm1,
        Suite::Cor1,
        Suite::Thm2,
        Suite::Lps,
        Suite::Observer,
        Suite::Gauge,
        Suite::Nonneg,
        Suite::Grad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Thm1 => "thm1",
            Suite::Cor1 => "cor1",
            Suite::Thm2 => "thm2",
            Suite::Lps => "lps",
            Suite::Observer => "observer",
            Suite::Gauge => "gauge",
            Suite::Nonneg => "nonneg",
            Suite::Grad => "grad",
        }
    }

    /// Parses one suite name, or `all`.
    pub fn parse(s: &str) -> Option<Vec<Suite>> {
        if s == "all" {
            return Some(Self::ALL.to_vec());
        }
        Self::ALL.iter().find(|x| x.name() == s).map(|&x| vec![x])
    }

    fn index(self) -> u64 {
        Self::ALL.iter().position(|&s| s == self).unwrap() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub trials: usize,
    pub bound: Bound,
    pub threshold: f64,
    pub value: f64,
    pub passed: bool,
    /// Smallest normalized decohered-model probability seen before clamping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_dbm_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<serde_json::Value>,
}

impl Check {
    fn new(suite: Suite, name: &str, trials: usize, bound: Bound, threshold: f64, value: f64) -> Self {
        let passed = match bound {
            Bound::AtMost => value <= threshold,
            Bound::AtLeast => value >= threshold,
        };
        Self {
            suite: suite.name().into(),
            name: name.into(),
            trials,
            bound,
            threshold,
            value,
            passed,
            raw_dbm_min: None,
            witness: None,
        }
    }

    fn with_raw_min(mut self, m: f64) -> Self {
        self.raw_dbm_min = Some(m);
        self
    }

    fn with_witness(mut self, w: serde_json::Value) -> Self {
        self.witness = Some(w);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub trials: usize,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub raw_dbm_min: Option<f64>,
    pub passed: bool,
}

/// Default thresholds of the upper-bound checks.
pub mod tolerance {
    pub const DISTRIBUTION: f64 = 1e-10;
    pub const POTENTIAL: f64 = 1e-14;
    pub const GAUGE: f64 = 1e-8;
    pub const GRADIENT: f64 = 1e-4;
    pub const ORACLE: f64 = 1e-10;
    pub const CONTROL: f64 = 1e-12;
    pub const WITNESS_TV: f64 = 0.05;
    pub const GAUGE_WITNESS_TV: f64 = 0.01;
    pub const COHERENT_CUT: f64 = 0.01;
    pub const RAW_MIN: f64 = -1e-14;
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub trials: usize,
    pub seed: u64,
    /// Replaces the threshold of every upper-bound residual check.
    pub tol: Option<f64>,
}

fn rng_for(seed: u64, suite: Suite, check: u64, trial: usize) -> random::Rng64 {
    random::rng(derive_seed(seed, &[suite.index(), check, trial as u64]))
}

fn spec() -> GraphSpec {
    GraphSpec::default()
}

fn two_node_spec() -> GraphSpec {
    GraphSpec { min_nodes: 2, ..GraphSpec::default() }
}

fn rel(d: &Distribution, other: &Distribution) -> Result<f64, VerifyError> {
    Ok(d.max_rel_diff(other)?)
}

/// Largest `max |P_DBM − P_UGM| / max(P_DBM, P_UGM)` over `k` random fully
/// decohered Born machines, and the smallest raw DBM entry.
pub fn fdbm_ugm_agreement(k: usize, seed: u64) -> Result<(f64, f64), VerifyError> {
    let mut worst = 0.0f64;
    let mut raw = f64::INFINITY;
    for t in 0..k {
        let m = random::fully_decohered(&mut rng_for(seed, Suite::Thm1, 0, t), &spec());
        let p = dbm_prob(&m)?;
        raw = raw.min(p.raw_min());
        worst = worst.max(rel(&p, &ugm_prob(&fdbm_to_ugm(&m)?)?)?);
    }
    Ok((worst, raw))
}

/// Over `k` random UGMs and `phases` random phase assignments each: the
/// largest distribution disagreement after converting to a fully decohered
/// Born machine, and the largest relative potential change after converting
/// back.
pub fn phase_invariance(k: usize, phases: usize, seed: u64) -> Result<(f64, f64, f64), VerifyError> {
    let (mut dist, mut pot, mut raw) = (0.0f64, 0.0f64, f64::INFINITY);
    for t in 0..k {
        let mut r = rng_for(seed, Suite::Cor1, 0, t);
        let u = random::ugm(&mut r, &spec());
        let base = ugm_prob(&u)?;
        for _ in 0..phases {
            let m = ugm_to_fdbm(&u, &PhaseAssignment::random(u.net(), &mut r))?;
            let p = dbm_prob(&m)?;
            raw = raw.min(p.raw_min());
            dist = dist.max(rel(&p, &base)?);
            let back = fdbm_to_ugm(&m)?;
            for (id, core) in u.net().cores() {
                let before = core.tensor.real_parts();
                let after = back.net().core(id)?.tensor.real_parts();
                for (x, y) in before.iter().zip(&after) {
                    let scale = x.abs().max(y.abs());
                    if scale > 0.0 {
                        pot = pot.max((x - y).abs() / scale);
                    }
                }
            }
        }
    }
    Ok((dist, pot, raw))
}

/// Largest conditional-independence residual over `k` random DBMs whose
/// decohered edges include a cut set.
pub fn decohered_cut_independence(k: usize, seed: u64) -> Result<(f64, f64), VerifyError> {
    let (mut worst, mut raw) = (0.0f64, f64::INFINITY);
    for t in 0..k {
        let mut r = rng_for(seed, Suite::Thm2, 0, t);
        let p = r.random::<f64>();
        let (m, cut) = random::dbm_with_cut(&mut r, &spec(), p);
        let report = check_cond_independence(&m, &cut)?;
        raw = raw.min(report.raw_min);
        worst = worst.max(if report.cut_set { report.max_residual } else { f64::INFINITY });
    }
    Ok((worst, raw))
}

/// LPS → DBM over `k` random LPS: `(distribution error, graph-count mismatches)`;
/// then DBM → LPS over `k` random DBMs: distribution error.
pub fn lps_equivalence(k: usize, seed: u64) -> Result<(f64, usize, f64, f64), VerifyError> {
    let (mut fwd, mut mismatches, mut back, mut raw) = (0.0f64, 0usize, 0.0f64, f64::INFINITY);
    for t in 0..k {
        let lps = random::lps(&mut rng_for(seed, Suite::Lps, 0, t), &spec());
        let g = lps.net().graph();
        let (n, m) = (g.nodes.len(), g.hidden_edges().count());
        let d = lps_to_dbm(&lps)?;
        let h = d.net().graph();
        let counts = [
            (h.nodes.len(), 2 * n),
            (h.visible_edges().count(), n),
            (h.hidden_edges().count(), m + n),
        ];
        mismatches += counts.iter().filter(|(a, b)| a != b).count();
        let p = d.distribution()?;
        raw = raw.min(p.raw_min());
        fwd = fwd.max(rel(&p, &lps.distribution()?)?);
    }
    for t in 0..k {
        let mut r = rng_for(seed, Suite::Lps, 1, t);
        let p = r.random::<f64>();
        let m = random::dbm(&mut r, &spec(), p);
        let q = m.distribution()?;
        raw = raw.min(q.raw_min());
        back = back.max(rel(&dbm_to_lps(&m, None)?.distribution()?, &q)?);
    }
    Ok((fwd, mismatches, back, raw))
}

/// Largest total-variation change from reading out hidden edges of `k`
/// non-negative Born machines built from clique-form UGMs.
pub fn nonnegative_readout_controls(k: usize, seed: u64) -> Result<f64, VerifyError> {
    let mut worst = 0.0f64;
    for t in 0..k {
        let mut r = rng_for(seed, Suite::Observer, 0, t);
        let u = random::clique_ugm(&mut r, 3, 3, 3);
        let bm = ugm_to_fdbm(&u, &PhaseAssignment::zero())?.bm().clone();
        for e in bm.net().graph().hidden_edge_ids() {
            worst = worst.max(force_readout_bm(&bm, &e)?.total_variation);
        }
    }
    Ok(worst)
}

/// Largest relative Born-distribution change under `k` random invertible
/// gauges on random hidden edges of random Born machines.
pub fn gauge_invariance(k: usize, seed: u64) -> Result<f64, VerifyError> {
    let mut worst = 0.0f64;
    for t in 0..k {
        let mut r = rng_for(seed, Suite::Gauge, 0, t);
        let bm = random::born_machine(&mut r, &two_node_spec());
        let edges: Vec<_> = bm.net().graph().hidden_edges().cloned().collect();
        let e = edges.choose(&mut r).expect("connected graph with two nodes has a hidden edge");
        let g = GaugeTransform { edge: e.id.clone(), matrix: random::invertible_matrix(&mut r, e.dim, 1e3) };
        let gauged = BornMachine::new(apply_gauge(bm.net(), &g)?)?;
        worst = worst.max(rel(&gauged.distribution()?, &bm.distribution()?)?);
    }
    Ok(worst)
}

fn sign_oracle(m: &DenseTensor) -> Result<bool, VerifyError> {
    let nonneg = |t: &DenseTensor| t.data().iter().all(|z| z.im.abs() <= 1e-9 && z.re >= -1e-9);
    Ok(nonneg(m) && nonneg(&checked_inverse(m)?))
}

/// Number of disagreements between `factor_nonneg_gauge` and a direct
/// sign check of `M` and `M⁻¹`, over `k` random well-conditioned matrices
/// (monomial, sparse non-negative and complex in turn), plus the largest
/// reconstruction error `‖PD − M‖`.
pub fn nonneg_gauge_factorization(k: usize, seed: u64) -> Result<(usize, f64), VerifyError> {
    let (mut wrong, mut recon) = (0usize, 0.0f64);
    let mut t = 0usize;
    let mut accepted = 0usize;
    while accepted < k {
        let mut r = rng_for(seed, Suite::Gauge, 1, t);
        t += 1;
        let n = r.random_range(1..=4);
        let m = match accepted % 3 {
            0 => {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut r);
                let mut rows = vec![vec![0.0; n]; n];
                for (j, &i) in perm.iter().enumerate() {
                    rows[i][j] = r.random_range(0.1..5.0);
                }
                DenseTensor::real_matrix(&rows).expect("square")
            }
            1 => random::nonneg_tensor(&mut r, vec![n, n], 0.3),
            _ => random::complex_tensor(&mut r, vec![n, n]),
        };
        if !condition_number(&m).is_ok_and(|c| c < 1e8) {
            continue;
        }
        accepted += 1;
        let got = factor_nonneg_gauge(&m)?;
        if got.is_some() != sign_oracle(&m)? {
            wrong += 1;
        }
        if let Some(g) = got {
            let pd = crate::tensor::contract(&g.permutation_matrix(), 1, &g.diagonal_matrix(), 0).map_err(NetworkError::from)?;
            recon = recon.max(crate::oracle::relative_error(&pd, &m));
        }
    }
    Ok((wrong, recon))
}

/// Smallest raw normalized probability over `k` random DBMs with random
/// decoherence fractions.
pub fn dbm_raw_minimum(k: usize, seed: u64) -> Result<f64, VerifyError> {
    let mut raw = f64::INFINITY;
    for t in 0..k {
        let mut r = rng_for(seed, Suite::Nonneg, 0, t);
        let p = r.random::<f64>();
        raw = raw.min(random::dbm(&mut r, &spec(), p).distribution()?.raw_min());
    }
    Ok(raw)
}

fn hmm_random_point(r: &mut random::Rng64, family: Family, max_n: usize, max_len: usize) -> (crate::learn::HmmMixtureParams, Vec<Vec<u8>>) {
    let n = r.random_range(1..=max_n);
    let len = r.random_range(1..=max_len);
    let p = init_params(family, n, 2, len, r.random());
    let data = (0..4).map(|_| (0..len).map(|_| r.random_range(1..=2u8)).collect()).collect();
    (p, data)
}

/// Largest reverse-mode versus central-difference error over `k` random
/// mixtures per family (`N ≤ 4`, `T ≤ 8`).
pub fn gradient_agreement(k: usize, seed: u64) -> Result<f64, VerifyError> {
    let mut worst = 0.0f64;
    for (fi, family) in [Family::Ugm, Family::Dbm].into_iter().enumerate() {
        for t in 0..k {
            let (p, data) = hmm_random_point(&mut rng_for(seed, Suite::Grad, fi as u64, t), family, 4, 8);
            worst = worst.max(gradient_check(&p, &data)?);
        }
    }
    Ok(worst)
}

/// Largest relative gap between `mixture_prob` and hidden-path enumeration
/// over `k` random mixtures per family (`N ≤ 3`, `T ≤ 5`).
pub fn mixture_oracle_agreement(k: usize, seed: u64) -> Result<f64, VerifyError> {
    let mut worst = 0.0f64;
    for (fi, family) in [Family::Ugm, Family::Dbm].into_iter().enumerate() {
        for t in 0..k {
            let (p, data) = hmm_random_point(&mut rng_for(seed, Suite::Grad, 2 + fi as u64, t), family, 3, 5);
            for o in &data {
                let a = mixture_prob(&p, o)?;
                let b = hmm_mixture_prob(&p, o);
                worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
            }
        }
    }
    Ok(worst)
}

/// Runs one suite.
pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Vec<Check>, VerifyError> {
    let k = opts.trials;
    let s = opts.seed;
    let at_most = |name: &str, trials: usize, default: f64, value: f64| {
        Check::new(suite, name, trials, Bound::AtMost, opts.tol.unwrap_or(default), value)
    };
    let checks = match suite {
        Suite::Thm1 => {
            let (v, raw) = fdbm_ugm_agreement(k, s)?;
            vec![at_most("fully-decohered-equals-squared-ugm", k, tolerance::DISTRIBUTION, v).with_raw_min(raw)]
        }
        Suite::Cor1 => {
            let (d, p, raw) = phase_invariance(k, 5, s)?;
            vec![
                at_most("phase-invariance", k * 5, tolerance::DISTRIBUTION, d).with_raw_min(raw),
                at_most("potential-round-trip", k * 5, tolerance::POTENTIAL, p),
            ]
        }
        Suite::Thm2 => {
            let (v, raw) = decohered_cut_independence(k, s)?;
            let w = coherent_cut_residual(&observer_witness(), &BTreeSet::from([WITNESS_EDGE.to_string()]))?;
            vec![
                at_most("decohered-cut-independence", k, tolerance::DISTRIBUTION, v).with_raw_min(raw),
                Check::new(suite, "coherent-cut-counterexample", 1, Bound::AtLeast, tolerance::COHERENT_CUT, w)
                    .with_witness(json!({ "model": "observer witness", "cut": [WITNESS_EDGE], "residual": w })),
            ]
        }
        Suite::Lps => {
            let (fwd, mismatches, back, raw) = lps_equivalence(k, s)?;
            vec![
                at_most("lps-to-dbm", k, tolerance::DISTRIBUTION, fwd).with_raw_min(raw),
                Check::new(suite, "lps-to-dbm-graph-counts", k, Bound::AtMost, 0.0, mismatches as f64),
                at_most("dbm-to-lps", k, tolerance::DISTRIBUTION, back),
            ]
        }
        Suite::Observer => {
            let w = force_readout_bm(&observer_witness(), WITNESS_EDGE)?;
            let controls = nonnegative_readout_controls(k, s)?;
            vec![
                Check::new(suite, "observer-witness", 1, Bound::AtLeast, tolerance::WITNESS_TV, w.total_variation)
                    .with_witness(json!({
                        "edge": WITNESS_EDGE,
                        "variables": w.original.names(),
                        "before": w.original.table(),
                        "after": w.distribution.table(),
                        "total_variation": w.total_variation,
                    })),
                at_most("nonnegative-controls", k, tolerance::CONTROL, controls),
            ]
        }
        Suite::Gauge => {
            let inv = gauge_invariance(k, s)?;
            let (wrong, recon) = nonneg_gauge_factorization(k, s)?;
            let (m, g) = gauge_witness();
            let gauged = DecoheredBM::new(BornMachine::new(apply_gauge(m.net(), &g)?)?, m.decohered().clone())?;
            let (before, after) = (m.distribution()?, gauged.distribution()?);
            let tv = before.total_variation(&after)?;
            vec![
                at_most("born-gauge-invariance", k, tolerance::GAUGE, inv),
                Check::new(suite, "nonneg-gauge-sign-oracle", k, Bound::AtMost, 0.0, wrong as f64),
                at_most("nonneg-gauge-reconstruction", k, tolerance::DISTRIBUTION, recon),
                Check::new(suite, "decohered-gauge-witness", 1, Bound::AtLeast, tolerance::GAUGE_WITNESS_TV, tv)
                    .with_witness(json!({
                        "edge": WITNESS_EDGE,
                        "before": before.table(),
                        "after": after.table(),
                        "total_variation": tv,
                    })),
            ]
        }
        Suite::Nonneg => {
            let raw = dbm_raw_minimum(k, s)?;
            let check = Check::new(suite, "dbm-raw-minimum", k, Bound::AtLeast, tolerance::RAW_MIN, raw.min(0.0));
            vec![if k == 0 { check } else { check.with_raw_min(raw) }]
        }
        Suite::Grad => vec![
            at_most("reverse-mode-vs-finite-differences", 2 * k, tolerance::GRADIENT, gradient_agreement(k, s)?),
            at_most("mixture-vs-path-enumeration", 2 * k, tolerance::ORACLE, mixture_oracle_agreement(k, s)?),
        ],
    };
    Ok(checks)
}

/// Runs several suites and collects one report.
pub fn run(suites: &[Suite], opts: &VerifyOptions) -> Result<VerifyReport, VerifyError> {
    let mut checks = Vec::new();
    for &s in suites {
        checks.extend(run_suite(s, opts)?);
    }
    let mut warnings = Vec::new();
    if opts.trials == 0 {
        warnings.push("0 trials: randomized checks are vacuous; only fixed witnesses were evaluated".to_string());
    }
    let raw_dbm_min = checks
        .iter()
        .filter_map(|c| c.raw_dbm_min)
        .filter(|x| x.is_finite())
        .reduce(f64::min);
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { seed: opts.seed, trials: opts.trials, checks, warnings, raw_dbm_min, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        assert_eq!(Suite::parse("all").unwrap().len(), 8);
        assert_eq!(Suite::parse("thm2").unwrap(), vec![Suite::Thm2]);
        assert!(Suite::parse("thm3").is_none());
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()).unwrap(), vec![s]);
        }
    }

    #[test]
    fn every_suite_passes_on_a_few_trials() {
        let opts = VerifyOptions { trials: 3, seed: 5, tol: None };
        let report = run(&Suite::ALL, &opts).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{c:?}");
        }
        assert!(report.passed);
        assert!(report.raw_dbm_min.unwrap() >= tolerance::RAW_MIN);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn zero_trials_is_a_vacuous_pass_with_warning() {
        let report = run(&Suite::ALL, &VerifyOptions { trials: 0, seed: 0, tol: None }).unwrap();
        assert!(report.passed);
        assert!(report.warnings[0].contains("0 trials"));
    }

    #[test]
    fn tolerance_override_can_fail_a_suite() {
        let strict = VerifyOptions { trials: 2, seed: 1, tol: Some(0.0) };
        let report = run(&[Suite::Grad], &strict).unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn witnesses_are_frozen() {
        let report = run(&[Suite::Observer, Suite::Gauge, Suite::Thm2], &VerifyOptions { trials: 0, seed: 0, tol: None })
            .unwrap();
        let value = |name: &str| report.checks.iter().find(|c| c.name == name).unwrap().value;
        assert!((value("observer-witness") - 0.5).abs() < 1e-15);
        assert!((value("decohered-gauge-witness") - 0.5).abs() < 1e-15);
        assert!((value("coherent-cut-counterexample") - 0.25).abs() < 1e-15);
    }

    #[test]
    fn runs_are_reproducible() {
        let opts = VerifyOptions { trials: 2, seed: 9, tol: None };
        let a = serde_json::to_string(&run(&[Suite::Thm1, Suite::Gauge], &opts).unwrap()).unwrap();
        let b = serde_json::to_string(&run(&[Suite::Thm1, Suite::Gauge], &opts).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
