use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::models::Model;
use crate::oracle::hmm_mixture_prob;
use crate::random::rng;
use crate::tensor::next_index;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn all_sequences(d: usize, len: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut o = vec![0usize; len];
    loop {
        out.push(o.iter().map(|&x| x as u8 + 1).collect());
        if !next_index(&mut o, &vec![d; len]) {
            return out;
        }
    }
}

fn random_data(seed: u64, count: usize, d: usize, len: usize) -> Vec<Vec<u8>> {
    let mut r = rng(seed);
    (0..count).map(|_| (0..len).map(|_| r.random_range(1..=d as u8)).collect()).collect()
}

#[test]
fn parameter_count_parity() {
    for family in [Family::Ugm, Family::Dbm] {
        let p = init_params(family, 4, 2, 16, 0);
        assert_eq!(table_size(4, 2), 28);
        assert_eq!(p.first.len(), 28);
        assert_eq!(p.param_count(), 57);
        assert_eq!(p.to_vec().len(), 57);
    }
    for (n, d, len) in [(1, 2, 3), (3, 5, 1), (16, 2, 16)] {
        let u = init_params(Family::Ugm, n, d, len, 1);
        let b = init_params(Family::Dbm, n, d, len, 1);
        assert_eq!(u.param_count(), b.param_count());
        assert_eq!(u.param_count(), 2 * table_size(n, d) + 1);
    }
}

#[test]
fn init_is_reproducible_and_phases_in_range() {
    let a = init_params(Family::Dbm, 4, 2, 16, 11);
    assert_eq!(a, init_params(Family::Dbm, 4, 2, 16, 11));
    assert_ne!(a, init_params(Family::Dbm, 4, 2, 16, 12));
    assert!(a.second.iter().all(|&q| (0.0..1.0).contains(&q)));
    let u = init_params(Family::Ugm, 4, 2, 16, 11);
    assert!(u.second.iter().any(|&x| x < 0.0));
}

#[test]
fn vector_round_trip() {
    let p = init_params(Family::Ugm, 3, 2, 4, 5);
    assert_eq!(p.with_values(&p.to_vec()), p);
}

#[test]
fn mixture_sums_to_one() {
    for family in [Family::Ugm, Family::Dbm] {
        let p = init_params(family, 3, 2, 4, 9);
        let total: f64 = all_sequences(2, 4).iter().map(|o| mixture_prob(&p, o).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12, "{family}: {total}");
    }
}

#[test]
fn matches_path_enumeration() {
    let mut r = rng(42);
    for family in [Family::Ugm, Family::Dbm] {
        for trial in 0..10 {
            let n = r.random_range(1..=3);
            let d = r.random_range(2..=3);
            let len = r.random_range(1..=5);
            let p = init_params(family, n, d, len, 1000 + trial);
            for o in random_data(trial, 4, d, len) {
                let fast = mixture_prob(&p, &o).unwrap();
                let slow = hmm_mixture_prob(&p, &o);
                assert!(rel(fast, slow) <= 1e-10, "{family} N={n} d={d} T={len}: {fast} vs {slow}");
            }
        }
    }
}

#[test]
fn undirected_component_matches_network_model() {
    let p = init_params(Family::Ugm, 2, 2, 3, 7);
    for component in [1, 2] {
        let ugm = build_hmm_ugm(&p, component).unwrap();
        let marginal = Model::Ugm(ugm).marginalize(&["h1", "h2", "h3"]).unwrap();
        assert_eq!(marginal.names(), vec!["o1", "o2", "o3"]);
        let mut single = p.clone();
        single.logit = if component == 1 { 800.0 } else { -800.0 };
        for (k, o) in all_sequences(2, 3).iter().enumerate() {
            let (c1, c2) = component_probs(&p, o).unwrap();
            let c = if component == 1 { c1 } else { c2 };
            assert!(rel(marginal.table()[k], c) <= 1e-10);
            assert!(rel(mixture_prob(&single, o).unwrap(), c) <= 1e-10);
        }
    }
    assert!(matches!(build_hmm_ugm(&p, 3), Err(LearnError::Params(_))));
}

#[test]
fn born_component_matches_network_model() {
    let p = init_params(Family::Dbm, 2, 2, 3, 8);
    let bm = build_hmm_bm(&p).unwrap();
    let dist = bm.distribution().unwrap();
    assert_eq!(dist.names(), vec!["o1", "o2", "o3"]);
    for (k, o) in all_sequences(2, 3).iter().enumerate() {
        let (_, c2) = component_probs(&p, o).unwrap();
        assert!(rel(dist.table()[k], c2) <= 1e-10);
    }
    let ugm = build_hmm_ugm(&p, 1).unwrap();
    let magnitude = Model::Ugm(ugm).marginalize(&["h1", "h2", "h3"]).unwrap();
    for (k, o) in all_sequences(2, 3).iter().enumerate() {
        let (c1, _) = component_probs(&p, o).unwrap();
        assert!(rel(magnitude.table()[k], c1) <= 1e-10);
    }
    assert!(matches!(build_hmm_ugm(&p, 2), Err(LearnError::WrongFamily(..))));
    assert!(matches!(
        build_hmm_bm(&init_params(Family::Ugm, 2, 2, 3, 8)),
        Err(LearnError::WrongFamily(..))
    ));
}

#[test]
fn single_hidden_state_is_iid() {
    let mut p = init_params(Family::Ugm, 1, 2, 4, 3);
    p.logit = 800.0;
    let h = [p.first.h[0].exp(), p.first.h[1].exp()];
    let marginal = |s: u8| h[s as usize - 1] / (h[0] + h[1]);
    let o = vec![1, 2, 2, 1];
    let expected: f64 = o.iter().map(|&s| marginal(s)).product();
    assert!(rel(mixture_prob(&p, &o).unwrap(), expected) <= 1e-12);
    let closed = -o.iter().map(|&s| marginal(s).ln()).sum::<f64>();
    assert!(rel(nll(&p, &[o]).unwrap(), closed) <= 1e-12);
}

#[test]
fn uniform_tables_give_uniform_observations() {
    for family in [Family::Ugm, Family::Dbm] {
        let p = HmmMixtureParams::zeros(family, 3, 2, 5);
        for o in all_sequences(2, 5) {
            assert!(rel(mixture_prob(&p, &o).unwrap(), 1.0 / 32.0) <= 1e-12);
        }
    }
}

#[test]
fn lambda_one_selects_first_component() {
    for family in [Family::Ugm, Family::Dbm] {
        let mut p = init_params(family, 3, 2, 4, 21);
        p.logit = 800.0;
        for o in all_sequences(2, 4) {
            let (c1, _) = component_probs(&p, &o).unwrap();
            assert_eq!(mixture_prob(&p, &o).unwrap(), c1);
        }
    }
}

#[test]
fn zero_phases_with_one_hidden_state_collapse() {
    let base = init_params(Family::Dbm, 1, 3, 4, 2);
    let mut zero = base.clone();
    for q in zero.second.iter_mut() {
        *q = 0.0;
    }
    for logit in [-2.0, 0.0, 3.0] {
        zero.logit = logit;
        for o in all_sequences(3, 4) {
            let (c1, c2) = component_probs(&zero, &o).unwrap();
            assert!(rel(c1, c2) <= 1e-12);
            assert!(rel(mixture_prob(&zero, &o).unwrap(), c1) <= 1e-12);
        }
    }
}

#[test]
fn zero_phases_do_not_collapse_with_two_hidden_states() {
    // v = (1, 1), H = [[1, 1], [1, 0]] on a single step: the magnitude chain
    // gives (2/3, 1/3), the Born chain (√1 + √1)², (√1 + √0)² ∝ (4/5, 1/5).
    let mut p = HmmMixtureParams::zeros(Family::Dbm, 2, 2, 1);
    p.first.h = vec![0.0, 0.0, 0.0, -800.0];
    let (c1, c2) = component_probs(&p, &[1]).unwrap();
    assert!(rel(c1, 2.0 / 3.0) <= 1e-12);
    assert!(rel(c2, 4.0 / 5.0) <= 1e-12);
    p.logit = -3.0;
    let a = mixture_prob(&p, &[1]).unwrap();
    p.logit = 3.0;
    let b = mixture_prob(&p, &[1]).unwrap();
    assert!((a - b).abs() > 0.1);
}

#[test]
fn input_validation() {
    let p = init_params(Family::Ugm, 2, 2, 3, 0);
    assert!(matches!(
        nll(&p, &[vec![1, 2, 1], vec![1, 3, 1]]),
        Err(LearnError::SymbolOutOfRange { index: 1, position: 1, symbol: 3, .. })
    ));
    assert!(matches!(
        mixture_prob(&p, &[0, 1, 1]),
        Err(LearnError::SymbolOutOfRange { index: 0, position: 0, .. })
    ));
    assert!(matches!(nll(&p, &[vec![1, 2]]), Err(LearnError::Length { index: 0, len: 2, expected: 3 })));
    assert!(matches!(nll(&p, &[]), Err(LearnError::EmptyDataset)));
    let mut bad = p.clone();
    bad.first.t.pop();
    assert!(matches!(nll(&bad, &[vec![1, 1, 1]]), Err(LearnError::Params(_))));
    bad = p.clone();
    bad.logit = f64::NAN;
    assert!(matches!(mixture_prob(&bad, &[1, 1, 1]), Err(LearnError::Params(_))));
}

#[test]
fn degenerate_born_component_reports_sequence() {
    // a_v = (1, −1) against identical emission rows cancels every amplitude
    let mut p = HmmMixtureParams::zeros(Family::Dbm, 2, 2, 1);
    p.second.v = vec![0.0, 0.5];
    assert!(matches!(nll(&p, &[vec![2], vec![1]]), Err(LearnError::ZeroProbability { index: 0 })));
    assert!(matches!(nll_grad(&p, &[vec![2]]), Err(LearnError::ZeroProbability { index: 0 })));
}

#[test]
fn long_sequences_stay_finite() {
    for family in [Family::Ugm, Family::Dbm] {
        for (n, seed) in [(2, 1), (4, 2), (8, 3)] {
            let mut p = init_params(family, n, 2, 256, seed);
            for x in p.first.iter_mut() {
                *x *= 3.0;
            }
            let data = random_data(seed, 3, 2, 256);
            let v = nll(&p, &data).unwrap();
            assert!(v.is_finite() && v > 0.0, "{family} N={n}: {v}");
            let (g, grad) = nll_grad(&p, &data).unwrap();
            assert!(rel(g, v) <= 1e-12);
            assert!(grad.to_vec().iter().all(|x| x.is_finite()));
        }
    }
}

fn gradient_error(p: &HmmMixtureParams, data: &[Vec<u8>]) -> f64 {
    gradient_check(p, data).unwrap()
}

#[test]
fn gradient_matches_finite_differences() {
    let mut r = rng(77);
    for family in [Family::Ugm, Family::Dbm] {
        for trial in 0..6 {
            let n = r.random_range(1..=4);
            let len = r.random_range(1..=8);
            let p = init_params(family, n, 2, len, 500 + trial);
            let data = random_data(600 + trial, 4, 2, len);
            let err = gradient_error(&p, &data);
            assert!(err <= 1e-4, "{family} N={n} T={len}: {err}");
        }
    }
}

#[test]
fn logit_gradient_vanishes_for_equal_components() {
    let mut p = init_params(Family::Ugm, 3, 2, 4, 4);
    p.second = p.first.clone();
    let (_, g) = nll_grad(&p, &random_data(1, 5, 2, 4)).unwrap();
    assert!(g.logit.abs() <= 1e-12, "{}", g.logit);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut adam = Adam::new(2, 0.01, 0.9, 0.999, 1e-8);
    let mut x = vec![1.0, -1.0];
    adam.step(&mut x, &[3.0, -0.5]);
    assert!((x[0] - 0.99).abs() < 1e-9 && (x[1] + 0.99).abs() < 1e-9);
}

#[test]
fn zero_epochs_gives_initial_point() {
    let p = init_params(Family::Ugm, 2, 2, 4, 0);
    let data = random_data(2, 6, 2, 4);
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let out = train(&p, &data[..4], &data[4..], &cfg).unwrap();
    assert_eq!(out.trajectory.len(), 1);
    assert_eq!(out.trajectory[0].train_nll, nll(&p, &data[..4]).unwrap());
    assert_eq!(out.trajectory[0].test_nll, nll(&p, &data[4..]).unwrap());
    assert_eq!(out.best_params, p);
}

#[test]
fn repeated_sequence_nll_decreases() {
    for family in [Family::Ugm, Family::Dbm] {
        let p = init_params(family, 3, 2, 6, 13);
        let seq = vec![1, 2, 2, 1, 1, 2];
        let data = vec![seq.clone(); 5];
        let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
        let out = train(&p, &data, &data[..1], &cfg).unwrap();
        assert_eq!(out.trajectory.len(), 6);
        assert!(out.trajectory[5].train_nll < out.trajectory[0].train_nll, "{family}: {:?}", out.trajectory);
    }
}

#[test]
fn training_is_deterministic_and_tracks_best_epoch() {
    let ds = SequenceDataset::bars_and_stripes(2, 3, 3, true, 0).unwrap();
    let cfg = TrainConfig { epochs: 8, lr: 0.1, ..TrainConfig::default() };
    for family in [Family::Ugm, Family::Dbm] {
        let a = run_replication(family, 2, &ds, &cfg, 1).unwrap();
        let b = run_replication(family, 2, &ds, &cfg, 1).unwrap();
        let strip = |r: &ReplicationResult| -> Vec<(u64, u64)> {
            r.outcome.trajectory.iter().map(|e| (e.train_nll.to_bits(), e.test_nll.to_bits())).collect()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.outcome.best_params, b.outcome.best_params);
        let t = &a.outcome.trajectory;
        let min = t.iter().map(|e| e.test_nll).fold(f64::INFINITY, f64::min);
        let first = t.iter().position(|e| e.test_nll == min).unwrap();
        assert_eq!(a.outcome.best_epoch, first);
        assert_eq!(a.outcome.best_test_nll, min);
        assert_eq!(nll(&a.outcome.best_params, &ds.split(0.7, a.split_seed).unwrap().1).unwrap(), min);
        assert!(a.outcome.diverged.is_none());
    }
}

#[test]
fn split_seeds_ignore_family_and_size() {
    let cfg = TrainConfig::default();
    let ds = SequenceDataset::bars_and_stripes(2, 2, 2, true, 0).unwrap();
    let cfg1 = TrainConfig { epochs: 0, ..cfg.clone() };
    let a = run_replication(Family::Ugm, 2, &ds, &cfg1, 3).unwrap();
    let b = run_replication(Family::Dbm, 4, &ds, &cfg1, 3).unwrap();
    assert_eq!(a.split_seed, b.split_seed);
    assert_ne!(a.init_seed, b.init_seed);
    assert_ne!(cfg.split_seed(0), cfg.split_seed(1));
}

#[test]
fn config_validation() {
    let p = init_params(Family::Ugm, 2, 2, 2, 0);
    let d = vec![vec![1, 2]];
    for cfg in [
        TrainConfig { split_fraction: 1.0, ..TrainConfig::default() },
        TrainConfig { lr: 0.0, ..TrainConfig::default() },
        TrainConfig { beta1: 1.0, ..TrainConfig::default() },
        TrainConfig { eps: -1.0, ..TrainConfig::default() },
    ] {
        assert!(matches!(train(&p, &d, &d, &cfg), Err(LearnError::Config(_))));
    }
    assert!(matches!(train(&p, &d, &[], &TrainConfig::default()), Err(LearnError::EmptyDataset)));
}

#[test]
fn huge_step_reports_divergence() {
    let p = init_params(Family::Dbm, 2, 2, 3, 0);
    let data = random_data(0, 4, 2, 3);
    let cfg = TrainConfig { epochs: 5, lr: 1e300, ..TrainConfig::default() };
    let out = train(&p, &data, &data, &cfg).unwrap();
    let d = out.diverged.expect("divergence");
    assert_eq!(d.epoch, out.trajectory.len());
    assert_eq!(out.best_epoch, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_equivalence(family_dbm: bool, n in 1usize..=3, len in 1usize..=5, seed: u64) {
        let family = if family_dbm { Family::Dbm } else { Family::Ugm };
        let p = init_params(family, n, 2, len, seed);
        for o in random_data(seed ^ 1, 3, 2, len) {
            let fast = mixture_prob(&p, &o).unwrap();
            let slow = hmm_mixture_prob(&p, &o);
            prop_assert!(rel(fast, slow) <= 1e-10, "{} vs {}", fast, slow);
        }
    }

    #[test]
    fn gradient_property(family_dbm: bool, n in 1usize..=3, len in 1usize..=6, seed: u64) {
        let family = if family_dbm { Family::Dbm } else { Family::Ugm };
        let p = init_params(family, n, 2, len, seed);
        let err = gradient_error(&p, &random_data(seed ^ 2, 3, 2, len));
        prop_assert!(err <= 1e-4, "{}", err);
    }
}
