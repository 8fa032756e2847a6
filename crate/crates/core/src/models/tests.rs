use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::network::{apply_gauge, GaugeTransform, NetworkBuilder};
use crate::oracle::brute_force_evaluate;
use crate::random::{self, GraphSpec};
use crate::tensor::{next_index, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()))
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert!(close(a, b, tol), "{a:?} vs {b:?}");
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn set(ids: &[&str]) -> BTreeSet<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

#[test]
fn single_potential_ugm() {
    let m = Ugm::from_cliques(
        &[Variable::new("x", 2)],
        &[(vec!["x".into()], DenseTensor::from_real(vec![2], &[1.0, 3.0]).unwrap())],
    )
    .unwrap();
    let p = m.distribution().unwrap();
    assert_eq!(p.table(), &[0.25, 0.75]);
    assert!((p.log_norm() - 4f64.ln()).abs() < 1e-15);
}

#[test]
fn identity_chain_ugm_is_uniform_on_the_diagonal() {
    let m = Ugm::from_cliques(
        &[Variable::new("a", 2), Variable::new("b", 2)],
        &[
            (vec!["a".into(), "b".into()], DenseTensor::real_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()),
            (vec!["b".into()], DenseTensor::ones(2).unwrap()),
        ],
    )
    .unwrap();
    let p = m.distribution().unwrap();
    assert_eq!(p.table(), &[0.5, 0.0, 0.0, 0.5]);
    assert!((p.log_norm() - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn ugm_rejects_negative_potentials() {
    let r = Ugm::from_cliques(
        &[Variable::new("x", 2)],
        &[(vec!["x".into()], DenseTensor::from_real(vec![2], &[1.0, -1.0]).unwrap())],
    );
    assert!(matches!(r, Err(ModelError::NotNonnegative(_))));
    let r = Ugm::from_cliques(&[Variable::new("x", 2)], &[(vec!["y".into()], DenseTensor::ones(2).unwrap())]);
    assert!(matches!(r, Err(ModelError::UnknownVariable(_))));
}

#[test]
fn zero_ugm_is_degenerate() {
    let m = Ugm::from_cliques(
        &[Variable::new("x", 2)],
        &[(vec!["x".into()], DenseTensor::zeros(vec![2]).unwrap())],
    )
    .unwrap();
    assert!(matches!(m.distribution(), Err(ModelError::Degenerate)));
}

#[test]
fn three_clique_ugm_matches_product_of_potentials() {
    let mut rng = random::rng(8);
    let vars = vec![Variable::new("a", 2), Variable::new("b", 3), Variable::new("c", 2)];
    let phi_ab = random::nonneg_tensor(&mut rng, vec![2, 3], 0.0);
    let phi_bc = random::nonneg_tensor(&mut rng, vec![3, 2], 0.0);
    let phi_ca = random::nonneg_tensor(&mut rng, vec![2, 2], 0.0);
    let m = Ugm::from_cliques(
        &vars,
        &[
            (vec!["a".into(), "b".into()], phi_ab.clone()),
            (vec!["b".into(), "c".into()], phi_bc.clone()),
            (vec!["c".into(), "a".into()], phi_ca.clone()),
        ],
    )
    .unwrap();
    let mut expected = Vec::new();
    for a in 0..2 {
        for b in 0..3 {
            for cc in 0..2 {
                let v = phi_ab.get(&[a, b]).unwrap() * phi_bc.get(&[b, cc]).unwrap() * phi_ca.get(&[cc, a]).unwrap();
                expected.push(v.re);
            }
        }
    }
    assert_close(m.distribution().unwrap().table(), &normalize(expected), 1e-12);
}

#[test]
fn born_rule_examples() {
    let net = NetworkBuilder::new()
        .edge("x", 2)
        .node("A", &["x"], DenseTensor::new(vec![2], vec![c(1.0, 0.0), c(0.0, 1.0)]).unwrap())
        .build();
    let bm = BornMachine::new(net).unwrap();
    assert_eq!(bm.distribution().unwrap().table(), &[0.5, 0.5]);

    let phases = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.6, -0.8)];
    let net = NetworkBuilder::new()
        .edge("x", 4)
        .node("A", &["x"], DenseTensor::new(vec![4], phases.to_vec()).unwrap())
        .build();
    assert_close(BornMachine::new(net).unwrap().distribution().unwrap().table(), &[0.25; 4], 1e-15);
}

#[test]
fn two_core_born_machine_matches_squared_amplitudes() {
    let mut rng = random::rng(13);
    let net = NetworkBuilder::new()
        .edge("x", 2)
        .edge("y", 3)
        .edge("h", 2)
        .node("A", &["x", "h"], random::complex_tensor(&mut rng, vec![2, 2]))
        .node("B", &["h", "y"], random::complex_tensor(&mut rng, vec![2, 3]))
        .visible_order(&["x", "y"])
        .build();
    let psi = brute_force_evaluate(&net);
    let expected = normalize(psi.data().iter().map(|z| z.norm_sqr()).collect());
    let bm = BornMachine::new(net).unwrap();
    assert_close(bm.distribution().unwrap().table(), &expected, 1e-12);
    // the composite network reaches the same table
    let composite = Model::Born(bm).inference_network().unwrap();
    let t = composite.evaluate().unwrap();
    assert!(t.max_imag() < 1e-12);
    assert_close(&normalize(t.real_parts()), &expected, 1e-12);
}

#[test]
fn single_node_composite_is_squared_modulus() {
    let (a, b) = (c(1.0, 2.0), c(-0.5, 0.5));
    let net = NetworkBuilder::new()
        .edge("x", 2)
        .node("A", &["x"], DenseTensor::new(vec![2], vec![a, b]).unwrap())
        .build();
    let m = DecoheredBM::new(BornMachine::new(net).unwrap(), BTreeSet::new()).unwrap();
    let t = build_composite(&m).unwrap().evaluate().unwrap();
    assert_eq!(t.data(), &[c(a.norm_sqr(), 0.0), c(b.norm_sqr(), 0.0)]);
}

/// `Σ_z |ψ'(x, z)|²` where `ψ'` exposes the decohered edges as extra modes.
fn latent_sum_oracle(net: &TensorNetwork, decohered: &[&str]) -> Vec<f64> {
    let mut promoted = net.clone();
    for e in decohered {
        promoted = promoted.promote_hidden_edge(e).unwrap();
    }
    let psi = brute_force_evaluate(&promoted);
    let n_vis = net.visible_order().len();
    let shape = psi.shape().to_vec();
    let mut out = vec![0.0; shape[..n_vis].iter().product()];
    let mut idx = vec![0usize; shape.len()];
    for z in psi.data() {
        let k = idx[..n_vis].iter().zip(&shape).fold(0, |acc, (&x, &d)| acc * d + x);
        out[k] += z.norm_sqr();
        next_index(&mut idx, &shape);
    }
    normalize(out)
}

#[test]
fn four_node_dbm_matches_latent_sum() {
    let net = crate::network::tests::four_node_network(&mut random::rng(17));
    let m = DecoheredBM::new(BornMachine::new(net.clone()).unwrap(), set(&["h23", "h34"])).unwrap();
    let p = m.distribution().unwrap();
    assert_close(p.table(), &latent_sum_oracle(&net, &["h23", "h34"]), 1e-12);
    assert!(p.raw_min() >= -1e-14);
}

#[test]
fn chain_dbm_with_decohered_middle_edge() {
    let mut rng = random::rng(23);
    let net = NetworkBuilder::new()
        .edge("x1", 2)
        .edge("x2", 2)
        .edge("x3", 2)
        .edge("h1", 3)
        .edge("h2", 2)
        .node("A", &["x1", "h1"], random::complex_tensor(&mut rng, vec![2, 3]))
        .node("B", &["h1", "x2", "h2"], random::complex_tensor(&mut rng, vec![3, 2, 2]))
        .node("C", &["h2", "x3"], random::complex_tensor(&mut rng, vec![2, 2]))
        .visible_order(&["x1", "x2", "x3"])
        .build();
    let m = DecoheredBM::new(BornMachine::new(net.clone()).unwrap(), set(&["h1"])).unwrap();
    assert_close(m.distribution().unwrap().table(), &latent_sum_oracle(&net, &["h1"]), 1e-12);
}

#[test]
fn empty_decoherence_is_the_born_machine() {
    let mut rng = random::rng(29);
    let bm = random::born_machine(&mut rng, &GraphSpec::default());
    let m = DecoheredBM::new(bm.clone(), BTreeSet::new()).unwrap();
    let (p, q) = (m.distribution().unwrap(), bm.distribution().unwrap());
    assert!(p.max_abs_diff(&q).unwrap() < 1e-14);
}

#[test]
fn decohering_a_visible_edge_is_rejected() {
    let mut rng = random::rng(31);
    let bm = random::born_machine(&mut rng, &GraphSpec::default());
    let v = bm.net().visible_order()[0].clone();
    assert!(matches!(
        DecoheredBM::new(bm, BTreeSet::from([v])),
        Err(ModelError::NotHidden(_))
    ));
}

#[test]
fn lps_with_unit_purification_is_a_born_machine() {
    let mut rng = random::rng(37);
    let net = NetworkBuilder::new()
        .edge("x", 2)
        .edge("y", 2)
        .edge("h", 2)
        .edge("p", 1)
        .edge("q", 1)
        .node("A", &["x", "p", "h"], random::complex_tensor(&mut rng, vec![2, 1, 2]))
        .node("B", &["h", "y", "q"], random::complex_tensor(&mut rng, vec![2, 2, 1]))
        .visible_order(&["x", "y", "p", "q"])
        .build();
    let lps = Lps::new(net.clone(), set(&["p", "q"])).unwrap();
    let psi = brute_force_evaluate(&net);
    let expected = normalize(psi.data().iter().map(|z| z.norm_sqr()).collect());
    assert_close(lps.distribution().unwrap().table(), &expected, 1e-12);
    assert_eq!(lps.distribution().unwrap().names(), vec!["x", "y"]);
}

#[test]
fn single_node_lps_sums_over_purification() {
    let mut rng = random::rng(41);
    let a = random::complex_tensor(&mut rng, vec![2, 2]);
    let net = NetworkBuilder::new()
        .edge("x", 2)
        .edge("p", 2)
        .node("A", &["x", "p"], a.clone())
        .visible_order(&["x", "p"])
        .build();
    let lps = Lps::new(net, set(&["p"])).unwrap();
    let expected = normalize(
        (0..2)
            .map(|x| (0..2).map(|p| a.get(&[x, p]).unwrap().norm_sqr()).sum())
            .collect(),
    );
    assert_close(lps.distribution().unwrap().table(), &expected, 1e-12);
}

/// Born probabilities of the full network, summed over purification outcomes.
fn lps_oracle(lps: &Lps) -> Vec<f64> {
    let net = lps.net();
    let psi = brute_force_evaluate(net);
    let order = net.visible_order();
    let shape = psi.shape().to_vec();
    let keep: Vec<usize> = (0..order.len()).filter(|&i| !lps.purification().contains(&order[i])).collect();
    let mut out = vec![0.0; keep.iter().map(|&i| shape[i]).product()];
    let mut idx = vec![0usize; shape.len()];
    for z in psi.data() {
        let k = keep.iter().fold(0, |acc, &i| acc * shape[i] + idx[i]);
        out[k] += z.norm_sqr();
        next_index(&mut idx, &shape);
    }
    normalize(out)
}

#[test]
fn random_lps_matches_brute_force_marginalization() {
    let mut rng = random::rng(43);
    for _ in 0..5 {
        let lps = random::lps(&mut rng, &GraphSpec { min_nodes: 2, max_nodes: 2, ..GraphSpec::default() });
        assert_close(lps.distribution().unwrap().table(), &lps_oracle(&lps), 1e-10);
    }
}

#[test]
fn lps_requires_one_purification_edge_per_node() {
    let mut rng = random::rng(47);
    let net = NetworkBuilder::new()
        .edge("x", 2)
        .edge("p", 2)
        .node("A", &["x", "p"], random::complex_tensor(&mut rng, vec![2, 2]))
        .build();
    assert!(matches!(Lps::new(net.clone(), BTreeSet::new()), Err(ModelError::InvalidLps(_))));
    assert!(matches!(Lps::new(net, set(&["x", "p"])), Err(ModelError::InvalidLps(_))));
}

#[test]
fn marginalizing_everything_leaves_a_scalar() {
    let mut rng = random::rng(53);
    let m = Model::Decohered(random::dbm(&mut rng, &GraphSpec::default(), 0.5));
    let names: Vec<String> = m.variables().unwrap().into_iter().map(|v| v.name).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let d = m.marginalize(&refs).unwrap();
    assert!(d.variables().is_empty());
    assert_eq!(d.table(), &[1.0]);
}

#[test]
fn conditioning_on_an_independent_factor() {
    let pa = DenseTensor::from_real(vec![2], &[0.2, 0.8]).unwrap();
    let pb = DenseTensor::from_real(vec![3], &[0.1, 0.3, 0.6]).unwrap();
    let m = Model::Ugm(
        Ugm::from_cliques(
            &[Variable::new("a", 2), Variable::new("b", 3)],
            &[(vec!["a".into()], pa), (vec!["b".into()], pb)],
        )
        .unwrap(),
    );
    let d = m.condition(&[("a", 0)]).unwrap();
    assert_close(d.table(), &[0.1, 0.3, 0.6], 1e-14);
}

#[test]
fn query_errors() {
    let m = Model::Ugm(
        Ugm::from_cliques(
            &[Variable::new("a", 2), Variable::new("b", 2)],
            &[(
                vec!["a".into(), "b".into()],
                DenseTensor::real_matrix(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap(),
            )],
        )
        .unwrap(),
    );
    assert!(matches!(m.condition(&[("a", 1)]), Err(ModelError::UndefinedConditional(_))));
    assert!(matches!(m.condition(&[("z", 0)]), Err(ModelError::UnknownVariable(_))));
    assert!(matches!(m.condition(&[("a", 2)]), Err(ModelError::OutcomeOutOfRange(_))));
    assert!(matches!(
        m.query(&["a"], &[("a", 0)]),
        Err(ModelError::DuplicateVariable(_))
    ));
}

fn random_model(rng: &mut random::Rng64, family: u8) -> Model {
    let spec = GraphSpec::default();
    match family {
        0 => Model::Ugm(random::ugm(rng, &spec)),
        1 => Model::Born(random::born_machine(rng, &spec)),
        2 => Model::Decohered(random::dbm(rng, &spec, 0.5)),
        _ => Model::Lps(random::lps(rng, &GraphSpec { max_nodes: 3, ..spec })),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn network_queries_match_dense_tables(seed in any::<u64>(), family in 0u8..4) {
        let mut rng = random::rng(seed);
        let m = random_model(&mut rng, family);
        let full = m.distribution().unwrap();
        let names: Vec<String> = full.names().iter().map(|s| s.to_string()).collect();
        prop_assume!(names.len() <= 5);
        use rand::Rng;
        let mut marg = Vec::new();
        let mut cond = Vec::new();
        for (v, var) in names.iter().zip(full.variables()) {
            match rng.random_range(0..3) {
                0 => marg.push(v.as_str()),
                1 => cond.push((v.as_str(), rng.random_range(0..var.dim))),
                _ => {}
            }
        }
        let dense = full.marginalize(&marg).and_then(|d| d.condition(&cond));
        let net = m.query(&marg, &cond);
        match (dense, net) {
            (Ok(a), Ok(b)) => {
                prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-10);
                prop_assert!((b.table().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            (Err(ModelError::UndefinedConditional(_)), Err(ModelError::UndefinedConditional(_))) => {}
            (a, b) => prop_assert!(false, "dense {:?} vs network {:?}", a, b),
        }
    }

    #[test]
    fn dbm_tables_are_nonnegative(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let m = random::dbm(&mut rng, &GraphSpec::default(), 0.5);
        let p = m.distribution().unwrap();
        prop_assert!(p.raw_min() >= -1e-14);
        prop_assert!((p.table().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn born_machines_are_gauge_invariant(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let bm = random::born_machine(&mut rng, &GraphSpec { min_nodes: 2, ..GraphSpec::default() });
        let edge = bm.net().graph().hidden_edges().next().unwrap().clone();
        let g = GaugeTransform { edge: edge.id, matrix: random::invertible_matrix(&mut rng, edge.dim, 1e3) };
        let gauged = BornMachine::new(apply_gauge(bm.net(), &g).unwrap()).unwrap();
        let diff = bm.distribution().unwrap().max_abs_diff(&gauged.distribution().unwrap()).unwrap();
        prop_assert!(diff < 1e-8);
    }

    #[test]
    fn model_files_round_trip(seed in any::<u64>(), family in 0u8..4) {
        let mut rng = random::rng(seed);
        let m = random_model(&mut rng, family);
        let back = Model::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }
}

#[test]
fn model_file_rejects_wrong_metadata() {
    let mut rng = random::rng(59);
    let m = Model::Born(random::born_machine(&mut rng, &GraphSpec::default()));
    let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
    v["purification"] = serde_json::json!(["x0"]);
    assert!(matches!(Model::from_json(&v.to_string()), Err(ModelError::Format(_))));
    v["family"] = serde_json::json!("mystery");
    assert!(matches!(Model::from_json(&v.to_string()), Err(ModelError::Format(_))));
}
