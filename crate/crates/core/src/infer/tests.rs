use proptest::prelude::*;

use super::*;
use crate::bn::fixtures::{chain2, chain3};
use crate::bn::joint_log_prob;
use crate::graphgen::{generate, GenSpec};
use crate::umnet::UmConfig;

fn small_net(seed: u64) -> BayesNet {
    generate(&GenSpec {
        seed,
        layers: 3,
        nodes_per_layer: 3,
        max_parents: 2,
        cpt_concentration: 1.0,
    })
    .unwrap()
}

/// Root with P = 0.001 and a child that copies it.
fn rare_copy() -> BayesNet {
    BayesNet::from_parts(
        "rare-copy",
        vec![
            ("Xi".into(), vec![], vec![0.001]),
            ("Xj".into(), vec![0], vec![0.0, 1.0]),
        ],
    )
    .unwrap()
}

fn mae_vs_exact(net: &BayesNet, evidence: &Evidence, est: &[f64]) -> f64 {
    let exact = enumerate_posterior(net, evidence).unwrap().marginals;
    let free: Vec<usize> = (0..net.len()).filter(|&i| !evidence.contains(NodeId(i))).collect();
    free.iter().map(|&i| (exact[i] - est[i]).abs()).sum::<f64>() / free.len() as f64
}

#[test]
fn empty_evidence_gives_unit_weights() {
    let set = likelihood_weighting(&chain3(), &Evidence::new(), 500, 1).unwrap();
    assert!(set.log_weights.iter().all(|&w| w == 0.0));
    assert_eq!(ess(&set).unwrap(), 500.0);
}

#[test]
fn likelihood_weighting_matches_chain_posterior() {
    let net = chain2();
    let ev = Evidence::from_pairs([(1, true)]);
    let set = likelihood_weighting(&net, &ev, 100_000, 7).unwrap();
    let r = estimate_marginals(&set, &ev, None).unwrap();
    // P(A=1 | B=1) = 0.27 / 0.34
    assert!((r.marginals[0] - 0.27 / 0.34).abs() < 0.01, "{}", r.marginals[0]);
    assert_eq!(r.marginals[1], 1.0);
}

#[test]
fn contradicted_deterministic_cpt_is_zero_weight() {
    let ev = Evidence::from_pairs([(0, false), (1, true)]);
    assert!(matches!(
        likelihood_weighting(&rare_copy(), &ev, 100, 0),
        Err(InferError::AllWeightsZero)
    ));
}

#[test]
fn beta_one_reproduces_likelihood_weighting_bitwise() {
    let net = chain3();
    let ev = Evidence::from_pairs([(2, true)]);
    let model = ExactConditionals { net: &net };
    let lw = likelihood_weighting(&net, &ev, 2000, 11).unwrap();
    let seq = sequential_is(&net, &ev, 2000, &model, 1.0, 11).unwrap();
    assert_eq!(lw, seq);
}

#[test]
fn exact_proposal_weights_are_constant() {
    for seed in 0..3 {
        let net = small_net(seed);
        let ev = Evidence::from_pairs([(7, true), (4, false)]);
        let log_pe = enumerate_posterior(&net, &ev).unwrap().evidence_prob.ln();
        let set = sequential_is(&net, &ev, 400, &ExactConditionals { net: &net }, 0.0, seed).unwrap();
        let spread = set
            .log_weights
            .iter()
            .map(|w| (w - log_pe).abs())
            .fold(0.0, f64::max);
        assert!(spread < 1e-9, "seed {seed}: spread {spread}");
        assert!((ess(&set).unwrap() - 400.0).abs() < 1e-9);
    }
}

#[test]
fn sequential_is_is_consistent_with_a_poor_proposal() {
    // All-zero weights make the marginaliser propose 0.5 everywhere.
    let net = chain3();
    let model = Marginaliser::zeros(&UmConfig::default().for_net(&net), &net.depth_types()).unwrap();
    let ev = Evidence::from_pairs([(2, true)]);
    let set = sequential_um_is(&net, &ev, 50_000, &model, 0.0, 3).unwrap();
    let r = estimate_marginals(&set, &ev, None).unwrap();
    assert!(mae_vs_exact(&net, &ev, &r.marginals) < 0.01);
}

#[test]
fn single_free_node_naive_equals_sequential() {
    let net = chain2();
    let model = Marginaliser::init(&UmConfig::default().for_net(&net), &net.depth_types()).unwrap();
    let ev = Evidence::from_pairs([(1, true)]);
    let naive = naive_um_is(&net, &ev, 300, &model, 5).unwrap();
    let seq = sequential_um_is(&net, &ev, 300, &model, 0.0, 5).unwrap();
    assert_eq!(naive, seq);
}

#[test]
fn naive_weight_on_rare_joint_is_one_thousand() {
    let net = rare_copy();
    let q = [0.001, 0.001];
    let joint = Assignment::new(vec![true, true]);
    let factors = independent_weight_factors(&net, &Evidence::new(), &q, &joint);
    assert!((factors[0] - 1.0).abs() < 1e-12);
    assert!((factors[1] - 1000.0).abs() < 1e-9, "{}", factors[1]);
}

#[test]
fn naive_proposal_has_lower_ess_than_exact_sequential() {
    let net = rare_copy();
    let ev = Evidence::new();
    let naive = independent_is(&net, &ev, 100_000, &[0.001, 0.001], 9).unwrap();
    let exact = sequential_is(&net, &ev, 100_000, &ExactConditionals { net: &net }, 0.0, 9).unwrap();
    assert!(ess(&naive).unwrap() < ess(&exact).unwrap());
}

/// The weight as a product over all nodes (observed ones with Q = 1) equals
/// the free-node ratio times a separate evidence likelihood.
#[test]
fn weight_factor_product_matches_joint_over_proposal() {
    let net = small_net(4);
    let ev = Evidence::from_pairs([(1, true), (6, false)]);
    let q: Vec<f64> = (0..net.len()).map(|i| 0.15 + 0.08 * i as f64).collect();
    let set = independent_is(&net, &ev, 50, &q, 2).unwrap();
    for (s, lw) in set.samples.iter().zip(&set.log_weights) {
        let product: f64 = independent_weight_factors(&net, &ev, &q, s).iter().product();
        let free_q: f64 = (0..net.len())
            .filter(|&i| !ev.contains(NodeId(i)))
            .map(|i| if s.get(NodeId(i)) { q[i] } else { 1.0 - q[i] })
            .map(f64::ln)
            .sum();
        let separate = joint_log_prob(&net, s).unwrap() - free_q;
        assert!((product.ln() - separate).abs() < 1e-12);
        assert!((lw - separate).abs() < 1e-12);
    }
}

/// MAE against enumeration shrinks from m = 10^3 to 10^5 for every proposal
/// kind, with at most one non-decreasing step per run.
#[test]
fn estimates_converge_as_m_grows() {
    for seed in 0..4 {
        let net = small_net(seed);
        let ev = Evidence::from_pairs([(8, true), (5, seed % 2 == 0)]);
        let model = Marginaliser::init(&UmConfig { seed, ..UmConfig::default() }.for_net(&net), &net.depth_types()).unwrap();
        let runs: [(&str, Box<dyn Fn(usize) -> WeightedSampleSet>); 4] = [
            ("prior", Box::new(|m| likelihood_weighting(&net, &ev, m, seed).unwrap())),
            ("seq", Box::new(|m| sequential_um_is(&net, &ev, m, &model, 0.0, seed).unwrap())),
            ("hybrid", Box::new(|m| sequential_um_is(&net, &ev, m, &model, 0.1, seed).unwrap())),
            ("naive", Box::new(|m| naive_um_is(&net, &ev, m, &model, seed).unwrap())),
        ];
        for (name, run) in &runs {
            let maes: Vec<f64> = [1_000, 10_000, 100_000]
                .iter()
                .map(|&m| mae_vs_exact(&net, &ev, &estimate_marginals(&run(m), &ev, None).unwrap().marginals))
                .collect();
            let rises = maes.windows(2).filter(|w| w[1] >= w[0]).count();
            assert!(maes[2] < maes[0] && rises <= 1, "seed {seed} {name}: {maes:?}");
        }
    }
}

#[test]
fn ess_worked_examples() {
    let lw = |w: &[f64]| w.iter().map(|x: &f64| x.ln()).collect::<Vec<_>>();
    assert!((ess_from_log_weights(&lw(&[1.0, 2.0, 3.0])).unwrap() - 36.0 / 14.0).abs() < 1e-12);
    assert_eq!(ess_from_log_weights(&lw(&[0.0, 5.0, 0.0])).unwrap(), 1.0);
    assert!(matches!(
        ess_from_log_weights(&[f64::NEG_INFINITY; 3]),
        Err(InferError::AllWeightsZero)
    ));
}

#[test]
fn identical_samples_give_their_bits() {
    let a = Assignment::new(vec![true, false, true]);
    let set = WeightedSampleSet {
        samples: vec![a.clone(); 4],
        log_weights: vec![0.1, -3.0, 2.0, 0.5],
    };
    let r = estimate_marginals(&set, &Evidence::new(), None).unwrap();
    assert_eq!(r.marginals, vec![1.0, 0.0, 1.0]);
}

#[test]
fn uniform_weights_give_frequencies() {
    let set = WeightedSampleSet {
        samples: vec![
            Assignment::new(vec![true, false]),
            Assignment::new(vec![true, true]),
            Assignment::new(vec![false, false]),
            Assignment::new(vec![true, false]),
        ],
        log_weights: vec![-1.5; 4],
    };
    let r = estimate_marginals(&set, &Evidence::new(), None).unwrap();
    assert_eq!(r.marginals, vec![0.75, 0.25]);
    assert_eq!(r.ess, Some(4.0));
}

#[test]
fn thread_count_does_not_change_results() {
    let net = small_net(4);
    let model = Marginaliser::init(&UmConfig::default().for_net(&net), &net.depth_types()).unwrap();
    let ev = Evidence::from_pairs([(8, true)]);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sequential_um_is(&net, &ev, 700, &model, 0.1, 21).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn rejects_bad_arguments() {
    let net = chain2();
    let model = ExactConditionals { net: &net };
    let ev = Evidence::new();
    assert!(matches!(sequential_is(&net, &ev, 10, &model, 1.5, 0), Err(InferError::InvalidBeta(_))));
    assert!(matches!(likelihood_weighting(&net, &ev, 0, 0), Err(InferError::NoSamples)));
    assert!(matches!(
        independent_is(&net, &ev, 10, &[0.5], 0),
        Err(InferError::ModelSize { .. })
    ));
    assert!(matches!(
        likelihood_weighting(&net, &Evidence::from_pairs([(5, true)]), 10, 0),
        Err(InferError::Network(BnError::UnknownNode { .. }))
    ));
    assert!(matches!(
        run_method(&net, None, &ev, MethodSpec { method: Method::UmSeq, beta: 0.0 }, 10, 0),
        Err(InferError::MissingModel(_))
    ));
}

#[test]
fn um_direct_overwrites_observed_nodes() {
    let net = chain3();
    let model = Marginaliser::zeros(&UmConfig::default().for_net(&net), &net.depth_types()).unwrap();
    let r = um_direct(&model, &Evidence::from_pairs([(1, false)])).unwrap();
    assert_eq!(r.marginals, vec![0.5, 0.0, 0.5]);
    assert_eq!(r.ess, None);
    let full = Evidence::from_pairs([(0, true), (1, false), (2, true)]);
    assert_eq!(um_direct(&model, &full).unwrap().marginals, vec![1.0, 0.0, 1.0]);
}

#[test]
fn result_record_fields() {
    let net = chain2();
    let ev = Evidence::from_pairs([(1, true)]);
    let spec = MethodSpec { method: Method::Prior, beta: 0.0 };
    let r = run_method(&net, None, &ev, spec, 100, 4).unwrap();
    let json = serde_json::to_value(ResultRecord::new(&r, spec, 4)).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    assert_eq!(keys, ["beta", "ess", "floor", "m", "marginals", "method", "seed"]);
    assert_eq!(json["method"], "prior");
    assert_eq!(json["beta"], 1.0);
    assert_eq!(json["floor"], PROPOSAL_FLOOR);
    assert_eq!(Method::parse("um-seq"), Some(Method::UmSeq));
    assert_eq!(Method::parse("bogus"), None);
}

/// Log-weights on a 2^-10 grid so that adding a grid-aligned shift is exact.
fn grid_log_weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![9 => (-20_000i32..20_000).prop_map(|k| k as f64 / 1024.0), 1 => Just(f64::NEG_INFINITY)],
        1..60,
    )
    .prop_filter("one finite weight", |w| w.iter().any(|x| x.is_finite()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ess_lies_between_one_and_m(w in grid_log_weights()) {
        let e = ess_from_log_weights(&w).unwrap();
        prop_assert!(e >= 1.0 - 1e-12 && e <= w.len() as f64 * (1.0 + 1e-12), "{}", e);
    }

    #[test]
    fn ess_is_scale_invariant(w in grid_log_weights(), shift in -4000i32..4000) {
        let shifted: Vec<f64> = w.iter().map(|x| x + shift as f64 / 1024.0).collect();
        prop_assert_eq!(ess_from_log_weights(&w).unwrap(), ess_from_log_weights(&shifted).unwrap());
    }

    #[test]
    fn ess_of_equal_weights_is_m(m in 1usize..2000, lw in -700.0f64..700.0) {
        prop_assert_eq!(ess_from_log_weights(&vec![lw; m]).unwrap(), m as f64);
    }

    #[test]
    fn ess_scale_invariance_for_arbitrary_constants(
        w in prop::collection::vec(-30.0f64..30.0, 1..50),
        c in -50.0f64..50.0,
    ) {
        let shifted: Vec<f64> = w.iter().map(|x| x + c).collect();
        let (a, b) = (ess_from_log_weights(&w).unwrap(), ess_from_log_weights(&shifted).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn marginals_are_scale_invariant(
        w in grid_log_weights(),
        shift in -4000i32..4000,
        bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 3), 60),
    ) {
        let set = WeightedSampleSet {
            samples: bits[..w.len()].iter().cloned().map(Assignment::new).collect(),
            log_weights: w.clone(),
        };
        let mut scaled = set.clone();
        scaled.log_weights.iter_mut().for_each(|x| *x += shift as f64 / 1024.0);
        let ev = Evidence::from_pairs([(1, true)]);
        let a = estimate_marginals(&set, &ev, None).unwrap();
        let b = estimate_marginals(&scaled, &ev, None).unwrap();
        prop_assert_eq!(&a.marginals, &b.marginals);
        prop_assert_eq!(a.marginals[1], 1.0);
        prop_assert!(a.marginals.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
