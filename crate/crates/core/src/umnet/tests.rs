use super::*;
use crate::bn::{enumerate_posterior, Assignment, BayesNet, Evidence, NodeId};
use crate::encoding::{encode, mask_sample, EvidenceEncoding, TrainingPair};
use crate::rng::{stream, StreamRng};

fn small_config(n: usize, seed: u64) -> UmConfig {
    UmConfig {
        n_nodes: n,
        embedding_dim: 5,
        trunk_hidden: vec![7],
        head_hidden: vec![4, 6],
        type_cap: 3,
        dropout_rate: 0.25,
        adam: AdamHyper::default(),
        batch_size: 4,
        seed,
        ..UmConfig::default()
    }
}

fn six_types() -> Vec<usize> {
    vec![1, 1, 2, 2, 3, 3]
}

/// Nudges every bias away from zero so ReLU units are active in tests.
fn jitter_biases(model: &mut Marginaliser, seed: u64) {
    use rand::Rng;
    let mut r = stream(seed, 77);
    let p = &mut model.params;
    for layer in p.trunk.iter_mut().chain(p.heads.iter_mut().flatten()) {
        layer.bias.iter_mut().for_each(|b| *b = r.gen_range(0.05..0.3));
    }
    p.output.bias.iter_mut().for_each(|b| *b = r.gen_range(-0.5..0.5));
}

#[test]
fn init_is_deterministic_in_seed() {
    let a = Marginaliser::init(&small_config(6, 1), &six_types()).unwrap();
    let b = Marginaliser::init(&small_config(6, 1), &six_types()).unwrap();
    let c = Marginaliser::init(&small_config(6, 2), &six_types()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.params, c.params);
    assert!(a.params.trunk.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
}

#[test]
fn config_validation() {
    let mut cfg = small_config(6, 1);
    cfg.head_hidden.clear();
    assert!(matches!(
        Marginaliser::init(&cfg, &six_types()),
        Err(UmError::InvalidConfig(_))
    ));
    let mut cfg = small_config(6, 1);
    cfg.embedding_dim = 0;
    assert!(Marginaliser::init(&cfg, &six_types()).is_err());
    let mut cfg = small_config(6, 1);
    cfg.dropout_rate = 1.0;
    assert!(Marginaliser::init(&cfg, &six_types()).is_err());
    assert!(Marginaliser::init(&small_config(6, 1), &[1, 2, 3]).is_err());
    assert!(Marginaliser::init(&small_config(6, 1), &[1, 1, 1, 1, 1, 4]).is_err());
}

#[test]
fn zero_weights_give_one_half() {
    let m = Marginaliser::zeros(&small_config(6, 1), &six_types()).unwrap();
    let probs = m.predict(&EvidenceEncoding::empty(6)).unwrap();
    assert_eq!(probs, vec![0.5; 6]);
}

#[test]
fn rejects_wrong_input_width() {
    let m = Marginaliser::init(&small_config(6, 1), &six_types()).unwrap();
    assert!(matches!(
        m.predict(&EvidenceEncoding::empty(5)),
        Err(UmError::DimensionMismatch { expected: 12, got: 10 })
    ));
    assert!(matches!(
        m.forward::<StreamRng>(&EvidenceEncoding::empty(6), Mode::Train, None),
        Err(UmError::MissingRng)
    ));
}

#[test]
fn eval_forward_is_pure() {
    let m = Marginaliser::init(&small_config(6, 3), &six_types()).unwrap();
    let enc = encode(&Evidence::from_pairs([(1, true), (4, false)]), 6);
    let a = m.forward::<StreamRng>(&enc, Mode::Eval, None).unwrap();
    let b = m.forward::<StreamRng>(&enc, Mode::Eval, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.probs, m.predict(&enc).unwrap());
    assert_eq!(a.probs.len(), 6);
    assert!(a.probs.iter().all(|&p| p > 0.0 && p < 1.0));
    assert_eq!(a.embedding(), m.extract_embedding(&enc).unwrap().as_slice());
    assert_eq!(a.embedding().len(), 5);
}

/// Straight-line re-implementation of the architecture with index loops.
fn oracle_forward(m: &Marginaliser, x: &[f64]) -> Vec<f64> {
    fn layer(d: &Dense, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; d.outputs];
        for o in 0..d.outputs {
            let mut s = d.bias[o];
            for i in 0..d.inputs {
                s += d.weights[o * d.inputs + i] * x[i];
            }
            out[o] = if s > 0.0 { s } else { 0.0 };
        }
        out
    }
    let mut a = x.to_vec();
    for d in &m.params.trunk {
        a = layer(d, &a);
    }
    let mut probs = Vec::new();
    for (i, &t) in m.node_types().iter().enumerate() {
        let mut h = a.clone();
        for d in &m.params.heads[t - 1] {
            h = layer(d, &h);
        }
        let w = &m.params.output;
        let mut z = w.bias[i];
        for k in 0..w.inputs {
            z += w.weights[i * w.inputs + k] * h[k];
        }
        probs.push(1.0 / (1.0 + (-z).exp()));
    }
    probs
}

#[test]
fn forward_matches_hand_rolled_oracle() {
    let mut cfg = small_config(4, 9);
    cfg.trunk_hidden = vec![6, 5];
    let mut m = Marginaliser::init(&cfg, &[1, 2, 2, 3]).unwrap();
    jitter_biases(&mut m, 9);
    for ev in [
        Evidence::new(),
        Evidence::from_pairs([(0, true)]),
        Evidence::from_pairs([(1, false), (3, true)]),
        Evidence::from_pairs([(0, false), (1, true), (2, true), (3, false)]),
    ] {
        let enc = encode(&ev, 4);
        let got = m.predict(&enc).unwrap();
        let want = oracle_forward(&m, &enc.to_input());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn bce_examples() {
    let t = Assignment::new(vec![true, false, true]);
    assert!((bce_loss(&[0.5; 3], &t) - std::f64::consts::LN_2).abs() < 1e-15);
    let exact = bce_loss(&[1.0, 0.0, 1.0], &t);
    assert!(exact > 0.0 && exact < 2e-7, "{exact}");
    let l = bce_loss(&[0.9, 0.2], &Assignment::new(vec![true, false]));
    assert!((l - 0.164_252_033_486_018_1).abs() < 1e-12);
    assert!((l - (-(0.9f64.ln() + 0.8f64.ln()) / 2.0)).abs() < 1e-15);
}

fn loss_with_masks(m: &Marginaliser, enc: &EvidenceEncoding, masks: &[Option<Vec<f64>>], t: &Assignment) -> f64 {
    bce_loss(&m.forward_with_masks(enc, masks.to_vec()).probs, t)
}

/// Central differences with step 1e-5 against the analytic gradient, for
/// every parameter of every group.
fn gradient_check(dropout: f64, seed: u64) {
    let mut cfg = small_config(6, seed);
    cfg.dropout_rate = dropout;
    let mut m = Marginaliser::init(&cfg, &six_types()).unwrap();
    jitter_biases(&mut m, seed);
    let enc = encode(&Evidence::from_pairs([(0, true), (3, false)]), 6);
    let target = Assignment::new(vec![true, true, false, false, true, false]);
    let mut r = stream(seed, 5);
    let trace = m.forward(&enc, Mode::Train, Some(&mut r)).unwrap();
    let masks = trace.dropout_masks.clone();
    let analytic = m.backward(&trace, &target).to_flat();

    let h = 1e-5;
    let base = m.params.to_flat();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut plus = base.clone();
        plus[k] += h;
        let mut minus = base.clone();
        minus[k] -= h;
        m.params.copy_from_flat(&plus);
        let lp = loss_with_masks(&m, &enc, &masks, &target);
        m.params.copy_from_flat(&minus);
        let lm = loss_with_masks(&m, &enc, &masks, &target);
        let numeric = (lp - lm) / (2.0 * h);
        let a = analytic[k];
        let scale = a.abs().max(numeric.abs());
        // Gradients indistinguishable from zero carry no relative information.
        if scale < 1e-9 {
            assert!((a - numeric).abs() < 1e-10, "param {k}: {a} vs {numeric}");
            continue;
        }
        let rel = (a - numeric).abs() / scale;
        worst = worst.max(rel);
        assert!(rel < 1e-4, "param {k}: analytic {a}, numeric {numeric}, rel {rel}");
    }
    m.params.copy_from_flat(&base);
    assert!(worst < 1e-4);
}

#[test]
fn gradients_match_finite_differences() {
    gradient_check(0.0, 21);
}

#[test]
fn gradients_match_finite_differences_with_dropout() {
    gradient_check(0.3, 22);
}

#[test]
fn output_gradient_vanishes_at_soft_target() {
    let m = Marginaliser::init(&small_config(6, 4), &six_types()).unwrap();
    let trace = m
        .forward::<StreamRng>(&EvidenceEncoding::empty(6), Mode::Eval, None)
        .unwrap();
    let mut grads = m.params.zeros_like();
    m.accumulate_backward_soft(&trace, &trace.probs.clone(), 1.0, &mut grads);
    assert!(grads.output.weights.iter().all(|&g| g.abs() < 1e-15));
    assert!(grads.output.bias.iter().all(|&g| g.abs() < 1e-15));
}

#[test]
fn unit_mask_equals_no_dropout() {
    let m = Marginaliser::init(&small_config(6, 5), &six_types()).unwrap();
    let enc = encode(&Evidence::from_pairs([(2, true)]), 6);
    let target = Assignment::new(vec![true, false, true, false, true, false]);
    let plain = m.forward_with_masks(&enc, vec![None; 3]);
    let ones = m.forward_with_masks(&enc, vec![Some(vec![1.0; 6]); 3]);
    assert_eq!(plain.probs, ones.probs);
    assert_eq!(m.backward(&plain, &target), m.backward(&ones, &target));
}

#[test]
fn head_weights_are_shared_per_type() {
    let base = Marginaliser::init(&small_config(6, 6), &six_types()).unwrap();
    let enc = encode(&Evidence::from_pairs([(0, true)]), 6);
    let before = base.predict(&enc).unwrap();
    for t in 0..3 {
        let mut m = base.clone();
        m.params.heads[t][0].weights.iter_mut().for_each(|w| *w += 0.05);
        let after = m.predict(&enc).unwrap();
        for (i, &ty) in six_types().iter().enumerate() {
            assert_eq!(before[i] != after[i], ty == t + 1, "type {} node {i}", t + 1);
        }
    }
}

#[test]
fn adam_zero_gradient_is_a_fixed_point() {
    let m = Marginaliser::init(&small_config(6, 7), &six_types()).unwrap();
    let mut params = m.params.clone();
    let grads = params.zeros_like();
    let mut state = AdamState::new(&params);
    adam_step(&mut params, &grads, &mut state, &AdamHyper::default());
    assert_eq!(params, m.params);
    assert_eq!(state.step, 1);
}

#[test]
fn first_adam_step_moves_by_learning_rate() {
    let m = Marginaliser::init(&small_config(6, 8), &six_types()).unwrap();
    let mut params = m.params.clone();
    let mut grads = params.zeros_like();
    let n = grads.len();
    let flat: Vec<f64> = (0..n).map(|k| if k % 2 == 0 { 0.3 } else { -2.0 }).collect();
    grads.copy_from_flat(&flat);
    let hyper = AdamHyper {
        learning_rate: 0.01,
        ..AdamHyper::default()
    };
    let mut state = AdamState::new(&params);
    adam_step(&mut params, &grads, &mut state, &hyper);
    for ((new, old), g) in params.to_flat().iter().zip(m.params.to_flat()).zip(&flat) {
        let delta = new - old;
        assert!((delta + 0.01 * g.signum()).abs() < 1e-8, "{delta}");
    }
}

fn fixed_pairs(net: &BayesNet, count: usize, seed: u64) -> Vec<TrainingPair> {
    let mut r = stream(seed, 0);
    (0..count)
        .map(|_| mask_sample(&crate::bn::ancestral_sample(net, &mut r), &mut r))
        .collect()
}

fn chain6() -> BayesNet {
    BayesNet::from_parts(
        "chain6",
        (0..6)
            .map(|i| {
                if i == 0 {
                    ("n0".to_string(), vec![], vec![0.4])
                } else {
                    (format!("n{i}"), vec![i - 1], vec![0.2, 0.85])
                }
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn replayed_batch_loss_decreases_monotonically() {
    let net = chain6();
    let mut cfg = small_config(6, 10).for_net(&net);
    cfg.dropout_rate = 0.0;
    cfg.adam.learning_rate = 1e-4;
    let mut m = Marginaliser::init(&cfg, &net.depth_types()).unwrap();
    let pairs = fixed_pairs(&net, 32, 3);
    let mut state = AdamState::new(&m.params);
    let mut prev = f64::INFINITY;
    for _ in 0..50 {
        let loss = train_on_pairs(&mut m, &mut state, &pairs, 0);
        assert!(loss < prev, "{loss} >= {prev}");
        prev = loss;
        assert!(m.params.all_finite());
    }
}

#[test]
fn adam_trajectories_are_reproducible() {
    let net = chain6();
    let cfg = small_config(6, 11).for_net(&net);
    let run = || {
        let mut m = Marginaliser::init(&cfg, &net.depth_types()).unwrap();
        let pairs = fixed_pairs(&net, 16, 4);
        let mut state = AdamState::new(&m.params);
        for _ in 0..10 {
            train_on_pairs(&mut m, &mut state, &pairs, 9);
        }
        m
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_steps_returns_initial_weights() {
    let net = chain6();
    let cfg = small_config(6, 12);
    let out = train_stream(&net, &cfg, 0).unwrap();
    assert_eq!(out.model, Marginaliser::init_for_net(&cfg, &net).unwrap());
    assert!(out.losses.is_empty());
    assert_eq!(out.loss_csv(), "step,loss\n");
}

#[test]
fn single_node_learns_its_prior() {
    let net = BayesNet::from_parts("x", vec![("X".into(), vec![], vec![0.8])]).unwrap();
    let cfg = UmConfig {
        embedding_dim: 8,
        trunk_hidden: vec![8],
        head_hidden: vec![8],
        batch_size: 32,
        seed: 1,
        ..UmConfig::default()
    };
    let out = train_stream(&net, &cfg, 2000).unwrap();
    let exact = enumerate_posterior(&net, &Evidence::new()).unwrap().marginals[0];
    let got = out.model.predict(&EvidenceEncoding::empty(1)).unwrap()[0];
    assert!((got - exact).abs() < 0.02, "{got} vs {exact}");
    assert!(out.model.params.all_finite());
    assert_eq!(out.smoothed.len(), 2000);
}

#[test]
fn training_is_reproducible() {
    let net = chain6();
    let cfg = small_config(6, 13);
    let a = train_stream(&net, &cfg, 20).unwrap();
    let b = train_stream(&net, &cfg, 20).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.losses, b.losses);
}

#[test]
fn training_ignores_thread_count() {
    let net = chain6();
    let cfg = UmConfig {
        batch_size: 600,
        ..small_config(6, 14)
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train_stream(&net, &cfg, 5).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.model, b.model);
    assert_eq!(a.losses, b.losses);
}

#[test]
fn trained_embeddings_separate_evidence() {
    let net = chain6();
    let cfg = UmConfig {
        embedding_dim: 16,
        trunk_hidden: vec![16],
        head_hidden: vec![16],
        seed: 2,
        ..UmConfig::default()
    };
    let model = train_stream(&net, &cfg, 300).unwrap().model;
    let a = encode(&Evidence::from_pairs([(0, true), (5, true)]), 6);
    let b = encode(&Evidence::from_pairs([(0, true), (5, false)]), 6);
    let ea = model.extract_embedding(&a).unwrap();
    assert_eq!(ea, model.extract_embedding(&a).unwrap());
    assert_eq!(ea.len(), 16);
    assert_ne!(ea, model.extract_embedding(&b).unwrap());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let net = chain6();
    let out = train_stream(&net, &small_config(6, 14), 5).unwrap();
    let dir = std::env::temp_dir().join(format!("umis-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.ckpt");
    save_params(&path, &out.model, out.steps).unwrap();
    let back = load_params(&path).unwrap();
    assert_eq!(back.steps, 5);
    assert_eq!(back.model, out.model);
    let enc = encode(&Evidence::from_pairs([(2, false)]), 6);
    let x = out.model.predict(&enc).unwrap();
    let y = back.model.predict(&enc).unwrap();
    assert_eq!(
        x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        y.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    back.expect_config(out.model.config()).unwrap();
    let mut other = out.model.config().clone();
    other.embedding_dim += 1;
    assert!(matches!(back.expect_config(&other), Err(UmError::ConfigMismatch(_))));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let m = Marginaliser::init(&small_config(6, 15), &six_types()).unwrap();
    let bytes = Checkpoint { model: m, steps: 3 }.to_bytes();
    for cut in [0, 7, 20, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(UmError::Corrupt(_))),
            "cut at {cut}"
        );
    }
    let mut flipped = bytes.clone();
    let k = bytes.len() - 20;
    flipped[k] ^= 0x40;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(UmError::Corrupt(_))));
    let mut versioned = bytes.clone();
    versioned[8] = 9;
    assert!(matches!(
        Checkpoint::from_bytes(&versioned),
        Err(UmError::Version { found: 9, expected: 1 })
    ));
}

#[test]
fn check_net_detects_mismatch() {
    let net = chain6();
    let m = Marginaliser::init_for_net(&small_config(6, 1), &net).unwrap();
    m.check_net(&net).unwrap();
    let other = BayesNet::from_parts("x", vec![("X".into(), vec![], vec![0.8])]).unwrap();
    assert!(matches!(m.check_net(&other), Err(UmError::NetworkMismatch(_))));
    assert_eq!(net.node(NodeId(5)).depth_type, 3);
}
