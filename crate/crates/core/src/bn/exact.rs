//! Exact posterior marginals by enumerating every completion of the evidence.

use super::{BayesNet, BnError, Evidence, NodeId};

/// Enumeration is exponential in the number of unobserved nodes.
pub const MAX_ENUMERATION_NODES: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior {
    /// `P(X_i = 1 | evidence)`; observed nodes report their observed bit.
    pub marginals: Vec<f64>,
    /// `P(evidence)`.
    pub evidence_prob: f64,
}

struct Walk<'a> {
    net: &'a BayesNet,
    observed: Vec<Option<bool>>,
    values: Vec<bool>,
    /// Unnormalised `sum P(x) [x_i = 1]`.
    numer: Vec<f64>,
}

impl Walk<'_> {
    /// Returns the mass of all completions of nodes `k..` given the values
    /// fixed for nodes `..k`, whose joint factor is `prefix`.
    fn mass_below(&mut self, k: usize, prefix: f64) -> f64 {
        if k == self.values.len() {
            return 1.0;
        }
        let p_one = self.net.conditional_prob_one(NodeId(k), &self.values);
        let mut total = 0.0;
        for value in [false, true] {
            if self.observed[k].is_some_and(|o| o != value) {
                continue;
            }
            let factor = if value { p_one } else { 1.0 - p_one };
            if factor == 0.0 {
                continue;
            }
            self.values[k] = value;
            let below = self.mass_below(k + 1, prefix * factor);
            let branch = factor * below;
            if value {
                self.numer[k] += prefix * branch;
            }
            total += branch;
        }
        self.values[k] = false;
        total
    }
}

/// Exact `P(X_i = 1 | evidence)` for every node by summing the joint over all
/// `2^(N - |evidence|)` completions (zero-probability branches are pruned).
pub fn enumerate_posterior(net: &BayesNet, evidence: &Evidence) -> Result<ExactPosterior, BnError> {
    let n = net.len();
    if n > MAX_ENUMERATION_NODES {
        return Err(BnError::TooLarge {
            n,
            max: MAX_ENUMERATION_NODES,
        });
    }
    evidence.check(n)?;
    let mut walk = Walk {
        net,
        observed: evidence.to_dense(n),
        values: vec![false; n],
        numer: vec![0.0; n],
    };
    let z = walk.mass_below(0, 1.0);
    if z <= 0.0 {
        return Err(BnError::ZeroProbabilityEvidence);
    }
    let marginals = walk
        .numer
        .iter()
        .zip(&walk.observed)
        .map(|(&num, obs)| match obs {
            Some(v) => *v as u8 as f64,
            None => (num / z).clamp(0.0, 1.0),
        })
        .collect();
    Ok(ExactPosterior {
        marginals,
        evidence_prob: z,
    })
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::chain2;
    use super::super::{joint_log_prob, Assignment};
    use super::*;

    /// Straight sum over all 2^N assignments.
    fn brute_force(net: &BayesNet, evidence: &Evidence) -> (Vec<f64>, f64) {
        let n = net.len();
        let mut numer = vec![0.0; n];
        let mut z = 0.0;
        for bits in 0u32..(1 << n) {
            let values: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            if evidence.iter().any(|(id, v)| values[id.0] != v) {
                continue;
            }
            let p = joint_log_prob(net, &Assignment::new(values.clone()))
                .unwrap()
                .exp();
            z += p;
            for i in 0..n {
                if values[i] {
                    numer[i] += p;
                }
            }
        }
        (numer.iter().map(|x| x / z).collect(), z)
    }

    #[test]
    fn bayes_rule_on_chain() {
        let net = chain2();
        let post = enumerate_posterior(&net, &Evidence::from_pairs([(1, true)])).unwrap();
        // 0.3*0.9 / (0.3*0.9 + 0.7*0.1)
        assert!((post.marginals[0] - 0.27 / 0.34).abs() < 1e-12);
        assert!((post.marginals[0] - 0.79412).abs() < 1e-5);
        assert_eq!(post.marginals[1], 1.0);
        assert!((post.evidence_prob - 0.34).abs() < 1e-12);
    }

    #[test]
    fn prior_of_single_node() {
        let net = BayesNet::from_parts("x", vec![("X".into(), vec![], vec![0.25])]).unwrap();
        let post = enumerate_posterior(&net, &Evidence::new()).unwrap();
        assert_eq!(post.marginals, vec![0.25]);
    }

    #[test]
    fn two_node_chain_prior_closed_form() {
        let net = chain2();
        let post = enumerate_posterior(&net, &Evidence::new()).unwrap();
        let p_b = 0.3 * 0.9 + 0.7 * 0.1;
        assert!((post.marginals[0] - 0.3).abs() < 1e-15);
        assert!((post.marginals[1] - p_b).abs() < 1e-15);
        assert!((post.evidence_prob - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_evidence_returns_bits() {
        let net = chain2();
        let ev = Evidence::from_pairs([(0, false), (1, true)]);
        let post = enumerate_posterior(&net, &ev).unwrap();
        assert_eq!(post.marginals, vec![0.0, 1.0]);
        assert!((post.evidence_prob - 0.07).abs() < 1e-15);
    }

    #[test]
    fn impossible_evidence_reported() {
        let net = BayesNet::from_parts(
            "det",
            vec![
                ("A".into(), vec![], vec![1.0]),
                ("B".into(), vec![0], vec![0.0, 1.0]),
            ],
        )
        .unwrap();
        let ev = Evidence::from_pairs([(1, false)]);
        assert!(matches!(
            enumerate_posterior(&net, &ev),
            Err(BnError::ZeroProbabilityEvidence)
        ));
    }

    #[test]
    fn guards_size_and_ids() {
        let parts = (0..25).map(|i| (format!("n{i}"), vec![], vec![0.5])).collect();
        let big = BayesNet::from_parts("big", parts).unwrap();
        assert!(matches!(
            enumerate_posterior(&big, &Evidence::new()),
            Err(BnError::TooLarge { n: 25, .. })
        ));
        assert!(matches!(
            enumerate_posterior(&chain2(), &Evidence::from_pairs([(2, true)])),
            Err(BnError::UnknownNode { id: 2, n: 2 })
        ));
    }

    #[test]
    fn matches_brute_force_on_dense_net() {
        let net = BayesNet::from_parts(
            "dense",
            vec![
                ("A".into(), vec![], vec![0.6]),
                ("B".into(), vec![], vec![0.2]),
                ("C".into(), vec![0, 1], vec![0.05, 0.5, 0.7, 0.99]),
                ("D".into(), vec![2], vec![0.3, 0.8]),
                ("E".into(), vec![0, 3], vec![0.1, 0.4, 0.6, 0.9]),
            ],
        )
        .unwrap();
        for ev in [
            Evidence::new(),
            Evidence::from_pairs([(4, true)]),
            Evidence::from_pairs([(3, false), (1, true)]),
        ] {
            let post = enumerate_posterior(&net, &ev).unwrap();
            let (bf, z) = brute_force(&net, &ev);
            assert!((post.evidence_prob - z).abs() < 1e-14);
            for (a, b) in post.marginals.iter().zip(&bf) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
