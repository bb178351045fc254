//! Metrics, ground-truth test sets, convergence curves and embedding analytics.

use std::ops::RangeInclusive;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bn::{ancestral_sample, enumerate_posterior, Assignment, BayesNet, BnError, Evidence, NodeId};
use crate::encoding::encode;
use crate::infer::{self, InferError, MethodSpec};
use crate::rng;
use crate::umnet::{Marginaliser, UmError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Network(#[from] BnError),
    #[error(transparent)]
    Inference(#[from] InferError),
    #[error(transparent)]
    Model(#[from] UmError),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("test set JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Enumeration,
    LongRunSampling { seed: u64, m: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: usize,
    pub evidence: Evidence,
    /// Posterior marginals; observed nodes hold their evidence bit.
    pub truth: Vec<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSet {
    pub network: String,
    pub seed: u64,
    pub cases: Vec<TestCase>,
}

impl TestSet {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("test set serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Fails unless every case fits `net`.
    pub fn check(&self, net: &BayesNet) -> Result<(), EvalError> {
        for case in &self.cases {
            case.evidence.check(net.len())?;
            if case.truth.len() != net.len() {
                return Err(EvalError::Invalid(format!(
                    "case {} has {} truth entries for {} nodes",
                    case.id,
                    case.truth.len(),
                    net.len()
                )));
            }
        }
        Ok(())
    }
}

/// Observes `size` uniformly chosen nodes at the values of one prior sample,
/// so the evidence always has positive probability.
pub fn sample_evidence<R: Rng + ?Sized>(net: &BayesNet, size: usize, rng: &mut R) -> Evidence {
    let sample = ancestral_sample(net, rng);
    let size = size.min(net.len());
    let mut chosen = index::sample(rng, net.len(), size).into_vec();
    chosen.sort_unstable();
    Evidence::from_pairs(chosen.into_iter().map(|i| (i, sample.get(NodeId(i)))))
}

fn testset_with<F>(
    net: &BayesNet,
    n_cases: usize,
    sizes: RangeInclusive<usize>,
    seed: u64,
    truth: F,
) -> Result<TestSet, EvalError>
where
    F: Fn(usize, &Evidence) -> Result<(Vec<f64>, Provenance), EvalError>,
{
    if sizes.is_empty() {
        return Err(EvalError::Invalid("evidence size range is empty".into()));
    }
    let base = rng::derive_seed(seed, "testset");
    let cases = (0..n_cases)
        .map(|id| {
            let mut r = rng::stream(base, id as u64);
            let size = r.gen_range(sizes.clone());
            let evidence = sample_evidence(net, size, &mut r);
            let (truth, provenance) = truth(id, &evidence)?;
            Ok(TestCase {
                id,
                evidence,
                truth,
                provenance,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(TestSet {
        network: net.name().to_string(),
        seed,
        cases,
    })
}

/// Test cases with exact truth by enumeration (at most 24 nodes).
pub fn make_testset(
    net: &BayesNet,
    n_cases: usize,
    sizes: RangeInclusive<usize>,
    seed: u64,
) -> Result<TestSet, EvalError> {
    testset_with(net, n_cases, sizes, seed, |_, ev| {
        Ok((enumerate_posterior(net, ev)?.marginals, Provenance::Enumeration))
    })
}

/// Test cases whose truth is a long likelihood-weighting run, for networks
/// too large to enumerate.
pub fn make_testset_sampled(
    net: &BayesNet,
    n_cases: usize,
    sizes: RangeInclusive<usize>,
    seed: u64,
    m_truth: usize,
) -> Result<TestSet, EvalError> {
    let base = rng::derive_seed(seed, "testset-truth");
    testset_with(net, n_cases, sizes, seed, |id, ev| {
        let case_seed = rng::derive_seed(base, &id.to_string());
        let set = infer::likelihood_weighting(net, ev, m_truth, case_seed)?;
        let r = infer::estimate_marginals(&set, ev, None)?;
        Ok((
            r.marginals,
            Provenance::LongRunSampling {
                seed: case_seed,
                m: m_truth,
            },
        ))
    })
}

fn free_pairs<'a>(
    pred: &'a [f64],
    truth: &'a [f64],
    evidence: &'a Evidence,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    assert_eq!(pred.len(), truth.len(), "metric length mismatch");
    pred.iter()
        .zip(truth)
        .enumerate()
        .filter(|(i, _)| !evidence.contains(NodeId(*i)))
        .map(|(_, (&p, &t))| (p, t))
}

/// Mean absolute error over unobserved nodes (0 when every node is observed).
pub fn mae(pred: &[f64], truth: &[f64], evidence: &Evidence) -> f64 {
    let (sum, n) = free_pairs(pred, truth, evidence).fold((0.0, 0usize), |(s, n), (p, t)| (s + (p - t).abs(), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Pearson correlation over unobserved nodes; `None` when undefined (fewer
/// than two entries or a constant side).
pub fn pcc(pred: &[f64], truth: &[f64], evidence: &Evidence) -> Option<f64> {
    pearson(&free_pairs(pred, truth, evidence).collect::<Vec<_>>())
}

pub fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let constant = |f: fn(&(f64, f64)) -> f64| pairs.iter().all(|p| f(p) == f(&pairs[0]));
    if pairs.len() < 2 || constant(|p| p.0) || constant(|p| p.1) {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub id: usize,
    pub mae: f64,
    pub pcc: Option<f64>,
    pub ess: Option<f64>,
    pub marginals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub beta: f64,
    pub m: usize,
    pub seed: u64,
    /// Mean over cases of the per-case MAE.
    pub mae: f64,
    /// Correlation over the unobserved entries of every case pooled together.
    pub pcc: Option<f64>,
    /// Mean of the per-case correlations that are defined.
    pub pcc_case_mean: Option<f64>,
    pub ess: Option<f64>,
    pub cases: Vec<CaseOutcome>,
}

/// Seed used for one test case within a run seeded by `seed`.
pub fn case_seed(seed: u64, case_id: usize) -> u64 {
    rng::derive_seed(seed, &format!("case-{case_id}"))
}

/// Runs `spec` on every case and scores it against the stored truth.
pub fn evaluate(
    net: &BayesNet,
    model: Option<&Marginaliser>,
    set: &TestSet,
    spec: MethodSpec,
    m: usize,
    seed: u64,
) -> Result<MetricReport, EvalError> {
    set.check(net)?;
    let mut cases = Vec::with_capacity(set.cases.len());
    for case in &set.cases {
        let r = infer::run_method(net, model, &case.evidence, spec, m, case_seed(seed, case.id))?;
        cases.push(CaseOutcome {
            id: case.id,
            mae: mae(&r.marginals, &case.truth, &case.evidence),
            pcc: pcc(&r.marginals, &case.truth, &case.evidence),
            ess: r.ess,
            marginals: r.marginals,
        });
    }
    Ok(summarise(set, spec, m, seed, cases))
}

fn summarise(set: &TestSet, spec: MethodSpec, m: usize, seed: u64, cases: Vec<CaseOutcome>) -> MetricReport {
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let pooled: Vec<(f64, f64)> = set
        .cases
        .iter()
        .zip(&cases)
        .flat_map(|(c, o)| free_pairs(&o.marginals, &c.truth, &c.evidence).collect::<Vec<_>>())
        .collect();
    let per_case_pcc: Vec<f64> = cases.iter().filter_map(|c| c.pcc).collect();
    let ess: Vec<f64> = cases.iter().filter_map(|c| c.ess).collect();
    MetricReport {
        method: spec.method.name().to_string(),
        beta: spec.beta,
        m,
        seed,
        mae: mean(&cases.iter().map(|c| c.mae).collect::<Vec<_>>()).unwrap_or(0.0),
        pcc: pearson(&pooled),
        pcc_case_mean: mean(&per_case_pcc),
        ess: mean(&ess),
        cases,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub m: usize,
    pub mae: f64,
    pub pcc: Option<f64>,
    pub ess: Option<f64>,
    /// Seed that reproduces this row alone through [`evaluate`].
    pub seed: u64,
}

/// Per-point seed of a convergence curve.
pub fn curve_point_seed(seed: u64, m: usize) -> u64 {
    rng::derive_seed(seed, &format!("curve-m{m}"))
}

pub fn convergence_curve(
    net: &BayesNet,
    model: Option<&Marginaliser>,
    set: &TestSet,
    spec: MethodSpec,
    m_grid: &[usize],
    seed: u64,
) -> Result<Vec<CurveRow>, EvalError> {
    m_grid
        .iter()
        .map(|&m| {
            let point_seed = curve_point_seed(seed, m);
            let r = evaluate(net, model, set, spec, m, point_seed)?;
            Ok(CurveRow {
                m,
                mae: r.mae,
                pcc: r.pcc,
                ess: r.ess,
                seed: point_seed,
            })
        })
        .collect()
}

/// CSV with header `m,mae,pcc,ess,seed`; undefined values are empty fields.
pub fn curve_csv(rows: &[CurveRow]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// Projection of each input onto the two leading components.
    pub coords: Vec<[f64; 2]>,
    /// Variance along each component (covariance eigenvalues, `n - 1` denominator).
    pub explained_variance: [f64; 2],
    pub components: [Vec<f64>; 2],
    pub mean: Vec<f64>,
}

impl Pca {
    /// Coordinates of a new point in the fitted basis.
    pub fn project(&self, point: &[f64]) -> [f64; 2] {
        let proj = |c: &[f64]| {
            point
                .iter()
                .zip(&self.mean)
                .zip(c)
                .map(|((x, m), w)| (x - m) * w)
                .sum::<f64>()
        };
        [proj(&self.components[0]), proj(&self.components[1])]
    }
}

/// Two leading principal components. The covariance matrix is diagonalised
/// with nalgebra's symmetric QR eigen-solver, which is deterministic;
/// eigenpairs are ordered by decreasing eigenvalue (ties by index) and each
/// component's first non-negligible loading is made positive.
pub fn pca_2d(points: &[Vec<f64>]) -> Result<Pca, EvalError> {
    if points.len() < 2 {
        return Err(EvalError::Invalid("PCA needs at least two points".into()));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(EvalError::Invalid("PCA points must share a positive dimension".into()));
    }
    let n = points.len();
    let mut mean = vec![0.0; d];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    let cov = (centred.transpose() * &centred) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let component = |k: usize| -> (Vec<f64>, f64) {
        let Some(&col) = order.get(k) else {
            return (vec![0.0; d], 0.0);
        };
        let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-9 * scale) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        (v, eig.eigenvalues[col].max(0.0))
    };
    let (c1, v1) = component(0);
    let (c2, v2) = component(1);
    let coords = (0..n)
        .map(|i| {
            let row = centred.row(i);
            let proj = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [proj(&c1), proj(&c2)]
        })
        .collect();
    Ok(Pca {
        coords,
        explained_variance: [v1, v2],
        components: [c1, c2],
        mean,
    })
}

/// One linear model per label column with an unpenalised intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    /// `features × labels`.
    pub weights: DMatrix<f64>,
    pub intercept: Vec<f64>,
    pub feature_mean: Vec<f64>,
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, EvalError> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(EvalError::Invalid("ragged feature matrix".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

/// Closed-form ridge regression on centred data:
/// `W = (XᵀX + λI)⁻¹ XᵀY`, intercept = label mean minus `mean(X)·W`.
pub fn ridge_fit(features: &[Vec<f64>], labels: &[Vec<bool>], lambda: f64) -> Result<RidgeModel, EvalError> {
    if !(lambda > 0.0) {
        return Err(EvalError::Invalid("ridge lambda must be positive".into()));
    }
    if features.is_empty() || features.len() != labels.len() {
        return Err(EvalError::Invalid("ridge needs one label row per feature row".into()));
    }
    let x = to_matrix(features)?;
    let y = to_matrix(&labels.iter().map(|r| r.iter().map(|&b| b as u8 as f64).collect()).collect::<Vec<_>>())?;
    let n = x.nrows() as f64;
    let x_mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let y_mean: Vec<f64> = y.column_iter().map(|c| c.sum() / n).collect();
    let xc = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - x_mean[j]);
    let yc = DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| y[(i, j)] - y_mean[j]);
    let gram = xc.transpose() * &xc + DMatrix::identity(x.ncols(), x.ncols()) * lambda;
    let chol = gram
        .cholesky()
        .ok_or_else(|| EvalError::Invalid("ridge system is not positive definite".into()))?;
    let weights = chol.solve(&(xc.transpose() * yc));
    let intercept = (0..y.ncols())
        .map(|l| y_mean[l] - (0..x.ncols()).map(|j| x_mean[j] * weights[(j, l)]).sum::<f64>())
        .collect();
    Ok(RidgeModel {
        weights,
        intercept,
        feature_mean: x_mean,
    })
}

/// Scores and their 0.5-thresholded labels.
pub fn ridge_predict(model: &RidgeModel, features: &[Vec<f64>]) -> Result<(Vec<Vec<bool>>, Vec<Vec<f64>>), EvalError> {
    let x = to_matrix(features)?;
    if x.ncols() != model.weights.nrows() && !features.is_empty() {
        return Err(EvalError::Invalid("feature width differs from the fitted model".into()));
    }
    let scores: Vec<Vec<f64>> = (0..x.nrows())
        .map(|i| {
            (0..model.weights.ncols())
                .map(|l| model.intercept[l] + (0..x.ncols()).map(|j| x[(i, j)] * model.weights[(j, l)]).sum::<f64>())
                .collect()
        })
        .collect();
    let labels = scores.iter().map(|r| r.iter().map(|&s| s >= 0.5).collect()).collect();
    Ok((labels, scores))
}

/// Micro-averaged scores over every (row, label) entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Ratios with a zero denominator are reported as 0.
pub fn classification_metrics(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Classification {
    let (mut tp, mut fp, mut fn_, mut total) = (0usize, 0usize, 0usize, 0usize);
    for (p_row, t_row) in pred.iter().zip(truth) {
        for (&p, &t) in p_row.iter().zip(t_row) {
            total += 1;
            match (p, t) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Classification {
        precision,
        recall,
        f1,
        accuracy: ratio(total - fp - fn_, total),
    }
}

/// K-fold cross-validation over a seeded shuffle; predictions from every
/// held-out fold are pooled before scoring.
pub fn cross_validate_ridge(
    features: &[Vec<f64>],
    labels: &[Vec<bool>],
    lambda: f64,
    folds: usize,
    seed: u64,
) -> Result<Classification, EvalError> {
    let n = features.len();
    if folds < 2 || folds > n {
        return Err(EvalError::Invalid(format!("cannot split {n} rows into {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(rng::derive_seed(seed, "cv-shuffle"), 0));
    let mut pred = vec![Vec::new(); n];
    for k in 0..folds {
        let (test, train): (Vec<(usize, usize)>, Vec<(usize, usize)>) =
            order.iter().copied().enumerate().partition(|(pos, _)| pos % folds == k);
        let test: Vec<usize> = test.into_iter().map(|(_, i)| i).collect();
        let train: Vec<usize> = train.into_iter().map(|(_, i)| i).collect();
        let pick = |rows: &[usize]| -> (Vec<Vec<f64>>, Vec<Vec<bool>>) {
            (
                rows.iter().map(|&i| features[i].clone()).collect(),
                rows.iter().map(|&i| labels[i].clone()).collect(),
            )
        };
        let (xtr, ytr) = pick(&train);
        let model = ridge_fit(&xtr, &ytr, lambda)?;
        let (xte, _) = pick(&test);
        let (p, _) = ridge_predict(&model, &xte)?;
        for (i, row) in test.into_iter().zip(p) {
            pred[i] = row;
        }
    }
    Ok(classification_metrics(&pred, labels))
}

/// Nodes at the greatest (uncapped) depth of the network.
pub fn final_layer(net: &BayesNet) -> Vec<usize> {
    let mut depth = vec![1usize; net.len()];
    for (i, node) in net.nodes().iter().enumerate() {
        depth[i] = 1 + node.parents.iter().map(|p| depth[p.0]).max().unwrap_or(0);
    }
    let max = depth.iter().copied().max().unwrap_or(0);
    (0..net.len()).filter(|&i| depth[i] == max).collect()
}

/// Labelled evidence sets for the node-classification task: evidence on a
/// random subset of the non-final-layer nodes of a prior sample, labels the
/// sample's final-layer states.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationData {
    pub evidence: Vec<Evidence>,
    pub labels: Vec<Vec<bool>>,
    pub label_nodes: Vec<usize>,
}

pub fn classification_data(net: &BayesNet, n_cases: usize, seed: u64) -> Result<ClassificationData, EvalError> {
    let label_nodes = final_layer(net);
    let inputs: Vec<usize> = (0..net.len()).filter(|i| !label_nodes.contains(i)).collect();
    if inputs.is_empty() {
        return Err(EvalError::Invalid("network has a single layer".into()));
    }
    let base = rng::derive_seed(seed, "classification");
    let mut evidence = Vec::with_capacity(n_cases);
    let mut labels = Vec::with_capacity(n_cases);
    for c in 0..n_cases {
        let mut r = rng::stream(base, c as u64);
        let sample: Assignment = ancestral_sample(net, &mut r);
        let size = r.gen_range(1..=inputs.len());
        let chosen = index::sample(&mut r, inputs.len(), size);
        evidence.push(Evidence::from_pairs(
            chosen.into_iter().map(|k| (inputs[k], sample.get(NodeId(inputs[k])))),
        ));
        labels.push(label_nodes.iter().map(|&i| sample.get(NodeId(i))).collect());
    }
    Ok(ClassificationData {
        evidence,
        labels,
        label_nodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureComparison {
    pub embedding: Classification,
    pub raw: Classification,
}

/// Cross-validated ridge classification from embeddings versus from the raw
/// evidence encodings of the same cases.
pub fn compare_features(
    model: &Marginaliser,
    data: &ClassificationData,
    lambda: f64,
    folds: usize,
    seed: u64,
) -> Result<FeatureComparison, EvalError> {
    let n = model.n_nodes();
    let raw: Vec<Vec<f64>> = data.evidence.iter().map(|e| encode(e, n).to_input()).collect();
    let emb = data
        .evidence
        .iter()
        .map(|e| model.extract_embedding(&encode(e, n)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureComparison {
        embedding: cross_validate_ridge(&emb, &data.labels, lambda, folds, seed)?,
        raw: cross_validate_ridge(&raw, &data.labels, lambda, folds, seed)?,
    })
}

/// CSV `case_id,dim_0..dim_{D-1}`.
pub fn embedding_csv(ids: &[usize], embeddings: &[Vec<f64>]) -> Result<String, EvalError> {
    let d = embeddings.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["case_id".to_string()];
    header.extend((0..d).map(|k| format!("dim_{k}")));
    w.write_record(&header)?;
    for (id, e) in ids.iter().zip(embeddings) {
        let mut rec = vec![id.to_string()];
        rec.extend(e.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

/// CSV `case_id,pc1,pc2`.
pub fn projection_csv(ids: &[usize], coords: &[[f64; 2]]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["case_id", "pc1", "pc2"])?;
    for (id, c) in ids.iter().zip(coords) {
        w.write_record([id.to_string(), c[0].to_string(), c[1].to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}
