//! Feature extraction, cosine-similarity retrieval and linear classifiers.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::math::{dot, log_sum_exp, sigmoid, softplus};
use crate::orsm::{self, OrsmModel, DEFAULT_MF_ITERS, DEFAULT_MF_TOL};

/// Row-major matrix of per-document features in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        if data.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::invalid("feature values must lie in [0, 1]"));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferenceMode {
    /// One scaled bottom-up pass.
    Fast,
    /// Topic means from full mean-field inference.
    MeanField,
}

impl FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(InferenceMode::Fast),
            "mean_field" | "mean-field" => Ok(InferenceMode::MeanField),
            other => Err(Error::invalid(format!("unknown inference mode {other:?}"))),
        }
    }
}

impl fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InferenceMode::Fast => "fast",
            InferenceMode::MeanField => "mean_field",
        })
    }
}

/// Topic features for every document of `corpus`.
pub fn doc_features(model: &OrsmModel, corpus: &Corpus, mode: InferenceMode) -> Result<FeatureMatrix> {
    if corpus.vocab_size() != model.vocab_size() {
        return Err(Error::shape(format!(
            "corpus has K={}, model has K={}",
            corpus.vocab_size(),
            model.vocab_size()
        )));
    }
    let docs: Vec<&Document> = corpus.documents.iter().collect();
    document_features(model, &docs, mode)
}

pub fn document_features(model: &OrsmModel, documents: &[&Document], mode: InferenceMode) -> Result<FeatureMatrix> {
    let k = model.vocab_size();
    let rows: Vec<Vec<f64>> = documents
        .par_iter()
        .map(|d| {
            if d.max_word().is_some_and(|w| w as usize >= k) {
                return Err(Error::shape(format!("document word id exceeds K={k}")));
            }
            let v = d.dense(k);
            match mode {
                InferenceMode::Fast => orsm::fast_infer(model, &v, d.len() as f64),
                InferenceMode::MeanField => {
                    orsm::mean_field_infer(model, &v, DEFAULT_MF_ITERS, DEFAULT_MF_TOL).map(|(mf, _)| mf.mu1)
                }
            }
        })
        .collect::<Result<_>>()?;
    let data = rows.concat();
    FeatureMatrix::new(documents.len(), model.n_hidden(), data)
}

pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("vectors of length {} and {}", x.len(), y.len())));
    }
    let (nx, ny) = (dot(x, x).sqrt(), dot(y, y).sqrt());
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok((dot(x, y) / (nx * ny)).clamp(-1.0, 1.0))
}

/// Mean over relevant ranks `r` of the precision in the top `r`.
pub fn average_precision(relevant: &[bool]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0.0;
    for (i, &rel) in relevant.iter().enumerate() {
        if rel {
            hits += 1;
            total += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::invalid("average precision needs at least one relevant item"));
    }
    Ok(total / hits as f64)
}

/// Recall levels at which averaged precision-recall curves are reported.
pub const RECALL_GRID: [f64; 10] = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];

/// `(recall, precision)` at each relevant rank of one ranking.
pub fn raw_pr_curve(relevant: &[bool]) -> Vec<(f64, f64)> {
    let total = relevant.iter().filter(|&&r| r).count() as f64;
    let mut hits = 0usize;
    let mut out = Vec::new();
    for (i, &rel) in relevant.iter().enumerate() {
        if rel {
            hits += 1;
            out.push((hits as f64 / total, hits as f64 / (i + 1) as f64));
        }
    }
    out
}

/// Precision at the first rank reaching each recall level of [`RECALL_GRID`].
fn grid_precisions(relevant: &[bool]) -> [f64; RECALL_GRID.len()] {
    let raw = raw_pr_curve(relevant);
    let total = raw.len() as f64;
    let mut out = [0.0; RECALL_GRID.len()];
    for (slot, &r) in out.iter_mut().zip(&RECALL_GRID) {
        let needed = ((r * total) - 1e-9).ceil().max(1.0) as usize;
        *slot = raw[needed.min(raw.len()) - 1].1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// `(recall, precision)` at each level of [`RECALL_GRID`].
    pub points: Vec<(f64, f64)>,
    pub average_precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthBucket {
    pub min_len: u32,
    pub max_len: u32,
    pub queries: usize,
    /// Mean AP of the bucket's queries; NaN when none had a relevant item.
    pub mean_ap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    /// Per-label curves averaged over labels.
    pub curve: PrCurve,
    /// AP of each query, relevance meaning "shares at least one label";
    /// `None` when nothing in the database is relevant.
    pub query_ap: Vec<Option<f64>>,
    /// Ten equal-count buckets of queries ordered by length.
    pub length_buckets: Vec<LengthBucket>,
}

/// Database indices ordered by decreasing cosine similarity to `query`,
/// ties to the lower index.
pub fn rank_by_cosine(db: &FeatureMatrix, db_norms: &[f64], query: &[f64]) -> Result<Vec<usize>> {
    let qn = dot(query, query).sqrt();
    if qn == 0.0 {
        return Err(Error::invalid("query has a zero feature vector"));
    }
    let sims: Vec<f64> = (0..db.rows())
        .map(|i| dot(db.row(i), query) / (db_norms[i] * qn))
        .collect();
    let mut order: Vec<usize> = (0..db.rows()).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
    Ok(order)
}

fn shares_label(a: &[u32], b: &[u32]) -> bool {
    a.iter().any(|l| b.contains(l))
}

/// Ranks the database for every query and scores the rankings.
///
/// The averaged curve follows the per-label protocol: for each label, the
/// queries carrying it are scored with "has this label" as relevance, the
/// label's curve is the mean over those queries, and labels are then
/// averaged with equal weight.
pub fn retrieval_eval(
    db_features: &FeatureMatrix,
    db_labels: &[Vec<u32>],
    query_features: &FeatureMatrix,
    query_labels: &[Vec<u32>],
    query_lengths: &[u32],
) -> Result<RetrievalReport> {
    if db_features.cols() != query_features.cols() {
        return Err(Error::shape(format!(
            "database has {} features, queries have {}",
            db_features.cols(),
            query_features.cols()
        )));
    }
    if db_features.rows() == 0 {
        return Err(Error::invalid("empty database"));
    }
    if db_labels.len() != db_features.rows()
        || query_labels.len() != query_features.rows()
        || query_lengths.len() != query_features.rows()
    {
        return Err(Error::shape("label/length lists must match feature rows"));
    }
    let db_norms: Vec<f64> = (0..db_features.rows())
        .map(|i| dot(db_features.row(i), db_features.row(i)).sqrt())
        .collect();
    if db_norms.contains(&0.0) {
        return Err(Error::invalid("database has a zero feature vector"));
    }

    struct QueryResult {
        ap: Option<f64>,
        /// (label, AP, grid precisions) for each label of the query
        per_label: Vec<(u32, f64, [f64; RECALL_GRID.len()])>,
    }

    let results: Vec<QueryResult> = (0..query_features.rows())
        .into_par_iter()
        .map(|q| {
            let order = rank_by_cosine(db_features, &db_norms, query_features.row(q))?;
            let labels = &query_labels[q];
            let shared: Vec<bool> = order.iter().map(|&i| shares_label(labels, &db_labels[i])).collect();
            let ap = average_precision(&shared).ok();
            let mut per_label = Vec::new();
            for &l in labels {
                let rel: Vec<bool> = order.iter().map(|&i| db_labels[i].contains(&l)).collect();
                if let Ok(label_ap) = average_precision(&rel) {
                    per_label.push((l, label_ap, grid_precisions(&rel)));
                }
            }
            Ok(QueryResult { ap, per_label })
        })
        .collect::<Result<_>>()?;

    let max_label = results
        .iter()
        .flat_map(|r| r.per_label.iter().map(|p| p.0))
        .max();
    let n_labels = max_label.map_or(0, |l| l as usize + 1);
    let mut sums = vec![(0usize, 0.0, [0.0; RECALL_GRID.len()]); n_labels];
    for r in &results {
        for &(l, ap, grid) in &r.per_label {
            let s = &mut sums[l as usize];
            s.0 += 1;
            s.1 += ap;
            for (acc, p) in s.2.iter_mut().zip(grid) {
                *acc += p;
            }
        }
    }
    let active: Vec<_> = sums.iter().filter(|s| s.0 > 0).collect();
    if active.is_empty() {
        return Err(Error::invalid("no query has a relevant database document"));
    }
    let n_active = active.len() as f64;
    let mean_ap = active.iter().map(|s| s.1 / s.0 as f64).sum::<f64>() / n_active;
    let points = RECALL_GRID
        .iter()
        .enumerate()
        .map(|(g, &r)| (r, active.iter().map(|s| s.2[g] / s.0 as f64).sum::<f64>() / n_active))
        .collect();

    let query_ap: Vec<Option<f64>> = results.iter().map(|r| r.ap).collect();
    let length_buckets = length_deciles(query_lengths, &query_ap);
    Ok(RetrievalReport {
        curve: PrCurve {
            points,
            average_precision: mean_ap,
        },
        query_ap,
        length_buckets,
    })
}

/// Splits queries into ten equal-count buckets by length (ties by index).
pub fn length_deciles(lengths: &[u32], ap: &[Option<f64>]) -> Vec<LengthBucket> {
    let q = lengths.len();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by_key(|&i| (lengths[i], i));
    let mut buckets = Vec::new();
    for b in 0..10 {
        let lo = b * q / 10;
        let hi = (b + 1) * q / 10;
        if lo == hi {
            continue;
        }
        let members = &order[lo..hi];
        let aps: Vec<f64> = members.iter().filter_map(|&i| ap[i]).collect();
        buckets.push(LengthBucket {
            min_len: lengths[members[0]],
            max_len: lengths[*members.last().unwrap()],
            queries: members.len(),
            mean_ap: if aps.is_empty() {
                f64::NAN
            } else {
                aps.iter().sum::<f64>() / aps.len() as f64
            },
        });
    }
    buckets
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierMode {
    /// One softmax over classes; every example has exactly one label.
    Multinomial,
    /// An independent logistic regression per label.
    IndependentBinary,
}

impl FromStr for ClassifierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial" => Ok(ClassifierMode::Multinomial),
            "binary" | "independent_binary" => Ok(ClassifierMode::IndependentBinary),
            other => Err(Error::invalid(format!("unknown classifier mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierHyper {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_iters: usize,
    /// Stop when the largest gradient component falls below this.
    pub grad_tol: f64,
}

impl Default for ClassifierHyper {
    fn default() -> Self {
        ClassifierHyper {
            learning_rate: 1.0,
            l2: 1e-4,
            max_iters: 2000,
            grad_tol: 1e-5,
        }
    }
}

/// Linear scores `W x + c` for each output. `weights` holds one row of
/// `n_features + 1` values per output, the last being the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub mode: ClassifierMode,
    pub n_outputs: usize,
    pub n_features: usize,
    pub weights: Vec<f64>,
}

impl LinearClassifier {
    pub fn zeros(mode: ClassifierMode, n_outputs: usize, n_features: usize) -> Self {
        LinearClassifier {
            mode,
            n_outputs,
            n_features,
            weights: vec![0.0; n_outputs * (n_features + 1)],
        }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        linear_logits(&self.weights, self.n_outputs, x)
    }

    /// Class probabilities (multinomial) or per-label probabilities.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.logits(x);
        match self.mode {
            ClassifierMode::Multinomial => {
                crate::math::softmax_in_place(&mut z);
            }
            ClassifierMode::IndependentBinary => z.iter_mut().for_each(|s| *s = sigmoid(*s)),
        }
        z
    }
}

fn linear_logits(weights: &[f64], n_outputs: usize, x: &[f64]) -> Vec<f64> {
    let d = x.len() + 1;
    (0..n_outputs)
        .map(|c| {
            let row = &weights[c * d..(c + 1) * d];
            dot(&row[..d - 1], x) + row[d - 1]
        })
        .collect()
}

fn check_targets(features: &FeatureMatrix, labels: &[Vec<u32>], n_outputs: usize, mode: ClassifierMode) -> Result<()> {
    if labels.len() != features.rows() {
        return Err(Error::shape(format!("{} label rows for {} examples", labels.len(), features.rows())));
    }
    if labels.iter().flatten().any(|&l| l as usize >= n_outputs) {
        return Err(Error::invalid("label index out of range"));
    }
    if mode == ClassifierMode::Multinomial && labels.iter().any(|l| l.len() != 1) {
        return Err(Error::invalid("multinomial mode needs exactly one label per example"));
    }
    Ok(())
}

/// Mean cross-entropy plus `l2/2 ‖W‖²` (intercepts unpenalised), and its
/// gradient with respect to `weights`.
pub fn classifier_objective(
    weights: &[f64],
    features: &FeatureMatrix,
    labels: &[Vec<u32>],
    n_outputs: usize,
    mode: ClassifierMode,
    l2: f64,
) -> (f64, Vec<f64>) {
    let d = features.cols() + 1;
    let n = features.rows().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    for i in 0..features.rows() {
        let x = features.row(i);
        let z = linear_logits(weights, n_outputs, x);
        let residual: Vec<f64> = match mode {
            ClassifierMode::Multinomial => {
                let lse = log_sum_exp(&z);
                let y = labels[i][0] as usize;
                loss += lse - z[y];
                (0..n_outputs)
                    .map(|c| (z[c] - lse).exp() - if c == y { 1.0 } else { 0.0 })
                    .collect()
            }
            ClassifierMode::IndependentBinary => (0..n_outputs)
                .map(|c| {
                    let t = if labels[i].contains(&(c as u32)) { 1.0 } else { 0.0 };
                    loss += softplus(z[c]) - t * z[c];
                    sigmoid(z[c]) - t
                })
                .collect(),
        };
        for (c, r) in residual.iter().enumerate() {
            let row = &mut grad[c * d..(c + 1) * d];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += r * xi;
            }
            row[d - 1] += r;
        }
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    for c in 0..n_outputs {
        for f in 0..d - 1 {
            let w = weights[c * d + f];
            loss += 0.5 * l2 * w * w;
            grad[c * d + f] += l2 * w;
        }
    }
    (loss, grad)
}

/// Full-batch gradient descent from zero weights. The step is halved
/// whenever it would increase the objective.
pub fn train_linear_classifier(
    features: &FeatureMatrix,
    labels: &[Vec<u32>],
    n_outputs: usize,
    mode: ClassifierMode,
    hyper: &ClassifierHyper,
) -> Result<LinearClassifier> {
    check_targets(features, labels, n_outputs, mode)?;
    match mode {
        ClassifierMode::Multinomial => {
            let first = labels.first().map(|l| l[0]);
            if n_outputs < 2 || labels.iter().all(|l| Some(l[0]) == first) {
                return Err(Error::invalid("multinomial classification needs at least two distinct classes"));
            }
        }
        ClassifierMode::IndependentBinary => {
            if n_outputs == 0 {
                return Err(Error::invalid("binary classification needs at least one label column"));
            }
        }
    }
    let mut clf = LinearClassifier::zeros(mode, n_outputs, features.cols());
    let mut step = hyper.learning_rate;
    let (mut loss, mut grad) = classifier_objective(&clf.weights, features, labels, n_outputs, mode, hyper.l2);
    for _ in 0..hyper.max_iters {
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < hyper.grad_tol {
            break;
        }
        loop {
            let trial: Vec<f64> = clf.weights.iter().zip(&grad).map(|(w, g)| w - step * g).collect();
            let (l, g) = classifier_objective(&trial, features, labels, n_outputs, mode, hyper.l2);
            if l <= loss || step < 1e-12 {
                clf.weights = trial;
                loss = l;
                grad = g;
                break;
            }
            step *= 0.5;
        }
    }
    Ok(clf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassMetric {
    Accuracy,
    MeanAveragePrecision,
}

impl FromStr for ClassMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(ClassMetric::Accuracy),
            "map" | "mean_average_precision" => Ok(ClassMetric::MeanAveragePrecision),
            other => Err(Error::invalid(format!("unknown metric {other:?}"))),
        }
    }
}

/// Scores a trained classifier. Accuracy counts an example as correct when
/// its highest-scoring output (lowest index on ties) is one of its labels.
/// MAP averages, over label columns with at least one positive, the AP of
/// examples ranked by that column's score.
pub fn classify_eval(clf: &LinearClassifier, features: &FeatureMatrix, labels: &[Vec<u32>], metric: ClassMetric) -> Result<f64> {
    if features.cols() != clf.n_features {
        return Err(Error::shape(format!(
            "classifier expects {} features, got {}",
            clf.n_features,
            features.cols()
        )));
    }
    if labels.len() != features.rows() {
        return Err(Error::shape("one label set per example required"));
    }
    let scores: Vec<Vec<f64>> = (0..features.rows()).map(|i| clf.logits(features.row(i))).collect();
    score_eval(&scores, labels, metric)
}

/// [`classify_eval`] on precomputed per-example scores.
pub fn score_eval(scores: &[Vec<f64>], labels: &[Vec<u32>], metric: ClassMetric) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("no examples to evaluate"));
    }
    match metric {
        ClassMetric::Accuracy => {
            let correct = scores
                .iter()
                .zip(labels)
                .filter(|(s, l)| {
                    let best = (0..s.len()).fold(0, |b, c| if s[c] > s[b] { c } else { b });
                    l.contains(&(best as u32))
                })
                .count();
            Ok(correct as f64 / scores.len() as f64)
        }
        ClassMetric::MeanAveragePrecision => {
            let outputs = scores[0].len();
            let mut aps = Vec::new();
            for c in 0..outputs {
                let mut order: Vec<usize> = (0..scores.len()).collect();
                order.sort_by(|&a, &b| scores[b][c].total_cmp(&scores[a][c]).then(a.cmp(&b)));
                let rel: Vec<bool> = order.iter().map(|&i| labels[i].contains(&(c as u32))).collect();
                if let Ok(ap) = average_precision(&rel) {
                    aps.push(ap);
                }
            }
            if aps.is_empty() {
                return Err(Error::invalid("no label column has a positive example"));
            }
            Ok(aps.iter().sum::<f64>() / aps.len() as f64)
        }
    }
}
