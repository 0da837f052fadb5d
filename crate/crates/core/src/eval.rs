//! Downstream evaluation of frozen embeddings: a softmax linear probe for
//! node classification and k-means for clustering, with their metrics.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{glorot_init, AdamState, Tape};
use crate::rng::{stream, streams};
use crate::sparse::DenseMask;
use crate::{Error, Matrix, Result};

/// Label partition sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SplitSpec {
    /// Fixed validation and test counts and `floor(train_fraction · n)`
    /// training nodes, capped by the nodes the held-out sets leave.
    Fixed {
        train_fraction: f64,
        n_val: usize,
        n_test: usize,
    },
    /// Every partition is a floored fraction of the node count.
    Fractional {
        train_fraction: f64,
        val_fraction: f64,
        test_fraction: f64,
    },
}

impl SplitSpec {
    pub const FIXED_HELD_OUT: usize = 1000;
    pub const SMALL_HELD_OUT_FRACTION: f64 = 0.1;

    /// 1000 validation and 1000 test nodes when the graph has more than
    /// 2000 nodes, otherwise 10% each.
    pub fn for_size(n: usize, train_fraction: f64) -> Self {
        if n > 2 * Self::FIXED_HELD_OUT {
            SplitSpec::Fixed {
                train_fraction,
                n_val: Self::FIXED_HELD_OUT,
                n_test: Self::FIXED_HELD_OUT,
            }
        } else {
            SplitSpec::Fractional {
                train_fraction,
                val_fraction: Self::SMALL_HELD_OUT_FRACTION,
                test_fraction: Self::SMALL_HELD_OUT_FRACTION,
            }
        }
    }

    pub fn train_fraction(&self) -> f64 {
        match *self {
            SplitSpec::Fixed { train_fraction, .. } | SplitSpec::Fractional { train_fraction, .. } => train_fraction,
        }
    }

    /// `(train, val, test)` counts for `n` nodes.
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize)> {
        let fraction_ok = |f: f64| f > 0.0 && f < 1.0;
        let counts = match *self {
            SplitSpec::Fixed {
                train_fraction,
                n_val,
                n_test,
            } => {
                if !fraction_ok(train_fraction) {
                    return Err(Error::InvalidConfig(format!("train fraction {train_fraction} outside (0, 1)")));
                }
                // the training share shrinks to what the held-out sets leave
                let rest = n.saturating_sub(n_val + n_test);
                (floor_count(train_fraction, n).min(rest), n_val, n_test)
            }
            SplitSpec::Fractional {
                train_fraction,
                val_fraction,
                test_fraction,
            } => {
                if ![train_fraction, val_fraction, test_fraction].into_iter().all(fraction_ok) {
                    return Err(Error::InvalidConfig(format!(
                        "split fractions {train_fraction}/{val_fraction}/{test_fraction} outside (0, 1)"
                    )));
                }
                (
                    floor_count(train_fraction, n),
                    floor_count(val_fraction, n),
                    floor_count(test_fraction, n),
                )
            }
        };
        let (train, val, test) = counts;
        if train == 0 || val == 0 || test == 0 || train + val + test > n {
            return Err(Error::Infeasible(format!(
                "cannot split {n} nodes into {train} train, {val} validation and {test} test"
            )));
        }
        Ok(counts)
    }
}

fn floor_count(fraction: f64, n: usize) -> usize {
    libm::floor(fraction * n as f64) as usize
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with the split stream of `seed` and cuts it into
/// train, validation and test; the remainder is unused.
pub fn split(n: usize, spec: &SplitSpec, seed: u64) -> Result<Split> {
    let (train, val, test) = spec.counts(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, streams::SPLIT));
    Ok(Split {
        train: order[..train].to_vec(),
        val: order[train..train + val].to_vec(),
        test: order[train + val..train + val + test].to_vec(),
    })
}

/// Multinomial logistic regression `softmax(z W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    pub weight: Matrix,
    pub bias: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeConfig {
    pub lr: f64,
    pub steps: usize,
    pub weight_decay: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            steps: 300,
            weight_decay: 1e-4,
        }
    }
}

fn check_labels(z: &Matrix, labels: &[usize], classes: usize) -> Result<()> {
    if z.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "labels",
            lhs: z.shape(),
            rhs: (labels.len(), 1),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::InvalidConfig(format!("label {bad} outside 0..{classes}")));
    }
    Ok(())
}

impl LinearClassifier {
    /// Full-batch Adam on mean cross-entropy plus `weight_decay/2 · ‖W‖²`.
    /// The parameters of the step with the best validation Macro-F1 are
    /// kept (earliest on ties).
    pub fn fit(
        train: (&Matrix, &[usize]),
        val: (&Matrix, &[usize]),
        classes: usize,
        config: &ProbeConfig,
        seed: u64,
    ) -> Result<Self> {
        let (z, y) = train;
        check_labels(z, y, classes)?;
        check_labels(val.0, val.1, classes)?;
        let mut present = vec![false; classes];
        y.iter().for_each(|&c| present[c] = true);
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::InvalidConfig("training labels need at least two classes".into()));
        }
        let mut rng = stream(seed, streams::CLASSIFIER);
        let mut params = vec![glorot_init(z.cols(), classes, &mut rng), Matrix::zeros(1, classes)];
        let mut adam = AdamState::new(&params);
        let mut all = DenseMask::new(y.len(), classes);
        let mut target = DenseMask::new(y.len(), classes);
        for (i, &c) in y.iter().enumerate() {
            for k in 0..classes {
                all.set(i, k, true);
            }
            target.set(i, c, true);
        }
        let (all, target) = (Rc::new(all), Rc::new(target));

        let mut best = Self {
            weight: params[0].clone(),
            bias: params[1].clone(),
        };
        let mut best_f1 = macro_f1(val.1, &best.predict(val.0)?, classes)?;
        for _ in 0..config.steps {
            let mut tape = Tape::new();
            let x = tape.constant(z.clone());
            let w = tape.param(params[0].clone());
            let b = tape.param(params[1].clone());
            let xw = tape.matmul(x, w)?;
            let logits = tape.add_row_bias(xw, b)?;
            let lse = tape.masked_log_sum_exp(logits, all.clone())?;
            let picked = tape.masked_log_sum_exp(logits, target.clone())?;
            let picked = tape.scale(picked, -1.0);
            let nll = tape.add(lse, picked)?;
            let nll = tape.sum(nll);
            let nll = tape.scale(nll, 1.0 / y.len() as f64);
            let w2 = tape.mul(w, w)?;
            let w2 = tape.sum(w2);
            let penalty = tape.scale(w2, 0.5 * config.weight_decay);
            let loss = tape.add(nll, penalty)?;
            tape.backward(loss)?;
            let grads = [tape.grad(w), tape.grad(b)];
            adam.step(&mut params, &grads, config.lr)?;
            let candidate = Self {
                weight: params[0].clone(),
                bias: params[1].clone(),
            };
            let f1 = macro_f1(val.1, &candidate.predict(val.0)?, classes)?;
            if f1 > best_f1 {
                best_f1 = f1;
                best = candidate;
            }
        }
        Ok(best)
    }

    pub fn classes(&self) -> usize {
        self.weight.cols()
    }

    pub fn predict_proba(&self, z: &Matrix) -> Result<Matrix> {
        let mut logits = z.matmul(&self.weight)?;
        for r in 0..logits.rows() {
            let row = logits.row_mut(r);
            row.iter_mut().zip(self.bias.row(0)).for_each(|(v, b)| *v += b);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v = libm::exp(*v - max));
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
        }
        Ok(logits)
    }

    /// Arg-max class per row, lowest index on ties.
    pub fn predict(&self, z: &Matrix) -> Result<Vec<usize>> {
        let p = self.predict_proba(z)?;
        Ok((0..p.rows()).map(|r| argmax(p.row(r))).collect())
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// `counts[true][pred]`.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    if truth.len() != predicted.len() {
        return Err(Error::ShapeMismatch {
            op: "confusion_matrix",
            lhs: (truth.len(), 1),
            rhs: (predicted.len(), 1),
        });
    }
    let mut counts = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= classes || p >= classes {
            return Err(Error::InvalidConfig(format!("label pair ({t}, {p}) outside 0..{classes}")));
        }
        counts[t][p] += 1;
    }
    Ok(counts)
}

/// Unweighted mean over all `classes` of per-class F1; a class with no
/// support and no predictions scores 0.
pub fn macro_f1(truth: &[usize], predicted: &[usize], classes: usize) -> Result<f64> {
    let cm = confusion_matrix(truth, predicted, classes)?;
    if truth.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let mut total = 0.0;
    for c in 0..classes {
        let tp = cm[c][c] as f64;
        let support: usize = cm[c].iter().sum();
        let predicted_c: usize = cm.iter().map(|row| row[c]).sum();
        let denom = (support + predicted_c) as f64;
        if denom > 0.0 {
            total += 2.0 * tp / denom;
        }
    }
    Ok(total / classes as f64)
}

/// For single-label data this is accuracy.
pub fn micro_f1(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::ShapeMismatch {
            op: "micro_f1",
            lhs: (truth.len(), 1),
            rhs: (predicted.len(), 1),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let hits = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Area under the ROC curve from the rank-sum statistic, ties ranked by
/// their average position.
pub fn binary_auc(is_positive: &[bool], scores: &[f64]) -> Result<f64> {
    if is_positive.len() != scores.len() {
        return Err(Error::ShapeMismatch {
            op: "binary_auc",
            lhs: (is_positive.len(), 1),
            rhs: (scores.len(), 1),
        });
    }
    let pos = is_positive.iter().filter(|&&p| p).count();
    let neg = is_positive.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidConfig("AUC needs both positives and negatives".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (1-based start+1..=end) share their mean
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        rank_sum += mean_rank * order[start..end].iter().filter(|&&i| is_positive[i]).count() as f64;
        start = end;
    }
    let pos_f = pos as f64;
    Ok((rank_sum - pos_f * (pos_f + 1.0) / 2.0) / (pos_f * neg as f64))
}

/// One-vs-rest AUC per class, averaged over classes that have both
/// positives and negatives in `truth`.
pub fn macro_auc(truth: &[usize], probabilities: &Matrix) -> Result<f64> {
    if probabilities.rows() != truth.len() {
        return Err(Error::ShapeMismatch {
            op: "macro_auc",
            lhs: probabilities.shape(),
            rhs: (truth.len(), 1),
        });
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for c in 0..probabilities.cols() {
        let is_pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        if is_pos.iter().all(|&p| p) || !is_pos.iter().any(|&p| p) {
            continue;
        }
        let scores: Vec<f64> = (0..truth.len()).map(|r| probabilities.get(r, c)).collect();
        total += binary_auc(&is_pos, &scores)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidConfig("AUC needs at least two classes in the labels".into()));
    }
    Ok(total / used as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassificationScores {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub auc: f64,
}

pub fn classify_metrics(
    classifier: &LinearClassifier,
    z: &Matrix,
    truth: &[usize],
) -> Result<ClassificationScores> {
    let proba = classifier.predict_proba(z)?;
    let predicted: Vec<usize> = (0..proba.rows()).map(|r| argmax(proba.row(r))).collect();
    Ok(ClassificationScores {
        macro_f1: macro_f1(truth, &predicted, classifier.classes())?,
        micro_f1: micro_f1(truth, &predicted)?,
        auc: macro_auc(truth, &proba)?,
    })
}

/// Splits, fits a probe on the training share and scores the test share.
pub fn classify_once(
    z: &Matrix,
    labels: &[usize],
    classes: usize,
    spec: &SplitSpec,
    probe: &ProbeConfig,
    seed: u64,
) -> Result<ClassificationScores> {
    check_labels(z, labels, classes)?;
    let s = split(z.rows(), spec, seed)?;
    let pick = |idx: &[usize]| (z.select_rows(idx), idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    let (z_train, y_train) = pick(&s.train);
    let (z_val, y_val) = pick(&s.val);
    let (z_test, y_test) = pick(&s.test);
    let clf = LinearClassifier::fit((&z_train, &y_train), (&z_val, &y_val), classes, probe, seed)?;
    classify_metrics(&clf, &z_test, &y_test)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_plus_plus<R: Rng + ?Sized>(z: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = z.rows();
    let mut centroids = Matrix::zeros(k, z.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(z.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| squared_distance(z.row(i), z.row(first))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(z.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(z.row(i), centroids.row(c)));
        }
    }
    centroids
}

fn assign(z: &Matrix, centroids: &Matrix, assignments: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, slot) in assignments.iter_mut().enumerate() {
        let mut best = (0, f64::INFINITY);
        for c in 0..centroids.rows() {
            let d = squared_distance(z.row(i), centroids.row(c));
            if d < best.1 {
                best = (c, d);
            }
        }
        *slot = best.0;
        inertia += best.1;
    }
    inertia
}

const LLOYD_MAX_ITERS: usize = 300;

fn lloyd<R: Rng + ?Sized>(z: &Matrix, k: usize, rng: &mut R) -> KMeansResult {
    let n = z.rows();
    let mut centroids = kmeans_plus_plus(z, k, rng);
    let mut assignments = vec![usize::MAX; n];
    let mut next = vec![0; n];
    let mut inertia = assign(z, &centroids, &mut next);
    for _ in 0..LLOYD_MAX_ITERS {
        if next == assignments {
            break;
        }
        assignments.copy_from_slice(&next);
        let mut sums = Matrix::zeros(k, z.cols());
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            sums.row_mut(c).iter_mut().zip(z.row(i)).for_each(|(s, v)| *s += v);
        }
        #[allow(clippy::needless_range_loop)]
        for c in 0..k {
            if counts[c] == 0 {
                // empty cluster: move it onto the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = squared_distance(z.row(a), centroids.row(assignments[a]));
                        let db = squared_distance(z.row(b), centroids.row(assignments[b]));
                        da.total_cmp(&db)
                    })
                    .expect("n >= k >= 1");
                centroids.row_mut(c).copy_from_slice(z.row(far));
            } else {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        inertia = assign(z, &centroids, &mut next);
    }
    KMeansResult {
        assignments: next,
        centroids,
        inertia,
    }
}

/// Lloyd's algorithm from k-means++ seeds, best inertia over `restarts`.
pub fn kmeans(z: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k-means needs k >= 2, got {k}")));
    }
    if k > z.rows() {
        return Err(Error::Infeasible(format!("k = {k} exceeds {} points", z.rows())));
    }
    if restarts == 0 {
        return Err(Error::InvalidConfig("k-means needs at least one restart".into()));
    }
    let mut rng = stream(seed, streams::KMEANS);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts {
        let run = lloyd(z, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Contingency table between two labelings; ids are compacted first.
fn contingency(a: &[usize], b: &[usize]) -> Result<Vec<Vec<f64>>> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op: "contingency",
            lhs: (a.len(), 1),
            rhs: (b.len(), 1),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("labelings"));
    }
    let compact = |xs: &[usize]| {
        let mut ids: Vec<usize> = xs.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mapped: Vec<usize> = xs.iter().map(|x| ids.binary_search(x).expect("present")).collect();
        (mapped, ids.len())
    };
    let (a, ka) = compact(a);
    let (b, kb) = compact(b);
    let mut table = vec![vec![0.0; kb]; ka];
    for (&i, &j) in a.iter().zip(&b) {
        table[i][j] += 1.0;
    }
    Ok(table)
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts.filter(|&c| c > 0.0).map(|c| -(c / n) * libm::log(c / n)).sum()
}

/// Mutual information over the arithmetic mean of the two entropies. Two
/// single-cluster labelings score 1.
pub fn nmi(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    let table = contingency(truth, predicted)?;
    let n = truth.len() as f64;
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..table[0].len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let h_true = entropy(rows.iter().copied(), n);
    let h_pred = entropy(cols.iter().copied(), n);
    if h_true == 0.0 && h_pred == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0.0 {
                mi += (c / n) * libm::log(c * n / (rows[i] * cols[j]));
            }
        }
    }
    let denom = 0.5 * (h_true + h_pred);
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn pairs(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Returns 1 when both labelings are trivial in the
/// same way (the expected and maximum indices coincide).
pub fn ari(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    let table = contingency(truth, predicted)?;
    let n = truth.len() as f64;
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..table[0].len())
        .map(|j| pairs(table.iter().map(|r| r[j]).sum()))
        .sum();
    let expected = rows * cols / pairs(n);
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterScores {
    pub nmi: f64,
    pub ari: f64,
}

pub fn cluster_metrics(assignments: &[usize], truth: &[usize]) -> Result<ClusterScores> {
    Ok(ClusterScores {
        nmi: nmi(truth, assignments)?,
        ari: ari(truth, assignments)?,
    })
}

/// k-means restarts used per clustering run.
pub const KMEANS_RESTARTS: usize = 10;

/// Clusters `z` into `k` groups and scores them against `labels`.
pub fn cluster_once(z: &Matrix, labels: &[usize], k: usize, seed: u64) -> Result<ClusterScores> {
    if z.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "cluster_once",
            lhs: z.shape(),
            rhs: (labels.len(), 1),
        });
    }
    let result = kmeans(z, k, KMEANS_RESTARTS, seed)?;
    cluster_metrics(&result.assignments, labels)
}

/// Mean and population standard deviation over runs.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("metric values"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: libm::sqrt(var),
            runs: values.len(),
        })
    }
}

/// Summaries of whichever metrics were computed.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub macro_f1: Option<MetricSummary>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub micro_f1: Option<MetricSummary>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub auc: Option<MetricSummary>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub nmi: Option<MetricSummary>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub ari: Option<MetricSummary>,
}

impl EvalReport {
    /// Checks every metric mean lies in its range.
    pub fn check_ranges(&self) -> Result<()> {
        let unit = [("macro_f1", self.macro_f1), ("micro_f1", self.micro_f1), ("auc", self.auc), ("nmi", self.nmi)];
        for (name, m) in unit {
            if let Some(m) = m {
                if !(0.0..=1.0).contains(&m.mean) {
                    return Err(Error::InvalidConfig(format!("{name} mean {} outside [0, 1]", m.mean)));
                }
            }
        }
        if let Some(m) = self.ari {
            if !(-1.0..=1.0).contains(&m.mean) {
                return Err(Error::InvalidConfig(format!("ari mean {} outside [-1, 1]", m.mean)));
            }
        }
        Ok(())
    }

    /// Merges the metrics present in `other` into `self`.
    pub fn merge(mut self, other: EvalReport) -> Self {
        self.macro_f1 = other.macro_f1.or(self.macro_f1);
        self.micro_f1 = other.micro_f1.or(self.micro_f1);
        self.auc = other.auc.or(self.auc);
        self.nmi = other.nmi.or(self.nmi);
        self.ari = other.ari.or(self.ari);
        self
    }
}

/// Classification over `seeds`, one split and probe per seed.
pub fn evaluate_classification(
    z: &Matrix,
    labels: &[usize],
    classes: usize,
    spec: &SplitSpec,
    probe: &ProbeConfig,
    seeds: &[u64],
) -> Result<EvalReport> {
    let runs = seeds
        .iter()
        .map(|&s| classify_once(z, labels, classes, spec, probe, s))
        .collect::<Result<Vec<_>>>()?;
    let summary = |f: fn(&ClassificationScores) -> f64| MetricSummary::from_values(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(EvalReport {
        macro_f1: Some(summary(|r| r.macro_f1)?),
        micro_f1: Some(summary(|r| r.micro_f1)?),
        auc: Some(summary(|r| r.auc)?),
        ..EvalReport::default()
    })
}

/// Clustering over `seeds`, each run with [`KMEANS_RESTARTS`] restarts.
pub fn evaluate_clustering(z: &Matrix, labels: &[usize], k: usize, seeds: &[u64]) -> Result<EvalReport> {
    let runs = seeds
        .iter()
        .map(|&s| cluster_once(z, labels, k, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        nmi: Some(MetricSummary::from_values(&runs.iter().map(|r| r.nmi).collect::<Vec<_>>())?),
        ari: Some(MetricSummary::from_values(&runs.iter().map(|r| r.ari).collect::<Vec<_>>())?),
        ..EvalReport::default()
    })
}
