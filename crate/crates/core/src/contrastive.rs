//! Positive sampling and the contrastive objective.
//!
//! For an ordered view pair `(m, n)` and anchor `i`:
//!
//! * the global term scores `h^m_i` and `h^n_i` against the mean-pooled
//!   summary `s^m` with a bilinear discriminator `σ(h W sᵀ)`;
//! * the local term is an InfoNCE loss with cosine similarity whose
//!   positives are the anchor's initial meta-path neighbors in view `m`
//!   plus its counterpart in view `n`.
//!
//! The objective sums `α·global + (1 − α)·local` over ordered pairs with
//! `m ≠ n` and over all target nodes. Two implementations live here: plain
//! per-node reference functions and the vectorized tape version used for
//! training.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::autodiff::{sigmoid, Tape, Var};
use crate::hin::HeteroGraph;
use crate::metapath::{metapath_neighbors, MetaPath, MetaPathSubgraph};
use crate::sparse::DenseMask;
use crate::{Error, Matrix, Result};

/// Probabilities from the discriminator are clamped into
/// `[PROB_FLOOR, 1 - PROB_FLOOR]` before any log.
pub const PROB_FLOOR: f64 = 1e-7;

/// Negatives used by the global term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GlobalMode {
    /// Only the two positive-pair terms.
    Literal,
    /// Adds `-log(1 - D)` terms for embeddings re-encoded from row-shuffled
    /// target features.
    #[default]
    Corrupted,
}

impl GlobalMode {
    pub fn label(self) -> &'static str {
        match self {
            GlobalMode::Literal => "literal",
            GlobalMode::Corrupted => "corrupted",
        }
    }
}

impl fmt::Display for GlobalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for GlobalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(GlobalMode::Literal),
            "corrupted" => Ok(GlobalMode::Corrupted),
            other => Err(Error::InvalidConfig(format!("unknown global mode {other:?}"))),
        }
    }
}

/// How positives are drawn for the local term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PositiveSampling {
    /// Initial meta-path neighbors in view `m` plus the counterpart in `n`.
    #[default]
    MetaPathNeighbors,
    /// The counterpart in view `n` only.
    CounterpartOnly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContrastConfig {
    /// Temperature in `(0, 1]`.
    pub tau: f64,
    /// Weight of the global term in `[0, 1]`.
    pub alpha: f64,
    pub global_mode: GlobalMode,
}

impl ContrastConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidConfig(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Positives of one anchor for the ordered view pair `(m, n)`. Members are
/// `(view, node)`; the query `(m, anchor)` itself is never a member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PositiveSet {
    pub anchor: usize,
    pub view_pair: (usize, usize),
    pub members: Vec<(usize, usize)>,
}

impl PositiveSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, view: usize, node: usize) -> bool {
        self.members.contains(&(view, node))
    }
}

fn positives_from_neighbors(
    neighbors: &[usize],
    view_pair: (usize, usize),
    anchor: usize,
    sampling: PositiveSampling,
) -> PositiveSet {
    let (m, n) = view_pair;
    let mut members = Vec::with_capacity(neighbors.len() + 1);
    if sampling == PositiveSampling::MetaPathNeighbors {
        members.extend(neighbors.iter().map(|&j| (m, j)));
    }
    members.push((n, anchor));
    PositiveSet {
        anchor,
        view_pair,
        members,
    }
}

/// Positives of `anchor` when `path_m` is the path of view `m`.
pub fn sample_positives(
    graph: &HeteroGraph,
    path_m: &MetaPath,
    view_pair: (usize, usize),
    anchor: usize,
    sampling: PositiveSampling,
) -> Result<PositiveSet> {
    let neighbors = metapath_neighbors(graph, path_m, anchor)?;
    Ok(positives_from_neighbors(&neighbors, view_pair, anchor, sampling))
}

/// Same as [`sample_positives`] from a precomputed subgraph of view `m`.
pub fn positives_from_subgraph(
    subgraph_m: &MetaPathSubgraph,
    view_pair: (usize, usize),
    anchor: usize,
    sampling: PositiveSampling,
) -> Result<PositiveSet> {
    Ok(positives_from_neighbors(subgraph_m.neighbors(anchor)?, view_pair, anchor, sampling))
}

/// Column mean of a view, `[1 x D]`.
pub fn summary_vector(h: &Matrix) -> Result<Matrix> {
    if h.rows() == 0 || h.cols() == 0 {
        return Err(Error::Empty("view for summary"));
    }
    Ok(h.column_means())
}

/// `σ(h W sᵀ)`.
pub fn discriminate(h: &[f64], s: &[f64], w: &Matrix) -> Result<f64> {
    if w.shape() != (h.len(), s.len()) {
        return Err(Error::ShapeMismatch {
            op: "discriminate",
            lhs: (h.len(), s.len()),
            rhs: w.shape(),
        });
    }
    let mut acc = 0.0;
    for (a, &hv) in h.iter().enumerate() {
        let row = w.row(a);
        acc += hv * row.iter().zip(s).map(|(x, y)| x * y).sum::<f64>();
    }
    Ok(sigmoid(acc))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Global term for anchor `i`. `corrupted` carries the re-encoded
/// `(H̃^m, H̃^n)` and enables the negative terms.
pub fn global_loss_at(
    i: usize,
    h_m: &Matrix,
    h_n: &Matrix,
    w: &Matrix,
    corrupted: Option<(&Matrix, &Matrix)>,
) -> Result<f64> {
    let s = summary_vector(h_m)?;
    let s = s.row(0);
    let mut loss = -libm::log(clamp_prob(discriminate(h_m.row(i), s, w)?))
        - libm::log(clamp_prob(discriminate(h_n.row(i), s, w)?));
    if let Some((c_m, c_n)) = corrupted {
        loss -= libm::log(1.0 - clamp_prob(discriminate(c_m.row(i), s, w)?));
        loss -= libm::log(1.0 - clamp_prob(discriminate(c_n.row(i), s, w)?));
    }
    Ok(loss)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| libm::sqrt(v.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
    crate::matrix::dot(a, b) / (norm(a) * norm(b))
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(values.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

/// Local term for one anchor. `views` holds every view embedding; the pair
/// is read from `positives`.
pub fn local_loss_at(positives: &PositiveSet, views: &[Matrix], tau: f64) -> Result<f64> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
    }
    let (m, n) = positives.view_pair;
    let i = positives.anchor;
    let (h_m, h_n) = (&views[m], &views[n]);
    let query = h_m.row(i);
    let pos: Vec<f64> = positives
        .members
        .iter()
        .map(|&(view, v)| cosine(query, views[view].row(v)) / tau)
        .collect();
    let mut neg = Vec::new();
    for v in 0..h_m.rows() {
        if v != i && !positives.contains(m, v) {
            neg.push(cosine(query, h_m.row(v)) / tau);
        }
    }
    for v in 0..h_n.rows() {
        if !positives.contains(n, v) {
            neg.push(cosine(h_n.row(i), h_n.row(v)) / tau);
        }
    }
    let mut all = pos.clone();
    all.extend(neg);
    Ok(log_sum_exp(&all) - log_sum_exp(&pos))
}

/// Inputs of the plain objective.
pub struct PlainObjective<'a> {
    pub views: &'a [Matrix],
    /// Re-encoded views, required in corrupted mode.
    pub corrupted: Option<&'a [Matrix]>,
    /// Required when `alpha > 0`.
    pub discriminator: Option<&'a Matrix>,
    pub subgraphs: &'a [&'a MetaPathSubgraph],
    pub sampling: PositiveSampling,
}

/// Unnormalized objective summed over ordered pairs and nodes, node by
/// node. Slow; intended as a reference.
pub fn loss_total_plain(objective: &PlainObjective<'_>, config: &ContrastConfig) -> Result<f64> {
    config.check()?;
    let views = objective.views;
    if views.len() < 2 {
        return Err(Error::InvalidConfig("the objective needs at least two views".into()));
    }
    let n_nodes = views[0].rows();
    let mut total = 0.0;
    for (m, n) in ordered_pairs(views.len()) {
        for i in 0..n_nodes {
            let mut term = 0.0;
            if config.alpha > 0.0 {
                let w = objective.discriminator.ok_or(Error::Empty("discriminator"))?;
                let corrupted = match config.global_mode {
                    GlobalMode::Literal => None,
                    GlobalMode::Corrupted => {
                        let c = objective.corrupted.ok_or(Error::Empty("corrupted views"))?;
                        Some((&c[m], &c[n]))
                    }
                };
                term += config.alpha * global_loss_at(i, &views[m], &views[n], w, corrupted)?;
            }
            if config.alpha < 1.0 {
                let p = positives_from_subgraph(objective.subgraphs[m], (m, n), i, objective.sampling)?;
                term += (1.0 - config.alpha) * local_loss_at(&p, views, config.tau)?;
            }
            total += term;
        }
    }
    Ok(total)
}

/// Ordered pairs `(m, n)` with `m ≠ n`, `m` major.
pub fn ordered_pairs(views: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..views).flat_map(move |m| (0..views).filter(move |&n| n != m).map(move |n| (m, n)))
}

/// Positive and denominator masks of the local term for one ordered pair.
///
/// Logit columns are laid out as `[S_mm (n) | counterpart (1) | S_nn (n)]`
/// where `S_xy[i][v] = cos(h^x_i, h^y_v) / τ` and the counterpart column
/// holds `cos(h^m_i, h^n_i) / τ`.
#[derive(Clone, Debug)]
pub struct PairMasks {
    pub pair: (usize, usize),
    pub positive: Rc<DenseMask>,
    pub all: Rc<DenseMask>,
    /// `|ℙ_i|` per anchor.
    pub positive_counts: Vec<usize>,
}

impl PairMasks {
    pub fn new(subgraph_m: &MetaPathSubgraph, pair: (usize, usize), sampling: PositiveSampling) -> Result<Self> {
        let (m, n_view) = pair;
        let n = subgraph_m.node_count();
        let width = 2 * n + 1;
        let mut positive = DenseMask::new(n, width);
        let mut all = DenseMask::new(n, width);
        let mut positive_counts = Vec::with_capacity(n);
        for i in 0..n {
            let set = positives_from_subgraph(subgraph_m, pair, i, sampling)?;
            for &(view, v) in &set.members {
                let col = if view == m {
                    v
                } else if view == n_view && v == i {
                    n
                } else {
                    return Err(Error::InvalidConfig(format!("positive ({view}, {v}) of anchor {i} has no logit column")));
                };
                positive.set(i, col, true);
            }
            positive_counts.push(set.len());
            for v in 0..n {
                if v != i {
                    all.set(i, v, true);
                    all.set(i, n + 1 + v, true);
                }
            }
            all.set(i, n, true);
        }
        Ok(Self {
            pair,
            positive: Rc::new(positive),
            all: Rc::new(all),
            positive_counts,
        })
    }
}

/// Masks for every ordered pair, in [`ordered_pairs`] order.
pub fn build_pair_masks(subgraphs: &[&MetaPathSubgraph], sampling: PositiveSampling) -> Result<Vec<PairMasks>> {
    ordered_pairs(subgraphs.len())
        .map(|(m, n)| PairMasks::new(subgraphs[m], (m, n), sampling))
        .collect()
}

/// Tape handles of the objective's inputs.
pub struct TapeObjective<'a> {
    pub views: &'a [Var],
    pub corrupted: Option<&'a [Var]>,
    pub discriminator: Option<Var>,
    pub masks: &'a [PairMasks],
}

/// `Σ_i global(i)` for one pair as a `1 x 1` tensor.
fn global_sum(tape: &mut Tape, h_m: Var, h_n: Var, w: Var, corrupted: Option<(Var, Var)>) -> Result<Var> {
    let s = tape.mean_rows(h_m)?;
    let s_t = tape.transpose(s);
    let ws = tape.matmul(w, s_t)?;
    let probe = |tape: &mut Tape, h: Var, negative: bool| -> Result<Var> {
        let logits = tape.matmul(h, ws)?;
        let d = tape.sigmoid(logits);
        let d = tape.clamp(d, PROB_FLOOR, 1.0 - PROB_FLOOR);
        let d = if negative {
            let flipped = tape.scale(d, -1.0);
            tape.add_scalar(flipped, 1.0)
        } else {
            d
        };
        let logs = tape.log(d)?;
        Ok(tape.sum(logs))
    };
    let mut acc = probe(tape, h_m, false)?;
    let b = probe(tape, h_n, false)?;
    acc = tape.add(acc, b)?;
    if let Some((c_m, c_n)) = corrupted {
        let a = probe(tape, c_m, true)?;
        let b = probe(tape, c_n, true)?;
        acc = tape.add(acc, a)?;
        acc = tape.add(acc, b)?;
    }
    Ok(tape.scale(acc, -1.0))
}

/// `Σ_i local(i)` for one pair from row-normalized views and their Gram
/// matrices.
fn local_sum(tape: &mut Tape, u: (Var, Var), gram: (Var, Var), masks: &PairMasks, tau: f64) -> Result<Var> {
    let (u_m, u_n) = u;
    let prod = tape.mul(u_m, u_n)?;
    let ones = tape.constant(Matrix::filled(tape.shape(u_m).1, 1, 1.0));
    let counterpart = tape.matmul(prod, ones)?;
    let logits = tape.concat_cols(&[gram.0, counterpart, gram.1])?;
    let logits = tape.scale(logits, 1.0 / tau);
    let lse_all = tape.masked_log_sum_exp(logits, masks.all.clone())?;
    let lse_pos = tape.masked_log_sum_exp(logits, masks.positive.clone())?;
    let neg_pos = tape.scale(lse_pos, -1.0);
    let per_node = tape.add(lse_all, neg_pos)?;
    Ok(tape.sum(per_node))
}

/// Unnormalized objective on the tape, summed over `masks` pairs and all
/// nodes.
pub fn loss_total(tape: &mut Tape, objective: &TapeObjective<'_>, config: &ContrastConfig) -> Result<Var> {
    config.check()?;
    if objective.views.len() < 2 {
        return Err(Error::InvalidConfig("the objective needs at least two views".into()));
    }
    // cosine Gram matrix of each view, shared by every pair that reads it
    let (normalized, grams) = if config.alpha < 1.0 {
        let mut normalized = Vec::with_capacity(objective.views.len());
        let mut grams = Vec::with_capacity(objective.views.len());
        for &v in objective.views {
            let u = tape.l2_normalize_rows(v);
            let u_t = tape.transpose(u);
            grams.push(tape.matmul(u, u_t)?);
            normalized.push(u);
        }
        (normalized, grams)
    } else {
        (vec![], vec![])
    };
    let mut total: Option<Var> = None;
    for masks in objective.masks {
        let (m, n) = masks.pair;
        let mut term: Option<Var> = None;
        if config.alpha > 0.0 {
            let w = objective.discriminator.ok_or(Error::Empty("discriminator"))?;
            let corrupted = match config.global_mode {
                GlobalMode::Literal => None,
                GlobalMode::Corrupted => {
                    let c = objective.corrupted.ok_or(Error::Empty("corrupted views"))?;
                    Some((c[m], c[n]))
                }
            };
            let g = global_sum(tape, objective.views[m], objective.views[n], w, corrupted)?;
            term = Some(tape.scale(g, config.alpha));
        }
        if config.alpha < 1.0 {
            let l = local_sum(tape, (normalized[m], normalized[n]), (grams[m], grams[n]), masks, config.tau)?;
            let l = tape.scale(l, 1.0 - config.alpha);
            term = Some(match term {
                Some(g) => tape.add(g, l)?,
                None => l,
            });
        }
        let term = term.expect("alpha selects at least one term");
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    total.ok_or(Error::Empty("view pairs"))
}
