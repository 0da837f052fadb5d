//! Full-batch training of the encoder on the contrastive objective.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;

use crate::autodiff::{AdamState, Tape};
pub use crate::contrastive::GlobalMode;
use crate::contrastive::{build_pair_masks, loss_total, ContrastConfig, PairMasks, PositiveSampling, TapeObjective};
use crate::encoder::{embed, prepare_views, EncoderShape, Embeddings, Encoder, ModelParams, ViewStructure};
use crate::hin::HeteroGraph;
use crate::metapath::{MetaPath, MetaPathSubgraph};
use crate::rng::{stream, streams};
use crate::{Error, Matrix, Result};

/// Model variants: the full model and five ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Variant {
    #[default]
    Full,
    /// Initial-scale GCN only; no expanded subgraph, no scale attention.
    WoExpanded,
    /// View embedding is the aggregated half only (width `d`).
    WoDirect,
    /// `α = 0`.
    WoGlobal,
    /// `α = 1`.
    WoLocal,
    /// The cross-view counterpart is the only positive.
    WoPsamp,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::WoExpanded,
        Variant::WoDirect,
        Variant::WoGlobal,
        Variant::WoLocal,
        Variant::WoPsamp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoExpanded => "wo_expanded",
            Variant::WoDirect => "wo_direct",
            Variant::WoGlobal => "wo_global",
            Variant::WoLocal => "wo_local",
            Variant::WoPsamp => "wo_psamp",
        }
    }

    /// Row name as printed in ablation tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Full => "M2HGCL",
            Variant::WoExpanded => "M2HGCL w/o expanded",
            Variant::WoDirect => "M2HGCL w/o direct",
            Variant::WoGlobal => "M2HGCL w/o global",
            Variant::WoLocal => "M2HGCL w/o local",
            Variant::WoPsamp => "M2HGCL w/o psamp",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Epochs without an improvement of at least `min_delta` before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub tau: f64,
    pub alpha: f64,
    pub global_mode: GlobalMode,
    pub variant: Variant,
    pub leaky_slope: f64,
    /// L2-normalize the rows of the returned embedding.
    pub normalize_output: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            attention_dim: 128,
            lr: 1e-3,
            epochs: 1000,
            patience: 30,
            min_delta: 1e-5,
            seed: 0,
            tau: 0.5,
            alpha: 0.5,
            global_mode: GlobalMode::Corrupted,
            variant: Variant::Full,
            leaky_slope: 0.2,
            normalize_output: false,
        }
    }
}

impl TrainConfig {
    pub fn aminer() -> Self {
        Self {
            hidden_dim: 64,
            lr: 3e-3,
            tau: 0.6,
            alpha: 0.3,
            ..Self::default()
        }
    }

    pub fn acm() -> Self {
        Self {
            hidden_dim: 128,
            lr: 5e-4,
            tau: 0.7,
            alpha: 0.4,
            ..Self::default()
        }
    }

    pub fn freebase() -> Self {
        Self {
            hidden_dim: 64,
            lr: 1e-3,
            tau: 0.4,
            alpha: 0.5,
            ..Self::default()
        }
    }

    /// Preset by dataset name (`aminer`, `acm`, `freebase`).
    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "aminer" => Ok(Self::aminer()),
            "acm" => Ok(Self::acm()),
            "freebase" => Ok(Self::freebase()),
            other => Err(Error::InvalidConfig(format!("no preset for dataset {other:?}"))),
        }
    }

    pub fn with_variant(self, variant: Variant) -> Self {
        Self { variant, ..self }
    }

    pub fn check(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.hidden_dim == 0 || self.attention_dim == 0 {
            return fail("hidden_dim and attention_dim must be positive".into());
        }
        if self.min_delta.is_nan() || self.min_delta < 0.0 {
            return fail(format!("min_delta must be non-negative, got {}", self.min_delta));
        }
        self.contrast().check()
    }

    /// Global-term weight after the variant is applied.
    pub fn effective_alpha(&self) -> f64 {
        match self.variant {
            Variant::WoGlobal => 0.0,
            Variant::WoLocal => 1.0,
            _ => self.alpha,
        }
    }

    pub fn contrast(&self) -> ContrastConfig {
        ContrastConfig {
            tau: self.tau,
            alpha: self.effective_alpha(),
            global_mode: self.global_mode,
        }
    }

    pub fn encoder_shape(&self) -> EncoderShape {
        EncoderShape {
            hidden_dim: self.hidden_dim,
            attention_dim: self.attention_dim,
            leaky_slope: self.leaky_slope,
            direct: self.variant != Variant::WoDirect,
            expanded: self.variant != Variant::WoExpanded,
            discriminator: self.effective_alpha() > 0.0,
        }
    }

    pub fn sampling(&self) -> PositiveSampling {
        if self.variant == Variant::WoPsamp {
            PositiveSampling::CounterpartOnly
        } else {
            PositiveSampling::MetaPathNeighbors
        }
    }
}

/// Everything a training run needs besides the parameters.
pub struct Problem<'g> {
    pub graph: &'g HeteroGraph,
    pub views: Vec<ViewStructure>,
    pub masks: Vec<PairMasks>,
    pub contrast: ContrastConfig,
}

impl<'g> Problem<'g> {
    pub fn new(graph: &'g HeteroGraph, metapaths: &[MetaPath], config: &TrainConfig) -> Result<Self> {
        config.check()?;
        if metapaths.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "the cross-view objective needs at least two meta-paths, got {}",
                metapaths.len()
            )));
        }
        let views = prepare_views(graph, metapaths)?;
        let subgraphs: Vec<&MetaPathSubgraph> = views.iter().map(|v| &v.initial).collect();
        let masks = build_pair_masks(&subgraphs, config.sampling())?;
        Ok(Self {
            graph,
            views,
            masks,
            contrast: config.contrast(),
        })
    }

    pub fn pair_count(&self) -> usize {
        self.masks.len()
    }

    /// Divisor applied to the summed objective: ordered pairs times targets.
    pub fn normalizer(&self) -> f64 {
        (self.pair_count() * self.graph.target_count()) as f64
    }

    /// Target features with rows taken in `permutation` order.
    pub fn corrupted_features(&self, permutation: &[usize]) -> Result<Matrix> {
        let features = &self.graph.node_type(self.graph.target())?.features;
        if permutation.len() != features.rows() {
            return Err(Error::ShapeMismatch {
                op: "corrupted_features",
                lhs: (permutation.len(), 1),
                rhs: features.shape(),
            });
        }
        Ok(features.select_rows(permutation))
    }

    /// Normalized objective at `params`. `corruption` is the shuffled
    /// feature matrix required in corrupted mode when `α > 0`. Returns the
    /// loss and, if requested, one gradient per registered tensor.
    pub fn objective(
        &self,
        params: &ModelParams,
        corruption: Option<&Matrix>,
        with_grads: bool,
    ) -> Result<(f64, Option<Vec<Matrix>>)> {
        let mut tape = Tape::new();
        let bindings = params.store.bind(&mut tape);
        let encoder = Encoder {
            graph: self.graph,
            views: &self.views,
            params,
            bindings: &bindings,
        };
        let clean: Vec<_> = encoder.encode(&mut tape, None)?.iter().map(|v| v.embedding).collect();
        let needs_corruption = self.contrast.alpha > 0.0 && self.contrast.global_mode == GlobalMode::Corrupted;
        let corrupted = if needs_corruption {
            let x = corruption.ok_or(Error::Empty("corrupted target features"))?;
            Some(
                encoder
                    .encode(&mut tape, Some(x))?
                    .iter()
                    .map(|v| v.embedding)
                    .collect::<Vec<_>>(),
            )
        } else {
            None
        };
        let objective = TapeObjective {
            views: &clean,
            corrupted: corrupted.as_deref(),
            discriminator: params.discriminator.map(|id| bindings.var(id)),
            masks: &self.masks,
        };
        let total = loss_total(&mut tape, &objective, &self.contrast)?;
        let loss = tape.scale(total, 1.0 / self.normalizer());
        let value = tape.value(loss).item();
        if !with_grads {
            return Ok((value, None));
        }
        tape.backward(loss)?;
        Ok((value, Some(bindings.grads(&tape))))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub embeddings: Embeddings,
    /// Normalized loss per completed epoch, before that epoch's update.
    pub loss_curve: Vec<f64>,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn embedding(&self) -> &Matrix {
        &self.embeddings.fused
    }
}

fn finish_embeddings(mut e: Embeddings, config: &TrainConfig) -> Embeddings {
    if config.normalize_output {
        e.fused = l2_normalized(&e.fused);
    }
    e
}

pub fn l2_normalized(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>()).max(1e-12);
        row.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

/// Parameters as initialized for `config.seed`, before any update.
pub fn init_params(problem: &Problem<'_>, config: &TrainConfig) -> Result<ModelParams> {
    let mut rng = stream(config.seed, streams::INIT);
    ModelParams::init(problem.graph, &problem.views, config.encoder_shape(), &mut rng)
}

/// Embeddings of the randomly initialized encoder.
pub fn untrained_embeddings(graph: &HeteroGraph, metapaths: &[MetaPath], config: &TrainConfig) -> Result<Embeddings> {
    let problem = Problem::new(graph, metapaths, config)?;
    let params = init_params(&problem, config)?;
    Ok(finish_embeddings(embed(graph, &problem.views, &params)?, config))
}

/// Trains with Adam on the normalized objective. A fresh row shuffle of the
/// target features is drawn every epoch for the corrupted global term.
/// Stops after `patience` epochs without an improvement of `min_delta`.
pub fn train(graph: &HeteroGraph, metapaths: &[MetaPath], config: &TrainConfig) -> Result<TrainOutcome> {
    let problem = Problem::new(graph, metapaths, config)?;
    let mut params = init_params(&problem, config)?;
    let mut adam = AdamState::new(params.store.values());
    let mut corruption_rng = stream(config.seed, streams::CORRUPTION);
    let mut permutation: Vec<usize> = (0..graph.target_count()).collect();
    let needs_corruption = problem.contrast.alpha > 0.0 && problem.contrast.global_mode == GlobalMode::Corrupted;

    let mut loss_curve = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut stopped_early = false;
    for epoch in 0..config.epochs {
        let corruption = if needs_corruption {
            permutation.shuffle(&mut corruption_rng);
            Some(problem.corrupted_features(&permutation)?)
        } else {
            None
        };
        let (loss, grads) = match problem.objective(&params, corruption.as_ref(), true) {
            // NaN reached a log inside the objective
            Err(Error::NonPositiveLog(v)) if v.is_nan() => return Err(Error::NonFiniteLoss { epoch, value: v }),
            other => other?,
        };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, value: loss });
        }
        let grads = grads.expect("gradients requested");
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite gradient for {} at epoch {epoch}",
                params.store.names()[bad]
            )));
        }
        loss_curve.push(loss);
        adam.step(params.store.values_mut(), &grads, config.lr)?;
        if loss < best - config.min_delta {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let embeddings = finish_embeddings(embed(graph, &problem.views, &params)?, config);
    Ok(TrainOutcome {
        params,
        embeddings,
        loss_curve,
        stopped_early,
    })
}

#[cfg(test)]
mod tests;
