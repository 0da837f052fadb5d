//! Multi-scale meta-path encoder.
//!
//! For each initial meta-path the encoder builds one view of the target
//! nodes:
//!
//! 1. every node type used by a view is projected into a shared hidden
//!    space, `h = ELU(x W_type + b_type)`;
//! 2. each target node attends over its direct (one-hop) neighbors along
//!    the path's first relation, with LeakyReLU logits over `[h_i || h_j]`
//!    normalized over the actual neighbor set, and `h_oh = ELU(Σ ζ h_j)`;
//! 3. a one-layer GCN encodes the target features over the initial and the
//!    expanded meta-path subgraphs, `ELU(Â H W)` with the renormalized
//!    adjacency Â;
//! 4. a shared scale attention mixes the two GCN outputs with weights that
//!    sum to one, giving `h_agg`;
//! 5. the view embedding is `[h_oh || h_agg]`.
//!
//! A semantic attention with its own parameters fuses the views into the
//! final embedding `Z`.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{glorot_init, Bindings, ParamId, ParamStore, Tape, Var};
use crate::hin::{HeteroGraph, NodeTypeId};
use crate::metapath::{expanded_adjacency, metapath_adjacency, MetaPath, MetaPathSubgraph};
use crate::sparse::{CsrMatrix, DenseMask};
use crate::{Error, Matrix, Result};

/// Which parts of the encoder are wired in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderShape {
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub leaky_slope: f64,
    /// Direct-neighbor attention half of each view embedding.
    pub direct: bool,
    /// Expanded-subgraph GCN and the scale attention.
    pub expanded: bool,
    /// Bilinear discriminator used by the global contrast term.
    pub discriminator: bool,
}

impl EncoderShape {
    pub fn view_dim(&self) -> usize {
        if self.direct {
            2 * self.hidden_dim
        } else {
            self.hidden_dim
        }
    }
}

/// Graph structure a view needs, computed once per graph.
#[derive(Clone, Debug)]
pub struct ViewStructure {
    pub metapath: MetaPath,
    pub direct_type: NodeTypeId,
    pub direct_mask: Rc<DenseMask>,
    pub initial: MetaPathSubgraph,
    pub expanded: MetaPathSubgraph,
    pub initial_propagation: Rc<CsrMatrix>,
    pub expanded_propagation: Rc<CsrMatrix>,
}

impl ViewStructure {
    pub fn new(graph: &HeteroGraph, metapath: &MetaPath) -> Result<Self> {
        let initial = metapath_adjacency(graph, metapath)?;
        let expanded = expanded_adjacency(graph, metapath)?;
        let first = metapath.steps()[0];
        let direct = graph.relation(first.relation)?.oriented(first.reversed);
        Ok(Self {
            metapath: metapath.clone(),
            direct_type: metapath.direct_type(),
            direct_mask: Rc::new(direct.to_mask()),
            initial_propagation: Rc::new(initial.adjacency.gcn_normalized()),
            expanded_propagation: Rc::new(expanded.adjacency.gcn_normalized()),
            initial,
            expanded,
        })
    }
}

pub fn prepare_views(graph: &HeteroGraph, metapaths: &[MetaPath]) -> Result<Vec<ViewStructure>> {
    metapaths.iter().map(|p| ViewStructure::new(graph, p)).collect()
}

/// `W [in x d_a]`, `b [1 x d_a]`, `γ [d_a x 1]` of one attention functional
/// `mean_i tanh(γᵀ(W h_i + b))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub weight: ParamId,
    pub bias: ParamId,
    pub query: ParamId,
}

/// All learnable tensors, held in one registry.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub store: ParamStore,
    pub shape: EncoderShape,
    /// Per node type: `(W [feat x d], b [1 x d])`, only for types a view reads.
    pub type_transform: Vec<Option<(ParamId, ParamId)>>,
    /// Per view: `γ_OH [1 x 2d]`.
    pub direct_attention: Vec<ParamId>,
    /// Per view: GCN weight `[d x d]` for the initial subgraph.
    pub gcn_initial: Vec<ParamId>,
    /// Per view: GCN weight `[d x d]` for the expanded subgraph.
    pub gcn_expanded: Vec<ParamId>,
    /// Shared across views.
    pub scale_attention: Option<AttentionParams>,
    pub semantic_attention: AttentionParams,
    /// `[view_dim x view_dim]`.
    pub discriminator: Option<ParamId>,
}

impl ModelParams {
    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(
        graph: &HeteroGraph,
        views: &[ViewStructure],
        shape: EncoderShape,
        rng: &mut R,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Empty("meta-path views"));
        }
        let d = shape.hidden_dim;
        let da = shape.attention_dim;
        if d == 0 || da == 0 {
            return Err(Error::InvalidConfig(format!("hidden_dim {d} and attention_dim {da} must be positive")));
        }
        let mut store = ParamStore::new();
        let mut type_transform = alloc::vec![None; graph.node_types().len()];
        let mut used: Vec<NodeTypeId> = alloc::vec![graph.target()];
        if shape.direct {
            used.extend(views.iter().map(|v| v.direct_type));
        }
        used.sort();
        used.dedup();
        for t in used {
            let nt = graph.node_type(t)?;
            let w = store.add(format!("transform.{}.weight", nt.name), glorot_init(nt.features.cols(), d, rng));
            let b = store.add(format!("transform.{}.bias", nt.name), Matrix::zeros(1, d));
            type_transform[t.0] = Some((w, b));
        }
        let mut direct_attention = Vec::new();
        let mut gcn_initial = Vec::new();
        let mut gcn_expanded = Vec::new();
        for v in views {
            let name = v.metapath.name();
            if shape.direct {
                direct_attention.push(store.add(format!("direct.{name}.attention"), glorot_init(1, 2 * d, rng)));
            }
            gcn_initial.push(store.add(format!("gcn.{name}.initial"), glorot_init(d, d, rng)));
            if shape.expanded {
                gcn_expanded.push(store.add(format!("gcn.{name}.expanded"), glorot_init(d, d, rng)));
            }
        }
        let mut attention = |store: &mut ParamStore, prefix: &str, input: usize| AttentionParams {
            weight: store.add(format!("{prefix}.weight"), glorot_init(input, da, rng)),
            bias: store.add(format!("{prefix}.bias"), Matrix::zeros(1, da)),
            query: store.add(format!("{prefix}.query"), glorot_init(da, 1, rng)),
        };
        let scale_attention = shape.expanded.then(|| attention(&mut store, "scale_attention", d));
        let semantic_attention = attention(&mut store, "semantic_attention", shape.view_dim());
        let discriminator = shape
            .discriminator
            .then(|| store.add("discriminator", glorot_init(shape.view_dim(), shape.view_dim(), rng)));
        Ok(Self {
            store,
            shape,
            type_transform,
            direct_attention,
            gcn_initial,
            gcn_expanded,
            scale_attention,
            semantic_attention,
            discriminator,
        })
    }
}

/// Tape handles produced for one view.
#[derive(Clone, Copy, Debug)]
pub struct ViewVars {
    /// `[n_target x view_dim]`.
    pub embedding: Var,
    pub direct: Option<Var>,
    /// Direct-neighbor attention coefficients `[n_target x n_direct]`.
    pub direct_attention: Option<Var>,
    pub aggregated: Var,
    /// `(ω_I, ω_E)` as a `1 x 2` row.
    pub scale_weights: Option<Var>,
}

/// Forward pass of the encoder over one graph, bound to a tape.
pub struct Encoder<'a> {
    pub graph: &'a HeteroGraph,
    pub views: &'a [ViewStructure],
    pub params: &'a ModelParams,
    pub bindings: &'a Bindings,
}

impl<'a> Encoder<'a> {
    fn p(&self, id: ParamId) -> Var {
        self.bindings.var(id)
    }

    /// `h = ELU(x W + b)` for every node type that has a transform. With
    /// `target_override`, those rows replace the target type's features.
    pub fn transform_features(&self, tape: &mut Tape, target_override: Option<&Matrix>) -> Result<Vec<Option<Var>>> {
        let mut out = Vec::with_capacity(self.params.type_transform.len());
        for (t, slot) in self.params.type_transform.iter().enumerate() {
            let Some((w, b)) = *slot else {
                out.push(None);
                continue;
            };
            let features = match target_override {
                Some(x) if t == self.graph.target().0 => x.clone(),
                _ => self.graph.node_type(NodeTypeId(t))?.features.clone(),
            };
            let x = tape.constant(features);
            let xw = tape.matmul(x, self.p(w))?;
            let pre = tape.add_row_bias(xw, self.p(b))?;
            out.push(Some(tape.elu(pre)));
        }
        Ok(out)
    }

    /// Attention over direct neighbors; returns `(h_oh, ζ)`. Target nodes
    /// without direct neighbors get a zero row.
    pub fn aggregate_direct(
        &self,
        tape: &mut Tape,
        view: usize,
        h_target: Var,
        h_direct: Var,
    ) -> Result<(Var, Var)> {
        let d = self.params.shape.hidden_dim;
        let gamma = self.p(self.params.direct_attention[view]);
        let gamma_target = tape.slice_cols(gamma, 0, d)?;
        let gamma_neighbor = tape.slice_cols(gamma, d, 2 * d)?;
        let gt = tape.transpose(gamma_target);
        let target_part = tape.matmul(h_target, gt)?;
        let hd_t = tape.transpose(h_direct);
        let neighbor_part = tape.matmul(gamma_neighbor, hd_t)?;
        let logits = tape.outer_add(target_part, neighbor_part)?;
        let logits = tape.leaky_relu(logits, self.params.shape.leaky_slope);
        let zeta = tape.masked_row_softmax(logits, self.views[view].direct_mask.clone())?;
        let mixed = tape.matmul(zeta, h_direct)?;
        Ok((tape.elu(mixed), zeta))
    }

    pub fn gcn_encode(tape: &mut Tape, propagation: Rc<CsrMatrix>, h: Var, weight: Var) -> Result<Var> {
        let hw = tape.matmul(h, weight)?;
        let propagated = tape.sparse_matmul(propagation, hw)?;
        Ok(tape.elu(propagated))
    }

    /// `mean_i tanh(γᵀ(W h_i + b))` as a `1 x 1` tensor.
    fn attention_score(&self, tape: &mut Tape, att: AttentionParams, h: Var) -> Result<Var> {
        let projected = tape.matmul(h, self.p(att.weight))?;
        let projected = tape.add_row_bias(projected, self.p(att.bias))?;
        let scores = tape.matmul(projected, self.p(att.query))?;
        let scores = tape.tanh(scores);
        tape.mean_rows(scores)
    }

    /// Softmax-weighted sum of same-shape inputs; returns `(sum, weights)`
    /// with the weights as a `1 x k` row.
    fn attend(&self, tape: &mut Tape, att: AttentionParams, inputs: &[Var]) -> Result<(Var, Var)> {
        let scores = inputs
            .iter()
            .map(|&h| self.attention_score(tape, att, h))
            .collect::<Result<Vec<_>>>()?;
        let scores = tape.concat_cols(&scores)?;
        let weights = tape.row_softmax(scores);
        let mut acc: Option<Var> = None;
        for (k, &h) in inputs.iter().enumerate() {
            let w = tape.slice_cols(weights, k, k + 1)?;
            let term = tape.mul_scalar(h, w)?;
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        Ok((acc.expect("at least one input"), weights))
    }

    /// Mixes the initial- and expanded-scale encodings; returns
    /// `(h_agg, [ω_I, ω_E])`.
    pub fn fuse_scales(&self, tape: &mut Tape, h_initial: Var, h_expanded: Var) -> Result<(Var, Var)> {
        let att = self
            .params
            .scale_attention
            .ok_or_else(|| Error::InvalidConfig("scale attention is not wired in".into()))?;
        self.attend(tape, att, &[h_initial, h_expanded])
    }

    pub fn build_view_embedding(&self, tape: &mut Tape, view: usize, transformed: &[Option<Var>]) -> Result<ViewVars> {
        let structure = &self.views[view];
        let h_target = transformed[self.graph.target().0].ok_or(Error::Empty("target transform"))?;
        let h_initial = Self::gcn_encode(
            tape,
            structure.initial_propagation.clone(),
            h_target,
            self.p(self.params.gcn_initial[view]),
        )?;
        let (aggregated, scale_weights) = if self.params.shape.expanded {
            let h_expanded = Self::gcn_encode(
                tape,
                structure.expanded_propagation.clone(),
                h_target,
                self.p(self.params.gcn_expanded[view]),
            )?;
            let (agg, w) = self.fuse_scales(tape, h_initial, h_expanded)?;
            (agg, Some(w))
        } else {
            (h_initial, None)
        };
        if !self.params.shape.direct {
            return Ok(ViewVars {
                embedding: aggregated,
                direct: None,
                direct_attention: None,
                aggregated,
                scale_weights,
            });
        }
        let h_direct = transformed[structure.direct_type.0].ok_or(Error::Empty("direct-type transform"))?;
        let (direct, zeta) = self.aggregate_direct(tape, view, h_target, h_direct)?;
        Ok(ViewVars {
            embedding: tape.concat_cols(&[direct, aggregated])?,
            direct: Some(direct),
            direct_attention: Some(zeta),
            aggregated,
            scale_weights,
        })
    }

    /// Every view embedding, optionally with substituted target features.
    pub fn encode(&self, tape: &mut Tape, target_override: Option<&Matrix>) -> Result<Vec<ViewVars>> {
        let transformed = self.transform_features(tape, target_override)?;
        (0..self.views.len())
            .map(|v| self.build_view_embedding(tape, v, &transformed))
            .collect()
    }

    /// Semantic attention over view embeddings; returns `(Z, β)`.
    pub fn fuse_semantic(&self, tape: &mut Tape, views: &[Var]) -> Result<(Var, Var)> {
        if views.is_empty() {
            return Err(Error::Empty("views to fuse"));
        }
        self.attend(tape, self.params.semantic_attention, views)
    }
}

/// Plain-matrix outputs of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    /// Fused `[n_target x view_dim]` embedding.
    pub fused: Matrix,
    pub views: Vec<Matrix>,
    pub semantic_weights: Vec<f64>,
    /// `(ω_I, ω_E)` per view when the expanded scale is wired in.
    pub scale_weights: Vec<(f64, f64)>,
}

/// Runs the encoder without recording gradients for later use.
pub fn embed(graph: &HeteroGraph, views: &[ViewStructure], params: &ModelParams) -> Result<Embeddings> {
    let mut tape = Tape::new();
    let bindings = params.store.bind(&mut tape);
    let encoder = Encoder {
        graph,
        views,
        params,
        bindings: &bindings,
    };
    let out = encoder.encode(&mut tape, None)?;
    let embeddings: Vec<Var> = out.iter().map(|v| v.embedding).collect();
    let (z, beta) = encoder.fuse_semantic(&mut tape, &embeddings)?;
    Ok(Embeddings {
        fused: tape.value(z).clone(),
        views: embeddings.iter().map(|&v| tape.value(v).clone()).collect(),
        semantic_weights: tape.value(beta).row(0).to_vec(),
        scale_weights: out
            .iter()
            .filter_map(|v| v.scale_weights)
            .map(|w| (tape.value(w).get(0, 0), tape.value(w).get(0, 1)))
            .collect(),
    })
}

#[cfg(test)]
mod tests;
