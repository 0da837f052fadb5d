//! Example graphs: the toy movie network and a planted-partition
//! heterogeneous graph generator.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::hin::{HeteroGraph, NodeType, NodeTypeId, Relation};
use crate::metapath::MetaPath;
use crate::rng::{stream, streams};
use crate::sparse::SparseBool;
use crate::{Error, Matrix, Result};

/// Three movies, three actors, one director and one writer joined by
/// movie-actor, movie-director and movie-writer relations. Movie 3 plays
/// with actors 1 and 3; every movie shares the director.
pub fn toy_movie_graph() -> HeteroGraph {
    let node_type = |name: &str, count: usize| NodeType {
        name: name.to_string(),
        count,
        features: Matrix::identity(count),
    };
    let types = vec![
        node_type("movie", 3),
        node_type("actor", 3),
        node_type("director", 1),
        node_type("writer", 1),
    ];
    let ma = SparseBool::from_edges(3, 3, [(0, 0), (0, 1), (1, 1), (2, 0), (2, 2)]).expect("in range");
    let md = SparseBool::from_edges(3, 1, [(0, 0), (1, 0), (2, 0)]).expect("in range");
    let mw = SparseBool::from_edges(3, 1, [(0, 0), (2, 0)]).expect("in range");
    let rels = vec![
        Relation::new("MA", NodeTypeId(0), NodeTypeId(1), ma),
        Relation::new("MD", NodeTypeId(0), NodeTypeId(2), md),
        Relation::new("MW", NodeTypeId(0), NodeTypeId(3), mw),
    ];
    HeteroGraph::new(types, rels, NodeTypeId(0)).expect("toy graph is valid")
}

/// Parameters of a planted-partition heterogeneous graph.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticSpec {
    pub n_target: usize,
    pub classes: usize,
    /// Node count of each auxiliary type; one 2-hop meta-path per type.
    pub aux_sizes: Vec<usize>,
    /// Target-auxiliary edge probability inside a class block.
    pub p_in: f64,
    /// Target-auxiliary edge probability across class blocks.
    pub p_out: f64,
    /// Standard deviation of the Gaussian feature noise.
    pub feature_noise: f64,
    /// Feature width; columns past `classes` carry noise only.
    pub feature_dim: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 300 target nodes in 3 classes with two auxiliary types.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            n_target: 300,
            classes: 3,
            aux_sizes: vec![150, 60],
            p_in: 0.05,
            p_out: 0.002,
            feature_noise: 0.3,
            feature_dim: 3,
            seed,
        }
    }

    /// Enforces the generator invariants, including `p_in > p_out`.
    pub fn check(&self) -> Result<()> {
        self.check_generatable()?;
        if self.p_in <= self.p_out {
            return Err(Error::InvalidConfig(format!(
                "need p_in > p_out, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        Ok(())
    }

    /// Everything [`generate_synthetic`] needs; allows `p_in == p_out`.
    fn check_generatable(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.n_target < self.classes {
            return fail(format!("{} target nodes cannot hold {} classes", self.n_target, self.classes));
        }
        if self.aux_sizes.is_empty() || self.aux_sizes.contains(&0) {
            return fail("every auxiliary type needs at least one node".into());
        }
        if self.aux_sizes.len() > AUX_NAMES.len() {
            return fail(format!("at most {} auxiliary types", AUX_NAMES.len()));
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(prob(self.p_in) && prob(self.p_out) && self.p_in >= self.p_out) {
            return fail(format!("need 0 <= p_out <= p_in <= 1, got p_in={} p_out={}", self.p_in, self.p_out));
        }
        if self.feature_dim < self.classes {
            return fail(format!("feature dim {} is below the class count {}", self.feature_dim, self.classes));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return fail(format!("feature noise must be finite and non-negative, got {}", self.feature_noise));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub graph: HeteroGraph,
    pub labels: Vec<usize>,
    pub metapaths: Vec<MetaPath>,
}

const AUX_NAMES: [&str; 6] = ["author", "subject", "term", "venue", "keyword", "institution"];

/// Planted-partition graph: target node `i` gets a class, auxiliary node `j`
/// belongs to block `j % classes`, and each target-auxiliary pair is joined
/// with probability `p_in` when class and block agree and `p_out`
/// otherwise. Every node's features are the one-hot of its class (or block)
/// plus `N(0, feature_noise²)` noise.
///
/// `p_in == p_out` is accepted so that no-signal control graphs can be
/// generated; [`SyntheticSpec::check`] enforces the strict gap.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.check_generatable()?;
    let noise = Normal::new(0.0, spec.feature_noise)
        .map_err(|_| Error::InvalidConfig(format!("bad feature noise {}", spec.feature_noise)))?;
    let mut graph_rng = stream(spec.seed, streams::GRAPH);
    let mut feature_rng = stream(spec.seed, streams::FEATURES);

    let mut labels: Vec<usize> = (0..spec.n_target).map(|i| i % spec.classes).collect();
    labels.shuffle(&mut graph_rng);

    let mut features = |classes: &[usize]| {
        let mut m = Matrix::zeros(classes.len(), spec.feature_dim);
        for (r, &c) in classes.iter().enumerate() {
            for (k, v) in m.row_mut(r).iter_mut().enumerate() {
                *v = if k == c { 1.0 } else { 0.0 } + noise.sample(&mut feature_rng);
            }
        }
        m
    };

    let mut types = vec![NodeType {
        name: "paper".to_string(),
        count: spec.n_target,
        features: features(&labels),
    }];
    let mut relations = Vec::with_capacity(spec.aux_sizes.len());
    for (k, &size) in spec.aux_sizes.iter().enumerate() {
        let blocks: Vec<usize> = (0..size).map(|j| j % spec.classes).collect();
        let mut edges = Vec::new();
        for (i, &c) in labels.iter().enumerate() {
            for (j, &b) in blocks.iter().enumerate() {
                let p = if b == c { spec.p_in } else { spec.p_out };
                if graph_rng.random_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        let name = AUX_NAMES[k];
        types.push(NodeType {
            name: name.to_string(),
            count: size,
            features: features(&blocks),
        });
        let rel_name = format!("P{}", name[..1].to_uppercase());
        let adjacency = SparseBool::from_edges(spec.n_target, size, edges)?;
        relations.push(Relation::new(rel_name, NodeTypeId(0), NodeTypeId(k + 1), adjacency));
    }
    let graph = HeteroGraph::new(types, relations, NodeTypeId(0))?;
    let metapaths = (0..spec.aux_sizes.len())
        .map(|k| MetaPath::symmetric(&graph, crate::hin::RelationId(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticDataset {
        graph,
        labels,
        metapaths,
    })
}
