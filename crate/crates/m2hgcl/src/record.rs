//! Run records: everything needed to repeat a run, plus its results, with
//! a content hash over the reproducible part.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use m2hgcl_core::eval::{EvalReport, ProbeConfig};
use m2hgcl_core::rng::streams;
use m2hgcl_core::{Matrix, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{hex, Dataset};
use crate::error::{DataError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub name: String,
    pub count: usize,
    pub feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationSummary {
    pub name: String,
    pub edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub input_hash: String,
    pub node_types: Vec<TypeSummary>,
    pub relations: Vec<RelationSummary>,
    pub target_type: String,
    pub metapaths: Vec<String>,
    pub num_classes: usize,
}

impl DatasetSummary {
    pub fn of(data: &Dataset) -> Self {
        let g = &data.graph;
        Self {
            name: data.name.clone(),
            input_hash: data.input_hash.clone(),
            node_types: g
                .node_types()
                .iter()
                .map(|t| TypeSummary {
                    name: t.name.clone(),
                    count: t.count,
                    feature_dim: t.features.cols(),
                })
                .collect(),
            relations: g
                .relations()
                .iter()
                .map(|r| RelationSummary {
                    name: r.name.clone(),
                    edges: r.adjacency().nnz(),
                })
                .collect(),
            target_type: g.node_types()[g.target().0].name.clone(),
            metapaths: data.metapaths.iter().map(|p| p.name().to_string()).collect(),
            num_classes: data.num_classes,
        }
    }
}

/// Downstream evaluation attached to a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPlan {
    pub classify: bool,
    pub cluster: bool,
    pub train_fraction: f64,
    /// One split, probe and k-means run per seed.
    pub seeds: Vec<u64>,
    pub probe: ProbeConfig,
}

impl EvalPlan {
    /// Classification at `train_fraction` and clustering, over `runs`
    /// seeds `seed, seed + 1, ...`.
    pub fn derived(seed: u64, runs: usize, train_fraction: f64) -> Self {
        Self {
            classify: true,
            cluster: true,
            train_fraction,
            seeds: (0..runs as u64).map(|i| seed.wrapping_add(i)).collect(),
            probe: ProbeConfig::default(),
        }
    }

    pub fn none() -> Self {
        Self {
            classify: false,
            cluster: false,
            train_fraction: 0.4,
            seeds: Vec::new(),
            probe: ProbeConfig::default(),
        }
    }
}

/// Stream ids each consumer reads under the run seed.
pub fn stream_table() -> BTreeMap<String, u64> {
    [
        ("init", streams::INIT),
        ("corruption", streams::CORRUPTION),
        ("split", streams::SPLIT),
        ("classifier", streams::CLASSIFIER),
        ("kmeans", streams::KMEANS),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub dataset: DatasetSummary,
    pub config: TrainConfig,
    pub variant: String,
    pub variant_name: String,
    pub streams: BTreeMap<String, u64>,
    pub eval: EvalPlan,
    pub loss_curve: Vec<f64>,
    pub stopped_early: bool,
    pub semantic_weights: Vec<f64>,
    pub scale_weights: Vec<(f64, f64)>,
    pub embedding_shape: (usize, usize),
    pub embedding_hash: String,
    pub report: EvalReport,
    pub wall_clock_secs: f64,
    /// SHA-256 of the record without `wall_clock_secs` and `hash`.
    pub hash: String,
}

impl RunRecord {
    pub fn compute_hash(&self) -> Result<String> {
        let mut value = serde_json::to_value(self).map_err(|e| DataError::Invalid(format!("record: {e}")))?;
        let map = value.as_object_mut().expect("record serializes to an object");
        map.remove("wall_clock_secs");
        map.remove("hash");
        let bytes = serde_json::to_vec(&value).map_err(|e| DataError::Invalid(format!("record: {e}")))?;
        Ok(hex(&Sha256::digest(bytes)))
    }

    pub fn seal(mut self) -> Result<Self> {
        self.hash = self.compute_hash()?;
        Ok(self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DataError::json(path, e))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| DataError::Invalid(format!("record: {e}")))
    }
}

/// SHA-256 over the shape and the `f64` little-endian bytes.
pub fn matrix_hash(m: &Matrix) -> String {
    let mut hasher = Sha256::new();
    hasher.update((m.rows() as u64).to_le_bytes());
    hasher.update((m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        hasher.update(v.to_le_bytes());
    }
    hex(&hasher.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Parameter tensors in registry order.
pub fn params_json(store: &m2hgcl_core::autodiff::ParamStore) -> Result<String> {
    let tensors: Vec<NamedTensor> = store
        .names()
        .iter()
        .zip(store.values())
        .map(|(name, m)| NamedTensor {
            name: name.clone(),
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().to_vec(),
        })
        .collect();
    serde_json::to_string(&tensors).map_err(|e| DataError::Invalid(format!("params: {e}")))
}
