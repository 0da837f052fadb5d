//! Dataset manifests: a JSON file naming node types, relations, labels and
//! meta-paths, with every data file given relative to the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use m2hgcl_core::hin::{NodeType, Relation};
use m2hgcl_core::metapath::MetaPath;
use m2hgcl_core::sparse::SparseBool;
use m2hgcl_core::synthetic::SyntheticDataset;
use m2hgcl_core::{HeteroGraph, NodeTypeId};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DataError, Result};
use crate::formats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeTypeEntry {
    pub name: String,
    pub count: usize,
    pub feature_file: String,
    pub feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationEntry {
    pub name: String,
    pub src: String,
    pub dst: String,
    pub edge_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub node_types: Vec<NodeTypeEntry>,
    pub relations: Vec<RelationEntry>,
    pub target_type: String,
    pub labels_file: String,
    /// Relation-name sequences. `~NAME` or the reversed name walks a
    /// relation backwards.
    pub metapaths: Vec<Vec<String>>,
    pub num_classes: usize,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DataError::json(path, e))
    }

    /// Every data file the manifest references, in manifest order.
    pub fn files(&self) -> Vec<&str> {
        let mut files: Vec<&str> = self.node_types.iter().map(|t| t.feature_file.as_str()).collect();
        files.extend(self.relations.iter().map(|r| r.edge_file.as_str()));
        files.push(&self.labels_file);
        files
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub graph: HeteroGraph,
    pub labels: Vec<usize>,
    pub metapaths: Vec<MetaPath>,
    pub num_classes: usize,
    /// SHA-256 over the manifest and every file it references.
    pub input_hash: String,
}

impl Dataset {
    pub fn metapath(&self, name: &str) -> Result<&MetaPath> {
        self.metapaths.iter().find(|p| p.name() == name).ok_or_else(|| {
            let known: Vec<&str> = self.metapaths.iter().map(|p| p.name()).collect();
            DataError::Invalid(format!("no meta-path {name} in {} (has {})", self.name, known.join(", ")))
        })
    }
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads and validates the dataset a manifest describes.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let dir = base_dir(manifest_path);
    let invalid = |msg: String| DataError::format(manifest_path, msg);

    let mut node_types = Vec::with_capacity(manifest.node_types.len());
    for entry in &manifest.node_types {
        if node_types.iter().any(|t: &NodeType| t.name == entry.name) {
            return Err(invalid(format!("node type {} declared twice", entry.name)));
        }
        let file = dir.join(&entry.feature_file);
        let features = formats::read_matrix(&file)?;
        if features.rows() != entry.count {
            return Err(DataError::format(
                &file,
                format!("{} feature rows, manifest says {} {} nodes", features.rows(), entry.count, entry.name),
            ));
        }
        if features.cols() != entry.feature_dim {
            return Err(DataError::format(
                &file,
                format!("feature dim {}, manifest says {}", features.cols(), entry.feature_dim),
            ));
        }
        node_types.push(NodeType {
            name: entry.name.clone(),
            count: entry.count,
            features,
        });
    }
    let type_id = |name: &str| {
        node_types
            .iter()
            .position(|t| t.name == name)
            .map(NodeTypeId)
            .ok_or_else(|| invalid(format!("unknown node type {name}")))
    };

    let mut relations = Vec::with_capacity(manifest.relations.len());
    for entry in &manifest.relations {
        if relations.iter().any(|r: &Relation| r.name == entry.name) {
            return Err(invalid(format!("relation {} declared twice", entry.name)));
        }
        let (src, dst) = (type_id(&entry.src)?, type_id(&entry.dst)?);
        let shape = (node_types[src.0].count, node_types[dst.0].count);
        let edges = formats::read_edges(&dir.join(&entry.edge_file), shape)?;
        let adjacency = SparseBool::from_edges(shape.0, shape.1, edges)?;
        relations.push(Relation::new(entry.name.clone(), src, dst, adjacency));
    }

    let target = type_id(&manifest.target_type)?;
    let n_target = node_types[target.0].count;
    let graph = HeteroGraph::new(node_types, relations, target)?;
    let labels = formats::read_labels(&dir.join(&manifest.labels_file), n_target, manifest.num_classes)?;
    let metapaths = manifest
        .metapaths
        .iter()
        .map(|seq| resolve_metapath(&graph, seq))
        .collect::<Result<Vec<_>>>()?;
    if metapaths.is_empty() {
        return Err(invalid("no meta-paths listed".into()));
    }
    let input_hash = input_hash(manifest_path, &manifest)?;
    Ok(Dataset {
        name: manifest.name,
        graph,
        labels,
        metapaths,
        num_classes: manifest.num_classes,
        input_hash,
    })
}

/// Resolves a relation-name sequence and names the path by the uppercase
/// initials of the node types it visits (`MAM`).
pub fn resolve_metapath<S: AsRef<str>>(graph: &HeteroGraph, relations: &[S]) -> Result<MetaPath> {
    let joined: Vec<&str> = relations.iter().map(AsRef::as_ref).collect();
    let provisional = MetaPath::from_relation_names(graph, joined.join("-"), relations)?;
    let name: String = provisional
        .node_types()
        .iter()
        .map(|&t| graph.node_types()[t.0].name.chars().next().map(|c| c.to_ascii_uppercase()).unwrap_or('?'))
        .collect();
    Ok(MetaPath::new(graph, name, provisional.steps().to_vec())?)
}

/// SHA-256 over the manifest bytes and each referenced file, each
/// prefixed by its length.
pub fn input_hash(manifest_path: &Path, manifest: &DatasetManifest) -> Result<String> {
    let dir = base_dir(manifest_path);
    let mut hasher = Sha256::new();
    let mut feed = |path: &Path| -> Result<()> {
        let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
        Ok(())
    };
    feed(manifest_path)?;
    for file in manifest.files() {
        feed(&dir.join(file))?;
    }
    Ok(hex(&hasher.finalize()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `data` as a dataset directory and returns the manifest path.
/// Features go to `.bin` files, so values are stored as `f32`.
pub fn write_dataset(dir: &Path, name: &str, data: &SyntheticDataset, num_classes: usize) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let graph = &data.graph;
    let mut node_types = Vec::new();
    for t in graph.node_types() {
        let feature_file = format!("{}.features.bin", t.name);
        formats::write_matrix_bin(&dir.join(&feature_file), &t.features)?;
        node_types.push(NodeTypeEntry {
            name: t.name.clone(),
            count: t.count,
            feature_file,
            feature_dim: t.features.cols(),
        });
    }
    let mut relations = Vec::new();
    for r in graph.relations() {
        let edge_file = format!("{}.edges.tsv", r.name);
        formats::write_edges(&dir.join(&edge_file), r.adjacency().iter())?;
        relations.push(RelationEntry {
            name: r.name.clone(),
            src: graph.node_types()[r.src.0].name.clone(),
            dst: graph.node_types()[r.dst.0].name.clone(),
            edge_file,
        });
    }
    let labels_file = "labels.tsv".to_string();
    formats::write_labels(&dir.join(&labels_file), &data.labels)?;
    let metapaths = data
        .metapaths
        .iter()
        .map(|p| {
            p.steps()
                .iter()
                .map(|s| {
                    let name = &graph.relations()[s.relation.0].name;
                    if s.reversed {
                        format!("~{name}")
                    } else {
                        name.clone()
                    }
                })
                .collect()
        })
        .collect();
    let manifest = DatasetManifest {
        name: name.to_string(),
        node_types,
        relations,
        target_type: graph.node_types()[graph.target().0].name.clone(),
        labels_file,
        metapaths,
        num_classes,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| DataError::json(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| DataError::io(&path, e))?;
    Ok(path)
}
