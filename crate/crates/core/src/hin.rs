//! Heterogeneous information network: typed node sets with per-type
//! features and typed, directed relations between them.
//!
//! Node identifiers are per-type and 0-based, so a node is addressed by
//! `(NodeTypeId, index)` and the feature row of node `i` of type `t` is
//! row `i` of that type's feature matrix.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::sparse::{SparseBool, SparseFault};
use crate::{Error, Matrix, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeTypeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct NodeType {
    pub name: String,
    pub count: usize,
    pub features: Matrix,
}

/// A directed relation `src -> dst` with its transpose cached for walking
/// it backwards.
#[derive(Clone, Debug, PartialEq)]
pub struct Relation {
    pub name: String,
    pub src: NodeTypeId,
    pub dst: NodeTypeId,
    adjacency: SparseBool,
    reverse: SparseBool,
}

impl Relation {
    pub fn new(name: impl Into<String>, src: NodeTypeId, dst: NodeTypeId, adjacency: SparseBool) -> Self {
        // A malformed pattern cannot be transposed; validate() reports it.
        let reverse = if adjacency.check().is_empty() {
            adjacency.transpose()
        } else {
            SparseBool::empty(adjacency.cols(), adjacency.rows())
        };
        Self {
            name: name.into(),
            src,
            dst,
            adjacency,
            reverse,
        }
    }

    pub fn adjacency(&self) -> &SparseBool {
        &self.adjacency
    }

    pub fn reverse(&self) -> &SparseBool {
        &self.reverse
    }

    /// The adjacency walked forwards or backwards.
    pub fn oriented(&self, reversed: bool) -> &SparseBool {
        if reversed {
            &self.reverse
        } else {
            &self.adjacency
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    node_types: Vec<NodeType>,
    relations: Vec<Relation>,
    target: NodeTypeId,
}

/// One violated graph invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NotHeterogeneous { node_types: usize, relations: usize },
    UnknownTarget(usize),
    FeatureRowCount { node_type: String, rows: usize, count: usize },
    NonFiniteFeature { node_type: String, row: usize, col: usize },
    UnknownEndpoint { relation: String, node_type: usize },
    RelationShape { relation: String, shape: (usize, usize), expected: (usize, usize) },
    Structure { relation: String, fault: SparseFault },
    StaleTranspose { relation: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotHeterogeneous { node_types, relations } => write!(
                f,
                "{node_types} node types + {relations} relations is not heterogeneous (need more than 2)"
            ),
            Self::UnknownTarget(t) => write!(f, "target type {t} does not exist"),
            Self::FeatureRowCount { node_type, rows, count } => {
                write!(f, "type {node_type}: {rows} feature rows for {count} nodes")
            }
            Self::NonFiniteFeature { node_type, row, col } => {
                write!(f, "type {node_type}: non-finite feature at ({row}, {col})")
            }
            Self::UnknownEndpoint { relation, node_type } => {
                write!(f, "relation {relation}: endpoint type {node_type} does not exist")
            }
            Self::RelationShape { relation, shape, expected } => {
                write!(f, "relation {relation}: adjacency is {shape:?}, node counts give {expected:?}")
            }
            Self::Structure { relation, fault } => match fault {
                SparseFault::ColumnOutOfRange { row, col } => {
                    write!(f, "relation {relation}: edge ({row}, {col}) index out of range")
                }
                SparseFault::RepeatedEntry { row, col } => {
                    write!(f, "relation {relation}: edge ({row}, {col}) is not binary")
                }
                SparseFault::Unsorted { row } => write!(f, "relation {relation}: row {row} unsorted"),
                SparseFault::MalformedRowPointers => write!(f, "relation {relation}: malformed row pointers"),
            },
            Self::StaleTranspose { relation } => {
                write!(f, "relation {relation}: transpose view is out of date")
            }
        }
    }
}

impl HeteroGraph {
    /// Assembles a graph without checking it; see [`HeteroGraph::validate`]
    /// and [`HeteroGraph::new`].
    pub fn from_parts(node_types: Vec<NodeType>, relations: Vec<Relation>, target: NodeTypeId) -> Self {
        Self {
            node_types,
            relations,
            target,
        }
    }

    /// Assembles and validates a graph.
    pub fn new(node_types: Vec<NodeType>, relations: Vec<Relation>, target: NodeTypeId) -> Result<Self> {
        let graph = Self::from_parts(node_types, relations, target);
        let report = graph.validate();
        if let Some(first) = report.first() {
            return Err(Error::Infeasible(format!(
                "invalid heterogeneous graph ({} violations), first: {first}",
                report.len()
            )));
        }
        Ok(graph)
    }

    /// Every violated invariant; empty means the graph is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.node_types.len() + self.relations.len() <= 2 {
            out.push(Violation::NotHeterogeneous {
                node_types: self.node_types.len(),
                relations: self.relations.len(),
            });
        }
        if self.target.0 >= self.node_types.len() {
            out.push(Violation::UnknownTarget(self.target.0));
        }
        for t in &self.node_types {
            if t.features.rows() != t.count {
                out.push(Violation::FeatureRowCount {
                    node_type: t.name.clone(),
                    rows: t.features.rows(),
                    count: t.count,
                });
            }
            if let Some(pos) = t.features.as_slice().iter().position(|v| !v.is_finite()) {
                let cols = t.features.cols().max(1);
                out.push(Violation::NonFiniteFeature {
                    node_type: t.name.clone(),
                    row: pos / cols,
                    col: pos % cols,
                });
            }
        }
        for rel in &self.relations {
            let mut endpoints_known = true;
            for end in [rel.src, rel.dst] {
                if end.0 >= self.node_types.len() {
                    endpoints_known = false;
                    out.push(Violation::UnknownEndpoint {
                        relation: rel.name.clone(),
                        node_type: end.0,
                    });
                }
            }
            let faults = rel.adjacency.check();
            let structurally_sound = faults.is_empty();
            out.extend(faults.into_iter().map(|fault| Violation::Structure {
                relation: rel.name.clone(),
                fault,
            }));
            if endpoints_known {
                let expected = (self.node_types[rel.src.0].count, self.node_types[rel.dst.0].count);
                if rel.adjacency.shape() != expected {
                    out.push(Violation::RelationShape {
                        relation: rel.name.clone(),
                        shape: rel.adjacency.shape(),
                        expected,
                    });
                }
            }
            if structurally_sound && rel.reverse != rel.adjacency.transpose() {
                out.push(Violation::StaleTranspose {
                    relation: rel.name.clone(),
                });
            }
        }
        out
    }

    pub fn target(&self) -> NodeTypeId {
        self.target
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn node_type(&self, id: NodeTypeId) -> Result<&NodeType> {
        self.node_types.get(id.0).ok_or(Error::UnknownNodeType(id.0))
    }

    pub fn relation(&self, id: RelationId) -> Result<&Relation> {
        self.relations.get(id.0).ok_or(Error::UnknownRelation(id.0))
    }

    pub fn node_count(&self, id: NodeTypeId) -> Result<usize> {
        Ok(self.node_type(id)?.count)
    }

    pub fn target_count(&self) -> usize {
        self.node_types.get(self.target.0).map_or(0, |t| t.count)
    }

    pub fn node_type_by_name(&self, name: &str) -> Option<NodeTypeId> {
        self.node_types.iter().position(|t| t.name == name).map(NodeTypeId)
    }

    pub fn relation_by_name(&self, name: &str) -> Option<RelationId> {
        self.relations.iter().position(|r| r.name == name).map(RelationId)
    }

    /// Sorted destinations of `node` along `relation`.
    pub fn neighbors(&self, relation: RelationId, node: usize) -> Result<&[usize]> {
        self.oriented_neighbors(relation, false, node)
    }

    /// Sorted neighbors of `node` walking `relation` forwards or backwards.
    pub fn oriented_neighbors(&self, relation: RelationId, reversed: bool, node: usize) -> Result<&[usize]> {
        let rel = self.relation(relation)?;
        let adj = rel.oriented(reversed);
        if node >= adj.rows() {
            return Err(Error::NodeOutOfRange {
                node_type: if reversed { rel.dst.0 } else { rel.src.0 },
                node,
                count: adj.rows(),
            });
        }
        Ok(adj.row(node))
    }

    /// A copy of the graph whose target-type feature rows are permuted:
    /// row `i` of the result is row `perm[i]` of the original.
    pub fn with_permuted_target_features(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        let t = &mut out.node_types[self.target.0];
        t.features = t.features.select_rows(perm);
        out
    }
}
