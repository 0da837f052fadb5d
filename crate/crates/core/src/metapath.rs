//! Meta-paths and the homogeneous target-type subgraphs they induce.
//!
//! A meta-path is a sequence of relation steps, each walked forwards or
//! backwards, that starts and ends at the target node type. Its subgraph
//! connects two distinct target nodes iff at least one instance of the
//! path joins them. Adjacencies are binary with a zero diagonal on both
//! the initial (2-hop) and expanded (4-hop) scales.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::hin::{HeteroGraph, NodeTypeId, RelationId};
use crate::sparse::SparseBool;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetaStep {
    pub relation: RelationId,
    pub reversed: bool,
}

impl MetaStep {
    pub fn forward(relation: RelationId) -> Self {
        Self {
            relation,
            reversed: false,
        }
    }

    pub fn backward(relation: RelationId) -> Self {
        Self {
            relation,
            reversed: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaPath {
    name: String,
    steps: Vec<MetaStep>,
    node_types: Vec<NodeTypeId>,
}

impl MetaPath {
    /// Type-checks `steps` against `graph`. The path must start and end at
    /// the graph's target type.
    pub fn new(graph: &HeteroGraph, name: impl Into<String>, steps: Vec<MetaStep>) -> Result<Self> {
        let name = name.into();
        if steps.is_empty() {
            return Err(Error::InvalidMetaPath(format!("{name}: no steps")));
        }
        let mut node_types = Vec::with_capacity(steps.len() + 1);
        for (k, step) in steps.iter().enumerate() {
            let rel = graph.relation(step.relation)?;
            let (from, to) = if step.reversed { (rel.dst, rel.src) } else { (rel.src, rel.dst) };
            match node_types.last() {
                None => node_types.push(from),
                Some(&prev) if prev != from => {
                    return Err(Error::InvalidMetaPath(format!(
                        "{name}: step {k} ({}) leaves type {} but the path is at type {}",
                        rel.name, from.0, prev.0
                    )))
                }
                Some(_) => {}
            }
            node_types.push(to);
        }
        let target = graph.target();
        if node_types[0] != target || node_types[node_types.len() - 1] != target {
            return Err(Error::InvalidMetaPath(format!(
                "{name}: must start and end at the target type {}",
                target.0
            )));
        }
        Ok(Self {
            name,
            steps,
            node_types,
        })
    }

    /// The symmetric 2-hop path `T -> X -> T` over one relation leaving the
    /// target type, e.g. `MAM` from the `MA` relation.
    pub fn symmetric(graph: &HeteroGraph, relation: RelationId) -> Result<Self> {
        let rel = graph.relation(relation)?;
        let src = initial(&graph.node_type(rel.src)?.name);
        let name = format!("{src}{}{src}", initial(&graph.node_type(rel.dst)?.name));
        Self::new(graph, name, alloc::vec![MetaStep::forward(relation), MetaStep::backward(relation)])
    }

    /// Resolves relation names into steps. A name matching a relation walks
    /// it forwards; `~NAME`, or a name whose reversal matches a relation
    /// (`AP` for `PA`), walks it backwards.
    pub fn from_relation_names<S: AsRef<str>>(
        graph: &HeteroGraph,
        name: impl Into<String>,
        relations: &[S],
    ) -> Result<Self> {
        let name = name.into();
        let mut steps = Vec::with_capacity(relations.len());
        for rel_name in relations {
            let rel_name = rel_name.as_ref();
            let step = if let Some(id) = graph.relation_by_name(rel_name) {
                MetaStep::forward(id)
            } else if let Some(id) = rel_name.strip_prefix('~').and_then(|n| graph.relation_by_name(n)) {
                MetaStep::backward(id)
            } else {
                let flipped: String = rel_name.chars().rev().collect();
                let id = graph
                    .relation_by_name(&flipped)
                    .ok_or_else(|| Error::InvalidMetaPath(format!("{name}: unknown relation {rel_name}")))?;
                MetaStep::backward(id)
            };
            steps.push(step);
        }
        Self::new(graph, name, steps)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn steps(&self) -> &[MetaStep] {
        &self.steps
    }

    /// Node types visited, `steps().len() + 1` entries.
    pub fn node_types(&self) -> &[NodeTypeId] {
        &self.node_types
    }

    pub fn hops(&self) -> usize {
        self.steps.len()
    }

    /// The node type of the target's direct neighbors along this path.
    pub fn direct_type(&self) -> NodeTypeId {
        self.node_types[1]
    }
}

fn initial(type_name: &str) -> String {
    type_name.chars().next().map(|c| c.to_uppercase().collect()).unwrap_or_default()
}

/// Composes a 2-hop path with itself: `MAM` becomes `MAMAM`.
pub fn expand_metapath(path: &MetaPath) -> Result<MetaPath> {
    if path.hops() != 2 {
        return Err(Error::InvalidMetaPath(format!(
            "{}: only 2-hop paths expand, this one has {} hops",
            path.name,
            path.hops()
        )));
    }
    let mut steps = path.steps.clone();
    steps.extend_from_slice(&path.steps);
    let mut node_types = path.node_types.clone();
    node_types.extend_from_slice(&path.node_types[1..]);
    let chars: Vec<char> = path.name.chars().collect();
    let name = if chars.len() == path.hops() + 1 {
        let mut n = path.name.clone();
        n.extend(&chars[1..]);
        n
    } else {
        format!("{}^2", path.name)
    };
    Ok(MetaPath {
        name,
        steps,
        node_types,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Scale {
    Initial,
    Expanded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaPathSubgraph {
    pub metapath: MetaPath,
    pub adjacency: SparseBool,
    pub scale: Scale,
}

impl MetaPathSubgraph {
    pub fn node_count(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn neighbors(&self, node: usize) -> Result<&[usize]> {
        if node >= self.adjacency.rows() {
            return Err(Error::NodeOutOfRange {
                node_type: self.metapath.node_types[0].0,
                node,
                count: self.adjacency.rows(),
            });
        }
        Ok(self.adjacency.row(node))
    }

    /// Undirected edge count (each symmetric pair once).
    pub fn edge_count(&self) -> usize {
        self.adjacency.nnz() / 2
    }
}

/// Boolean product of the path's step matrices with the diagonal removed.
fn compose(graph: &HeteroGraph, path: &MetaPath) -> Result<SparseBool> {
    let mut steps = path.steps.iter();
    let first = steps.next().ok_or_else(|| Error::InvalidMetaPath(format!("{}: no steps", path.name)))?;
    let mut acc = graph.relation(first.relation)?.oriented(first.reversed).clone();
    for step in steps {
        acc = acc.bool_product(graph.relation(step.relation)?.oriented(step.reversed))?;
    }
    Ok(acc.without_diagonal())
}

/// The initial meta-path subgraph.
pub fn metapath_adjacency(graph: &HeteroGraph, path: &MetaPath) -> Result<MetaPathSubgraph> {
    check_on_graph(graph, path)?;
    Ok(MetaPathSubgraph {
        metapath: path.clone(),
        adjacency: compose(graph, path)?,
        scale: Scale::Initial,
    })
}

/// The expanded (4-hop) subgraph of an initial 2-hop path.
///
/// A 4-hop instance may pass through the anchor itself at its midpoint, so
/// the initial adjacency gets its diagonal back before squaring; the result
/// then drops the diagonal again.
pub fn expanded_adjacency(graph: &HeteroGraph, path: &MetaPath) -> Result<MetaPathSubgraph> {
    let expanded = expand_metapath(path)?;
    let initial = metapath_adjacency(graph, path)?.adjacency.with_diagonal();
    Ok(MetaPathSubgraph {
        metapath: expanded,
        adjacency: initial.bool_product(&initial)?.without_diagonal(),
        scale: Scale::Expanded,
    })
}

/// One-hop neighbors of a target node along the path's first relation.
pub fn direct_neighbors<'g>(graph: &'g HeteroGraph, path: &MetaPath, target_node: usize) -> Result<&'g [usize]> {
    check_on_graph(graph, path)?;
    let step = path.steps[0];
    graph.oriented_neighbors(step.relation, step.reversed, target_node)
}

/// Target nodes joined to `target_node` by at least one path instance.
/// Recomputes the subgraph; prefer [`MetaPathSubgraph::neighbors`] in loops.
pub fn metapath_neighbors(graph: &HeteroGraph, path: &MetaPath, target_node: usize) -> Result<Vec<usize>> {
    let sub = metapath_adjacency(graph, path)?;
    Ok(sub.neighbors(target_node)?.to_vec())
}

fn check_on_graph(graph: &HeteroGraph, path: &MetaPath) -> Result<()> {
    for step in &path.steps {
        graph.relation(step.relation)?;
    }
    if path.node_types[0] != graph.target() {
        return Err(Error::InvalidMetaPath(format!("{}: not rooted at the target type", path.name)));
    }
    Ok(())
}
