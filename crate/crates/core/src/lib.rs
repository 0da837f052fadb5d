//! Multi-scale meta-path heterogeneous graph contrastive learning.
//!
//! The crate is `no_std` + `alloc`. It carries everything that is pure
//! computation: the heterogeneous graph model, meta-path composition, a
//! small reverse-mode autodiff engine, the multi-view encoder, the
//! contrastive objective, the training loop, downstream metrics and a
//! planted-partition graph generator. File formats, run records and the
//! command line live in the `m2hgcl` companion crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod contrastive;
pub mod encoder;
mod error;
pub mod eval;
pub mod hin;
pub mod matrix;
pub mod metapath;
pub mod rng;
pub mod sparse;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use hin::{HeteroGraph, NodeTypeId, RelationId};
pub use matrix::Matrix;
pub use metapath::{MetaPath, MetaPathSubgraph, Scale};

pub use trainer::{train, GlobalMode, TrainConfig, TrainOutcome, Variant};
