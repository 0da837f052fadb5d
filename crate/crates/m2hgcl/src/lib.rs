//! File formats, dataset manifests, run records and the command line for
//! [`m2hgcl_core`].

pub mod cli;
pub mod dataset;
mod error;
pub mod formats;
pub mod record;
pub mod runner;

pub use dataset::{load_dataset, write_dataset, Dataset, DatasetManifest};
pub use error::{DataError, Result};
pub use record::{EvalPlan, RunRecord};
