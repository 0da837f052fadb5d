//! Command-line interface. [`run`] returns the text to print so tests can
//! drive commands without a subprocess.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use m2hgcl_core::synthetic::{generate_synthetic, SyntheticSpec};
use m2hgcl_core::{TrainConfig, Variant};

use crate::dataset::{load_dataset, write_dataset};
use crate::error::{DataError, Result};
use crate::formats::{encode_matrix_bin, load_embeddings, read_label_file};
use crate::record::{params_json, EvalPlan, RunRecord};
use crate::runner::{
    ablate, evaluate, expand, parse_grid, report_table, run_training, sweep, sweep_summary, sweep_table,
    thread_count, SweepParam,
};

#[derive(Debug, Parser)]
#[command(name = "m2hgcl", version, about = "Multi-scale meta-path heterogeneous graph contrastive learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a dataset and write embeddings, parameters and a run record.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate saved embeddings.
    Eval {
        task: EvalTask,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        split: f64,
        /// Number of runs.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// First run seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Class count; defaults to the largest label plus one.
        #[arg(long)]
        classes: Option<usize>,
        /// Report path; defaults to `<embeddings>.<task>.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train once per value of `tau` or `alpha`.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, default_value = "0.1:0.9:0.1")]
        grid: String,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a meta-path's expansion and subgraph edge counts.
    Expand {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        metapath: String,
    },
    /// Train every ablation variant and print a comparison table.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a planted-partition dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        n_target: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        /// Comma-separated auxiliary type sizes.
        #[arg(long, default_value = "150,60", value_delimiter = ',')]
        aux_sizes: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        p_in: f64,
        #[arg(long, default_value_t = 0.002)]
        p_out: f64,
        #[arg(long, default_value_t = 0.3)]
        feature_noise: f64,
        /// Feature width; defaults to the class count.
        #[arg(long)]
        feature_dim: Option<usize>,
    },
    /// Repeat the run a record describes and compare hashes.
    Rerun {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalTask {
    Classify,
    Cluster,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON training configuration; absent keys take defaults.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named preset: aminer, acm or freebase.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| DataError::json(path, e))?
            }
            (None, Some(name)) => TrainConfig::preset(name)?,
            (None, None) => TrainConfig::default(),
        };
        if let Some(v) = &self.variant {
            config.variant = v.parse::<Variant>()?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.check()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Evaluation runs after training; 0 skips evaluation.
    #[arg(long, default_value_t = 5)]
    pub eval_runs: usize,
    #[arg(long, default_value_t = 0.4)]
    pub split: f64,
}

impl EvalArgs {
    fn plan(&self, seed: u64) -> EvalPlan {
        if self.eval_runs == 0 {
            EvalPlan::none()
        } else {
            EvalPlan::derived(seed, self.eval_runs, self.split)
        }
    }
}

/// Writes each `(name, contents)` into `dir` through a temporary name, so
/// a failure leaves no partial file behind.
fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    let created = !dir.exists();
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let mut staged = Vec::new();
    let result = (|| {
        for (name, bytes) in files {
            let tmp = dir.join(format!(".{name}.partial"));
            staged.push(tmp.clone());
            fs::write(&tmp, bytes).map_err(|e| DataError::io(&tmp, e))?;
        }
        for ((name, _), tmp) in files.iter().zip(&staged) {
            let dst = dir.join(name);
            fs::rename(tmp, &dst).map_err(|e| DataError::io(&dst, e))?;
        }
        Ok(())
    })();
    if result.is_err() {
        for tmp in &staged {
            let _ = fs::remove_file(tmp);
        }
        if created {
            let _ = fs::remove_dir(dir);
        }
    }
    result
}

fn embedding_bytes(z: &m2hgcl_core::Matrix) -> Result<Vec<u8>> {
    encode_matrix_bin(z).map_err(DataError::Invalid)
}

fn report_json(report: &m2hgcl_core::eval::EvalReport) -> Result<String> {
    serde_json::to_string_pretty(report)
        .map(|s| s + "\n")
        .map_err(|e| DataError::Invalid(format!("report: {e}")))
}

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Train {
            manifest,
            config,
            eval,
            out,
        } => {
            let config = config.resolve()?;
            let data = load_dataset(&manifest)?;
            let plan = eval.plan(config.seed);
            let output = run_training(&data, &config, &plan, "train")?;
            let record = &output.record;
            write_outputs(
                &out,
                &[
                    ("embeddings.bin".to_string(), embedding_bytes(output.outcome.embedding())?),
                    ("params.json".to_string(), params_json(&output.outcome.params.store)?.into_bytes()),
                    ("record.json".to_string(), record.to_json()?.into_bytes()),
                ],
            )?;
            Ok(format!(
                "{} on {}: {} epochs, final loss {:.6}, embeddings {}x{}\n{}record hash {}\n",
                record.variant_name,
                record.dataset.name,
                record.loss_curve.len(),
                record.loss_curve.last().copied().unwrap_or(f64::NAN),
                record.embedding_shape.0,
                record.embedding_shape.1,
                report_table(std::slice::from_ref(record)),
                record.hash
            ))
        }
        Command::Eval {
            task,
            embeddings,
            labels,
            split,
            seeds,
            seed,
            classes,
            out,
        } => {
            let z = load_embeddings(&embeddings)?;
            let labels = read_label_file(&labels)?;
            let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |&m| m + 1));
            let mut plan = EvalPlan::derived(seed, seeds, split);
            plan.classify = task == EvalTask::Classify;
            plan.cluster = task == EvalTask::Cluster;
            let report = evaluate(&z, &labels, classes, &plan)?;
            let text = report_json(&report)?;
            let suffix = match task {
                EvalTask::Classify => "classify.json",
                EvalTask::Cluster => "cluster.json",
            };
            let out = out.unwrap_or_else(|| embeddings.with_extension(suffix));
            fs::write(&out, &text).map_err(|e| DataError::io(&out, e))?;
            Ok(text)
        }
        Command::Sweep {
            manifest,
            param,
            grid,
            config,
            eval,
            out,
        } => {
            let param: SweepParam = param.parse()?;
            let grid = parse_grid(&grid)?;
            let config = config.resolve()?;
            let data = load_dataset(&manifest)?;
            let records = sweep(&data, &config, param, &grid, &eval.plan(config.seed), thread_count())?;
            let table = sweep_table(param, &sweep_summary(param, &records));
            let mut files = Vec::new();
            for r in &records {
                let value = match param {
                    SweepParam::Tau => r.config.tau,
                    SweepParam::Alpha => r.config.alpha,
                };
                files.push((format!("{param}_{value}.json"), r.to_json()?.into_bytes()));
            }
            files.push(("summary.tsv".to_string(), table.clone().into_bytes()));
            write_outputs(&out, &files)?;
            Ok(table)
        }
        Command::Expand { manifest, metapath } => {
            let data = load_dataset(&manifest)?;
            let s = expand(&data, &metapath)?;
            Ok(format!(
                "{} -> {}\n{}\t{} edges\n{}\t{} edges\n",
                s.initial, s.expanded, s.initial, s.initial_edges, s.expanded, s.expanded_edges
            ))
        }
        Command::Ablate {
            manifest,
            config,
            eval,
            out,
        } => {
            let config = config.resolve()?;
            let data = load_dataset(&manifest)?;
            let records = ablate(&data, &config, &eval.plan(config.seed), thread_count())?;
            let table = report_table(&records);
            if let Some(out) = out {
                let mut files = Vec::new();
                for r in &records {
                    files.push((format!("{}.json", r.variant), r.to_json()?.into_bytes()));
                }
                files.push(("ablation.tsv".to_string(), table.clone().into_bytes()));
                write_outputs(&out, &files)?;
            }
            Ok(table)
        }
        Command::Synth {
            out,
            seed,
            n_target,
            classes,
            aux_sizes,
            p_in,
            p_out,
            feature_noise,
            feature_dim,
        } => {
            let spec = SyntheticSpec {
                n_target,
                classes,
                aux_sizes,
                p_in,
                p_out,
                feature_noise,
                feature_dim: feature_dim.unwrap_or(classes),
                seed,
            };
            let data = generate_synthetic(&spec)?;
            let path = write_dataset(&out, &format!("synthetic-{seed}"), &data, classes)?;
            Ok(format!("{}\n", path.display()))
        }
        Command::Rerun { record, manifest, out } => {
            let old = RunRecord::read(&record)?;
            let data = load_dataset(&manifest)?;
            if data.input_hash != old.dataset.input_hash {
                return Err(DataError::Invalid(format!(
                    "input hash {} differs from the record's {}",
                    data.input_hash, old.dataset.input_hash
                )));
            }
            let output = run_training(&data, &old.config, &old.eval, &old.command)?;
            if let Some(out) = out {
                write_outputs(
                    &out,
                    &[
                        ("embeddings.bin".to_string(), embedding_bytes(output.outcome.embedding())?),
                        ("record.json".to_string(), output.record.to_json()?.into_bytes()),
                    ],
                )?;
            }
            if output.record.hash != old.hash {
                return Err(DataError::Invalid(format!(
                    "rerun hash {} differs from recorded {}",
                    output.record.hash, old.hash
                )));
            }
            Ok(format!("reproduced {}\n", old.hash))
        }
    }
}
