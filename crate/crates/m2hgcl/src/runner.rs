//! Training runs with attached evaluation, and the sweep and ablation
//! fan-outs built on them.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use m2hgcl_core::eval::{evaluate_classification, evaluate_clustering, EvalReport, SplitSpec};
use m2hgcl_core::metapath::{expand_metapath, expanded_adjacency, metapath_adjacency};
use m2hgcl_core::{train, Matrix, TrainConfig, TrainOutcome, Variant};

use crate::dataset::Dataset;
use crate::error::{DataError, Result};
use crate::record::{matrix_hash, stream_table, DatasetSummary, EvalPlan, RunRecord};

/// Environment variable capping worker threads for sweeps and ablations.
pub const THREADS_ENV: &str = "M2HGCL_THREADS";

/// Worker count from [`THREADS_ENV`], else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Maps `f` over `items` on up to `threads` workers; results keep input order.
pub fn par_map<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = threads.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every item mapped"))
        .collect()
}

pub struct RunOutput {
    pub outcome: TrainOutcome,
    pub record: RunRecord,
}

/// Evaluates `z` as the plan says.
pub fn evaluate(z: &Matrix, labels: &[usize], classes: usize, plan: &EvalPlan) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    if plan.classify {
        let spec = SplitSpec::for_size(labels.len(), plan.train_fraction);
        report = report.merge(evaluate_classification(z, labels, classes, &spec, &plan.probe, &plan.seeds)?);
    }
    if plan.cluster {
        report = report.merge(evaluate_clustering(z, labels, classes, &plan.seeds)?);
    }
    report.check_ranges()?;
    Ok(report)
}

/// Trains on `data`, evaluates the fused embedding and seals a record.
pub fn run_training(data: &Dataset, config: &TrainConfig, plan: &EvalPlan, command: &str) -> Result<RunOutput> {
    let start = Instant::now();
    let outcome = train(&data.graph, &data.metapaths, config)?;
    let z = outcome.embedding();
    let report = evaluate(z, &data.labels, data.num_classes, plan)?;
    let record = RunRecord {
        command: command.to_string(),
        dataset: DatasetSummary::of(data),
        config: config.clone(),
        variant: config.variant.label().to_string(),
        variant_name: config.variant.display_name().to_string(),
        streams: stream_table(),
        eval: plan.clone(),
        loss_curve: outcome.loss_curve.clone(),
        stopped_early: outcome.stopped_early,
        semantic_weights: outcome.embeddings.semantic_weights.clone(),
        scale_weights: outcome.embeddings.scale_weights.clone(),
        embedding_shape: z.shape(),
        embedding_hash: matrix_hash(z),
        report,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        hash: String::new(),
    }
    .seal()?;
    Ok(RunOutput { outcome, record })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Tau,
    Alpha,
}

impl SweepParam {
    pub fn label(self) -> &'static str {
        match self {
            SweepParam::Tau => "tau",
            SweepParam::Alpha => "alpha",
        }
    }

    pub fn apply(self, config: &TrainConfig, value: f64) -> TrainConfig {
        let mut c = config.clone();
        match self {
            SweepParam::Tau => c.tau = value,
            SweepParam::Alpha => c.alpha = value,
        }
        c
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SweepParam {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(SweepParam::Tau),
            "alpha" => Ok(SweepParam::Alpha),
            other => Err(DataError::Invalid(format!("unknown sweep parameter {other} (tau or alpha)"))),
        }
    }
}

/// Parses `start:stop:step` into the inclusive grid, each value rounded
/// to 10 decimals so `0.1:0.9:0.1` gives exactly nine tidy points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || DataError::Invalid(format!("grid {spec:?} is not start:stop:step"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && stop >= start) {
        return Err(DataError::Invalid(format!("grid {spec:?} needs finite start <= stop and step > 0")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e10).round() / 1e10)
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub macro_f1: Option<(f64, f64)>,
    pub nmi: Option<(f64, f64)>,
}

/// One run per grid value, fanned out over `threads`.
pub fn sweep(
    data: &Dataset,
    base: &TrainConfig,
    param: SweepParam,
    grid: &[f64],
    plan: &EvalPlan,
    threads: usize,
) -> Result<Vec<RunRecord>> {
    let configs: Vec<TrainConfig> = grid.iter().map(|&v| param.apply(base, v)).collect();
    for c in &configs {
        c.check()?;
    }
    let command = format!("sweep {param}");
    par_map(&configs, threads, |c| run_training(data, c, plan, &command).map(|o| o.record))
        .into_iter()
        .collect()
}

/// Summary rows sorted by parameter value.
pub fn sweep_summary(param: SweepParam, records: &[RunRecord]) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = records
        .iter()
        .map(|r| SweepRow {
            value: match param {
                SweepParam::Tau => r.config.tau,
                SweepParam::Alpha => r.config.alpha,
            },
            macro_f1: r.report.macro_f1.map(|m| (m.mean, m.std)),
            nmi: r.report.nmi.map(|m| (m.mean, m.std)),
        })
        .collect();
    rows.sort_by(|a, b| a.value.total_cmp(&b.value));
    rows
}

/// All six variants in table order, fanned out over `threads`.
pub fn ablate(data: &Dataset, base: &TrainConfig, plan: &EvalPlan, threads: usize) -> Result<Vec<RunRecord>> {
    let configs: Vec<TrainConfig> = Variant::ALL.iter().map(|&v| base.clone().with_variant(v)).collect();
    par_map(&configs, threads, |c| run_training(data, c, plan, "ablate").map(|o| o.record))
        .into_iter()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpandSummary {
    pub initial: String,
    pub expanded: String,
    /// Undirected edge counts of the initial and expanded subgraphs.
    pub initial_edges: usize,
    pub expanded_edges: usize,
}

pub fn expand(data: &Dataset, metapath: &str) -> Result<ExpandSummary> {
    let path = data.metapath(metapath)?;
    let initial = metapath_adjacency(&data.graph, path)?;
    let expanded = expanded_adjacency(&data.graph, path)?;
    Ok(ExpandSummary {
        initial: path.name().to_string(),
        expanded: expand_metapath(path)?.name().to_string(),
        initial_edges: initial.edge_count(),
        expanded_edges: expanded.edge_count(),
    })
}

fn cell(m: Option<(f64, f64)>) -> String {
    m.map_or_else(|| "-".to_string(), |(mean, std)| format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * std))
}

/// Tab-separated table of a sweep.
pub fn sweep_table(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut out = format!("{param}\tmacro_f1\tnmi\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}\n", r.value, cell(r.macro_f1), cell(r.nmi)));
    }
    out
}

/// Tab-separated table with one row per record.
pub fn report_table(records: &[RunRecord]) -> String {
    let mut out = String::from("variant\tmacro_f1\tmicro_f1\tauc\tnmi\tari\n");
    let pair = |m: Option<m2hgcl_core::eval::MetricSummary>| cell(m.map(|m| (m.mean, m.std)));
    for r in records {
        let rep = &r.report;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.variant_name,
            pair(rep.macro_f1),
            pair(rep.micro_f1),
            pair(rep.auc),
            pair(rep.nmi),
            pair(rep.ari)
        ));
    }
    out
}
