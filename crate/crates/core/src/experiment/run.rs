use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use super::config::{DataSource, ExperimentConfig, RunMethod};
use crate::datagen::{generate_synthetic, load_embeddings, Dataset, Samples, Split};
use crate::error::Result;
use crate::fairmetrics::{evaluate, leakage_summary, tpr_tnr_gap, EvalRecord, LeakageConfig};
use crate::fairmodel::{accuracy, train_run, Checkpoint, EpochRecord, Method};
use crate::inlp::{run_inlp, InlpConfig, ProjectionState};
use crate::numkit::RealMatrix;

/// Fixed CSV schema of one run.
pub const RESULT_HEADER: &str =
    "method,seed,lambda_adv,lambda_diff,k,accuracy,tpr_gap,tnr_gap,leakage_h,leakage_yhat,epochs_to_best,wall_time_seconds";

pub const HISTORY_HEADER: &str = "seed,epoch,main_loss,adv_loss,diff_loss,dev_accuracy";

/// Metrics of one (config, seed) run, taken from the best-dev checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub method: RunMethod,
    pub seed: u64,
    pub lambda_adv: f64,
    pub lambda_diff: f64,
    pub k: usize,
    pub eval: EvalRecord,
    /// 1-based epoch of the selected checkpoint.
    pub epochs_to_best: usize,
    pub wall_time_seconds: f64,
}

impl RunResult {
    pub fn csv_row(&self) -> String {
        let e = &self.eval;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.method,
            self.seed,
            self.lambda_adv,
            self.lambda_diff,
            self.k,
            e.accuracy,
            e.tpr_gap,
            e.tnr_gap,
            e.leakage_h,
            e.leakage_yhat,
            self.epochs_to_best,
            self.wall_time_seconds
        )
    }
}

/// A finished run with its training trace.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub history: Vec<EpochRecord>,
    /// Best-dev main model (the fixed encoder, for INLP).
    pub checkpoint: Checkpoint,
    pub projection: Option<ProjectionState>,
}

impl RunOutput {
    pub fn history_rows(&self) -> Vec<String> {
        self.history
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    self.result.seed,
                    r.epoch + 1,
                    r.main_loss,
                    r.adv_loss,
                    r.diff_loss,
                    r.dev_accuracy
                )
            })
            .collect()
    }
}

/// Synthetic or file-backed dataset described by `cfg`.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data_source {
        DataSource::Synthetic => generate_synthetic(&cfg.generator, cfg.n_train, cfg.n_dev, cfg.n_test, &cfg.skew),
        DataSource::File(path) => load_embeddings(path),
    }
}

/// Train/dev/test views of a dataset.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Samples,
    pub dev: Samples,
    pub test: Samples,
}

impl Splits {
    pub fn new(data: &Dataset) -> Self {
        Self {
            train: data.subset(Split::Train),
            dev: data.subset(Split::Dev),
            test: data.subset(Split::Test),
        }
    }
}

/// Test-set metrics of a trained main model.
pub fn evaluate_checkpoint(checkpoint: &Checkpoint, test: &Samples, seed: u64, leakage: &LeakageConfig) -> Result<EvalRecord> {
    let (h, logits) = checkpoint.model.net().infer(&test.x)?;
    let y_hat = logits.argmax_rows();
    evaluate(&y_hat, &test.y, &test.g, &h, &logits, seed, leakage)
}

/// INLP on the fixed representations of `checkpoint`, evaluated on test.
pub fn evaluate_inlp(
    checkpoint: &Checkpoint,
    splits: &Splits,
    seed: u64,
    inlp: &InlpConfig,
    leakage: &LeakageConfig,
) -> Result<(EvalRecord, ProjectionState)> {
    let net = checkpoint.model.net();
    let train = splits.train.with_features(net.encode(&splits.train.x)?)?;
    let dev = splits.dev.with_features(net.encode(&splits.dev.x)?)?;
    let cfg = InlpConfig {
        probe: inlp.probe.with_seed(seed),
        ..*inlp
    };
    let out = run_inlp(&train, &dev, &cfg)?;
    let (projected, scores) = out.predict(&net.encode(&splits.test.x)?)?;
    let y_hat: Vec<usize> = scores.iter().map(|&s| usize::from(s > 0.0)).collect();
    let test = &splits.test;
    let gaps = tpr_tnr_gap(&y_hat, &test.y, &test.g)?;
    let score_matrix = RealMatrix::from_vec(scores.len(), 1, scores)?;
    let record = EvalRecord {
        accuracy: accuracy(&y_hat, &test.y),
        tpr_gap: gaps.tpr_gap,
        tnr_gap: gaps.tnr_gap,
        leakage_h: leakage_summary(&projected, &test.g, seed, leakage)?.mean,
        leakage_yhat: leakage_summary(&score_matrix, &test.g, seed, leakage)?.mean,
        per_group_accuracy: [gaps.confusion[0].accuracy(), gaps.confusion[1].accuracy()],
    };
    Ok((record, out.state))
}

/// Trains and evaluates one run of `cfg.method` with `seed`.
pub fn run_once(cfg: &ExperimentConfig, splits: &Splits, seed: u64) -> Result<RunOutput> {
    let start = Instant::now();
    let trainer = cfg.trainer(seed);
    let outcome = train_run(&splits.train, &splits.dev, &trainer)?;
    let leakage = cfg.leakage();
    let (eval, projection) = match cfg.method {
        RunMethod::Adversarial(_) => (evaluate_checkpoint(&outcome.checkpoint, &splits.test, seed, &leakage)?, None),
        RunMethod::Inlp => {
            let (e, p) = evaluate_inlp(&outcome.checkpoint, splits, seed, &cfg.inlp(), &leakage)?;
            (e, Some(p))
        }
    };
    let adversarial = !matches!(cfg.method, RunMethod::Inlp | RunMethod::Adversarial(Method::StandardNoAdv));
    let result = RunResult {
        method: cfg.method,
        seed,
        lambda_adv: if adversarial { trainer.lambda_adv } else { 0.0 },
        lambda_diff: if adversarial { trainer.lambda_diff } else { 0.0 },
        k: trainer.method.discriminators(trainer.k),
        eval,
        epochs_to_best: outcome.checkpoint.epoch + 1,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        result,
        history: outcome.history,
        checkpoint: outcome.checkpoint,
        projection,
    })
}

/// Runs `jobs` on up to `workers` threads and hands every result to `sink`
/// in job order, from the calling thread.
pub fn run_ordered<J, T, F, S>(jobs: &[J], workers: usize, work: F, mut sink: S)
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> T + Sync,
    S: FnMut(usize, T),
{
    let workers = workers.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, T)>();
    thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, work) = (&next, &work);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() || tx.send((i, work(&jobs[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut expected = 0;
        for (i, item) in rx {
            pending.insert(i, item);
            while let Some(item) = pending.remove(&expected) {
                sink(expected, item);
                expected += 1;
            }
        }
    });
}

/// `mean ± std` of every metric, grouped by label, in first-seen order.
pub fn summarize<'a>(rows: impl IntoIterator<Item = (String, &'a RunResult)>) -> String {
    let mut groups: Vec<(String, Vec<&RunResult>)> = Vec::new();
    for (label, r) in rows {
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, v)) => v.push(r),
            None => groups.push((label, vec![r])),
        }
    }
    let mut out = String::new();
    for (label, rs) in groups {
        out.push_str(&format!("{label} (n={})\n", rs.len()));
        let metrics: [(&str, fn(&EvalRecord) -> f64); 5] = [
            ("accuracy", |e| e.accuracy),
            ("tpr_gap", |e| e.tpr_gap),
            ("tnr_gap", |e| e.tnr_gap),
            ("leakage_h", |e| e.leakage_h),
            ("leakage_yhat", |e| e.leakage_yhat),
        ];
        for (name, f) in metrics {
            let vals: Vec<f64> = rs.iter().map(|r| f(&r.eval)).collect();
            let (m, s) = crate::fairmetrics::mean_std(&vals);
            out.push_str(&format!("  {name:<13} {:7.2} ± {:5.2}\n", 100.0 * m, 100.0 * s));
        }
    }
    out
}
