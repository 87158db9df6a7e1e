//! Iterative null-space projection: repeatedly fit a linear probe for the
//! protected attribute on fixed representations and project its direction
//! out.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::Samples;
use crate::error::{Error, Result};
use crate::fairmodel::{accuracy, derive_seed};
use crate::numkit::{matmul, RealMatrix};

/// Hyperparameters of the hinge-loss probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 regularization constant of the SVM objective.
    pub lambda: f64,
    /// Step size at the first update; later steps decay as `1/(lambda (t + t0))`.
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            lambda: 1e-4,
            initial_step: 1.0,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::validation("probe epochs and batch size must be >= 1"));
        }
        if !(self.lambda > 0.0 && self.initial_step > 0.0) {
            return Err(Error::validation("probe lambda and step must be > 0"));
        }
        Ok(())
    }
}

/// Binary linear classifier `score = w·x + b`, positive score ⇒ label 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub weight: Vec<f64>,
    pub bias: f64,
}

impl LinearProbe {
    pub fn dim(&self) -> usize {
        self.weight.len()
    }

    pub fn scores(&self, x: &RealMatrix) -> Result<Vec<f64>> {
        if x.cols() != self.dim() {
            return Err(Error::shape("probe scores", x.shape(), crate::error::Shape(1, self.dim())));
        }
        Ok((0..x.rows())
            .map(|i| dot(x.row(i), &self.weight) + self.bias)
            .collect())
    }

    pub fn predict(&self, x: &RealMatrix) -> Result<Vec<usize>> {
        Ok(self.scores(x)?.into_iter().map(|s| usize::from(s > 0.0)).collect())
    }

    pub fn accuracy(&self, x: &RealMatrix, labels: &[usize]) -> Result<f64> {
        Ok(accuracy(&self.predict(x)?, labels))
    }

    /// Unit-norm separating direction, or `None` for a zero weight.
    pub fn direction(&self) -> Option<Vec<f64>> {
        let norm = dot(&self.weight, &self.weight).sqrt();
        (norm > 0.0 && norm.is_finite()).then(|| self.weight.iter().map(|w| w / norm).collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fraction of the most frequent label.
pub fn majority_fraction(labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    ones.max(labels.len() - ones) as f64 / labels.len() as f64
}

/// Minibatch subgradient descent on `λ/2 ‖w‖² + mean hinge(±1 labels)`.
///
/// Features are centered and divided by their global RMS before training so
/// the step schedule is scale-free; the returned probe is expressed in the
/// original coordinates. The result is the average of the iterates over the
/// second half of training.
pub fn train_linear_probe(x: &RealMatrix, labels: &[usize], cfg: &ProbeConfig) -> Result<LinearProbe> {
    cfg.validate()?;
    let (n, d) = (x.rows(), x.cols());
    if labels.len() != n {
        return Err(Error::validation(format!("{n} rows but {} labels", labels.len())));
    }
    if n < 2 {
        return Err(Error::validation("probe needs at least 2 samples"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::validation("probe labels must be 0 or 1"));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::validation("probe labels contain a single class"));
    }

    let mean: Vec<f64> = x.column_sums().into_iter().map(|s| s / n as f64).collect();
    let centered = RealMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let rms = (centered.frobenius_sq() / (n * d).max(1) as f64).sqrt();
    // Round-off residue (e.g. after full-rank projection) carries no signal.
    let informative = rms > 1e-10 && rms.is_finite();
    let scale = if informative { rms } else { 1.0 };
    let z = if informative { centered.scaled(1.0 / scale) } else { RealMatrix::zeros(n, d) };
    let sign: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; d];
    let mut b_avg = 0.0;
    let mut averaged = 0usize;
    let t0 = 1.0 / (cfg.lambda * cfg.initial_step);
    let batches_per_epoch = n.div_ceil(cfg.batch_size);
    let total = cfg.epochs * batches_per_epoch;
    let mut grad = vec![0.0; d];
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let eta = 1.0 / (cfg.lambda * (t as f64 + t0));
            grad.fill(0.0);
            let mut grad_b = 0.0;
            for &i in batch {
                let row = z.row(i);
                if sign[i] * (dot(row, &w) + b) < 1.0 {
                    for (g, &v) in grad.iter_mut().zip(row) {
                        *g -= sign[i] * v;
                    }
                    grad_b -= sign[i];
                }
            }
            let m = batch.len() as f64;
            for (wj, gj) in w.iter_mut().zip(&grad) {
                *wj -= eta * (cfg.lambda * *wj + gj / m);
            }
            b -= eta * grad_b / m;
            t += 1;
            if 2 * t > total {
                averaged += 1;
                let a = 1.0 / averaged as f64;
                for (wa, &wj) in w_avg.iter_mut().zip(&w) {
                    *wa += a * (wj - *wa);
                }
                b_avg += a * (b - b_avg);
            }
        }
    }
    let weight: Vec<f64> = w_avg.iter().map(|v| v / scale).collect();
    let bias = b_avg - dot(&weight, &mean);
    if weight.iter().any(|v| !v.is_finite()) || !bias.is_finite() {
        return Err(Error::Divergence {
            term: "linear probe".into(),
            value: bias,
        });
    }
    Ok(LinearProbe { weight, bias })
}

/// Orthonormalizes the rows of `basis` by Gram–Schmidt, dropping rows whose
/// residual norm falls below `1e-10`.
pub fn orthonormalize(basis: &RealMatrix) -> Result<RealMatrix> {
    let (m, d) = (basis.rows(), basis.cols());
    if m > d {
        return Err(Error::validation(format!("{m} basis rows exceed dimension {d}")));
    }
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut v = basis.row(i).to_vec();
        // Two passes keep the result orthogonal to round-off.
        for _ in 0..2 {
            for u in &kept {
                let c = dot(&v, u);
                for (vj, uj) in v.iter_mut().zip(u) {
                    *vj -= c * uj;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm >= 1e-10 {
            kept.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    if kept.is_empty() {
        return Ok(RealMatrix::zeros(0, d));
    }
    RealMatrix::from_rows(&kept)
}

/// `P = I − BᵀB` for the orthonormalized rows `B` of `basis`.
pub fn nullspace_projection(basis: &RealMatrix) -> Result<RealMatrix> {
    let b = orthonormalize(basis)?;
    Ok(projector_from_orthonormal(&b))
}

fn projector_from_orthonormal(b: &RealMatrix) -> RealMatrix {
    let d = b.cols();
    let mut p = RealMatrix::identity(d);
    for r in 0..b.rows() {
        let u = b.row(r);
        for i in 0..d {
            for j in 0..d {
                p.as_mut_slice()[i * d + j] -= u[i] * u[j];
            }
        }
    }
    p
}

/// One probe fit during an INLP run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub train_accuracy: f64,
    pub dev_accuracy: f64,
    pub majority: f64,
    /// Whether the probe's direction was added to the basis.
    pub removed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionState {
    /// Orthonormal rows spanning every removed direction.
    pub basis: RealMatrix,
    pub projection: RealMatrix,
    pub iteration_log: Vec<IterationRecord>,
}

impl ProjectionState {
    pub fn new(d: usize) -> Self {
        Self {
            basis: RealMatrix::zeros(0, d),
            projection: RealMatrix::identity(d),
            iteration_log: Vec::new(),
        }
    }

    pub fn removed(&self) -> usize {
        self.basis.rows()
    }

    /// `X Pᵀ` (P is symmetric).
    pub fn project(&self, x: &RealMatrix) -> Result<RealMatrix> {
        matmul(x, &self.projection)
    }

    /// Adds `direction` to the basis; returns false if it lies in the span
    /// of the directions already removed.
    pub fn remove_direction(&mut self, direction: &[f64]) -> Result<bool> {
        let d = self.projection.rows();
        if direction.len() != d {
            return Err(Error::shape(
                "remove_direction",
                crate::error::Shape(1, direction.len()),
                crate::error::Shape(1, d),
            ));
        }
        let mut rows: Vec<Vec<f64>> = (0..self.basis.rows()).map(|i| self.basis.row(i).to_vec()).collect();
        rows.push(direction.to_vec());
        let b = orthonormalize(&RealMatrix::from_rows(&rows)?)?;
        if b.rows() == self.basis.rows() {
            return Ok(false);
        }
        self.projection = projector_from_orthonormal(&b);
        self.basis = b;
        Ok(true)
    }

    /// Per-iteration probe accuracies as CSV with a header line.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("iteration,train_accuracy,dev_accuracy,majority,removed\n");
        for r in &self.iteration_log {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iteration, r.train_accuracy, r.dev_accuracy, r.majority, r.removed
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InlpConfig {
    pub max_iterations: usize,
    /// Stop once the dev probe accuracy is within this margin of majority.
    pub tolerance: f64,
    pub probe: ProbeConfig,
}

impl Default for InlpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 64,
            tolerance: 0.01,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InlpOutcome {
    pub state: ProjectionState,
    /// Projected training representations.
    pub projected: RealMatrix,
    /// Main-task classifier trained on the projected training representations.
    pub classifier: LinearProbe,
}

impl InlpOutcome {
    /// Projects `x` and applies the post-hoc main-task classifier.
    pub fn predict(&self, x: &RealMatrix) -> Result<(RealMatrix, Vec<f64>)> {
        let projected = self.state.project(x)?;
        let scores = self.classifier.scores(&projected)?;
        Ok((projected, scores))
    }
}

/// Runs INLP on fixed representations: `train.g` drives the probes,
/// `dev.g` decides when to stop, and `train.y` trains the final classifier.
pub fn run_inlp(train: &Samples, dev: &Samples, cfg: &InlpConfig) -> Result<InlpOutcome> {
    let d = train.x.cols();
    if dev.x.cols() != d {
        return Err(Error::shape("run_inlp", train.x.shape(), dev.x.shape()));
    }
    // At most d directions can be removed.
    let max_iterations = cfg.max_iterations.min(d);
    let majority = majority_fraction(&dev.g);
    let mut state = ProjectionState::new(d);
    let mut projected = train.x.clone();
    for iteration in 0..=max_iterations {
        let probe_cfg = cfg.probe.with_seed(derive_seed(cfg.probe.seed, 0x400 + iteration as u64));
        let probe = train_linear_probe(&projected, &train.g, &probe_cfg)?;
        let dev_accuracy = probe.accuracy(&state.project(&dev.x)?, &dev.g)?;
        let mut record = IterationRecord {
            iteration,
            train_accuracy: probe.accuracy(&projected, &train.g)?,
            dev_accuracy,
            majority,
            removed: false,
        };
        let done = iteration == max_iterations || dev_accuracy <= majority + cfg.tolerance;
        if !done {
            if let Some(dir) = probe.direction() {
                record.removed = state.remove_direction(&dir)?;
            }
        }
        state.iteration_log.push(record);
        if done || !record.removed {
            break;
        }
        projected = state.project(&train.x)?;
    }
    let main_cfg = cfg.probe.with_seed(derive_seed(cfg.probe.seed, 0x4FF));
    let classifier = train_linear_probe(&projected, &train.y, &main_cfg)?;
    Ok(InlpOutcome {
        state,
        projected,
        classifier,
    })
}
