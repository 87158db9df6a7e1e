//! Equalized-odds gaps and linear leakage probes.
//!
//! `y = 1` is the positive class for TPR; `g` is binary.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fairmodel::{accuracy, derive_seed};
use crate::inlp::{train_linear_probe, ProbeConfig};
use crate::numkit::RealMatrix;

/// Confusion counts of one protected group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroupConfusion {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl GroupConfusion {
    pub fn tpr(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_) as f64
    }

    pub fn tnr(&self) -> f64 {
        self.tn as f64 / (self.tn + self.fp) as f64
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / (self.tp + self.fn_ + self.tn + self.fp) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub tpr_gap: f64,
    pub tnr_gap: f64,
    /// Indexed by `g`.
    pub confusion: [GroupConfusion; 2],
}

/// `|TPR_{g=0} − TPR_{g=1}|` and the same for TNR.
pub fn tpr_tnr_gap(y_hat: &[usize], y: &[usize], g: &[usize]) -> Result<GapReport> {
    if y_hat.len() != y.len() || g.len() != y.len() {
        return Err(Error::validation(format!(
            "length mismatch: {} predictions, {} labels, {} groups",
            y_hat.len(),
            y.len(),
            g.len()
        )));
    }
    let mut confusion = [GroupConfusion::default(); 2];
    for ((&p, &t), &grp) in y_hat.iter().zip(y).zip(g) {
        if p > 1 || t > 1 || grp > 1 {
            return Err(Error::validation("labels, predictions and groups must be binary"));
        }
        let c = &mut confusion[grp];
        match (t, p) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fn_ += 1,
            (_, 0) => c.tn += 1,
            _ => c.fp += 1,
        }
    }
    for (grp, c) in confusion.iter().enumerate() {
        if c.tp + c.fn_ == 0 {
            return Err(Error::validation(format!("empty cell (y=1, g={grp}): TPR undefined")));
        }
        if c.tn + c.fp == 0 {
            return Err(Error::validation(format!("empty cell (y=0, g={grp}): TNR undefined")));
        }
    }
    Ok(GapReport {
        tpr_gap: (confusion[0].tpr() - confusion[1].tpr()).abs(),
        tnr_gap: (confusion[0].tnr() - confusion[1].tnr()).abs(),
        confusion,
    })
}

/// Probe settings shared by every leakage measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakageConfig {
    pub train_fraction: f64,
    pub repeats: usize,
    pub probe: ProbeConfig,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            repeats: 5,
            probe: ProbeConfig::default(),
        }
    }
}

/// Held-out accuracy of a fresh linear probe predicting `g` from `features`,
/// on a random `train_fraction` split drawn from `split_seed`.
pub fn leakage_probe(features: &RealMatrix, g: &[usize], split_seed: u64, cfg: &LeakageConfig) -> Result<f64> {
    let n = features.rows();
    if g.len() != n {
        return Err(Error::validation(format!("{n} rows but {} protected labels", g.len())));
    }
    if g.iter().all(|&v| v == g[0]) {
        return Err(Error::validation("leakage probe needs both protected classes"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let cut = ((n as f64) * cfg.train_fraction).round() as usize;
    if cut < 2 || cut >= n {
        return Err(Error::validation(format!("{n} rows are too few for a probe split")));
    }
    let (fit, held) = order.split_at(cut);
    let fit_g: Vec<usize> = fit.iter().map(|&i| g[i]).collect();
    let held_g: Vec<usize> = held.iter().map(|&i| g[i]).collect();
    let probe = train_linear_probe(&features.select_rows(fit), &fit_g, &cfg.probe.with_seed(split_seed))?;
    Ok(accuracy(&probe.predict(&features.select_rows(held))?, &held_g))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakageSummary {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation of `cfg.repeats` leakage probes.
pub fn leakage_summary(features: &RealMatrix, g: &[usize], seed: u64, cfg: &LeakageConfig) -> Result<LeakageSummary> {
    if cfg.repeats == 0 {
        return Err(Error::validation("leakage repeats must be >= 1"));
    }
    let acc = (0..cfg.repeats)
        .map(|r| leakage_probe(features, g, derive_seed(seed, 0x500 + r as u64), cfg))
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&acc);
    Ok(LeakageSummary { mean, std })
}

/// Mean and sample (n − 1) standard deviation; std is 0 for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Test-set metrics of one trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub accuracy: f64,
    pub tpr_gap: f64,
    pub tnr_gap: f64,
    pub leakage_h: f64,
    pub leakage_yhat: f64,
    /// Indexed by `g`.
    pub per_group_accuracy: [f64; 2],
}

/// Full evaluation from predictions, hidden representations and logits.
pub fn evaluate(
    y_hat: &[usize],
    y: &[usize],
    g: &[usize],
    hidden: &RealMatrix,
    logits: &RealMatrix,
    seed: u64,
    cfg: &LeakageConfig,
) -> Result<EvalRecord> {
    let gaps = tpr_tnr_gap(y_hat, y, g)?;
    Ok(EvalRecord {
        accuracy: accuracy(y_hat, y),
        tpr_gap: gaps.tpr_gap,
        tnr_gap: gaps.tnr_gap,
        leakage_h: leakage_summary(hidden, g, seed, cfg)?.mean,
        leakage_yhat: leakage_summary(logits, g, seed, cfg)?.mean,
        per_group_accuracy: [gaps.confusion[0].accuracy(), gaps.confusion[1].accuracy()],
    })
}
