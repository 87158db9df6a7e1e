use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::model::{derive_seed, Discriminator, MainModel};
use super::objective::{difference_loss, grl_backward};
use crate::datagen::Samples;
use crate::error::{Error, Result};
use crate::numkit::{softmax_xent, Activation, AdamConfig, RealMatrix};

const SHUFFLE_STREAM: u64 = 0x300;

/// Which adversarial objective to train with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Main task only.
    StandardNoAdv,
    /// One discriminator through gradient reversal.
    AdvSingle,
    /// `k` independently initialised discriminators, losses averaged.
    AdvEnsemble,
    /// `AdvEnsemble` plus the difference loss on the discriminator encoders.
    DiffEnsemble,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::StandardNoAdv,
        Method::AdvSingle,
        Method::AdvEnsemble,
        Method::DiffEnsemble,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::StandardNoAdv => "standard_no_adv",
            Method::AdvSingle => "adv_single",
            Method::AdvEnsemble => "adv_ensemble",
            Method::DiffEnsemble => "diff_ensemble",
        }
    }

    /// Number of discriminators this method trains for a configured `k`.
    pub fn discriminators(self, k: usize) -> usize {
        match self {
            Method::StandardNoAdv => 0,
            Method::AdvSingle => 1,
            Method::AdvEnsemble | Method::DiffEnsemble => k,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown training method '{s}'")))
    }
}

/// Training hyperparameters. Defaults are the published settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialConfig {
    pub method: Method,
    pub k: usize,
    pub lambda_adv: f64,
    pub lambda_diff: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_main: f64,
    pub lr_disc: f64,
    pub seed: u64,
    pub hidden_main: usize,
    pub hidden_disc: usize,
    pub weight_decay: f64,
    pub activation: Activation,
    /// Route the difference-loss gradient into the main encoder as well.
    pub diff_into_encoder: bool,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            method: Method::DiffEnsemble,
            k: 3,
            lambda_adv: 0.8,
            lambda_diff: 10f64.powf(3.7),
            epochs: 60,
            batch_size: 1024,
            lr_main: 3e-5,
            lr_disc: 3e-6,
            seed: 0,
            hidden_main: 300,
            hidden_disc: 256,
            weight_decay: 1e-5,
            activation: Activation::Tanh,
            diff_into_encoder: false,
        }
    }
}

impl AdversarialConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.method == Method::AdvSingle && (self.k != 1 || self.lambda_diff != 0.0) {
            return bad("adv_single requires k = 1 and lambda_diff = 0".into());
        }
        if self.method == Method::AdvEnsemble && self.lambda_diff != 0.0 {
            return bad("adv_ensemble requires lambda_diff = 0".into());
        }
        for (name, v) in [
            ("lambda_adv", self.lambda_adv),
            ("lambda_diff", self.lambda_diff),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        for (name, v) in [("lr_main", self.lr_main), ("lr_disc", self.lr_disc)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden_main == 0 || self.hidden_disc == 0 {
            return bad("epochs, batch_size and hidden sizes must be positive".into());
        }
        Ok(())
    }

    /// Copy with `method` and the settings it implies (`k = 1` and no
    /// difference loss for `adv_single`, no difference loss for `adv_ensemble`).
    pub fn for_method(&self, method: Method) -> Self {
        let mut c = self.clone();
        c.method = method;
        match method {
            Method::AdvSingle => {
                c.k = 1;
                c.lambda_diff = 0.0;
            }
            Method::AdvEnsemble => c.lambda_diff = 0.0,
            Method::StandardNoAdv | Method::DiffEnsemble => {}
        }
        c
    }
}

/// Main model plus its discriminator ensemble.
#[derive(Debug, Clone)]
pub struct AdversarialModel {
    pub main: MainModel,
    pub discs: Vec<Discriminator>,
}

impl AdversarialModel {
    pub fn new(input_dim: usize, classes: usize, protected_classes: usize, cfg: &AdversarialConfig) -> Self {
        let mut main = MainModel::new(input_dim, cfg.hidden_main, classes, cfg.activation, cfg.seed);
        main.net_mut()
            .set_optimizer(AdamConfig::new(cfg.lr_main).with_weight_decay(cfg.weight_decay));
        let discs = (0..cfg.method.discriminators(cfg.k))
            .map(|j| {
                let mut a = Discriminator::new(
                    cfg.hidden_main,
                    cfg.hidden_disc,
                    protected_classes,
                    cfg.activation,
                    cfg.seed,
                    j,
                );
                a.net_mut()
                    .set_optimizer(AdamConfig::new(cfg.lr_disc).with_weight_decay(cfg.weight_decay));
                a
            })
            .collect();
        Self { main, discs }
    }
}

/// Mean losses of one minibatch. `adv` is the unsigned ensemble average and
/// `diff` the unweighted difference loss.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepLosses {
    pub main: f64,
    pub adv: f64,
    pub diff: f64,
}

fn finite(term: impl Into<String>, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Divergence {
            term: term.into(),
            value,
        })
    }
}

/// Forward and backward for one minibatch; gradients are accumulated into
/// every layer but no parameter is updated.
///
/// The main encoder receives `∇X(y, ŷ) − (λ_adv / k) Σ_j ∇X(g, ĝ_j)`; each
/// discriminator receives `∇X(g, ĝ_j)` and, for the differentiated ensemble,
/// `λ_diff ∇L_diff` on its encoder.
pub fn accumulate_gradients(
    model: &mut AdversarialModel,
    x: &RealMatrix,
    y: &[usize],
    g: &[usize],
    cfg: &AdversarialConfig,
) -> Result<StepLosses> {
    if x.rows() == 0 {
        return Err(Error::validation("empty minibatch"));
    }
    let net = model.main.net_mut();
    let (h, logits) = net.forward(x)?;
    let (main_loss, dlogits) = softmax_xent(&logits, y)?;
    let mut losses = StepLosses {
        main: finite("main task loss", main_loss)?,
        ..StepLosses::default()
    };
    let mut dh = net.backward_classifier(&dlogits)?;

    if !model.discs.is_empty() {
        let k = model.discs.len();
        let mut dh_adv = RealMatrix::zeros(h.rows(), h.cols());
        let mut h_as = Vec::with_capacity(k);
        let mut adv_total = 0.0;
        for (j, a) in model.discs.iter_mut().enumerate() {
            let net = a.net_mut();
            let (h_a, g_logits) = net.forward(&h)?;
            let (loss, dg) = softmax_xent(&g_logits, g)?;
            adv_total += finite(format!("adversarial loss (discriminator {j})"), loss)?;
            let dh_a = net.backward_classifier(&dg)?;
            dh_adv.add_scaled(1.0, &net.backward_encoder(&dh_a)?)?;
            h_as.push(h_a);
        }
        losses.adv = adv_total / k as f64;
        if cfg.lambda_adv != 0.0 {
            dh.add_scaled(cfg.lambda_adv / k as f64, &grl_backward(&dh_adv))?;
        }

        if cfg.method == Method::DiffEnsemble {
            let (diff, grads) = difference_loss(&h_as)?;
            losses.diff = finite("difference loss", diff)?;
            if cfg.lambda_diff != 0.0 {
                for (a, grad) in model.discs.iter_mut().zip(grads) {
                    let scaled = grad.scaled(cfg.lambda_diff);
                    if cfg.diff_into_encoder {
                        dh.add_scaled(1.0, &a.net_mut().backward_encoder(&scaled)?)?;
                    } else {
                        a.net_mut().backward_encoder_params(&scaled)?;
                    }
                }
            }
        }
    }

    model.main.net_mut().backward_encoder_params(&dh)?;
    Ok(losses)
}

/// One Adam step per parameter group; zeroes all gradients.
pub fn apply_updates(model: &mut AdversarialModel) {
    model.main.net_mut().adam_step();
    for a in &mut model.discs {
        a.net_mut().adam_step();
    }
}

/// One joint update on a minibatch.
pub fn adversarial_train_step(
    model: &mut AdversarialModel,
    x: &RealMatrix,
    y: &[usize],
    g: &[usize],
    cfg: &AdversarialConfig,
) -> Result<StepLosses> {
    let losses = accumulate_gradients(model, x, y, g, cfg)?;
    apply_updates(model);
    Ok(losses)
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub main_loss: f64,
    pub adv_loss: f64,
    pub diff_loss: f64,
    pub dev_accuracy: f64,
}

/// Epoch with the highest dev accuracy; ties go to the earliest epoch.
pub fn select_checkpoint(dev_accuracy: &[f64]) -> Result<usize> {
    if dev_accuracy.is_empty() {
        return Err(Error::validation("cannot select a checkpoint from an empty history"));
    }
    let mut best = 0;
    for (i, &a) in dev_accuracy.iter().enumerate() {
        if a > dev_accuracy[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    /// State after the final epoch (discriminators included).
    pub final_model: AdversarialModel,
}

/// Minibatch training with per-epoch dev evaluation; keeps the best-dev
/// main model. Fully determined by `cfg.seed`.
pub fn train_run(train: &Samples, dev: &Samples, cfg: &AdversarialConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::validation("train and dev splits must be non-empty"));
    }
    if train.x.cols() != dev.x.cols() {
        return Err(Error::shape("train_run splits", train.x.shape(), dev.x.shape()));
    }
    let classes = train.num_classes().max(dev.num_classes());
    let protected = train.num_protected().max(dev.num_protected());
    let mut model = AdversarialModel::new(train.x.cols(), classes, protected, cfg);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<Checkpoint> = None;
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SHUFFLE_STREAM + epoch as u64));
        order.shuffle(&mut rng);
        let mut sums = StepLosses::default();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.select(chunk);
            let l = adversarial_train_step(&mut model, &batch.x, &batch.y, &batch.g, cfg)?;
            sums.main += l.main;
            sums.adv += l.adv;
            sums.diff += l.diff;
            batches += 1;
        }
        let dev_accuracy = accuracy(&model.main.net().predict(&dev.x)?, &dev.y);
        let nb = batches as f64;
        history.push(EpochRecord {
            epoch,
            main_loss: sums.main / nb,
            adv_loss: sums.adv / nb,
            diff_loss: sums.diff / nb,
            dev_accuracy,
        });
        if best.as_ref().is_none_or(|b| dev_accuracy > b.dev_accuracy) {
            best = Some(Checkpoint {
                model: model.main.clone(),
                epoch,
                dev_accuracy,
            });
        }
    }
    let checkpoint = best.expect("at least one epoch ran");
    debug_assert_eq!(
        select_checkpoint(&history.iter().map(|r| r.dev_accuracy).collect::<Vec<_>>()).ok(),
        Some(checkpoint.epoch)
    );
    Ok(TrainOutcome {
        checkpoint,
        history,
        final_model: model,
    })
}
