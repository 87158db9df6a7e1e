use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datagen::{GeneratorSpec, SkewSpec};
use crate::error::{Error, Result};
use crate::fairmodel::{AdversarialConfig, Method};
use crate::inlp::{InlpConfig, ProbeConfig};
use crate::fairmetrics::LeakageConfig;
use crate::numkit::Activation;

/// A trainable method, including the post-hoc INLP baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunMethod {
    Adversarial(Method),
    Inlp,
}

impl RunMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMethod::Adversarial(m) => m.as_str(),
            RunMethod::Inlp => "inlp",
        }
    }
}

impl fmt::Display for RunMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "inlp" {
            return Ok(RunMethod::Inlp);
        }
        s.parse::<Method>().map(RunMethod::Adversarial).map_err(|_| {
            Error::validation(format!(
                "unknown method '{s}' (expected standard_no_adv, adv_single, adv_ensemble, diff_ensemble or inlp)"
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    LambdaAdv,
    LambdaDiff,
    K,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::LambdaAdv => "lambda_adv",
            SweepParam::LambdaDiff => "lambda_diff",
            SweepParam::K => "k",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda_adv" => Ok(SweepParam::LambdaAdv),
            "lambda_diff" => Ok(SweepParam::LambdaDiff),
            "k" => Ok(SweepParam::K),
            _ => Err(Error::validation(format!(
                "unknown sweep parameter '{s}' (expected lambda_adv, lambda_diff or k)"
            ))),
        }
    }
}

/// One grid point: the text as written plus its numeric value.
#[derive(Debug, Clone, PartialEq)]
pub struct GridValue {
    pub text: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub grid: Vec<GridValue>,
}

/// Everything one `train` or `sweep` invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: RunMethod,
    /// Trainer settings; `train.seed` is the first run seed.
    pub train: AdversarialConfig,
    pub generator: GeneratorSpec,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub skew: SkewSpec,
    pub n_seeds: usize,
    pub data_source: DataSource,
    pub output_path: Option<PathBuf>,
    pub sweep: Option<Sweep>,
    pub inlp_max_iterations: usize,
    pub probe_epochs: usize,
    pub probe_lambda: f64,
    pub leakage_repeats: usize,
    pub history: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let probe = ProbeConfig::default();
        Self {
            method: RunMethod::Adversarial(Method::DiffEnsemble),
            train: AdversarialConfig::default(),
            generator: GeneratorSpec::default(),
            n_train: 20_000,
            n_dev: 2_000,
            n_test: 4_000,
            skew: SkewSpec::skewed(),
            n_seeds: 1,
            data_source: DataSource::Synthetic,
            output_path: None,
            sweep: None,
            inlp_max_iterations: InlpConfig::default().max_iterations,
            probe_epochs: probe.epochs,
            probe_lambda: probe.lambda,
            leakage_repeats: LeakageConfig::default().repeats,
            history: false,
        }
    }
}

/// Every accepted configuration key.
pub const KEYS: &[&str] = &[
    "method",
    "k",
    "lambda_adv",
    "lambda_diff",
    "epochs",
    "batch_size",
    "lr_main",
    "lr_disc",
    "seed",
    "hidden_main",
    "hidden_disc",
    "weight_decay",
    "activation",
    "diff_into_encoder",
    "d",
    "main_signal",
    "protected_signal",
    "noise_sigma",
    "y_dims",
    "g_dims",
    "data_seed",
    "n_train",
    "n_dev",
    "n_test",
    "skew",
    "n_seeds",
    "data_source",
    "output_path",
    "sweep_param",
    "sweep_grid",
    "inlp_max_iterations",
    "probe_epochs",
    "probe_lambda",
    "leakage_repeats",
    "history",
];

fn type_error(key: &str, expected: &str, got: &str) -> Error {
    Error::validation(format!("key '{key}' expects {expected}, got '{got}'"))
}

/// Reals, with `a^b` accepted as a power (e.g. `10^3.7`).
pub fn parse_real(text: &str) -> Option<f64> {
    let t = text.trim();
    let v = match t.split_once('^') {
        Some((base, exp)) => base.trim().parse::<f64>().ok()?.powf(exp.trim().parse::<f64>().ok()?),
        None => t.parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

fn real(key: &str, v: &str) -> Result<f64> {
    parse_real(v).ok_or_else(|| type_error(key, "a real number", v))
}

fn count(key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| type_error(key, "a non-negative integer", v))
}

fn integer(key: &str, v: &str) -> Result<u64> {
    v.trim().parse().map_err(|_| type_error(key, "a non-negative integer", v))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(type_error(key, "a boolean (true/false)", v)),
    }
}

fn list<T>(key: &str, v: &str, expected: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    v.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| f(t).ok_or_else(|| type_error(key, expected, t)))
        .collect()
}

/// Index lists written as `0,1,2` or ranges `0..8` (end exclusive).
fn index_list(key: &str, v: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = v.trim().split_once("..") {
        let (a, b) = (count(key, a)?, count(key, b)?);
        return Ok((a..b).collect());
    }
    list(key, v, "a comma-separated index list or a range a..b", |t| t.parse().ok())
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "method" => self.method = v.parse()?,
            "k" => self.train.k = count(key, v)?,
            "lambda_adv" => self.train.lambda_adv = real(key, v)?,
            "lambda_diff" => self.train.lambda_diff = real(key, v)?,
            "epochs" => self.train.epochs = count(key, v)?,
            "batch_size" => self.train.batch_size = count(key, v)?,
            "lr_main" => self.train.lr_main = real(key, v)?,
            "lr_disc" => self.train.lr_disc = real(key, v)?,
            "seed" => self.train.seed = integer(key, v)?,
            "hidden_main" => self.train.hidden_main = count(key, v)?,
            "hidden_disc" => self.train.hidden_disc = count(key, v)?,
            "weight_decay" => self.train.weight_decay = real(key, v)?,
            "activation" => {
                self.train.activation = match v {
                    "tanh" => Activation::Tanh,
                    "relu" => Activation::Relu,
                    "identity" => Activation::Identity,
                    _ => return Err(type_error(key, "one of tanh, relu, identity", v)),
                }
            }
            "diff_into_encoder" => self.train.diff_into_encoder = boolean(key, v)?,
            "d" => self.generator.d = count(key, v)?,
            "main_signal" => self.generator.main_signal = real(key, v)?,
            "protected_signal" => self.generator.protected_signal = real(key, v)?,
            "noise_sigma" => self.generator.noise_sigma = real(key, v)?,
            "y_dims" => self.generator.y_dims = index_list(key, v)?,
            "g_dims" => self.generator.g_dims = index_list(key, v)?,
            "data_seed" => self.generator.seed = integer(key, v)?,
            "n_train" => self.n_train = count(key, v)?,
            "n_dev" => self.n_dev = count(key, v)?,
            "n_test" => self.n_test = count(key, v)?,
            "skew" => {
                let p = list(key, v, "four comma-separated proportions", parse_real)?;
                let p: [f64; 4] = p
                    .try_into()
                    .map_err(|_| type_error(key, "four comma-separated proportions", v))?;
                self.skew = SkewSpec::new(p)?;
            }
            "n_seeds" => self.n_seeds = count(key, v)?,
            "data_source" => {
                self.data_source = match v {
                    "synthetic" => DataSource::Synthetic,
                    _ => match v.strip_prefix("file:") {
                        Some(p) if !p.is_empty() => DataSource::File(PathBuf::from(p)),
                        _ => return Err(type_error(key, "'synthetic' or 'file:<path>'", v)),
                    },
                }
            }
            "output_path" => self.output_path = Some(PathBuf::from(v)),
            "sweep_param" => {
                let param = v.parse()?;
                let grid = self.sweep.take().map(|s| s.grid).unwrap_or_default();
                self.sweep = Some(Sweep { param, grid });
            }
            "sweep_grid" => {
                let grid = v
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        parse_real(t)
                            .map(|value| GridValue { text: t.to_string(), value })
                            .ok_or_else(|| type_error(key, "a comma-separated list of reals", t))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let param = self.sweep.as_ref().map_or(SweepParam::LambdaAdv, |s| s.param);
                self.sweep = Some(Sweep { param, grid });
            }
            "inlp_max_iterations" => self.inlp_max_iterations = count(key, v)?,
            "probe_epochs" => self.probe_epochs = count(key, v)?,
            "probe_lambda" => self.probe_lambda = real(key, v)?,
            "leakage_repeats" => self.leakage_repeats = count(key, v)?,
            "history" => self.history = boolean(key, v)?,
            _ => return Err(Error::validation(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Parses flat `key = value` text on top of the defaults. `#` starts a
    /// comment; a key may appear only once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) && KEYS.contains(&key) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate key '{key}'"),
                });
            }
            self.set(key, value).map_err(|e| match e {
                Error::Validation(message) => Error::Parse { line: i + 1, message },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Trainer settings for one run of `method` with `seed`.
    pub fn trainer(&self, seed: u64) -> AdversarialConfig {
        let method = match self.method {
            RunMethod::Adversarial(m) => m,
            RunMethod::Inlp => Method::StandardNoAdv,
        };
        let mut c = self.train.for_method(method);
        c.seed = seed;
        c
    }

    /// Seeds of the configured runs.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.train.seed + i).collect()
    }

    pub fn probe(&self) -> ProbeConfig {
        ProbeConfig {
            epochs: self.probe_epochs,
            lambda: self.probe_lambda,
            ..ProbeConfig::default()
        }
    }

    pub fn leakage(&self) -> LeakageConfig {
        LeakageConfig {
            repeats: self.leakage_repeats,
            probe: self.probe(),
            ..LeakageConfig::default()
        }
    }

    pub fn inlp(&self) -> InlpConfig {
        InlpConfig {
            max_iterations: self.inlp_max_iterations,
            probe: self.probe(),
            ..InlpConfig::default()
        }
    }

    /// Copy with one sweep value applied.
    pub fn with_sweep_value(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match param {
            SweepParam::LambdaAdv => c.train.lambda_adv = value,
            SweepParam::LambdaDiff => c.train.lambda_diff = value,
            SweepParam::K => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::validation(format!("sweep value {value} is not a valid k")));
                }
                c.train.k = value as usize;
            }
        }
        c.sweep = None;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::validation("n_seeds must be at least 1"));
        }
        self.trainer(self.train.seed).validate()?;
        if self.data_source == DataSource::Synthetic {
            self.generator.validate()?;
            if self.n_train == 0 || self.n_dev == 0 || self.n_test == 0 {
                return Err(Error::validation("n_train, n_dev and n_test must be positive"));
            }
        }
        if self.probe_epochs == 0 || self.leakage_repeats == 0 {
            return Err(Error::validation("probe_epochs and leakage_repeats must be positive"));
        }
        if !(self.probe_lambda > 0.0) {
            return Err(Error::validation("probe_lambda must be > 0"));
        }
        if let Some(s) = &self.sweep {
            if s.grid.is_empty() {
                return Err(Error::validation("sweep_grid must be non-empty"));
            }
            for g in &s.grid {
                self.with_sweep_value(s.param, g.value)?.validate()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_published_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.train.lambda_adv, 0.8);
        assert_eq!(c.train.lambda_diff, 10f64.powf(3.7));
        assert_eq!(c.train.batch_size, 1024);
        assert_eq!((c.train.lr_main, c.train.lr_disc), (3e-5, 3e-6));
        assert_eq!(c.train.epochs, 60);
        assert_eq!((c.train.hidden_main, c.train.hidden_disc), (300, 256));
        assert_eq!(c.train.k, 3);
        assert_eq!((c.n_train, c.n_dev, c.n_test, c.generator.d), (20_000, 2_000, 4_000, 48));
        c.validate().unwrap();
    }

    #[test]
    fn parses_values() {
        let c = ExperimentConfig::parse(
            "# comment\nlambda_adv = 0.8\nlambda_diff = 10^-6\nmethod = inlp\ny_dims = 0..4\ng_dims = 4,5\n\
             skew = 0.25,0.25,0.25,0.25\ndata_source = file:emb.txt\nsweep_param = k\nsweep_grid = 1, 3,5\n",
        )
        .unwrap();
        assert_eq!(c.train.lambda_adv, 0.8);
        assert!((c.train.lambda_diff - 1e-6).abs() < 1e-20);
        assert_eq!(c.method, RunMethod::Inlp);
        assert_eq!(c.generator.y_dims, vec![0, 1, 2, 3]);
        assert_eq!(c.generator.g_dims, vec![4, 5]);
        assert_eq!(c.data_source, DataSource::File("emb.txt".into()));
        let s = c.sweep.unwrap();
        assert_eq!(s.param, SweepParam::K);
        assert_eq!(s.grid.iter().map(|g| g.text.as_str()).collect::<Vec<_>>(), ["1", "3", "5"]);
    }

    #[test]
    fn type_errors_name_key_and_type() {
        let e = ExperimentConfig::parse("lambda_adv = banana").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("lambda_adv") && msg.contains("real number"), "{msg}");
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        assert!(ExperimentConfig::parse("k = 2.5").unwrap_err().to_string().contains("integer"));
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let e = ExperimentConfig::parse("lambda = 1").unwrap_err();
        assert!(e.to_string().contains("'lambda'"), "{e}");
        assert!(ExperimentConfig::parse("k = 1\nk = 2").is_err());
        assert!(ExperimentConfig::parse("just text").is_err());
    }

    #[test]
    fn validation_rules() {
        let mut c = ExperimentConfig::default();
        c.n_seeds = 0;
        assert!(c.validate().is_err());
        let c = ExperimentConfig::parse("sweep_param = lambda_adv").unwrap();
        assert!(c.validate().is_err());
        let c = ExperimentConfig::parse("sweep_param = k\nsweep_grid = 0").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn trainer_applies_method_implications() {
        let c = ExperimentConfig::parse("method = adv_single").unwrap();
        let t = c.trainer(7);
        assert_eq!((t.k, t.lambda_diff, t.seed), (1, 0.0, 7));
        let c = ExperimentConfig::parse("method = inlp").unwrap();
        assert_eq!(c.trainer(0).method, Method::StandardNoAdv);
        assert_eq!(ExperimentConfig::parse("seed = 10\nn_seeds = 3").unwrap().seeds(), vec![10, 11, 12]);
    }

    #[test]
    fn every_key_is_settable() {
        let samples = [
            ("method", "adv_ensemble"), ("k", "2"), ("lambda_adv", "1"), ("lambda_diff", "0"),
            ("epochs", "2"), ("batch_size", "8"), ("lr_main", "1e-3"), ("lr_disc", "1e-3"),
            ("seed", "1"), ("hidden_main", "4"), ("hidden_disc", "4"), ("weight_decay", "0"),
            ("activation", "relu"), ("diff_into_encoder", "true"), ("d", "20"), ("main_signal", "1"),
            ("protected_signal", "2"), ("noise_sigma", "1"), ("y_dims", "0..2"), ("g_dims", "2..4"),
            ("data_seed", "3"), ("n_train", "10"), ("n_dev", "10"), ("n_test", "10"),
            ("skew", "0.4,0.1,0.1,0.4"), ("n_seeds", "2"), ("data_source", "synthetic"),
            ("output_path", "x.csv"), ("sweep_param", "lambda_adv"), ("sweep_grid", "1,2"),
            ("inlp_max_iterations", "3"), ("probe_epochs", "2"), ("probe_lambda", "1e-3"),
            ("leakage_repeats", "2"), ("history", "false"),
        ];
        assert_eq!(samples.len(), KEYS.len());
        let mut c = ExperimentConfig::default();
        for (k, v) in samples {
            assert!(KEYS.contains(&k));
            c.set(k, v).unwrap();
        }
        c.validate().unwrap();
    }
}
