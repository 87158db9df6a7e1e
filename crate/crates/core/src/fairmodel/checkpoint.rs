use std::fs;
use std::path::Path;

use super::model::{EncoderClassifier, MainModel};
use crate::error::{Error, Result};
use crate::numkit::{Activation, DenseLayer, RealMatrix};

const MAGIC: &str = "fairadv-checkpoint";
const VERSION: u32 = 1;

/// Best-dev main model snapshot.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: MainModel,
    pub epoch: usize,
    pub dev_accuracy: f64,
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Identity => "identity",
        Activation::Tanh => "tanh",
        Activation::Relu => "relu",
    }
}

fn parse_activation(s: &str) -> Option<Activation> {
    match s {
        "identity" => Some(Activation::Identity),
        "tanh" => Some(Activation::Tanh),
        "relu" => Some(Activation::Relu),
        _ => None,
    }
}

fn join(values: &[f64]) -> String {
    // `{}` on f64 prints the shortest string that parses back to the same value.
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

impl Checkpoint {
    /// Line-oriented text encoding; parameters round-trip bit-exactly.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{MAGIC} {VERSION}\nepoch {}\ndev_accuracy {}\n",
            self.epoch, self.dev_accuracy
        );
        for layer in self.model.net().layers() {
            out.push_str(&format!(
                "layer {} {} {}\n{}\n{}\n",
                layer.in_dim(),
                layer.out_dim(),
                activation_name(layer.activation()),
                join(layer.weight().as_slice()),
                join(layer.bias()),
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("unexpected end of checkpoint, expected {what}"),
            })
        };
        let perr = |line: usize, message: String| Error::Parse { line, message };

        let (ln, header) = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(perr(ln, "not a fairadv checkpoint".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| perr(ln, "missing version".into()))?;
        if version != VERSION {
            return Err(perr(ln, format!("unsupported checkpoint version {version}")));
        }
        let mut keyed = |key: &str| -> Result<(usize, String)> {
            let (ln, l) = next(key)?;
            l.strip_prefix(key)
                .map(|v| (ln, v.trim().to_string()))
                .ok_or_else(|| perr(ln, format!("expected '{key}'")))
        };
        let (ln, epoch) = keyed("epoch")?;
        let epoch = epoch.parse().map_err(|_| perr(ln, "bad epoch".into()))?;
        let (ln, acc) = keyed("dev_accuracy")?;
        let dev_accuracy = acc.parse().map_err(|_| perr(ln, "bad dev_accuracy".into()))?;

        let mut layers = Vec::with_capacity(3);
        for _ in 0..3 {
            let (ln, spec) = next("layer")?;
            let f: Vec<&str> = spec.split_whitespace().collect();
            if f.len() != 4 || f[0] != "layer" {
                return Err(perr(ln, "expected 'layer <in> <out> <activation>'".into()));
            }
            let dims: Option<(usize, usize)> = f[1].parse().ok().zip(f[2].parse().ok());
            let (in_dim, out_dim) = dims.ok_or_else(|| perr(ln, "bad layer dimensions".into()))?;
            let act = parse_activation(f[3]).ok_or_else(|| perr(ln, format!("unknown activation '{}'", f[3])))?;
            let mut read = |count: usize| -> Result<Vec<f64>> {
                let (ln, l) = next("parameter values")?;
                let vals = l
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| perr(ln, e.to_string()))?;
                if vals.len() != count {
                    return Err(perr(ln, format!("expected {count} values, found {}", vals.len())));
                }
                Ok(vals)
            };
            let w = read(in_dim * out_dim)?;
            let b = read(out_dim)?;
            layers.push(DenseLayer::from_parts(RealMatrix::from_vec(out_dim, in_dim, w)?, b, act)?);
        }
        let classifier = layers.pop().expect("three layers");
        let second = layers.pop().expect("three layers");
        let first = layers.pop().expect("three layers");
        Ok(Self {
            model: MainModel(EncoderClassifier::from_layers(first, second, classifier)?),
            epoch,
            dev_accuracy,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            model: MainModel::new(5, 4, 2, Activation::Tanh, 42),
            epoch: 7,
            dev_accuracy: 0.8125,
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::from_text(&c.to_text()).unwrap();
        assert_eq!(back.model.net().params(), c.model.net().params());
        assert_eq!(back.epoch, 7);
        assert_eq!(back.dev_accuracy, 0.8125);
        assert_eq!(back.model.net().layers()[2].activation(), Activation::Identity);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let c = sample();
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap().model.net().params(), c.model.net().params());
    }

    #[test]
    fn rejects_corruption() {
        let text = sample().to_text();
        assert!(Checkpoint::from_text(&text.replace("fairadv-checkpoint 1", "fairadv-checkpoint 9")).is_err());
        let truncated: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(Checkpoint::from_text(&truncated).is_err());
        let mut lines: Vec<&str> = text.lines().collect();
        lines[4] = "1.0 2.0";
        match Checkpoint::from_text(&lines.join("\n")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }
}
