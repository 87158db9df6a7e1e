use crate::error::{Error, Result, Shape};
use crate::numkit::{Activation, AdamConfig, DenseLayer, RealMatrix};

/// SplitMix64 finalizer; derives independent per-layer seeds from a run seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const MAIN_STREAM: u64 = 0x100;
const DISC_STREAM: u64 = 0x200;

/// Two hidden layers followed by a linear head. Shared shape of the main
/// model (encoder `E_M`, classifier `C_M`) and of each discriminator
/// (encoder `E_A`, classifier `C_A`).
#[derive(Debug, Clone)]
pub struct EncoderClassifier {
    encoder: [DenseLayer; 2],
    classifier: DenseLayer,
}

impl EncoderClassifier {
    pub fn new(input_dim: usize, hidden: usize, classes: usize, activation: Activation, seed: u64) -> Self {
        Self {
            encoder: [
                DenseLayer::new(input_dim, hidden, activation, derive_seed(seed, 0)),
                DenseLayer::new(hidden, hidden, activation, derive_seed(seed, 1)),
            ],
            classifier: DenseLayer::new(hidden, classes, Activation::Identity, derive_seed(seed, 2)),
        }
    }

    pub fn from_layers(first: DenseLayer, second: DenseLayer, classifier: DenseLayer) -> Result<Self> {
        if first.out_dim() != second.in_dim() {
            return Err(Error::shape(
                "encoder layers",
                Shape(first.out_dim(), first.in_dim()),
                Shape(second.out_dim(), second.in_dim()),
            ));
        }
        if second.out_dim() != classifier.in_dim() {
            return Err(Error::shape(
                "encoder/classifier",
                Shape(second.out_dim(), second.in_dim()),
                Shape(classifier.out_dim(), classifier.in_dim()),
            ));
        }
        Ok(Self {
            encoder: [first, second],
            classifier,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].in_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder[1].out_dim()
    }

    pub fn classes(&self) -> usize {
        self.classifier.out_dim()
    }

    pub fn layers(&self) -> [&DenseLayer; 3] {
        [&self.encoder[0], &self.encoder[1], &self.classifier]
    }

    pub fn layers_mut(&mut self) -> [&mut DenseLayer; 3] {
        let [a, b] = &mut self.encoder;
        [a, b, &mut self.classifier]
    }

    /// Returns `(hidden, logits)` and caches activations for backward.
    pub fn forward(&mut self, x: &RealMatrix) -> Result<(RealMatrix, RealMatrix)> {
        let h1 = self.encoder[0].forward(x)?;
        let h = self.encoder[1].forward(&h1)?;
        let logits = self.classifier.forward(&h)?;
        Ok((h, logits))
    }

    /// Cache-free forward for evaluation.
    pub fn infer(&self, x: &RealMatrix) -> Result<(RealMatrix, RealMatrix)> {
        let h = self.encode(x)?;
        let logits = self.classifier.infer(&h)?;
        Ok((h, logits))
    }

    pub fn encode(&self, x: &RealMatrix) -> Result<RealMatrix> {
        let h1 = self.encoder[0].infer(x)?;
        self.encoder[1].infer(&h1)
    }

    pub fn predict(&self, x: &RealMatrix) -> Result<Vec<usize>> {
        Ok(self.infer(x)?.1.argmax_rows())
    }

    /// Backprop through the classifier head; returns the gradient w.r.t. the hidden output.
    pub fn backward_classifier(&mut self, dlogits: &RealMatrix) -> Result<RealMatrix> {
        self.classifier.backward(dlogits)
    }

    /// Backprop through the encoder, returning the gradient w.r.t. its input.
    pub fn backward_encoder(&mut self, dh: &RealMatrix) -> Result<RealMatrix> {
        let d1 = self.encoder[1].backward(dh)?;
        self.encoder[0].backward(&d1)
    }

    /// Backprop through the encoder without forming the input gradient.
    pub fn backward_encoder_params(&mut self, dh: &RealMatrix) -> Result<()> {
        let d1 = self.encoder[1].backward(dh)?;
        self.encoder[0].backward_params_only(&d1)
    }

    pub fn set_optimizer(&mut self, cfg: AdamConfig) {
        for l in self.layers_mut() {
            l.set_optimizer(cfg);
        }
    }

    pub fn adam_step(&mut self) {
        for l in self.layers_mut() {
            l.adam_step();
        }
    }

    pub fn zero_grad(&mut self) {
        for l in self.layers_mut() {
            l.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            l.write_params(&mut out);
        }
        out
    }

    pub fn grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            l.write_grads(&mut out);
        }
        out
    }

    /// Gradients of the encoder layers only, in parameter order.
    pub fn encoder_grads(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.encoder[0].write_grads(&mut out);
        self.encoder[1].write_grads(&mut out);
        out
    }

    pub fn set_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.param_count() {
            return Err(Error::validation(format!(
                "model has {} parameters, got {}",
                self.param_count(),
                src.len()
            )));
        }
        let mut off = 0;
        for l in self.layers_mut() {
            off += l.read_params(&src[off..])?;
        }
        Ok(())
    }
}

/// Main task model: `logits = C_M(E_M(x))`.
#[derive(Debug, Clone)]
pub struct MainModel(pub EncoderClassifier);

impl MainModel {
    pub fn new(input_dim: usize, hidden: usize, classes: usize, activation: Activation, seed: u64) -> Self {
        Self(EncoderClassifier::new(
            input_dim,
            hidden,
            classes,
            activation,
            derive_seed(seed, MAIN_STREAM),
        ))
    }

    pub fn net(&self) -> &EncoderClassifier {
        &self.0
    }

    pub fn net_mut(&mut self) -> &mut EncoderClassifier {
        &mut self.0
    }
}

/// Three-layer MLP over `h_M`: `g_logits = C_A(E_A(h_M))`.
#[derive(Debug, Clone)]
pub struct Discriminator(pub EncoderClassifier);

impl Discriminator {
    /// `index` distinguishes ensemble members initialised from the same run seed.
    pub fn new(
        input_dim: usize,
        hidden: usize,
        classes: usize,
        activation: Activation,
        seed: u64,
        index: usize,
    ) -> Self {
        Self(EncoderClassifier::new(
            input_dim,
            hidden,
            classes,
            activation,
            derive_seed(seed, DISC_STREAM + index as u64),
        ))
    }

    pub fn net(&self) -> &EncoderClassifier {
        &self.0
    }

    pub fn net_mut(&mut self) -> &mut EncoderClassifier {
        &mut self.0
    }
}

/// Evaluation forward of the main model: `(h_M, logits)`.
pub fn main_forward(m: &MainModel, x: &RealMatrix) -> Result<(RealMatrix, RealMatrix)> {
    m.0.infer(x)
}

/// Evaluation forward of a discriminator: `(h_A, g_logits)`.
pub fn disc_forward(a: &Discriminator, h_m: &RealMatrix) -> Result<(RealMatrix, RealMatrix)> {
    a.0.infer(h_m)
}
