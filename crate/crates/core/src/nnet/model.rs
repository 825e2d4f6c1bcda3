//! The three classifier architectures and the model wrapper around a layer stack.

use serde::{Deserialize, Serialize};

use super::layers::{glorot_limit, he_limit, Conv2d, Dense, Layer, Param, ResidualBlock};
use super::lstm::{Lstm, LstmActivation};
use super::tensor::Tensor;
use super::NnetError;
use crate::seed::{rng_from_seed, Rng};

/// Number of ReLU dense layers between the first dense layer and the output.
pub const TAIL_DENSE_LAYERS: usize = 8;

pub const CONV_FILTERS: [usize; 3] = [24, 48, 96];
pub const KERNEL_SIZES: [usize; 2] = [2, 3];
pub const DROPOUT_RATES: [f64; 3] = [0.1, 0.3, 0.5];
pub const DENSE_SIZES: [usize; 2] = [16, 32];
pub const LSTM_UNITS: [usize; 3] = [64, 128, 256];
pub const LSTM_LEARNING_RATES: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub conv_filters: usize,
    pub kernel_size: usize,
    pub dropout_rate: f64,
    pub dense_size: usize,
    pub tail_dense_layers: usize,
}

impl Default for CnnSpec {
    fn default() -> Self {
        CnnSpec {
            conv_filters: 24,
            kernel_size: 3,
            dropout_rate: 0.1,
            dense_size: 16,
            tail_dense_layers: TAIL_DENSE_LAYERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmSpec {
    pub lstm_units: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub dense_size: usize,
    pub tail_dense_layers: usize,
    #[serde(default)]
    pub activation: LstmActivation,
}

impl Default for LstmSpec {
    fn default() -> Self {
        LstmSpec {
            lstm_units: 64,
            learning_rate: 1e-2,
            dropout_rate: 0.1,
            dense_size: 16,
            tail_dense_layers: TAIL_DENSE_LAYERS,
            activation: LstmActivation::Relu,
        }
    }
}

/// Reduced residual network: a 3×3 stem, `stages` groups of residual blocks
/// with channels doubling per stage and 2×2 pooling between stages, then
/// global average pooling and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiniResnetSpec {
    pub stages: usize,
    pub blocks_per_stage: usize,
    pub base_channels: usize,
    pub bottleneck: bool,
}

impl Default for MiniResnetSpec {
    fn default() -> Self {
        MiniResnetSpec {
            stages: 2,
            blocks_per_stage: 2,
            base_channels: 8,
            bottleneck: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Cnn(CnnSpec),
    Lstm(LstmSpec),
    MiniResnet(MiniResnetSpec),
}

/// Classifier family, as listed in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Cnn,
    Lstm,
    MiniResnet,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Cnn, ClassifierKind::Lstm, ClassifierKind::MiniResnet];

    pub fn label(self) -> &'static str {
        match self {
            ClassifierKind::Cnn => "CNN",
            ClassifierKind::Lstm => "LSTM",
            ClassifierKind::MiniResnet => "MiniResnet",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ClassifierKind::Cnn),
            "lstm" => Ok(ClassifierKind::Lstm),
            "resnet" | "miniresnet" | "mini_resnet" | "mini-resnet" => Ok(ClassifierKind::MiniResnet),
            other => Err(format!("unknown classifier {other:?} (expected cnn|lstm|resnet)")),
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

fn check_in<T: PartialEq + std::fmt::Debug>(name: &str, value: T, allowed: &[T]) -> Result<(), NnetError> {
    if allowed.contains(&value) {
        Ok(())
    } else {
        Err(NnetError::Config(format!(
            "{name} = {value:?} is outside the allowed values {allowed:?}"
        )))
    }
}

impl Architecture {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Architecture::Cnn(_) => ClassifierKind::Cnn,
            Architecture::Lstm(_) => ClassifierKind::Lstm,
            Architecture::MiniResnet(_) => ClassifierKind::MiniResnet,
        }
    }

    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::Cnn => Architecture::Cnn(CnnSpec::default()),
            ClassifierKind::Lstm => Architecture::Lstm(LstmSpec::default()),
            ClassifierKind::MiniResnet => Architecture::MiniResnet(MiniResnetSpec::default()),
        }
    }

    /// Learning rate used when the training config does not set one.
    pub fn default_learning_rate(&self) -> f64 {
        match self {
            Architecture::Lstm(spec) => spec.learning_rate,
            _ => 1e-3,
        }
    }

    /// Checks the hyperparameter ranges of the experiment grid.
    pub fn validate(&self) -> Result<(), NnetError> {
        match self {
            Architecture::Cnn(s) => {
                check_in("conv_filters", s.conv_filters, &CONV_FILTERS)?;
                check_in("kernel_size", s.kernel_size, &KERNEL_SIZES)?;
                check_in("dropout_rate", s.dropout_rate, &DROPOUT_RATES)?;
                check_in("dense_size", s.dense_size, &DENSE_SIZES)?;
                check_in("tail_dense_layers", s.tail_dense_layers, &[TAIL_DENSE_LAYERS])
            }
            Architecture::Lstm(s) => {
                check_in("lstm_units", s.lstm_units, &LSTM_UNITS)?;
                check_in("learning_rate", s.learning_rate, &LSTM_LEARNING_RATES)?;
                check_in("dropout_rate", s.dropout_rate, &DROPOUT_RATES)?;
                check_in("dense_size", s.dense_size, &DENSE_SIZES)?;
                check_in("tail_dense_layers", s.tail_dense_layers, &[TAIL_DENSE_LAYERS])
            }
            Architecture::MiniResnet(s) => {
                if s.stages == 0 || s.blocks_per_stage == 0 || s.base_channels == 0 {
                    return Err(NnetError::Config(
                        "residual network needs at least one stage, block and channel".into(),
                    ));
                }
                if s.stages * s.blocks_per_stage * if s.bottleneck { 3 } else { 2 } + 2 >= 50 {
                    return Err(NnetError::Config(
                        "residual network must stay well below 50 layers".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Compact description for reports.
    pub fn describe(&self) -> String {
        match self {
            Architecture::Cnn(s) => format!(
                "filters={} kernel={} dropout={} dense={}",
                s.conv_filters, s.kernel_size, s.dropout_rate, s.dense_size
            ),
            Architecture::Lstm(s) => format!(
                "units={} lr={} dropout={} dense={}",
                s.lstm_units, s.learning_rate, s.dropout_rate, s.dense_size
            ),
            Architecture::MiniResnet(s) => format!(
                "stages={} blocks={} channels={} bottleneck={}",
                s.stages, s.blocks_per_stage, s.base_channels, s.bottleneck
            ),
        }
    }
}

fn dense_stack(layers: &mut Vec<Layer>, inputs: usize, width: usize, tail: usize, rng: &mut Rng) {
    layers.push(Layer::Dense(Dense::new(inputs, width, he_limit(inputs), rng)));
    layers.push(Layer::Relu);
    for _ in 0..tail {
        layers.push(Layer::Dense(Dense::new(width, width, he_limit(width), rng)));
        layers.push(Layer::Relu);
    }
    layers.push(Layer::Dense(Dense::new(width, 2, glorot_limit(width, 2), rng)));
}

fn conv(cin: usize, cout: usize, k: usize, rng: &mut Rng) -> Conv2d {
    Conv2d::new(cin, cout, k, he_limit(cin * k * k), rng)
}

fn residual_block(cin: usize, cout: usize, bottleneck: bool, rng: &mut Rng) -> ResidualBlock {
    let branch = if bottleneck {
        let mid = (cout / 4).max(1);
        vec![
            Layer::Conv2d(conv(cin, mid, 1, rng)),
            Layer::Relu,
            Layer::Conv2d(conv(mid, mid, 3, rng)),
            Layer::Relu,
            Layer::Conv2d(conv(mid, cout, 1, rng)),
        ]
    } else {
        vec![
            Layer::Conv2d(conv(cin, cout, 3, rng)),
            Layer::Relu,
            Layer::Conv2d(conv(cout, cout, 3, rng)),
        ]
    };
    let shortcut = (cin != cout).then(|| conv(cin, cout, 1, rng));
    ResidualBlock { branch, shortcut }
}

/// A classifier: layer stack from `(B, rows, cols)` features to two logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub architecture: Architecture,
    pub input_shape: (usize, usize),
    layers: Vec<Layer>,
}

impl Model {
    /// Builds an architecture with seeded initial weights. Sizes are not
    /// checked against the experiment grid here, see [`Architecture::validate`].
    pub fn build(architecture: Architecture, input_shape: (usize, usize), seed: u64) -> Result<Self, NnetError> {
        let (rows, cols) = input_shape;
        if rows == 0 || cols == 0 {
            return Err(NnetError::Shape(format!("empty input shape {input_shape:?}")));
        }
        let mut rng = rng_from_seed(seed);
        let mut layers = Vec::new();
        match &architecture {
            Architecture::Cnn(s) => {
                if rows < 2 || cols < 2 {
                    return Err(NnetError::Shape("CNN input must be at least 2×2".into()));
                }
                layers.push(Layer::Reshape { shape: vec![1, rows, cols] });
                layers.push(Layer::Conv2d(conv(1, s.conv_filters, s.kernel_size, &mut rng)));
                layers.push(Layer::Relu);
                layers.push(Layer::MaxPool2d);
                layers.push(Layer::Dropout { rate: s.dropout_rate });
                let flat = s.conv_filters * (rows / 2) * (cols / 2);
                dense_stack(&mut layers, flat, s.dense_size, s.tail_dense_layers, &mut rng);
            }
            Architecture::Lstm(s) => {
                layers.push(Layer::Lstm(Lstm::new(cols, s.lstm_units, s.activation, &mut rng)));
                layers.push(Layer::Dropout { rate: s.dropout_rate });
                dense_stack(&mut layers, s.lstm_units, s.dense_size, s.tail_dense_layers, &mut rng);
            }
            Architecture::MiniResnet(s) => {
                layers.push(Layer::Reshape { shape: vec![1, rows, cols] });
                layers.push(Layer::Conv2d(conv(1, s.base_channels, 3, &mut rng)));
                layers.push(Layer::Relu);
                let (mut h, mut w) = (rows, cols);
                let mut channels = s.base_channels;
                for stage in 0..s.stages {
                    let out = s.base_channels << stage;
                    if stage > 0 && h >= 2 && w >= 2 {
                        layers.push(Layer::MaxPool2d);
                        h /= 2;
                        w /= 2;
                    }
                    for _ in 0..s.blocks_per_stage {
                        layers.push(Layer::Residual(residual_block(channels, out, s.bottleneck, &mut rng)));
                        layers.push(Layer::Relu);
                        channels = out;
                    }
                }
                layers.push(Layer::GlobalAvgPool);
                layers.push(Layer::Dense(Dense::new(channels, 2, glorot_limit(channels, 2), &mut rng)));
            }
        }
        Ok(Model {
            architecture,
            input_shape,
            layers,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<(), NnetError> {
        let expected = self.param_count();
        if values.len() != expected {
            return Err(NnetError::Shape(format!(
                "model has {expected} parameters, got {}",
                values.len()
            )));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.value.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Zeroes the weights and bias of the output layer, making every logit 0.
    pub fn zero_output_layer(&mut self) {
        if let Some(Layer::Dense(d)) = self.layers.last_mut() {
            d.weight.value.iter_mut().for_each(|v| *v = 0.0);
            d.bias.value.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnetError> {
        let (rows, cols) = self.input_shape;
        match x.shape() {
            [_, r, c] if *r == rows && *c == cols => Ok(()),
            other => Err(NnetError::Shape(format!(
                "model expects input (B, {rows}, {cols}), got {other:?}"
            ))),
        }
    }

    fn run(&self, x: Tensor, rng: &mut Option<&mut Rng>) -> Result<(Tensor, Vec<super::layers::Cache>), NnetError> {
        self.check_input(&x)?;
        if !x.is_finite() {
            return Err(NnetError::NonFinite("model input".into()));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer.forward(h, rng)?;
            if !y.is_finite() {
                return Err(NnetError::NonFinite(format!("output of layer {i} ({})", layer.name())));
            }
            caches.push(cache);
            h = y;
        }
        Ok((h, caches))
    }

    /// Inference-mode logits `(B, 2)`.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor, NnetError> {
        Ok(self.run(x.clone(), &mut None)?.0)
    }

    /// Class probabilities `(B, 2)`: column 0 non-cough, column 1 cough.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnetError> {
        let logits = self.logits(x)?;
        let batch = logits.batch();
        let probs: Vec<f64> = logits.data().chunks_exact(2).flat_map(softmax2).collect();
        Tensor::new(vec![batch, 2], probs)
    }

    /// Mean cross-entropy of `labels` (class indices) under the current
    /// parameters; dropout is active when `rng` is given.
    pub fn loss(&self, x: &Tensor, labels: &[usize], rng: Option<&mut Rng>) -> Result<f64, NnetError> {
        let mut rng = rng;
        let (logits, _) = self.run(x.clone(), &mut rng)?;
        Ok(cross_entropy(&logits, labels)?.0)
    }

    /// Zeroes and recomputes all parameter gradients of `scale ·` mean
    /// cross-entropy. Returns the unscaled loss.
    pub fn compute_gradients(
        &mut self,
        x: &Tensor,
        labels: &[usize],
        scale: f64,
        rng: Option<&mut Rng>,
    ) -> Result<f64, NnetError> {
        let mut rng = rng;
        let (logits, caches) = self.run(x.clone(), &mut rng)?;
        let (loss, mut grad) = cross_entropy(&logits, labels)?;
        if scale != 1.0 {
            grad.data_mut().iter_mut().for_each(|g| *g *= scale);
        }
        self.zero_grad();
        for (layer, cache) in self.layers.iter_mut().zip(caches).rev() {
            grad = layer.backward(cache, grad);
        }
        if self.params().iter().any(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(NnetError::NonFinite("parameter gradient".into()));
        }
        Ok(loss)
    }
}

fn softmax2(logits: &[f64]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Mean cross-entropy over a 2-way softmax and its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NnetError> {
    let batch = logits.batch();
    if logits.shape() != [batch, 2] || labels.len() != batch || batch == 0 {
        return Err(NnetError::Shape(format!(
            "cross entropy needs (B, 2) logits and B labels, got {:?} and {}",
            logits.shape(),
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(batch * 2);
    for (row, &y) in logits.data().chunks_exact(2).zip(labels) {
        if y > 1 {
            return Err(NnetError::Shape(format!("label {y} is not a class index")));
        }
        let m = row[0].max(row[1]);
        let log_sum = m + ((row[0] - m).exp() + (row[1] - m).exp()).ln();
        loss += log_sum - row[y];
        let p = softmax2(row);
        for (c, pc) in p.iter().enumerate() {
            let target = if c == y { 1.0 } else { 0.0 };
            grad.push((pc - target) / batch as f64);
        }
    }
    Ok((loss / batch as f64, Tensor::new(vec![batch, 2], grad)?))
}
