//! Fully-connected scalar-output networks trained with full-batch gradient
//! descent on the squared error.
//!
//! Two numeric modes share the same network description:
//!
//! * [`plain`]: everything in `f64`, used for the bulk of training.
//! * [`commit`]: the quantized pipeline used for the two certified rounds,
//!   where first-layer sums, output residuals, error signals and
//!   first-layer increments are exact integers so that the verifier can
//!   check them against committed exponents.

pub mod commit;
pub mod plain;
pub mod synthetic;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::codec::{encode, CodecError, CodecParams, SignFlag};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DnnError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("no convergence after {0} epochs")]
    NoConvergence(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + libm::exp(-z)),
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
        }
    }

    /// `σ'(z)`; the ReLU derivative at 0 is taken as 0.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = self.apply(z);
                s * (1.0 - s)
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = libm::tanh(z);
                1.0 - t * t
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Sigmoid),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    /// `d_1..d_L`.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub threshold: f64,
    /// Number of leading samples used as the training batch; `None` uses all.
    pub batch_size: Option<usize>,
    pub max_epochs: usize,
}

impl NetworkConfig {
    pub const DEFAULT_MAX_EPOCHS: usize = 100_000;

    pub fn new(input_dim: usize, hidden: Vec<usize>, activation: Activation) -> Self {
        Self {
            input_dim,
            hidden,
            activation,
            learning_rate: 0.1,
            threshold: 1e-4,
            batch_size: None,
            max_epochs: Self::DEFAULT_MAX_EPOCHS,
        }
    }

    pub fn validate(&self) -> Result<(), DnnError> {
        let bad = |m: &str| Err(DnnError::Config(m.into()));
        if self.input_dim == 0 {
            return bad("input_dim must be >= 1");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("need at least one hidden layer, each with >= 1 neuron");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.threshold > 0.0) {
            return bad("threshold must be positive");
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be >= 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1");
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    pub fn first_width(&self) -> usize {
        self.hidden[0]
    }

    pub fn last_width(&self) -> usize {
        *self.hidden.last().expect("validated")
    }

    /// Total number of weights.
    pub fn parameter_count(&self) -> usize {
        let mut fan_in = self.input_dim;
        let mut n = 0;
        for &d in &self.hidden {
            n += fan_in * d;
            fan_in = d;
        }
        n + fan_in
    }
}

/// Dense row-major matrix; row `j` is the source neuron, column `k` the target.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Matrix<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }
}

impl<T> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, DnnError> {
        if data.len() != rows * cols {
            return Err(DnnError::Shape(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, j: usize, k: usize) -> &T {
        &self.data[j * self.cols + k]
    }

    pub fn get_mut(&mut self, j: usize, k: usize) -> &mut T {
        &mut self.data[j * self.cols + k]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }
}

/// Weights of every layer: `hidden[l]` maps layer `l` (0 = input) to layer
/// `l + 1`, `output[j]` connects the last hidden neuron `j` to the output.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Weights<T> {
    pub hidden: Vec<Matrix<T>>,
    pub output: Vec<T>,
}

impl<T: Clone> Weights<T> {
    pub fn filled(config: &NetworkConfig, value: T) -> Self {
        let mut fan_in = config.input_dim;
        let mut hidden = Vec::with_capacity(config.depth());
        for &d in &config.hidden {
            hidden.push(Matrix::filled(fan_in, d, value.clone()));
            fan_in = d;
        }
        Self { hidden, output: vec![value; fan_in] }
    }
}

impl<T> Weights<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Weights<U> {
        Weights {
            hidden: self.hidden.iter().map(|m| m.map(&mut f)).collect(),
            output: self.output.iter().map(f).collect(),
        }
    }

    /// All weights in layer order, row-major within a layer, output last.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.hidden.iter().flat_map(|m| m.as_slice()).chain(self.output.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.hidden.iter_mut().flat_map(|m| m.as_mut_slice().iter_mut()).chain(self.output.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.hidden.iter().map(|m| m.as_slice().len()).sum::<usize>() + self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matches(&self, config: &NetworkConfig) -> bool {
        let mut fan_in = config.input_dim;
        if self.hidden.len() != config.depth() {
            return false;
        }
        for (m, &d) in self.hidden.iter().zip(&config.hidden) {
            if m.rows() != fan_in || m.cols() != d {
                return false;
            }
            fan_in = d;
        }
        self.output.len() == fan_in
    }

    pub fn check_shape(&self, config: &NetworkConfig) -> Result<(), DnnError> {
        if self.matches(config) {
            Ok(())
        } else {
            Err(DnnError::Shape("weights do not match the network configuration".into()))
        }
    }

    pub fn zip_with<U, V>(&self, other: &Weights<U>, mut f: impl FnMut(&T, &U) -> V) -> Weights<V> {
        let mut values = self.iter().zip(other.iter()).map(|(a, b)| f(a, b));
        Weights {
            hidden: self
                .hidden
                .iter()
                .map(|m| Matrix { rows: m.rows, cols: m.cols, data: values.by_ref().take(m.data.len()).collect() })
                .collect(),
            output: values.collect(),
        }
    }
}

/// Quantized weights, every entry an encoding at scale 1.
pub type QuantizedWeights = Weights<i128>;

impl Weights<f64> {
    /// Uniform in `[-0.5, 0.5]`, snapped to the `2^-L` grid so the plain and
    /// quantized views of the initial model coincide exactly.
    pub fn random(config: &NetworkConfig, params: &CodecParams, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let unit = params.unit(1);
        Weights::filled(config, 0.0).map(|_| (rng.gen_range(-0.5..=0.5) * unit).round_ties_even() / unit)
    }

    pub fn quantize(&self, params: &CodecParams) -> Result<QuantizedWeights, CodecError> {
        let mut err = None;
        let q = self.map(|&w| match encode(w, params) {
            Ok(v) => v.value,
            Err(e) => {
                err.get_or_insert(e);
                0
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(q),
        }
    }
}

impl Weights<i128> {
    pub fn dequantize(&self, params: &CodecParams) -> Weights<f64> {
        let unit = params.unit(1);
        self.map(|&w| w as f64 / unit)
    }

    pub fn checked_add(&self, other: &Self) -> Option<Self> {
        let mut overflow = false;
        let sum = self.zip_with(other, |a, b| {
            a.checked_add(*b).unwrap_or_else(|| {
                overflow = true;
                0
            })
        });
        (!overflow).then_some(sum)
    }

    pub fn checked_sub(&self, other: &Self) -> Option<Self> {
        let mut overflow = false;
        let diff = self.zip_with(other, |a, b| {
            a.checked_sub(*b).unwrap_or_else(|| {
                overflow = true;
                0
            })
        });
        (!overflow).then_some(diff)
    }
}

/// Decimal weights together with their quantized mirror.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub weights: Weights<f64>,
    pub quantized: QuantizedWeights,
}

impl ModelState {
    pub fn new(weights: Weights<f64>, params: &CodecParams) -> Result<Self, CodecError> {
        let quantized = weights.quantize(params)?;
        Ok(Self { weights, quantized })
    }

    pub fn from_quantized(quantized: QuantizedWeights, params: &CodecParams) -> Self {
        Self { weights: quantized.dequantize(params), quantized }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.len())
    }

    pub fn quantize(&self, params: &CodecParams) -> Result<QuantizedDataset, DnnError> {
        let dim = self.input_dim().ok_or(DnnError::EmptyDataset)?;
        let mut samples = Vec::with_capacity(self.len());
        let mut max_error = 0f64;
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(DnnError::Shape(format!("sample {i} has {} features, expected {dim}", s.features.len())));
            }
            let mut features = Vec::with_capacity(dim);
            for &x in &s.features {
                let q = encode(x, params)?;
                max_error = max_error.max((q.value as f64 / params.unit(1) - x).abs());
                features.push(q.value);
            }
            let label = encode(s.label, params)?.value;
            max_error = max_error.max((label as f64 / params.unit(1) - s.label).abs());
            samples.push(QuantizedSample { features, label });
        }
        Ok(QuantizedDataset { samples, max_quantization_error: max_error })
    }
}

/// One sample with features and label encoded at scale 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuantizedSample {
    pub features: Vec<i128>,
    pub label: i128,
}

impl QuantizedSample {
    pub fn feature_signs(&self) -> impl Iterator<Item = SignFlag> + '_ {
        self.features.iter().map(|&x| SignFlag::of(x))
    }

    pub fn label_sign(&self) -> SignFlag {
        SignFlag::of(self.label)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedDataset {
    pub samples: Vec<QuantizedSample>,
    /// Largest `|decode(encode(x)) - x|` seen while quantizing.
    pub max_quantization_error: f64,
}

impl QuantizedDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.len())
    }

    /// The first `n` samples (all of them if `n` is `None` or too large).
    pub fn batch(&self, n: Option<usize>) -> QuantizedDataset {
        let n = n.unwrap_or(self.len()).min(self.len());
        QuantizedDataset { samples: self.samples[..n].to_vec(), max_quantization_error: self.max_quantization_error }
    }

    pub fn dequantize(&self, params: &CodecParams) -> Dataset {
        let unit = params.unit(1);
        Dataset::new(
            self.samples
                .iter()
                .map(|s| Sample {
                    features: s.features.iter().map(|&x| x as f64 / unit).collect(),
                    label: s.label as f64 / unit,
                })
                .collect(),
        )
    }
}
