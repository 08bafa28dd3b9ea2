use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Identifier of the flattening order used by [`NetworkSpec::layers`]:
/// layer-major, each layer's weight matrix row-major (`fan_out x fan_in`),
/// followed by that layer's `fan_out` biases.
pub const FLATTENING_ORDER: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and activation `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// What is applied to the raw network output when reporting loss.
///
/// Geometry always works on the raw (identity) output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Identity,
    SoftmaxForEval,
}

impl OutputActivation {
    pub(crate) fn code(self) -> u8 {
        match self {
            OutputActivation::Identity => 0,
            OutputActivation::SoftmaxForEval => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(OutputActivation::Identity),
            1 => Some(OutputActivation::SoftmaxForEval),
            _ => None,
        }
    }
}

/// Offsets of one dense layer inside a flattened weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
    /// `None` for the output layer, which is always affine.
    pub activation: Option<Activation>,
}

impl LayerLayout {
    pub fn num_params(&self) -> usize {
        (self.fan_in + 1) * self.fan_out
    }

    /// Flat index of weight `(row, col)`, i.e. from input `col` to unit `row`.
    #[inline]
    pub fn weight_index(&self, row: usize, col: usize) -> usize {
        self.weight_offset + row * self.fan_in + col
    }

    #[inline]
    pub fn bias_index(&self, row: usize) -> usize {
        self.bias_offset + row
    }

    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.weight_offset..self.bias_offset
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        self.bias_offset..self.bias_offset + self.fan_out
    }
}

/// Stable short hash of a [`NetworkSpec`], used to bind weights to an architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpecId(pub u64);

impl fmt::Display for SpecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Architecture of a dense feed-forward network.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    #[serde(default)]
    output_activation: OutputActivation,
}

impl NetworkSpec {
    /// `activations` holds one entry per hidden layer.
    pub fn new(
        layer_sizes: Vec<usize>,
        activations: Vec<Activation>,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "layer_sizes needs at least 2 entries, got {}",
                layer_sizes.len()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(
                "layer sizes must be positive".into(),
            ));
        }
        let hidden = layer_sizes.len() - 2;
        if activations.len() != hidden {
            return Err(Error::dims("hidden activations", hidden, activations.len()));
        }
        let mut n: usize = 0;
        for pair in layer_sizes.windows(2) {
            let layer = pair[0]
                .checked_add(1)
                .and_then(|fi| fi.checked_mul(pair[1]))
                .ok_or_else(|| Error::InvalidArgument("parameter count overflows".into()))?;
            n = n
                .checked_add(layer)
                .ok_or_else(|| Error::InvalidArgument("parameter count overflows".into()))?;
        }
        Ok(Self {
            layer_sizes,
            activations,
            output_activation,
        })
    }

    /// Same activation on every hidden layer, identity output.
    pub fn uniform(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        let hidden = layer_sizes.len().saturating_sub(2);
        Self::new(
            layer_sizes.to_vec(),
            vec![activation; hidden],
            OutputActivation::Identity,
        )
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|p| (p[0] + 1) * p[1]).sum()
    }

    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        let last = self.num_layers() - 1;
        self.layer_sizes
            .windows(2)
            .enumerate()
            .map(|(l, p)| {
                let layout = LayerLayout {
                    fan_in: p[0],
                    fan_out: p[1],
                    weight_offset: offset,
                    bias_offset: offset + p[0] * p[1],
                    activation: (l < last).then(|| self.activations[l]),
                };
                offset += layout.num_params();
                layout
            })
            .collect()
    }

    /// `true` for every coordinate that is a bias.
    pub fn bias_coordinates(&self) -> Vec<bool> {
        let mut is_bias = vec![false; self.num_params()];
        for layer in self.layers() {
            for i in layer.bias_range() {
                is_bias[i] = true;
            }
        }
        is_bias
    }

    /// Canonical byte encoding; also the spec block of checkpoint and path files.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 5 * self.layer_sizes.len());
        out.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &s in &self.layer_sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for a in &self.activations {
            out.push(a.code());
        }
        out.push(self.output_activation.code());
        out
    }

    /// Inverse of [`NetworkSpec::canonical_bytes`].
    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self> {
        Self::decode(bytes, 0)
    }

    /// Decodes a spec block that starts at byte `base` of a larger file.
    pub(crate) fn decode(bytes: &[u8], base: u64) -> Result<Self> {
        let word = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or_else(|| Error::format(base + at as u64, "truncated spec block"))
        };
        let count = word(0)? as usize;
        if !(2..=1024).contains(&count) {
            return Err(Error::format(
                base,
                format!("implausible layer count {count}"),
            ));
        }
        let sizes = (0..count)
            .map(|i| word(4 + 4 * i).map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let codes_at = 4 + 4 * count;
        let expected = codes_at + count - 1;
        if bytes.len() != expected {
            return Err(Error::format(
                base + bytes.len().min(expected) as u64,
                format!("spec block is {} bytes, expected {expected}", bytes.len()),
            ));
        }
        let activations = (0..count - 2)
            .map(|i| {
                Activation::from_code(bytes[codes_at + i]).ok_or_else(|| {
                    Error::format(base + (codes_at + i) as u64, "unknown activation code")
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let out_at = codes_at + count - 2;
        let output = OutputActivation::from_code(bytes[out_at])
            .ok_or_else(|| Error::format(base + out_at as u64, "unknown output activation code"))?;
        Self::new(sizes, activations, output)
    }

    pub fn id(&self) -> SpecId {
        let digest = Sha256::digest(self.canonical_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        SpecId(u64::from_le_bytes(head))
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sizes: Vec<String> = self.layer_sizes.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", sizes.join("-"))
    }
}
