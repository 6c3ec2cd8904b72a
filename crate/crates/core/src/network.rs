//! Feed-forward networks built from weighted-sum and ReLU layers.
//!
//! Model files are JSON documents of the form
//!
//! ```text
//! {
//!   "input_size": 2,
//!   "layers": [
//!     {"kind": "weighted_sum", "weights": [[2.0, 5.0], [-4.0, 1.0]], "biases": [1.0, -2.0]},
//!     {"kind": "relu"},
//!     {"kind": "weighted_sum", "weights": [[3.0, -1.0]], "biases": [0.0]}
//!   ]
//! }
//! ```
//!
//! Weights are row-major: one row per neuron of the layer, one column per
//! neuron of the preceding layer.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layer {
    WeightedSum {
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
    },
    Relu,
}

impl Layer {
    pub fn is_relu(&self) -> bool {
        matches!(self, Layer::Relu)
    }
}

/// An immutable feed-forward network mapping `input_size` reals to
/// `output_size` reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    input_size: usize,
    layers: Vec<Layer>,
}

impl Network {
    /// Builds a network, checking that layer dimensions chain and all
    /// parameters are finite.
    pub fn new(input_size: usize, layers: Vec<Layer>) -> Result<Self> {
        let net = Network { input_size, layers };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidNetwork(
                "network must contain at least input and output layers".into(),
            ));
        }
        if self.input_size == 0 {
            return Err(Error::InvalidNetwork("input_size must be positive".into()));
        }
        let mut width = self.input_size;
        for (idx, layer) in self.layers.iter().enumerate() {
            // Layer 0 is the implicit input layer.
            let layer_no = idx + 1;
            if let Layer::WeightedSum { weights, biases } = layer {
                if weights.is_empty() {
                    return Err(Error::Dimension {
                        layer: layer_no,
                        message: "weighted-sum layer has no neurons".into(),
                    });
                }
                if weights.len() != biases.len() {
                    return Err(Error::Dimension {
                        layer: layer_no,
                        message: format!(
                            "{} weight rows but {} biases",
                            weights.len(),
                            biases.len()
                        ),
                    });
                }
                for (row_idx, row) in weights.iter().enumerate() {
                    if row.len() != width {
                        return Err(Error::Dimension {
                            layer: layer_no,
                            message: format!(
                                "weight row {row_idx} has {} entries, previous layer has {width} neurons",
                                row.len()
                            ),
                        });
                    }
                    if row.iter().any(|w| !w.is_finite()) {
                        return Err(Error::NonFinite(format!("weights of layer {layer_no}")));
                    }
                }
                if biases.iter().any(|b| !b.is_finite()) {
                    return Err(Error::NonFinite(format!("biases of layer {layer_no}")));
                }
                width = weights.len();
            }
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes().last().expect("validated network has layers")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Sizes of every layer, starting with the input layer.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.layers.len() + 1);
        let mut width = self.input_size;
        sizes.push(width);
        for layer in &self.layers {
            if let Layer::WeightedSum { weights, .. } = layer {
                width = weights.len();
            }
            sizes.push(width);
        }
        sizes
    }

    /// Total number of ReLU neurons.
    pub fn relu_count(&self) -> usize {
        let sizes = self.layer_sizes();
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_relu())
            .map(|(i, _)| sizes[i + 1])
            .sum()
    }

    /// Evaluates the network on a concrete input.
    pub fn evaluate(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .evaluate_layers(input)?
            .pop()
            .expect("at least one layer"))
    }

    /// Evaluates the network and returns every layer's values, input first.
    pub fn evaluate_layers(&self, input: &[f64]) -> Result<Vec<Vec<f64>>> {
        if input.len() != self.input_size {
            return Err(Error::Dimension {
                layer: 0,
                message: format!(
                    "input has length {}, network expects {}",
                    input.len(),
                    self.input_size
                ),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for layer in &self.layers {
            let prev = values.last().expect("non-empty");
            values.push(apply_layer(layer, prev));
        }
        Ok(values)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let net: Network = serde_json::from_str(text).map_err(Error::from_json)?;
        net.validate()?;
        Ok(net)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Serializes to the model file format. Floats use shortest round-trip
    /// formatting, so `from_json_str(&to_json_string())` is exact.
    pub fn to_json_string(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n");
        let _ = writeln!(out, "  \"input_size\": {},", self.input_size);
        out.push_str("  \"layers\": [\n");
        for (idx, layer) in self.layers.iter().enumerate() {
            out.push_str("    ");
            match layer {
                Layer::Relu => out.push_str("{\"kind\": \"relu\"}"),
                Layer::WeightedSum { weights, biases } => {
                    out.push_str("{\"kind\": \"weighted_sum\", \"weights\": [");
                    for (r, row) in weights.iter().enumerate() {
                        if r > 0 {
                            out.push_str(", ");
                        }
                        write_vector(&mut out, row);
                    }
                    out.push_str("], \"biases\": ");
                    write_vector(&mut out, biases);
                    out.push('}');
                }
            }
            if idx + 1 < self.layers.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str("  ]\n}\n");
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

fn write_vector(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&serde_json::to_string(v).expect("finite float"));
    }
    out.push(']');
}

fn apply_layer(layer: &Layer, prev: &[f64]) -> Vec<f64> {
    match layer {
        Layer::Relu => prev.iter().map(|&x| relu(x)).collect(),
        Layer::WeightedSum { weights, biases } => weights
            .iter()
            .zip(biases)
            .map(|(row, b)| row.iter().zip(prev).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect(),
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}
