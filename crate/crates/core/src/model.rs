//! Desk-scale models with analytic gradients.
//!
//! Parameters are stored flat, layer by layer: the `outputs×inputs` weight
//! matrix in row-major order followed by the bias vector (when the layer has
//! one). Hidden layers use ReLU; classifiers end in softmax with mean
//! cross-entropy, linear regression uses mean `½(ŷ − y)²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ModelVector;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    /// `ŷ = wᵀx`, no bias.
    Linear { inputs: usize },
    /// Multinomial logistic regression with bias.
    Logistic { inputs: usize, classes: usize },
    /// Fully connected ReLU network with a softmax output.
    Mlp { layers: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub bias: bool,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.inputs * self.outputs + if self.bias { self.outputs } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Unflattened parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: DMatrix<f64>,
    pub bias: Option<DVector<f64>>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ModelSpec::Linear { inputs } => *inputs > 0,
            ModelSpec::Logistic { inputs, classes } => *inputs > 0 && *classes >= 2,
            ModelSpec::Mlp { layers } => {
                layers.len() >= 2 && layers.iter().all(|&l| l > 0) && *layers.last().unwrap() >= 2
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgs(format!("invalid model {self:?}")))
        }
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        match self {
            ModelSpec::Linear { inputs } => vec![LayerShape {
                inputs: *inputs,
                outputs: 1,
                bias: false,
            }],
            ModelSpec::Logistic { inputs, classes } => vec![LayerShape {
                inputs: *inputs,
                outputs: *classes,
                bias: true,
            }],
            ModelSpec::Mlp { layers } => layers
                .windows(2)
                .map(|w| LayerShape {
                    inputs: w[0],
                    outputs: w[1],
                    bias: true,
                })
                .collect(),
        }
    }

    /// Number of parameters `n`.
    pub fn n_params(&self) -> usize {
        self.layers().iter().map(LayerShape::len).sum()
    }

    pub fn inputs(&self) -> usize {
        self.layers()[0].inputs
    }

    pub fn is_classifier(&self) -> bool {
        !matches!(self, ModelSpec::Linear { .. })
    }

    pub fn classes(&self) -> usize {
        self.layers().last().map_or(1, |l| l.outputs)
    }

    fn check_len(&self, w: &[f64]) -> Result<()> {
        let n = self.n_params();
        if w.len() != n {
            return Err(Error::dim("model parameters", n, w.len()));
        }
        Ok(())
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.inputs() {
            return Err(Error::dim("feature dimension", self.inputs(), data.dim()));
        }
        Ok(())
    }

    fn class_of(&self, label: f64) -> Result<usize> {
        let classes = self.classes();
        if label < 0.0 || label.fract() != 0.0 || label as usize >= classes {
            return Err(Error::InvalidArgs(format!(
                "label {label} is not a class index below {classes}"
            )));
        }
        Ok(label as usize)
    }

    /// Output layer activations before softmax, plus every layer's input.
    fn forward(&self, w: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.layers();
        let mut acts = Vec::with_capacity(layers.len() + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        for (l, shape) in layers.iter().enumerate() {
            let input = &acts[l];
            let weights = &w[offset..offset + shape.inputs * shape.outputs];
            offset += shape.inputs * shape.outputs;
            let mut z: Vec<f64> = weights
                .chunks_exact(shape.inputs)
                .map(|row| row.iter().zip(input).map(|(a, b)| a * b).sum())
                .collect();
            if shape.bias {
                for (zi, bi) in z.iter_mut().zip(&w[offset..offset + shape.outputs]) {
                    *zi += bi;
                }
                offset += shape.outputs;
            }
            if l + 1 < layers.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Raw model outputs (logits, or the regression prediction).
    pub fn predict(&self, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(w)?;
        if x.len() != self.inputs() {
            return Err(Error::dim("feature dimension", self.inputs(), x.len()));
        }
        Ok(self.forward(w, x).pop().expect("output layer"))
    }

    /// Mean loss and its gradient over the rows `batch` of `data`.
    pub fn loss_and_grad(&self, w: &[f64], data: &Dataset, batch: &[usize]) -> Result<(f64, ModelVector)> {
        self.check_len(w)?;
        self.check_data(data)?;
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let layers = self.layers();
        let mut grad = vec![0.0; w.len()];
        let mut loss = 0.0;

        for &i in batch {
            let acts = self.forward(w, data.row(i));
            let out = acts.last().expect("output layer");
            let mut delta = if self.is_classifier() {
                let y = self.class_of(data.label(i))?;
                let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = out.iter().map(|z| (z - max).exp()).sum();
                let lse = max + sum.ln();
                loss += lse - out[y];
                let mut d: Vec<f64> = out.iter().map(|z| (z - lse).exp()).collect();
                d[y] -= 1.0;
                d
            } else {
                let r = out[0] - data.label(i);
                loss += 0.5 * r * r;
                vec![r]
            };

            // Walk layers backwards; `end` is the offset just past layer l.
            let mut end = w.len();
            for l in (0..layers.len()).rev() {
                let shape = layers[l];
                let bias_len = if shape.bias { shape.outputs } else { 0 };
                let w_start = end - shape.len();
                if shape.bias {
                    for (g, d) in grad[end - bias_len..end].iter_mut().zip(&delta) {
                        *g += d;
                    }
                }
                let input = &acts[l];
                for (o, d) in delta.iter().enumerate() {
                    let row = w_start + o * shape.inputs;
                    for (g, a) in grad[row..row + shape.inputs].iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; shape.inputs];
                    for (o, d) in delta.iter().enumerate() {
                        let row = &w[w_start + o * shape.inputs..w_start + (o + 1) * shape.inputs];
                        for (p, wi) in prev.iter_mut().zip(row) {
                            *p += d * wi;
                        }
                    }
                    // ReLU derivative from the stored (post-activation) input.
                    for (p, a) in prev.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
                end = w_start;
            }
        }

        let scale = 1.0 / batch.len() as f64;
        Ok((loss * scale, DVector::from_iterator(grad.len(), grad.into_iter().map(|g| g * scale))))
    }

    /// Mean loss over the whole dataset.
    pub fn loss(&self, w: &[f64], data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.check_len(w)?;
        self.check_data(data)?;
        let mut total = 0.0;
        for i in 0..data.len() {
            let out = self.forward(w, data.row(i)).pop().expect("output layer");
            total += if self.is_classifier() {
                let y = self.class_of(data.label(i))?;
                let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                max + out.iter().map(|z| (z - max).exp()).sum::<f64>().ln() - out[y]
            } else {
                0.5 * (out[0] - data.label(i)).powi(2)
            };
        }
        Ok(total / data.len() as f64)
    }

    /// Fraction of correct predictions: argmax for classifiers, `|ŷ − y| ≤ ½`
    /// for regression.
    pub fn accuracy(&self, w: &[f64], data: &Dataset) -> Result<f64> {
        self.check_len(w)?;
        self.check_data(data)?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut correct = 0usize;
        for i in 0..data.len() {
            let out = self.forward(w, data.row(i)).pop().expect("output layer");
            let hit = if self.is_classifier() {
                let arg = out
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (k, &z)| if z > acc.1 { (k, z) } else { acc })
                    .0;
                arg as f64 == data.label(i)
            } else {
                (out[0] - data.label(i)).abs() <= 0.5
            };
            correct += usize::from(hit);
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

pub fn flatten_params(spec: &ModelSpec, params: &[LayerParams]) -> Result<ModelVector> {
    let layers = spec.layers();
    if params.len() != layers.len() {
        return Err(Error::ShapeMismatch {
            expected: layers.len(),
            got: params.len(),
        });
    }
    let mut out = Vec::with_capacity(spec.n_params());
    for (shape, p) in layers.iter().zip(params) {
        if p.weights.shape() != (shape.outputs, shape.inputs) || p.bias.is_some() != shape.bias {
            return Err(Error::ShapeMismatch {
                expected: shape.len(),
                got: p.weights.len() + p.bias.as_ref().map_or(0, |b| b.len()),
            });
        }
        for r in 0..shape.outputs {
            out.extend(p.weights.row(r).iter());
        }
        if let Some(b) = &p.bias {
            if b.len() != shape.outputs {
                return Err(Error::ShapeMismatch {
                    expected: shape.outputs,
                    got: b.len(),
                });
            }
            out.extend(b.iter());
        }
    }
    Ok(DVector::from_vec(out))
}

pub fn unflatten_params(spec: &ModelSpec, w: &ModelVector) -> Result<Vec<LayerParams>> {
    let n = spec.n_params();
    if w.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: w.len(),
        });
    }
    let mut offset = 0;
    let mut out = Vec::new();
    for shape in spec.layers() {
        let count = shape.inputs * shape.outputs;
        let weights = DMatrix::from_row_slice(
            shape.outputs,
            shape.inputs,
            &w.as_slice()[offset..offset + count],
        );
        offset += count;
        let bias = shape.bias.then(|| {
            let b = DVector::from_column_slice(&w.as_slice()[offset..offset + shape.outputs]);
            offset += shape.outputs;
            b
        });
        out.push(LayerParams { weights, bias });
    }
    Ok(out)
}
