//! Layer graph descriptions, shape inference and parameter counting.
//!
//! Pooling and padding choices in the two builders are the ones that
//! reproduce the published output shapes:
//!
//! | model        | layer        | kernel | stride | padding |
//! |--------------|--------------|--------|--------|---------|
//! | mfcc-cnn     | conv 1, 2    | 3x3    | 1      | valid   |
//! | mfcc-cnn     | conv 3       | 2x2    | 1      | valid   |
//! | mfcc-cnn     | pools 1-3    | 2x2    | 2      | same    |
//! | melspec-cnn  | conv 1       | 3x3    | 1      | same    |
//! | melspec-cnn  | conv 2-5     | 3x3    | 1      | valid   |
//! | melspec-cnn  | pools 1-2    | 3x3    | 2      | valid   |
//! | melspec-cnn  | pools 3-5    | 2x2    | 2      | valid   |

use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    /// Output size `ceil(in / stride)`, zero (conv) or ignored (pool) padding
    /// split with the extra cell after.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LayerSpec {
    Conv2D {
        filters: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: Padding,
        activation: Activation,
    },
    MaxPool2D {
        pool: [usize; 2],
        stride: [usize; 2],
        padding: Padding,
    },
    BatchNorm,
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
}

/// Output length and leading pad along one axis.
pub(crate) fn window_geometry(input: usize, window: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if input < window {
                None
            } else {
                Some(((input - window) / stride + 1, 0))
            }
        }
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + window).saturating_sub(input);
            Some((out, total / 2))
        }
    }
}

impl LayerSpec {
    pub fn conv(filters: usize, k: usize, padding: Padding) -> Self {
        LayerSpec::Conv2D {
            filters,
            kernel: [k, k],
            stride: [1, 1],
            padding,
            activation: Activation::Relu,
        }
    }

    pub fn pool(p: usize, s: usize, padding: Padding) -> Self {
        LayerSpec::MaxPool2D {
            pool: [p, p],
            stride: [s, s],
            padding,
        }
    }

    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec::Dense { units, activation }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2D { .. } => "Conv2D",
            LayerSpec::MaxPool2D { .. } => "MaxPooling2D",
            LayerSpec::BatchNorm => "BatchNormalization",
            LayerSpec::Dropout { .. } => "Dropout",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::Dense { .. } => "Dense",
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidSpec(m));
        match *self {
            LayerSpec::Conv2D { filters, kernel, stride, .. } => {
                if filters == 0 || kernel.contains(&0) || stride.contains(&0) {
                    return bad(format!("conv dimensions must be positive: {self:?}"));
                }
            }
            LayerSpec::MaxPool2D { pool, stride, .. } => {
                if pool.contains(&0) || stride.contains(&0) {
                    return bad(format!("pool dimensions must be positive: {self:?}"));
                }
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return bad(format!("dropout rate {rate} outside [0, 1)"));
                }
            }
            LayerSpec::Dense { units, .. } => {
                if units == 0 {
                    return bad("dense units must be positive".into());
                }
            }
            LayerSpec::BatchNorm | LayerSpec::Flatten => {}
        }
        Ok(())
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        self.validate()?;
        let mismatch = |what: &str| NnError::ShapeMismatch(format!("{} expects {what}, got input {:?}", self.name(), input));
        match *self {
            LayerSpec::Conv2D {
                filters,
                kernel,
                stride,
                padding,
                ..
            } => {
                let [h, w, _c] = <[usize; 3]>::try_from(input).map_err(|_| mismatch("(H, W, C)"))?;
                let (oh, _) = window_geometry(h, kernel[0], stride[0], padding).ok_or_else(|| mismatch("H >= kernel"))?;
                let (ow, _) = window_geometry(w, kernel[1], stride[1], padding).ok_or_else(|| mismatch("W >= kernel"))?;
                Ok(vec![oh, ow, filters])
            }
            LayerSpec::MaxPool2D { pool, stride, padding } => {
                let [h, w, c] = <[usize; 3]>::try_from(input).map_err(|_| mismatch("(H, W, C)"))?;
                let (oh, _) = window_geometry(h, pool[0], stride[0], padding).ok_or_else(|| mismatch("H >= pool"))?;
                let (ow, _) = window_geometry(w, pool[1], stride[1], padding).ok_or_else(|| mismatch("W >= pool"))?;
                Ok(vec![oh, ow, c])
            }
            LayerSpec::BatchNorm | LayerSpec::Dropout { .. } => {
                if input.is_empty() {
                    return Err(mismatch("a non-scalar input"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { units, .. } => {
                if input.len() != 1 {
                    return Err(mismatch("a flat vector"));
                }
                Ok(vec![units])
            }
        }
    }

    /// Stored parameters, including batch-norm moving statistics.
    pub fn param_count(&self, input: &[usize]) -> usize {
        match *self {
            LayerSpec::Conv2D { filters, kernel, .. } => kernel[0] * kernel[1] * input[2] * filters + filters,
            LayerSpec::BatchNorm => 4 * input[input.len() - 1],
            LayerSpec::Dense { units, .. } => input[0] * units + units,
            _ => 0,
        }
    }

    pub fn trainable_count(&self, input: &[usize]) -> usize {
        match self {
            LayerSpec::BatchNorm => 2 * input[input.len() - 1],
            other => other.param_count(input),
        }
    }
}

/// Input shape (without batch axis) plus an ordered layer stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSummary {
    pub name: &'static str,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCounts {
    pub per_layer: Vec<usize>,
    pub total: usize,
    pub trainable: usize,
}

impl ModelSpec {
    /// Input shape of every layer followed by the model output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(NnError::InvalidSpec(format!("bad input shape {:?}", self.input_shape)));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|e| NnError::ShapeMismatch(format!("layer {i}: {e}")))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>, NnError> {
        Ok(self.shapes()?.pop().unwrap())
    }

    pub fn summary(&self) -> Result<Vec<LayerSummary>, NnError> {
        let shapes = self.shapes()?;
        Ok(self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| LayerSummary {
                name: l.name(),
                output_shape: shapes[i + 1].clone(),
                params: l.param_count(&shapes[i]),
            })
            .collect())
    }

    pub fn count_params(&self) -> Result<ParamCounts, NnError> {
        let shapes = self.shapes()?;
        let per_layer: Vec<usize> = self.layers.iter().zip(&shapes).map(|(l, s)| l.param_count(s)).collect();
        let trainable = self.layers.iter().zip(&shapes).map(|(l, s)| l.trainable_count(s)).sum();
        Ok(ParamCounts {
            total: per_layer.iter().sum(),
            per_layer,
            trainable,
        })
    }
}

/// Conv net over a (130, 13, 1) MFCC segment.
pub fn build_mfcc_cnn() -> ModelSpec {
    use Padding::*;
    ModelSpec {
        input_shape: vec![130, 13, 1],
        layers: vec![
            LayerSpec::conv(32, 3, Valid),
            LayerSpec::pool(2, 2, Same),
            LayerSpec::BatchNorm,
            LayerSpec::conv(32, 3, Valid),
            LayerSpec::pool(2, 2, Same),
            LayerSpec::BatchNorm,
            LayerSpec::conv(32, 2, Valid),
            LayerSpec::pool(2, 2, Same),
            LayerSpec::BatchNorm,
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::Flatten,
            LayerSpec::dense(64, Activation::Relu),
            LayerSpec::dense(10, Activation::Softmax),
        ],
    }
}

/// Conv net over a (288, 432, 3) rendered mel spectrogram.
pub fn build_melspec_cnn() -> ModelSpec {
    use Padding::*;
    ModelSpec {
        input_shape: vec![288, 432, 3],
        layers: vec![
            LayerSpec::BatchNorm,
            LayerSpec::conv(32, 3, Same),
            LayerSpec::pool(3, 2, Valid),
            LayerSpec::conv(32, 3, Valid),
            LayerSpec::pool(3, 2, Valid),
            LayerSpec::conv(32, 3, Valid),
            LayerSpec::pool(2, 2, Valid),
            LayerSpec::conv(32, 3, Valid),
            LayerSpec::pool(2, 2, Valid),
            LayerSpec::conv(64, 3, Valid),
            LayerSpec::pool(2, 2, Valid),
            LayerSpec::Flatten,
            LayerSpec::dense(128, Activation::Relu),
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::BatchNorm,
            LayerSpec::dense(10, Activation::Softmax),
        ],
    }
}
