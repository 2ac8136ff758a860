//! Forward/backward primitives: dense and convolutional layers, 2x2 max
//! pooling, ReLU, and softmax cross-entropy with per-example losses.
//!
//! All operations are pure functions over [`RealArray`]s. Reductions across
//! batch examples accumulate in ascending example-index order, so results are
//! reproducible bit-for-bit regardless of how callers schedule work.

mod affine;
mod conv;
mod pool;
mod relu;
mod softmax;

pub use affine::{affine_backward, affine_forward};
pub use conv::{conv2d_backward, conv2d_forward};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, ArgmaxMask};
pub use relu::{relu_backward, relu_forward};
pub use softmax::softmax_cross_entropy;

use crate::array::RealArray;

/// Gradients of one layer: one array per parameter (matching the parameter
/// shapes exactly) plus the gradient with respect to the layer input.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub param_grads: Vec<RealArray>,
    pub input_grad: RealArray,
}

/// Per-example losses for one batch, in nats. Each value is non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct PerExampleLoss {
    values: Vec<f64>,
}

impl PerExampleLoss {
    /// Internal constructor: values are non-negative for finite logits, but
    /// may be non-finite while a run is diverging — callers detect that.
    pub(crate) fn new(values: Vec<f64>) -> Self {
        PerExampleLoss { values }
    }

    /// Validating constructor for losses computed outside this module.
    pub fn from_values(values: Vec<f64>) -> crate::error::Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(crate::error::Error::Input(format!(
                "per-example losses must be finite and non-negative, got {bad}"
            )));
        }
        Ok(PerExampleLoss { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mean loss over the batch.
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}
