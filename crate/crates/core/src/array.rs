//! Dense shaped arrays of doubles, the carrier for activations, parameters
//! and gradients.

use crate::error::{Error, Result};

/// A shaped dense array of `f64` in row-major order.
///
/// Invariant: `data.len()` equals the product of the shape extents.
#[derive(Debug, Clone, PartialEq)]
pub struct RealArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl RealArray {
    /// Builds an array from a shape and matching flat data.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Input(format!("zero extent in shape {shape:?}")));
        }
        if data.len() != expected {
            return Err(Error::Dimension {
                op: "from_vec",
                lhs: format!("shape {shape:?} ({expected} elements)"),
                rhs: format!("{} data values", data.len()),
            });
        }
        Ok(RealArray { shape, data })
    }

    /// An all-zero array of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        RealArray {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterprets the flat data under a new shape with the same element
    /// count. No data movement.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: format!("{:?}", self.shape),
                rhs: format!("{shape:?}"),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Fills with He-uniform values: `U(-limit, limit)` with
    /// `limit = sqrt(6 / fan_in)`.
    pub fn fill_he_uniform(&mut self, fan_in: usize, rng: &mut crate::rng::Rng) {
        let limit = (6.0 / fan_in as f64).sqrt();
        for v in &mut self.data {
            *v = rng.range_f64(-limit, limit);
        }
    }
}
