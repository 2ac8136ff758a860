//! ReLU activation.

use crate::array::RealArray;
use crate::error::{Error, Result};

/// Elementwise `max(0, x)`.
pub fn relu_forward(x: &RealArray) -> RealArray {
    let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    RealArray::from_vec(x.shape().to_vec(), data).expect("shape preserved")
}

/// Passes upstream where `x > 0`, zero where `x <= 0` (subgradient 0 at 0).
pub fn relu_backward(x: &RealArray, upstream: &RealArray) -> Result<RealArray> {
    if x.shape() != upstream.shape() {
        return Err(Error::Dimension {
            op: "relu_backward",
            lhs: format!("{:?}", x.shape()),
            rhs: format!("{:?}", upstream.shape()),
        });
    }
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&v, &u)| if v > 0.0 { u } else { 0.0 })
        .collect();
    Ok(RealArray::from_vec(x.shape().to_vec(), data).expect("shape preserved"))
}
