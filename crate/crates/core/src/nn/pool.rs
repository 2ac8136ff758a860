//! Non-overlapping 2x2 max pooling.

use crate::array::RealArray;
use crate::error::{Error, Result};

/// Argmax positions recorded by the forward pass: for each pooled element,
/// the flat index of the winning input element. Ties go to the first
/// position in row-major scan order.
#[derive(Debug, Clone)]
pub struct ArgmaxMask {
    input_shape: Vec<usize>,
    indices: Vec<usize>,
}

impl ArgmaxMask {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Max over each non-overlapping 2x2 window. Requires even spatial extents.
pub fn maxpool2x2_forward(x: &RealArray) -> Result<(RealArray, ArgmaxMask)> {
    let (n, c, h, w) = match x.shape() {
        [n, c, h, w] => (*n, *c, *h, *w),
        other => {
            return Err(Error::Dimension {
                op: "maxpool2x2_forward",
                lhs: format!("{other:?}"),
                rhs: "a 4-d input [N,C,H,W]".into(),
            })
        }
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Geometry {
            height: h,
            width: w,
            kernel: 2,
            stride: 2,
            pad: 0,
        });
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut pooled = RealArray::zeros(vec![n, c, ho, wo]);
    let mut indices = Vec::with_capacity(n * c * ho * wo);
    for plane_idx in 0..n * c {
        let base = plane_idx * h * w;
        for oi in 0..ho {
            for oj in 0..wo {
                let mut best_idx = base + (2 * oi) * w + 2 * oj;
                let mut best = x.data()[best_idx];
                // remaining window positions in row-major order
                for (di, dj) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = base + (2 * oi + di) * w + 2 * oj + dj;
                    let v = x.data()[idx];
                    if v > best {
                        best = v;
                        best_idx = idx;
                    }
                }
                pooled.data_mut()[(plane_idx * ho + oi) * wo + oj] = best;
                indices.push(best_idx);
            }
        }
    }
    Ok((
        pooled,
        ArgmaxMask {
            input_shape: x.shape().to_vec(),
            indices,
        },
    ))
}

/// Routes each upstream value to the argmax position stored by the forward
/// pass; all other input positions get zero gradient.
pub fn maxpool2x2_backward(mask: &ArgmaxMask, upstream: &RealArray) -> Result<RealArray> {
    if upstream.len() != mask.indices.len() {
        return Err(Error::Dimension {
            op: "maxpool2x2_backward",
            lhs: format!("upstream {:?}", upstream.shape()),
            rhs: format!("mask with {} windows", mask.indices.len()),
        });
    }
    let mut dx = RealArray::zeros(mask.input_shape.clone());
    for (&idx, &u) in mask.indices.iter().zip(upstream.data()) {
        dx.data_mut()[idx] += u;
    }
    Ok(dx)
}
