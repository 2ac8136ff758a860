//! Fully-connected layer.

use crate::array::RealArray;
use crate::error::{Error, Result};
use crate::nn::LayerGrad;

fn check_2d(op: &'static str, a: &RealArray) -> Result<(usize, usize)> {
    match a.shape() {
        [r, c] => Ok((*r, *c)),
        other => Err(Error::Dimension {
            op,
            lhs: format!("{other:?}"),
            rhs: "a 2-d array".into(),
        }),
    }
}

/// `out[n,k] = sum_d x[n,d] * w[d,k] + b[k]`.
///
/// The inner sum accumulates over `d` in ascending order, one addition per
/// step, so the result is bit-identical to a naive triple loop.
pub fn affine_forward(x: &RealArray, w: &RealArray, b: &RealArray) -> Result<RealArray> {
    let (n, d) = check_2d("affine_forward", x)?;
    let (dw, k) = check_2d("affine_forward", w)?;
    if d != dw || b.shape() != [k] {
        return Err(Error::Dimension {
            op: "affine_forward",
            lhs: format!("x {:?}", x.shape()),
            rhs: format!("w {:?}, b {:?}", w.shape(), b.shape()),
        });
    }
    let mut out = RealArray::zeros(vec![n, k]);
    matmul_into(out.data_mut(), x.data(), w.data(), n, d, k);
    for row in out.data_mut().chunks_exact_mut(k) {
        for (o, &bv) in row.iter_mut().zip(b.data()) {
            *o += bv;
        }
    }
    Ok(out)
}

/// Gradients of [`affine_forward`]: `dw = x^T up`, `db = sum_n up`,
/// `dx = up w^T`. Unscaled; batch averaging is the caller's business.
pub fn affine_backward(x: &RealArray, w: &RealArray, upstream: &RealArray) -> Result<LayerGrad> {
    let (n, d) = check_2d("affine_backward", x)?;
    let (dw_rows, k) = check_2d("affine_backward", w)?;
    let (un, uk) = check_2d("affine_backward", upstream)?;
    if dw_rows != d || un != n || uk != k {
        return Err(Error::Dimension {
            op: "affine_backward",
            lhs: format!("x {:?}, w {:?}", x.shape(), w.shape()),
            rhs: format!("upstream {:?}", upstream.shape()),
        });
    }

    let mut dw = RealArray::zeros(vec![d, k]);
    let mut db = RealArray::zeros(vec![k]);
    // dw[d,k] += x[n,d] * up[n,k], examples in ascending order.
    for row in 0..n {
        let up_row = &upstream.data()[row * k..(row + 1) * k];
        for col_d in 0..d {
            let xv = x.data()[row * d + col_d];
            let dw_row = &mut dw.data_mut()[col_d * k..(col_d + 1) * k];
            for (dst, &u) in dw_row.iter_mut().zip(up_row) {
                *dst += xv * u;
            }
        }
        for (dst, &u) in db.data_mut().iter_mut().zip(up_row) {
            *dst += u;
        }
    }

    // dx = up * w^T; transpose once so the inner loop runs along rows.
    let mut wt = vec![0.0; k * d];
    for row_d in 0..d {
        for col_k in 0..k {
            wt[col_k * d + row_d] = w.data()[row_d * k + col_k];
        }
    }
    let mut dx = RealArray::zeros(vec![n, d]);
    matmul_into(dx.data_mut(), upstream.data(), &wt, n, k, d);

    Ok(LayerGrad {
        param_grads: vec![dw, db],
        input_grad: dx,
    })
}

/// `out[n,k] += sum_d a[n,d] * b[d,k]` with the `d` accumulation sequential
/// per output element. `out` must be zeroed (or hold a partial sum).
pub(crate) fn matmul_into(out: &mut [f64], a: &[f64], b: &[f64], n: usize, d: usize, k: usize) {
    for row in 0..n {
        let a_row = &a[row * d..(row + 1) * d];
        let out_row = &mut out[row * k..(row + 1) * k];
        for (inner, &av) in a_row.iter().enumerate() {
            let b_row = &b[inner * k..(inner + 1) * k];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}
