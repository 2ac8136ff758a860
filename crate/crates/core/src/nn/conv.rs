//! 2-d convolution (cross-correlation) with zero padding.
//!
//! Internally lowered to an im2col buffer plus the ordered matmul from the
//! affine layer; the patch axis is laid out channel-major then row-major, so
//! every output element accumulates its terms in the same order as a naive
//! seven-loop implementation.

use crate::array::RealArray;
use crate::error::{Error, Result};
use crate::nn::affine::matmul_into;
use crate::nn::LayerGrad;

struct ConvGeometry {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    filters: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

fn geometry(
    x: &RealArray,
    kernels: &RealArray,
    stride: usize,
    pad: usize,
) -> Result<ConvGeometry> {
    let (batch, channels, height, width) = match x.shape() {
        [n, c, h, w] => (*n, *c, *h, *w),
        other => {
            return Err(Error::Dimension {
                op: "conv2d",
                lhs: format!("{other:?}"),
                rhs: "a 4-d input [N,C,H,W]".into(),
            })
        }
    };
    let (filters, kc, kh, kw) = match kernels.shape() {
        [f, c, h, w] => (*f, *c, *h, *w),
        other => {
            return Err(Error::Dimension {
                op: "conv2d",
                lhs: format!("{other:?}"),
                rhs: "4-d kernels [F,C,k,k]".into(),
            })
        }
    };
    if kc != channels || kh != kw {
        return Err(Error::Dimension {
            op: "conv2d",
            lhs: format!("input {:?}", x.shape()),
            rhs: format!("kernels {:?}", kernels.shape()),
        });
    }
    let kernel = kh;
    if stride == 0
        || height + 2 * pad < kernel
        || width + 2 * pad < kernel
        || (height + 2 * pad - kernel) % stride != 0
        || (width + 2 * pad - kernel) % stride != 0
    {
        return Err(Error::Geometry {
            height,
            width,
            kernel,
            stride,
            pad,
        });
    }
    Ok(ConvGeometry {
        batch,
        channels,
        height,
        width,
        filters,
        kernel,
        stride,
        pad,
        out_h: (height + 2 * pad - kernel) / stride + 1,
        out_w: (width + 2 * pad - kernel) / stride + 1,
    })
}

/// Gathers input patches: one row per output position, columns indexed by
/// `(c, kh, kw)` row-major. Out-of-bounds (padding) positions are zero.
fn im2col(x: &RealArray, g: &ConvGeometry) -> Vec<f64> {
    let patch = g.channels * g.kernel * g.kernel;
    let positions = g.batch * g.out_h * g.out_w;
    let mut cols = vec![0.0; positions * patch];
    let (h, w) = (g.height, g.width);
    for n in 0..g.batch {
        for oi in 0..g.out_h {
            for oj in 0..g.out_w {
                let row = ((n * g.out_h + oi) * g.out_w + oj) * patch;
                let mut q = 0;
                for c in 0..g.channels {
                    let plane = &x.data()[(n * g.channels + c) * h * w..][..h * w];
                    for ki in 0..g.kernel {
                        let ii = oi * g.stride + ki;
                        for kj in 0..g.kernel {
                            let jj = oj * g.stride + kj;
                            if ii >= g.pad && jj >= g.pad && ii - g.pad < h && jj - g.pad < w {
                                cols[row + q] = plane[(ii - g.pad) * w + (jj - g.pad)];
                            }
                            q += 1;
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Cross-correlation with zero padding: output spatial extent
/// `(H + 2 pad - k) / stride + 1`.
pub fn conv2d_forward(
    x: &RealArray,
    kernels: &RealArray,
    bias: &RealArray,
    stride: usize,
    pad: usize,
) -> Result<RealArray> {
    let g = geometry(x, kernels, stride, pad)?;
    if bias.shape() != [g.filters] {
        return Err(Error::Dimension {
            op: "conv2d_forward",
            lhs: format!("bias {:?}", bias.shape()),
            rhs: format!("[{}]", g.filters),
        });
    }
    let patch = g.channels * g.kernel * g.kernel;
    let positions = g.batch * g.out_h * g.out_w;
    let cols = im2col(x, &g);

    // kernels laid out [F, patch] -> transpose to [patch, F] so the matmul
    // accumulates patch terms in ascending (c, kh, kw) order.
    let mut kt = vec![0.0; patch * g.filters];
    for f in 0..g.filters {
        for q in 0..patch {
            kt[q * g.filters + f] = kernels.data()[f * patch + q];
        }
    }
    let mut out_mat = vec![0.0; positions * g.filters];
    matmul_into(&mut out_mat, &cols, &kt, positions, patch, g.filters);

    let mut out = RealArray::zeros(vec![g.batch, g.filters, g.out_h, g.out_w]);
    let plane = g.out_h * g.out_w;
    for n in 0..g.batch {
        for f in 0..g.filters {
            let bv = bias.data()[f];
            for p in 0..plane {
                out.data_mut()[(n * g.filters + f) * plane + p] =
                    out_mat[(n * plane + p) * g.filters + f] + bv;
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_forward`] with respect to kernels, bias and input.
pub fn conv2d_backward(
    x: &RealArray,
    kernels: &RealArray,
    stride: usize,
    pad: usize,
    upstream: &RealArray,
) -> Result<LayerGrad> {
    let g = geometry(x, kernels, stride, pad)?;
    let expected = [g.batch, g.filters, g.out_h, g.out_w];
    if upstream.shape() != expected {
        return Err(Error::Dimension {
            op: "conv2d_backward",
            lhs: format!("upstream {:?}", upstream.shape()),
            rhs: format!("{expected:?}"),
        });
    }
    let patch = g.channels * g.kernel * g.kernel;
    let positions = g.batch * g.out_h * g.out_w;
    let plane = g.out_h * g.out_w;
    let cols = im2col(x, &g);

    // upstream reshaped to [positions, F].
    let mut up_mat = vec![0.0; positions * g.filters];
    for n in 0..g.batch {
        for f in 0..g.filters {
            for p in 0..plane {
                up_mat[(n * plane + p) * g.filters + f] =
                    upstream.data()[(n * g.filters + f) * plane + p];
            }
        }
    }

    let mut dk = RealArray::zeros(vec![g.filters, g.channels, g.kernel, g.kernel]);
    let mut db = RealArray::zeros(vec![g.filters]);
    for pos in 0..positions {
        let up_row = &up_mat[pos * g.filters..(pos + 1) * g.filters];
        let col_row = &cols[pos * patch..(pos + 1) * patch];
        for (f, &u) in up_row.iter().enumerate() {
            db.data_mut()[f] += u;
            let dk_row = &mut dk.data_mut()[f * patch..(f + 1) * patch];
            for (dst, &cv) in dk_row.iter_mut().zip(col_row) {
                *dst += u * cv;
            }
        }
    }

    // dcols = up_mat * kernels_mat, then scatter-add back (col2im).
    let mut dcols = vec![0.0; positions * patch];
    matmul_into(&mut dcols, &up_mat, kernels.data(), positions, g.filters, patch);
    let mut dx = RealArray::zeros(vec![g.batch, g.channels, g.height, g.width]);
    let (h, w) = (g.height, g.width);
    for n in 0..g.batch {
        for oi in 0..g.out_h {
            for oj in 0..g.out_w {
                let row = ((n * g.out_h + oi) * g.out_w + oj) * patch;
                let mut q = 0;
                for c in 0..g.channels {
                    for ki in 0..g.kernel {
                        let ii = oi * g.stride + ki;
                        for kj in 0..g.kernel {
                            let jj = oj * g.stride + kj;
                            if ii >= g.pad && jj >= g.pad && ii - g.pad < h && jj - g.pad < w {
                                dx.data_mut()
                                    [((n * g.channels + c) * h + (ii - g.pad)) * w + (jj - g.pad)] +=
                                    dcols[row + q];
                            }
                            q += 1;
                        }
                    }
                }
            }
        }
    }

    Ok(LayerGrad {
        param_grads: vec![dk, db],
        input_grad: dx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{central_diff, naive_conv, random_array, rel_err};
    use crate::rng::Rng;

    #[test]
    fn full_window_sum() {
        let x = RealArray::from_vec(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let k = RealArray::from_vec(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let b = RealArray::zeros(vec![1]);
        let out = conv2d_forward(&x, &k, &b, 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.data(), &[9.0]);
    }

    #[test]
    fn delta_kernel_reproduces_input() {
        let mut rng = Rng::from_seed(17);
        let x = random_array(&[1, 1, 4, 4], &mut rng);
        let mut kdata = vec![0.0; 9];
        kdata[4] = 1.0; // center of a 3x3 kernel
        let k = RealArray::from_vec(vec![1, 1, 3, 3], kdata).unwrap();
        let b = RealArray::zeros(vec![1]);
        let out = conv2d_forward(&x, &k, &b, 1, 1).unwrap();
        assert_eq!(out.shape(), x.shape());
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn bad_geometry_reports_all_integers() {
        let x = RealArray::zeros(vec![1, 1, 5, 5]);
        let k = RealArray::zeros(vec![1, 1, 2, 2]);
        let b = RealArray::zeros(vec![1]);
        let err = conv2d_forward(&x, &k, &b, 2, 0).unwrap_err().to_string();
        for token in ["5", "2", "0"] {
            assert!(err.contains(token), "{err}");
        }
    }

    #[test]
    fn matches_naive_oracle_exactly() {
        let mut rng = Rng::from_seed(23);
        for &(kernel, stride, pad) in &[(3usize, 1usize, 0usize), (3, 1, 1), (2, 2, 0), (5, 1, 2)] {
            let x = random_array(&[2, 3, 8, 8], &mut rng);
            let k = random_array(&[4, 3, kernel, kernel], &mut rng);
            let b = random_array(&[4], &mut rng);
            let got = conv2d_forward(&x, &k, &b, stride, pad).unwrap();
            let want = naive_conv(&x, &k, &b, stride, pad);
            assert_eq!(got.shape(), want.shape());
            assert_eq!(got.data(), want.data());
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = Rng::from_seed(3);
        let x = random_array(&[1, 2, 4, 4], &mut rng);
        let k = random_array(&[3, 2, 3, 3], &mut rng);
        let up = RealArray::zeros(vec![1, 3, 2, 2]);
        let g = conv2d_backward(&x, &k, 1, 0, &up).unwrap();
        assert!(g.param_grads[0].data().iter().all(|&v| v == 0.0));
        assert!(g.param_grads[1].data().iter().all(|&v| v == 0.0));
        assert!(g.input_grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_1x1_matches_affine_scalar_rule() {
        let x = RealArray::from_vec(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let k = RealArray::from_vec(vec![1, 1, 1, 1], vec![3.0]).unwrap();
        let up = RealArray::from_vec(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let g = conv2d_backward(&x, &k, 1, 0, &up).unwrap();
        assert_eq!(g.param_grads[0].data(), &[2.0]);
        assert_eq!(g.param_grads[1].data(), &[1.0]);
        assert_eq!(g.input_grad.data(), &[3.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::from_seed(31);
        let x = random_array(&[2, 2, 5, 5], &mut rng);
        let k = random_array(&[3, 2, 3, 3], &mut rng);
        let b = random_array(&[3], &mut rng);
        let (stride, pad) = (2, 1);
        let out = conv2d_forward(&x, &k, &b, stride, pad).unwrap();
        let up = random_array(out.shape(), &mut rng);

        let objective = |xv: &[f64], kv: &[f64]| {
            let xa = RealArray::from_vec(x.shape().to_vec(), xv.to_vec()).unwrap();
            let ka = RealArray::from_vec(k.shape().to_vec(), kv.to_vec()).unwrap();
            conv2d_forward(&xa, &ka, &b, stride, pad)
                .unwrap()
                .data()
                .iter()
                .zip(up.data())
                .map(|(o, u)| o * u)
                .sum::<f64>()
        };

        let g = conv2d_backward(&x, &k, stride, pad, &up).unwrap();
        for i in 0..k.len() {
            let mut f = |kv: &[f64]| objective(x.data(), kv);
            let fd = central_diff(&mut f, k.data(), i);
            assert!(rel_err(fd, g.param_grads[0].data()[i]) < 1e-4);
        }
        for i in 0..x.len() {
            let mut f = |xv: &[f64]| objective(xv, k.data());
            let fd = central_diff(&mut f, x.data(), i);
            assert!(rel_err(fd, g.input_grad.data()[i]) < 1e-4);
        }
    }
}
