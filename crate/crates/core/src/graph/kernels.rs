//! Plain-array numeric kernels behind the graph ops.
//!
//! Convolutions are 3x3, stride 1, same-size (zero padding 1). That closure
//! keeps the op set self-adjoint: the derivative of every kernel here is
//! again a kernel here, which is what makes higher-order differentiation on
//! the tape possible.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView1, ArrayView2, ArrayView3, ArrayView4};

/// out[o,r,s] = sum_{c,i,j} w[o,c,i,j] * x[c, r+i-1, s+j-1] with zero padding.
pub fn conv3x3_same(x: &ArrayView3<f64>, w: &ArrayView4<f64>) -> Array3<f64> {
    let (c_in, h, wd) = x.dim();
    let (c_out, c_in_w, kh, kw) = w.dim();
    assert_eq!(c_in, c_in_w, "conv channel mismatch");
    assert_eq!((kh, kw), (3, 3), "conv kernels are 3x3");
    let mut out = Array3::<f64>::zeros((c_out, h, wd));
    for o in 0..c_out {
        for c in 0..c_in {
            for i in 0..3usize {
                for j in 0..3usize {
                    let k = w[[o, c, i, j]];
                    if k == 0.0 {
                        continue;
                    }
                    // valid output rows r with input row u = r + i - 1 in range
                    let r_lo = 1usize.saturating_sub(i);
                    let r_hi = (h + 1 - i).min(h);
                    // valid output cols s with input col t = s + j - 1 in range
                    let s_lo = 1usize.saturating_sub(j);
                    let s_hi = (wd + 1 - j).min(wd);
                    if s_lo >= s_hi {
                        continue;
                    }
                    for r in r_lo..r_hi {
                        let u = r + i - 1;
                        let xin = x.slice(ndarray::s![c, u, s_lo + j - 1..s_hi + j - 1]);
                        let mut orow = out.slice_mut(ndarray::s![o, r, s_lo..s_hi]);
                        orow.zip_mut_with(&xin, |acc, &v| *acc += k * v);
                    }
                }
            }
        }
    }
    out
}

/// wgrad[o,c,i,j] = sum_{r,s} g[o,r,s] * x[c, r+i-1, s+j-1] with zero padding.
pub fn conv3x3_weight_grad(x: &ArrayView3<f64>, g: &ArrayView3<f64>) -> Array4<f64> {
    let (c_in, h, wd) = x.dim();
    let (c_out, gh, gw) = g.dim();
    assert_eq!((gh, gw), (h, wd), "gradient spatial shape mismatch");
    let mut out = Array4::<f64>::zeros((c_out, c_in, 3, 3));
    for o in 0..c_out {
        for c in 0..c_in {
            for i in 0..3usize {
                for j in 0..3usize {
                    let r_lo = 1usize.saturating_sub(i);
                    let r_hi = (h + 1 - i).min(h);
                    let s_lo = 1usize.saturating_sub(j);
                    let s_hi = (wd + 1 - j).min(wd);
                    if s_lo >= s_hi {
                        continue;
                    }
                    let mut acc = 0.0;
                    for r in r_lo..r_hi {
                        let u = r + i - 1;
                        let xin = x.slice(ndarray::s![c, u, s_lo + j - 1..s_hi + j - 1]);
                        let grow = g.slice(ndarray::s![o, r, s_lo..s_hi]);
                        acc += grow.dot(&xin);
                    }
                    out[[o, c, i, j]] = acc;
                }
            }
        }
    }
    out
}

/// (O,C,3,3) -> (C,O,3,3) with both kernel axes flipped. Convolving a
/// cotangent with this gives the adjoint of `conv3x3_same`.
pub fn flip_transpose(w: &ArrayView4<f64>) -> Array4<f64> {
    let (o_n, c_n, _, _) = w.dim();
    Array4::from_shape_fn((c_n, o_n, 3, 3), |(c, o, i, j)| w[[o, c, 2 - i, 2 - j]])
}

pub fn avg_pool2(x: &ArrayView3<f64>) -> Array3<f64> {
    let (c, h, w) = x.dim();
    assert!(h % 2 == 0 && w % 2 == 0, "pooled dims must be even");
    Array3::from_shape_fn((c, h / 2, w / 2), |(ch, r, s)| {
        0.25 * (x[[ch, 2 * r, 2 * s]]
            + x[[ch, 2 * r, 2 * s + 1]]
            + x[[ch, 2 * r + 1, 2 * s]]
            + x[[ch, 2 * r + 1, 2 * s + 1]])
    })
}

/// Adjoint of [`avg_pool2`]: spread a quarter of each value into its block.
pub fn upsample2_quarter(x: &ArrayView3<f64>) -> Array3<f64> {
    let (c, h, w) = x.dim();
    Array3::from_shape_fn((c, 2 * h, 2 * w), |(ch, r, s)| 0.25 * x[[ch, r / 2, s / 2]])
}

pub fn mat_vec(w: &ArrayView2<f64>, x: &ArrayView1<f64>) -> Array1<f64> {
    w.dot(x)
}

pub fn mat_vec_t(w: &ArrayView2<f64>, g: &ArrayView1<f64>) -> Array1<f64> {
    w.t().dot(g)
}

pub fn outer(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> Array2<f64> {
    let (k, c) = (a.len(), b.len());
    Array2::from_shape_fn((k, c), |(i, j)| a[i] * b[j])
}

/// Enumerate bilinear interpolation weights from an (in_h, in_w) grid onto an
/// (out_h, out_w) grid. Forward and adjoint resampling both fold over this,
/// which makes them exact adjoints by construction.
pub fn for_each_bilinear_weight<F: FnMut(usize, usize, usize, usize, f64)>(
    out_h: usize,
    out_w: usize,
    in_h: usize,
    in_w: usize,
    mut f: F,
) {
    let sy = in_h as f64 / out_h as f64;
    let sx = in_w as f64 / out_w as f64;
    for oy in 0..out_h {
        let src_y = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = src_y.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let fy = src_y - y0 as f64;
        for ox in 0..out_w {
            let src_x = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = src_x.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let fx = src_x - x0 as f64;
            f(oy, ox, y0, x0, (1.0 - fy) * (1.0 - fx));
            if x1 != x0 {
                f(oy, ox, y0, x1, (1.0 - fy) * fx);
            }
            if y1 != y0 {
                f(oy, ox, y1, x0, fy * (1.0 - fx));
                if x1 != x0 {
                    f(oy, ox, y1, x1, fy * fx);
                }
            }
        }
    }
}

pub fn upsample_bilinear(x: &ArrayView2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = x.dim();
    let mut out = Array2::<f64>::zeros((out_h, out_w));
    for_each_bilinear_weight(out_h, out_w, h, w, |oy, ox, iy, ix, wgt| {
        out[[oy, ox]] += wgt * x[[iy, ix]];
    });
    out
}

pub fn upsample_bilinear_adjoint(g: &ArrayView2<f64>, in_h: usize, in_w: usize) -> Array2<f64> {
    let (out_h, out_w) = g.dim();
    let mut out = Array2::<f64>::zeros((in_h, in_w));
    for_each_bilinear_weight(out_h, out_w, in_h, in_w, |oy, ox, iy, ix, wgt| {
        out[[iy, ix]] += wgt * g[[oy, ox]];
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use ndarray::{Array3, Array4};

    fn rand3(rng: &mut RandomSource, d: (usize, usize, usize)) -> Array3<f64> {
        Array3::from_shape_fn(d, |_| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn conv_matches_naive_loop() {
        let mut rng = RandomSource::new(2);
        let x = rand3(&mut rng, (2, 5, 4));
        let w = Array4::from_shape_fn((3, 2, 3, 3), |_| rng.uniform(-1.0, 1.0));
        let fast = conv3x3_same(&x.view(), &w.view());
        for o in 0..3 {
            for r in 0..5i64 {
                for s in 0..4i64 {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for i in 0..3i64 {
                            for j in 0..3i64 {
                                let (u, t) = (r + i - 1, s + j - 1);
                                if u >= 0 && u < 5 && t >= 0 && t < 4 {
                                    acc += w[[o, c, i as usize, j as usize]]
                                        * x[[c, u as usize, t as usize]];
                                }
                            }
                        }
                    }
                    assert!((fast[[o, r as usize, s as usize]] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_transpose_is_adjoint() {
        // <Conv(x, w), y> == <x, Conv(y, flip_transpose(w))>
        let mut rng = RandomSource::new(3);
        let x = rand3(&mut rng, (2, 6, 6));
        let y = rand3(&mut rng, (3, 6, 6));
        let w = Array4::from_shape_fn((3, 2, 3, 3), |_| rng.uniform(-1.0, 1.0));
        let lhs = (&conv3x3_same(&x.view(), &w.view()) * &y).sum();
        let wt = flip_transpose(&w.view());
        let rhs = (&conv3x3_same(&y.view(), &wt.view()) * &x).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn weight_grad_matches_inner_product_identity() {
        // <Conv(x, w), g> == <w, WGrad(x, g)>
        let mut rng = RandomSource::new(4);
        let x = rand3(&mut rng, (2, 4, 5));
        let g = rand3(&mut rng, (3, 4, 5));
        let w = Array4::from_shape_fn((3, 2, 3, 3), |_| rng.uniform(-1.0, 1.0));
        let lhs = (&conv3x3_same(&x.view(), &w.view()) * &g).sum();
        let rhs = (&conv3x3_weight_grad(&x.view(), &g.view()) * &w).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn pool_and_upsample_are_adjoint() {
        let mut rng = RandomSource::new(5);
        let x = rand3(&mut rng, (2, 4, 6));
        let y = rand3(&mut rng, (2, 2, 3));
        let lhs = (&avg_pool2(&x.view()) * &y).sum();
        let rhs = (&upsample2_quarter(&y.view()) * &x).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn bilinear_pair_is_adjoint() {
        let mut rng = RandomSource::new(6);
        let x = Array2::from_shape_fn((3, 4), |_| rng.uniform(-1.0, 1.0));
        let y = Array2::from_shape_fn((9, 8), |_| rng.uniform(-1.0, 1.0));
        let lhs = (&upsample_bilinear(&x.view(), 9, 8) * &y).sum();
        let rhs = (&upsample_bilinear_adjoint(&y.view(), 3, 4) * &x).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let mut rng = RandomSource::new(7);
        let x = rand3(&mut rng, (1, 4, 4));
        let mut w = Array4::<f64>::zeros((1, 1, 3, 3));
        w[[0, 0, 1, 1]] = 1.0;
        assert_eq!(conv3x3_same(&x.view(), &w.view()), x);
    }
}
