//! Graph operations: eager forward evaluation plus backward rules.
//!
//! Every backward rule emits its contributions as ordinary graph nodes, so
//! the op set is closed under differentiation. Ops that pick elements (max,
//! abs, ReLU gates) freeze the selection as a constant mask of the backward
//! pass.

use ndarray::{ArrayD, Ix1, Ix2, Ix3, Ix4, IxDyn};

use super::{kernels, Graph, NodeId};

#[derive(Debug, Clone)]
pub enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId, f64),
    Sqrt(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Abs(NodeId),
    Relu(NodeId),
    SmoothAct { x: NodeId, tau: f64, swap: bool },
    Clip01St(NodeId),
    Conv3x3(NodeId, NodeId),
    ConvWGrad(NodeId, NodeId),
    FlipTranspose(NodeId),
    AvgPool2(NodeId),
    Upsample2(NodeId),
    SumSpatial(NodeId),
    BroadcastSpatial { x: NodeId, h: usize, w: usize },
    SumChannels(NodeId),
    BroadcastChannels { x: NodeId, c: usize },
    SumAll(NodeId),
    BroadcastAll { x: NodeId, shape: Vec<usize> },
    MaxChannels(NodeId),
    MaxAll(NodeId),
    MinAll(NodeId),
    Index(NodeId, usize),
    MatVec(NodeId, NodeId),
    MatVecT(NodeId, NodeId),
    Outer(NodeId, NodeId),
    UpBilinear { x: NodeId, out_h: usize, out_w: usize },
    UpBilinearT { x: NodeId, in_h: usize, in_w: usize },
    Reshape { x: NodeId, shape: Vec<usize> },
}

fn is_scalar(v: &ArrayD<f64>) -> bool {
    v.len() == 1
}

/// Elementwise combine with singleton broadcasting on either side.
fn zip_broadcast(a: &ArrayD<f64>, b: &ArrayD<f64>, f: impl Fn(f64, f64) -> f64) -> ArrayD<f64> {
    if a.shape() == b.shape() {
        let mut out = a.clone();
        out.zip_mut_with(b, |x, &y| *x = f(*x, y));
        out
    } else if is_scalar(b) {
        let s = b[0];
        a.mapv(|x| f(x, s))
    } else if is_scalar(a) {
        let s = a[0];
        b.mapv(|y| f(s, y))
    } else {
        panic!(
            "shape mismatch in elementwise op: {:?} vs {:?}",
            a.shape(),
            b.shape()
        );
    }
}

impl Graph {
    fn binary(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> NodeId {
        let value = zip_broadcast(self.value(a), self.value(b), f);
        self.push(value, op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(|v| -v);
        self.push(value, Op::Neg(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).mapv(|v| v * c);
        self.push(value, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).mapv(|v| v + c);
        self.push(value, Op::AddConst(a, c))
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(f64::sqrt);
        self.push(value, Op::Sqrt(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(f64::ln);
        self.push(value, Op::Ln(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(f64::abs);
        self.push(value, Op::Abs(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    /// Forward of the smoothed ReLU surrogate; its derivative is the printed
    /// gate `z/sqrt(z^2+tau) + [branch]`. `swap` exchanges which branch gets
    /// the +1 (and the +z of the primitive accordingly).
    pub fn smooth_act(&mut self, x: NodeId, tau: f64, swap: bool) -> NodeId {
        let value = self.value(x).mapv(|z| {
            let root = (z * z + tau).sqrt();
            let on_linear_branch = if swap { z >= 0.0 } else { z < 0.0 };
            if on_linear_branch {
                z + root
            } else {
                root
            }
        });
        self.push(value, Op::SmoothAct { x, tau, swap })
    }

    pub fn clip01_st(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).mapv(|v| v.clamp(0.0, 1.0));
        self.push(value, Op::Clip01St(a))
    }

    pub fn conv3x3(&mut self, x: NodeId, w: NodeId) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let wv = self.value(w).view().into_dimensionality::<Ix4>().unwrap();
        let value = kernels::conv3x3_same(&xv, &wv).into_dyn();
        self.push(value, Op::Conv3x3(x, w))
    }

    pub fn conv3x3_wgrad(&mut self, x: NodeId, g: NodeId) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let gv = self.value(g).view().into_dimensionality::<Ix3>().unwrap();
        let value = kernels::conv3x3_weight_grad(&xv, &gv).into_dyn();
        self.push(value, Op::ConvWGrad(x, g))
    }

    pub fn flip_transpose(&mut self, w: NodeId) -> NodeId {
        let wv = self.value(w).view().into_dimensionality::<Ix4>().unwrap();
        let value = kernels::flip_transpose(&wv).into_dyn();
        self.push(value, Op::FlipTranspose(w))
    }

    pub fn avg_pool2(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let value = kernels::avg_pool2(&xv).into_dyn();
        self.push(value, Op::AvgPool2(x))
    }

    pub fn upsample2(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let value = kernels::upsample2_quarter(&xv).into_dyn();
        self.push(value, Op::Upsample2(x))
    }

    pub fn sum_spatial(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let (c, _, _) = xv.dim();
        let mut out = ndarray::Array1::<f64>::zeros(c);
        for (ch, plane) in xv.outer_iter().enumerate() {
            out[ch] = plane.sum();
        }
        self.push(out.into_dyn(), Op::SumSpatial(x))
    }

    pub fn broadcast_spatial(&mut self, x: NodeId, h: usize, w: usize) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix1>().unwrap();
        let c = xv.len();
        let value = ndarray::Array3::from_shape_fn((c, h, w), |(ch, _, _)| xv[ch]).into_dyn();
        self.push(value, Op::BroadcastSpatial { x, h, w })
    }

    pub fn sum_channels(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let (_, h, w) = xv.dim();
        let mut out = ndarray::Array2::<f64>::zeros((h, w));
        for plane in xv.outer_iter() {
            out += &plane;
        }
        self.push(out.into_dyn(), Op::SumChannels(x))
    }

    pub fn broadcast_channels(&mut self, x: NodeId, c: usize) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let (h, w) = xv.dim();
        let value = ndarray::Array3::from_shape_fn((c, h, w), |(_, r, s)| xv[[r, s]]).into_dyn();
        self.push(value, Op::BroadcastChannels { x, c })
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).sum();
        self.push(ArrayD::from_elem(IxDyn(&[1]), s), Op::SumAll(x))
    }

    pub fn broadcast_all(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        let s = self.scalar_value(x);
        self.push(
            ArrayD::from_elem(IxDyn(shape), s),
            Op::BroadcastAll {
                x,
                shape: shape.to_vec(),
            },
        )
    }

    pub fn max_channels(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix3>().unwrap();
        let (c, h, w) = xv.dim();
        let value = ndarray::Array2::from_shape_fn((h, w), |(r, s)| {
            let mut best = xv[[0, r, s]];
            for ch in 1..c {
                best = best.max(xv[[ch, r, s]]);
            }
            best
        });
        self.push(value.into_dyn(), Op::MaxChannels(x))
    }

    pub fn max_all(&mut self, x: NodeId) -> NodeId {
        let m = self.value(x).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.push(ArrayD::from_elem(IxDyn(&[1]), m), Op::MaxAll(x))
    }

    pub fn min_all(&mut self, x: NodeId) -> NodeId {
        let m = self.value(x).iter().copied().fold(f64::INFINITY, f64::min);
        self.push(ArrayD::from_elem(IxDyn(&[1]), m), Op::MinAll(x))
    }

    pub fn index(&mut self, x: NodeId, k: usize) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix1>().unwrap();
        self.push(ArrayD::from_elem(IxDyn(&[1]), xv[k]), Op::Index(x, k))
    }

    pub fn mat_vec(&mut self, w: NodeId, x: NodeId) -> NodeId {
        let wv = self.value(w).view().into_dimensionality::<Ix2>().unwrap();
        let xv = self.value(x).view().into_dimensionality::<Ix1>().unwrap();
        let value = kernels::mat_vec(&wv, &xv).into_dyn();
        self.push(value, Op::MatVec(w, x))
    }

    pub fn mat_vec_t(&mut self, w: NodeId, g: NodeId) -> NodeId {
        let wv = self.value(w).view().into_dimensionality::<Ix2>().unwrap();
        let gv = self.value(g).view().into_dimensionality::<Ix1>().unwrap();
        let value = kernels::mat_vec_t(&wv, &gv).into_dyn();
        self.push(value, Op::MatVecT(w, g))
    }

    pub fn outer(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a).view().into_dimensionality::<Ix1>().unwrap();
        let bv = self.value(b).view().into_dimensionality::<Ix1>().unwrap();
        let value = kernels::outer(&av, &bv).into_dyn();
        self.push(value, Op::Outer(a, b))
    }

    pub fn upsample_bilinear(&mut self, x: NodeId, out_h: usize, out_w: usize) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let value = kernels::upsample_bilinear(&xv, out_h, out_w).into_dyn();
        self.push(value, Op::UpBilinear { x, out_h, out_w })
    }

    pub fn upsample_bilinear_t(&mut self, x: NodeId, in_h: usize, in_w: usize) -> NodeId {
        let xv = self.value(x).view().into_dimensionality::<Ix2>().unwrap();
        let value = kernels::upsample_bilinear_adjoint(&xv, in_h, in_w).into_dyn();
        self.push(value, Op::UpBilinearT { x, in_h, in_w })
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        let value = self
            .value(x)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape length mismatch");
        self.push(
            value,
            Op::Reshape {
                x,
                shape: shape.to_vec(),
            },
        )
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> NodeId {
        let (_, h, w) = self
            .value(x)
            .view()
            .into_dimensionality::<Ix3>()
            .unwrap()
            .dim();
        let s = self.sum_spatial(x);
        self.scale(s, 1.0 / (h * w) as f64)
    }

    /// Contribution with singleton reduction: when the parent is a scalar fed
    /// into a broadcasted elementwise op, its adjoint is the sum of the
    /// elementwise adjoint.
    fn reduce_to(&mut self, contribution: NodeId, parent: NodeId) -> NodeId {
        if is_scalar(self.value(parent)) && !is_scalar(self.value(contribution)) {
            self.sum_all(contribution)
        } else {
            contribution
        }
    }

    fn mask_leaf(&mut self, src: NodeId, f: impl Fn(f64) -> f64) -> NodeId {
        let mask = self.value(src).mapv(f);
        self.leaf(mask)
    }
}

/// Backward rule: contributions of `out`'s cotangent to each parent.
pub(crate) fn vjp(g: &mut Graph, out: NodeId, op: &Op, cot: NodeId) -> Vec<(NodeId, NodeId)> {
    match *op {
        Op::Leaf => vec![],
        Op::Add(a, b) => {
            let ca = g.reduce_to(cot, a);
            let cb = g.reduce_to(cot, b);
            vec![(a, ca), (b, cb)]
        }
        Op::Sub(a, b) => {
            let ca = g.reduce_to(cot, a);
            let nb = g.neg(cot);
            let cb = g.reduce_to(nb, b);
            vec![(a, ca), (b, cb)]
        }
        Op::Mul(a, b) => {
            let ta = g.mul(cot, b);
            let ca = g.reduce_to(ta, a);
            let tb = g.mul(cot, a);
            let cb = g.reduce_to(tb, b);
            vec![(a, ca), (b, cb)]
        }
        Op::Div(a, b) => {
            let ta = g.div(cot, b);
            let ca = g.reduce_to(ta, a);
            let num = g.mul(cot, out);
            let frac = g.div(num, b);
            let reduced = g.reduce_to(frac, b);
            let cb = g.neg(reduced);
            vec![(a, ca), (b, cb)]
        }
        Op::Neg(a) => {
            let c = g.neg(cot);
            vec![(a, c)]
        }
        Op::Scale(a, k) => {
            let c = g.scale(cot, k);
            vec![(a, c)]
        }
        Op::AddConst(a, _) => vec![(a, cot)],
        Op::Sqrt(a) => {
            let half = g.scale(cot, 0.5);
            let c = g.div(half, out);
            vec![(a, c)]
        }
        Op::Exp(a) => {
            let c = g.mul(cot, out);
            vec![(a, c)]
        }
        Op::Ln(a) => {
            let c = g.div(cot, a);
            vec![(a, c)]
        }
        Op::Abs(a) => {
            let sign = g.mask_leaf(a, |v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            });
            let c = g.mul(cot, sign);
            vec![(a, c)]
        }
        Op::Relu(a) => {
            let gate = g.mask_leaf(a, |v| if v > 0.0 { 1.0 } else { 0.0 });
            let c = g.mul(cot, gate);
            vec![(a, c)]
        }
        Op::SmoothAct { x, tau, swap } => {
            // gate h(z) = z / sqrt(z^2 + tau) + 1[branch], itself differentiable
            let z2 = g.mul(x, x);
            let shifted = g.add_const(z2, tau);
            let root = g.sqrt(shifted);
            let frac = g.div(x, root);
            let branch = g.mask_leaf(x, |v| {
                let on_linear = if swap { v >= 0.0 } else { v < 0.0 };
                if on_linear {
                    1.0
                } else {
                    0.0
                }
            });
            let gate = g.add(frac, branch);
            let c = g.mul(cot, gate);
            vec![(x, c)]
        }
        Op::Clip01St(a) => vec![(a, cot)],
        Op::Conv3x3(x, w) => {
            let wt = g.flip_transpose(w);
            let cx = g.conv3x3(cot, wt);
            let cw = g.conv3x3_wgrad(x, cot);
            vec![(x, cx), (w, cw)]
        }
        Op::ConvWGrad(x, gr) => {
            let qt = g.flip_transpose(cot);
            let cx = g.conv3x3(gr, qt);
            let cg = g.conv3x3(x, cot);
            vec![(x, cx), (gr, cg)]
        }
        Op::FlipTranspose(w) => {
            let c = g.flip_transpose(cot);
            vec![(w, c)]
        }
        Op::AvgPool2(x) => {
            let c = g.upsample2(cot);
            vec![(x, c)]
        }
        Op::Upsample2(x) => {
            let c = g.avg_pool2(cot);
            vec![(x, c)]
        }
        Op::SumSpatial(x) => {
            let (_, h, w) = g
                .value(x)
                .view()
                .into_dimensionality::<Ix3>()
                .unwrap()
                .dim();
            let c = g.broadcast_spatial(cot, h, w);
            vec![(x, c)]
        }
        Op::BroadcastSpatial { x, .. } => {
            let c = g.sum_spatial(cot);
            vec![(x, c)]
        }
        Op::SumChannels(x) => {
            let (c_n, _, _) = g
                .value(x)
                .view()
                .into_dimensionality::<Ix3>()
                .unwrap()
                .dim();
            let c = g.broadcast_channels(cot, c_n);
            vec![(x, c)]
        }
        Op::BroadcastChannels { x, .. } => {
            let c = g.sum_channels(cot);
            vec![(x, c)]
        }
        Op::SumAll(x) => {
            let shape = g.value(x).shape().to_vec();
            let c = g.broadcast_all(cot, &shape);
            vec![(x, c)]
        }
        Op::BroadcastAll { x, .. } => {
            let c = g.sum_all(cot);
            vec![(x, c)]
        }
        Op::MaxChannels(x) => {
            let xv = g.value(x).view().into_dimensionality::<Ix3>().unwrap();
            let (c_n, h, w) = xv.dim();
            let mut mask = ndarray::Array3::<f64>::zeros((c_n, h, w));
            for r in 0..h {
                for s in 0..w {
                    let mut best = 0usize;
                    for ch in 1..c_n {
                        if xv[[ch, r, s]] > xv[[best, r, s]] {
                            best = ch;
                        }
                    }
                    mask[[best, r, s]] = 1.0;
                }
            }
            let mask = g.leaf(mask.into_dyn());
            let spread = g.broadcast_channels(cot, c_n);
            let c = g.mul(spread, mask);
            vec![(x, c)]
        }
        Op::MaxAll(x) | Op::MinAll(x) => {
            let target = g.scalar_value(out);
            let values = g.value(x).clone();
            let mut mask = ArrayD::<f64>::zeros(values.raw_dim());
            if let Some(pos) = values.iter().position(|&v| v == target) {
                mask.as_slice_mut().unwrap()[pos] = 1.0;
            }
            let mask = g.leaf(mask);
            let shape = values.shape().to_vec();
            let spread = g.broadcast_all(cot, &shape);
            let c = g.mul(spread, mask);
            vec![(x, c)]
        }
        Op::Index(x, k) => {
            let n = g.value(x).len();
            let mut mask = ArrayD::<f64>::zeros(IxDyn(&[n]));
            mask.as_slice_mut().unwrap()[k] = 1.0;
            let mask = g.leaf(mask);
            let spread = g.broadcast_all(cot, &[n]);
            let c = g.mul(spread, mask);
            vec![(x, c)]
        }
        Op::MatVec(w, x) => {
            let cw = g.outer(cot, x);
            let cx = g.mat_vec_t(w, cot);
            vec![(w, cw), (x, cx)]
        }
        Op::MatVecT(w, gv) => {
            let cw = g.outer(gv, cot);
            let cg = g.mat_vec(w, cot);
            vec![(w, cw), (gv, cg)]
        }
        Op::Outer(a, b) => {
            let ca = g.mat_vec(cot, b);
            let cb = g.mat_vec_t(cot, a);
            vec![(a, ca), (b, cb)]
        }
        Op::UpBilinear { x, .. } => {
            let (h, w) = g
                .value(x)
                .view()
                .into_dimensionality::<Ix2>()
                .unwrap()
                .dim();
            let c = g.upsample_bilinear_t(cot, h, w);
            vec![(x, c)]
        }
        Op::UpBilinearT { x, .. } => {
            let (h, w) = g
                .value(x)
                .view()
                .into_dimensionality::<Ix2>()
                .unwrap()
                .dim();
            let c = g.upsample_bilinear(cot, h, w);
            vec![(x, c)]
        }
        Op::Reshape { x, .. } => {
            let shape = g.value(x).shape().to_vec();
            let c = g.reshape(cot, &shape);
            vec![(x, c)]
        }
    }
}
