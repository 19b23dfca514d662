//! Reverse-mode differentiation tape.
//!
//! Values are computed eagerly as nodes are appended. `grad` walks the tape
//! backward and emits the chain-rule contributions *as new tape nodes*, so a
//! gradient is itself a differentiable expression: calling `grad` on a scalar
//! built from gradient nodes yields second-order derivatives. The attack's
//! interpretation terms rely on exactly that.
//!
//! Non-smooth selections (ReLU gates, argmax picks, absolute-value signs) are
//! captured as constants of the backward pass, which is the usual
//! almost-everywhere convention. Clamps are straight-through: their backward
//! is the identity.

pub mod kernels;

use std::collections::HashMap;

use ndarray::{ArrayD, IxDyn};

mod ops;
pub use ops::Op;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

pub(crate) struct Node {
    pub value: ArrayD<f64>,
    pub op: Op,
}

/// Append-only computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &ArrayD<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.len(), 1, "node is not a scalar");
        *v.iter().next().unwrap()
    }

    pub(crate) fn push(&mut self, value: ArrayD<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf node: an input, parameter, or constant. Gradients stop here.
    pub fn leaf(&mut self, value: ArrayD<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.leaf(ArrayD::from_elem(IxDyn(&[1]), v))
    }

    pub fn zeros_like(&mut self, id: NodeId) -> NodeId {
        let shape = self.value(id).raw_dim();
        self.leaf(ArrayD::zeros(shape))
    }

    /// Gradients of a scalar node with respect to `wrt`, emitted as new tape
    /// nodes (zero leaves where no path exists).
    pub fn grad(&mut self, y: NodeId, wrt: &[NodeId]) -> Vec<NodeId> {
        assert_eq!(self.value(y).len(), 1, "grad target must be scalar");
        let seed = {
            let shape = self.value(y).raw_dim();
            self.leaf(ArrayD::ones(shape))
        };
        let mut cotangent: HashMap<usize, NodeId> = HashMap::new();
        cotangent.insert(y.0, seed);

        for id in (0..=y.0).rev() {
            let Some(&cot) = cotangent.get(&id) else {
                continue;
            };
            let op = self.nodes[id].op.clone();
            for (parent, contribution) in ops::vjp(self, NodeId(id), &op, cot) {
                match cotangent.get(&parent.0) {
                    Some(&existing) => {
                        let merged = self.add(existing, contribution);
                        cotangent.insert(parent.0, merged);
                    }
                    None => {
                        cotangent.insert(parent.0, contribution);
                    }
                }
            }
        }

        wrt.iter()
            .map(|w| match cotangent.get(&w.0) {
                Some(&c) => c,
                None => self.zeros_like(*w),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use ndarray::{Array1, Array2, Array3, Array4};

    fn leaf3(g: &mut Graph, a: Array3<f64>) -> NodeId {
        g.leaf(a.into_dyn())
    }

    /// Central finite difference of a scalar-producing closure at leaf values.
    fn finite_diff(mut f: impl FnMut(&ArrayD<f64>) -> f64, at: &ArrayD<f64>, h: f64) -> ArrayD<f64> {
        let mut out = ArrayD::zeros(at.raw_dim());
        for idx in 0..at.len() {
            let mut plus = at.clone();
            let mut minus = at.clone();
            plus.as_slice_mut().unwrap()[idx] += h;
            minus.as_slice_mut().unwrap()[idx] -= h;
            out.as_slice_mut().unwrap()[idx] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    #[test]
    fn first_order_matches_finite_differences_on_composite() {
        let mut rng = RandomSource::new(10);
        let x0 = Array3::from_shape_fn((2, 4, 4), |_| rng.uniform(-0.8, 0.8)).into_dyn();
        let w0 = Array4::from_shape_fn((3, 2, 3, 3), |_| rng.uniform(-0.5, 0.5)).into_dyn();
        let lw0 = Array2::from_shape_fn((2, 3), |_| rng.uniform(-0.5, 0.5)).into_dyn();

        let eval = |x: &ArrayD<f64>| -> f64 {
            let mut g = Graph::new();
            let xn = g.leaf(x.clone());
            let wn = g.leaf(w0.clone());
            let ln = g.leaf(lw0.clone());
            let c = g.conv3x3(xn, wn);
            let r = g.relu(c);
            let p = g.avg_pool2(r);
            let s = g.global_avg_pool(p);
            let logits = g.mat_vec(ln, s);
            let picked = g.index(logits, 1);
            let sq = g.mul(picked, picked);
            g.scalar_value(sq)
        };

        let mut g = Graph::new();
        let xn = g.leaf(x0.clone());
        let wn = g.leaf(w0.clone());
        let ln = g.leaf(lw0.clone());
        let c = g.conv3x3(xn, wn);
        let r = g.relu(c);
        let p = g.avg_pool2(r);
        let s = g.global_avg_pool(p);
        let logits = g.mat_vec(ln, s);
        let picked = g.index(logits, 1);
        let sq = g.mul(picked, picked);
        let grads = g.grad(sq, &[xn]);
        let analytic = g.value(grads[0]).clone();

        let numeric = finite_diff(eval, &x0, 1e-5);
        let max_dev = (&analytic - &numeric)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_dev < 1e-7, "max deviation {max_dev}");
    }

    #[test]
    fn second_order_through_emitted_gradient() {
        // f(x) = sum(x^3); g = df/dx = 3x^2; L = sum(g * c) => dL/dx = 6xc.
        let mut rng = RandomSource::new(11);
        let x0 = Array1::from_shape_fn(6, |_| rng.uniform(-1.0, 1.0)).into_dyn();
        let c0 = Array1::from_shape_fn(6, |_| rng.uniform(-1.0, 1.0)).into_dyn();

        let mut g = Graph::new();
        let x = g.leaf(x0.clone());
        let c = g.leaf(c0.clone());
        let x2 = g.mul(x, x);
        let x3 = g.mul(x2, x);
        let f = g.sum_all(x3);
        let dx = g.grad(f, &[x])[0];
        let weighted = g.mul(dx, c);
        let l = g.sum_all(weighted);
        let ddx = g.grad(l, &[x])[0];

        let expect = 6.0 * &x0 * &c0;
        let got = g.value(ddx);
        for (a, b) in got.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn second_order_flows_through_smooth_activation() {
        // L(x) = || d/dx sum(smooth_act(conv(x))) ||^2 has a nonzero input
        // gradient, unlike the exact-ReLU version whose gates are constant.
        let mut rng = RandomSource::new(12);
        let x0 = Array3::from_shape_fn((1, 4, 4), |_| rng.uniform(-0.5, 0.5)).into_dyn();
        let w0 = Array4::from_shape_fn((1, 1, 3, 3), |_| rng.uniform(-0.5, 0.5)).into_dyn();

        let build = |g: &mut Graph, x: &ArrayD<f64>| -> (NodeId, NodeId) {
            let xn = g.leaf(x.clone());
            let wn = g.leaf(w0.clone());
            let c = g.conv3x3(xn, wn);
            let a = g.smooth_act(c, 1e-4, false);
            let s = g.sum_all(a);
            let gx = g.grad(s, &[xn])[0];
            let sq = g.mul(gx, gx);
            (g.sum_all(sq), xn)
        };

        let mut g = Graph::new();
        let (l, xn) = build(&mut g, &x0);
        let analytic = g.value(g.grad(l, &[xn])[0]).clone();

        let numeric = finite_diff(
            |x| {
                let mut g = Graph::new();
                let (l, _) = build(&mut g, x);
                g.scalar_value(l)
            },
            &x0,
            1e-5,
        );
        let max_dev = (&analytic - &numeric)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_dev < 1e-6, "max deviation {max_dev}");
        assert!(
            analytic.iter().any(|v| v.abs() > 1e-8),
            "second-order signal should be nonzero"
        );
    }

    #[test]
    fn grad_of_unrelated_leaf_is_zero() {
        let mut g = Graph::new();
        let a = g.scalar(2.0);
        let b = g.scalar(3.0);
        let y = g.mul(a, a);
        let grads = g.grad(y, &[a, b]);
        assert_eq!(g.scalar_value(grads[0]), 4.0);
        assert_eq!(g.scalar_value(grads[1]), 0.0);
    }

    #[test]
    fn clip_is_straight_through() {
        let mut g = Graph::new();
        let x = g.leaf(ndarray::arr1(&[-0.5, 0.5, 1.5]).into_dyn());
        let c = g.clip01_st(x);
        assert_eq!(
            g.value(c).as_slice().unwrap(),
            &[0.0, 0.5, 1.0],
            "forward clamps"
        );
        let s = g.sum_all(c);
        let dx = g.grad(s, &[x])[0];
        assert_eq!(g.value(dx).as_slice().unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn broadcast_scalar_arithmetic() {
        let mut g = Graph::new();
        let x = g.leaf(ndarray::arr1(&[1.0, 2.0, 3.0]).into_dyn());
        let s = g.scalar(2.0);
        let y = g.mul(x, s);
        let t = g.sum_all(y);
        assert_eq!(g.scalar_value(t), 12.0);
        let grads = g.grad(t, &[x, s]);
        assert_eq!(g.value(grads[0]).as_slice().unwrap(), &[2.0, 2.0, 2.0]);
        assert_eq!(g.scalar_value(grads[1]), 6.0);
    }

    #[test]
    fn max_channels_routes_gradient_to_argmax() {
        let mut g = Graph::new();
        let x = leaf3(
            &mut g,
            ndarray::arr3(&[[[1.0, 5.0]], [[3.0, 2.0]]]),
        );
        let m = g.max_channels(x);
        assert_eq!(g.value(m).as_slice().unwrap(), &[3.0, 5.0]);
        let s = g.sum_all(m);
        let dx = g.grad(s, &[x])[0];
        assert_eq!(
            g.value(dx).as_slice().unwrap(),
            &[0.0, 1.0, 1.0, 0.0],
            "gradient lands on the winning channel"
        );
    }
}
