use super::ops::{self, BnConfig, BnMode, BnSaved};
use super::scalar::{gemm, Layout};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}


enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize),
        pad: (usize, usize),
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    Mfm {
        x: Var,
        first_wins: Vec<bool>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        saved: BnSaved<T>,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    GlobalAvgPool {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    ScaleChannels {
        x: Var,
        s: Var,
    },
    Reshape {
        x: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool { .. } => "maxpool2d",
            Op::Mfm { .. } => "mfm",
            Op::Linear { .. } => "linear",
            Op::BatchNorm { .. } => "batchnorm2d",
            Op::Relu { .. } => "relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::GlobalAvgPool { .. } => "global_avg_pool",
            Op::Add { .. } => "add",
            Op::ScaleChannels { .. } => "scale_channels",
            Op::Reshape { .. } => "reshape",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, which is a topological order of the
/// graph; [`Tape::backward`] walks them once in reverse.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name().to_string()));
        }
        let requires_grad = inputs.iter().any(|&v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Var> {
        let y = ops::conv2d(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
        )?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(
            y,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            },
            &inputs,
        )
    }

    pub fn maxpool2d(&mut self, x: Var, kernel: (usize, usize), stride: (usize, usize)) -> Result<Var> {
        let (y, argmax) = ops::maxpool2d(self.value(x), kernel, stride)?;
        self.push(y, Op::MaxPool { x, argmax }, &[x])
    }

    pub fn mfm(&mut self, x: Var) -> Result<Var> {
        let (y, first_wins) = ops::mfm(self.value(x))?;
        self.push(y, Op::Mfm { x, first_wins }, &[x])
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = ops::linear(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(y, Op::Linear { x, w, b }, &inputs)
    }

    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode<'_, T>,
        cfg: BnConfig,
    ) -> Result<Var> {
        let (y, saved) =
            ops::batchnorm2d(self.value(x), self.value(gamma), self.value(beta), mode, cfg)?;
        self.push(
            y,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                saved,
            },
            &[x, gamma, beta],
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = ops::relu(self.value(x));
        self.push(y, Op::Relu { x }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let y = ops::sigmoid(self.value(x));
        self.push(y, Op::Sigmoid { x }, &[x])
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let y = ops::global_avg_pool(self.value(x))?;
        self.push(y, Op::GlobalAvgPool { x }, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::add(self.value(a), self.value(b))?;
        self.push(y, Op::Add { a, b }, &[a, b])
    }

    pub fn scale_channels(&mut self, x: Var, s: Var) -> Result<Var> {
        let y = ops::scale_channels(self.value(x), self.value(s))?;
        self.push(y, Op::ScaleChannels { x, s }, &[x, s])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        self.push(y, Op::Reshape { x }, &[x])
    }

    /// Collapse all axes after the first: `N×… → N×D`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let shape = self.value(x).shape();
        let n = shape[0];
        let d = shape[1..].iter().product();
        self.reshape(x, &[n, d])
    }

    /// Mean softmax cross-entropy; the result is a one-element tensor.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (loss, probs) = ops::softmax_cross_entropy(self.value(logits), targets)?;
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// Reverse pass from a one-element output, seeded with gradient 1.
    pub fn backward(&self, output: Var) -> Result<Grads<T>> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::dim(
                "backward",
                format!("output must hold one value, has shape {:?}", out.shape()),
            ));
        }
        self.backward_with(output, Tensor::full(out.shape(), T::one()))
    }

    /// Reverse pass seeded with an arbitrary output cotangent.
    pub fn backward_with(&self, output: Var, seed: Tensor<T>) -> Result<Grads<T>> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::dim(
                "backward",
                format!(
                    "seed shape {:?} differs from output {:?}",
                    seed.shape(),
                    self.value(output).shape()
                ),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &gy, &mut grads)?;
            grads[idx] = Some(gy);
        }
        Ok(Grads { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(
        &self,
        node: &Node<T>,
        gy: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            } => {
                let need = (self.wants(*x), self.wants(*w), b.is_some_and(|b| self.wants(b)));
                let g = ops::conv2d_backward(self.value(*x), self.value(*w), gy, *stride, *pad, need)?;
                accumulate(grads, *x, g.dx);
                accumulate(grads, *w, g.dw);
                if let Some(b) = b {
                    accumulate(grads, *b, g.db);
                }
            }
            Op::MaxPool { x, argmax } => {
                if self.wants(*x) {
                    let mut dx = Tensor::zeros(self.value(*x).shape());
                    let d = dx.data_mut();
                    for (&src, &g) in argmax.iter().zip(gy.data()) {
                        d[src] += g;
                    }
                    accumulate(grads, *x, Some(dx));
                }
            }
            Op::Mfm { x, first_wins } => {
                if self.wants(*x) {
                    let shape = self.value(*x).shape();
                    let channels = shape[1];
                    let inner: usize = shape[2..].iter().product();
                    let half_len = channels / 2 * inner;
                    let mut dx = Tensor::zeros(shape);
                    let d = dx.data_mut();
                    for i in 0..shape[0] {
                        let base = i * channels * inner;
                        for j in 0..half_len {
                            let o = i * half_len + j;
                            let dst = if first_wins[o] { base + j } else { base + half_len + j };
                            d[dst] = gy.data()[o];
                        }
                    }
                    accumulate(grads, *x, Some(dx));
                }
            }
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (n, din) = xv.dims2("linear")?;
                let dout = wv.shape()[0];
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); n * din];
                    gemm(n, din, dout, gy.data(), Layout::Normal, wv.data(), Layout::Normal, &mut dx, false);
                    accumulate(grads, *x, Some(Tensor::new(vec![n, din], dx)?));
                }
                if self.wants(*w) {
                    let mut dw = vec![T::zero(); dout * din];
                    gemm(dout, din, n, gy.data(), Layout::Transposed, xv.data(), Layout::Normal, &mut dw, false);
                    accumulate(grads, *w, Some(Tensor::new(vec![dout, din], dw)?));
                }
                if let Some(b) = b.filter(|&b| self.wants(b)) {
                    let mut db = vec![T::zero(); dout];
                    for row in gy.data().chunks_exact(dout) {
                        db.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
                    }
                    accumulate(grads, b, Some(Tensor::new(vec![dout], db)?));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                saved,
            } => {
                let (dx, dgamma, dbeta) = ops::batchnorm2d_backward(gy, self.value(*gamma), saved)?;
                if self.wants(*x) {
                    accumulate(grads, *x, Some(dx));
                }
                if self.wants(*gamma) {
                    accumulate(grads, *gamma, Some(dgamma));
                }
                if self.wants(*beta) {
                    accumulate(grads, *beta, Some(dbeta));
                }
            }
            Op::Relu { x } => {
                let xv = self.value(*x);
                let data = xv
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                accumulate(grads, *x, Some(Tensor::new(xv.shape().to_vec(), data)?));
            }
            Op::Sigmoid { x } => {
                let data = node
                    .value
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&s, &g)| g * s * (T::one() - s))
                    .collect();
                accumulate(grads, *x, Some(Tensor::new(node.value.shape().to_vec(), data)?));
            }
            Op::GlobalAvgPool { x } => {
                let shape = self.value(*x).shape();
                let hw = shape[2] * shape[3];
                let inv = T::from_f64(1.0 / hw as f64);
                let mut dx = Tensor::zeros(shape);
                for (plane, &g) in dx.data_mut().chunks_exact_mut(hw).zip(gy.data()) {
                    plane.fill(g * inv);
                }
                accumulate(grads, *x, Some(dx));
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    accumulate(grads, *a, Some(gy.clone()));
                }
                if self.wants(*b) {
                    accumulate(grads, *b, Some(gy.clone()));
                }
            }
            Op::ScaleChannels { x, s } => {
                let xv = self.value(*x);
                let sv = self.value(*s);
                let hw = xv.shape()[2] * xv.shape()[3];
                if self.wants(*x) {
                    accumulate(grads, *x, Some(ops::scale_channels(gy, sv)?));
                }
                if self.wants(*s) {
                    let ds = xv
                        .data()
                        .chunks_exact(hw)
                        .zip(gy.data().chunks_exact(hw))
                        .map(|(xp, gp)| {
                            xp.iter().zip(gp).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
                        })
                        .collect();
                    accumulate(grads, *s, Some(Tensor::new(sv.shape().to_vec(), ds)?));
                }
            }
            Op::Reshape { x } => {
                let shape = self.value(*x).shape().to_vec();
                accumulate(grads, *x, Some(gy.clone().reshape(&shape)?));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let (n, k) = probs.dims2("softmax_cross_entropy")?;
                let scale = gy.data()[0] / T::from_f64(n as f64);
                let mut d = probs.clone();
                for (row, &t) in targets.iter().enumerate() {
                    d.data_mut()[row * k + t] -= T::one();
                }
                d.data_mut().iter_mut().for_each(|v| *v *= scale);
                accumulate(grads, *logits, Some(d));
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Option<Tensor<T>>) {
    let Some(g) = g else { return };
    match &mut grads[v.0] {
        Some(existing) => existing
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .for_each(|(a, &b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

/// Gradients produced by a reverse pass, indexed by [`Var`].
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
