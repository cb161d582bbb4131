//! Executable networks built from a [`ModelSpec`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{resolve, NodeShape};
use super::spec::{LayerKind, ModelSpec};
use crate::layers::{self, BatchNormCache, BatchNormParams, ConvParams, FcParams, Mode, Padding};
use crate::{Error, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Span {
    Local,
    Fat,
    Tall,
}

#[derive(Debug, Clone)]
enum Op<T: Scalar> {
    Conv(ConvParams<T>, Span),
    BatchNorm(BatchNormParams<T>),
    Relu,
    MaxPool { window: usize, stride: usize },
    Flatten,
    Fc(FcParams<T>),
    Softmax,
    OuterFuse,
    Concat,
}

#[derive(Debug, Clone)]
struct Node<T: Scalar> {
    name: String,
    inputs: Vec<usize>,
    shape: NodeShape,
    op: Op<T>,
}

#[derive(Debug, Clone)]
enum Cache<T: Scalar> {
    None,
    BatchNorm(BatchNormCache<T>),
    Pool(Vec<usize>),
}

/// Activations and caches recorded by a training forward pass, plus one
/// gradient slot per learnable parameter.
#[derive(Debug, Clone)]
pub struct GradTape<T: Scalar = f32> {
    values: Vec<Tensor<T>>,
    caches: Vec<Cache<T>>,
    grads: Vec<Tensor<T>>,
    recorded: bool,
}

impl<T: Scalar> Default for GradTape<T> {
    fn default() -> Self {
        GradTape {
            values: Vec::new(),
            caches: Vec::new(),
            grads: Vec::new(),
            recorded: false,
        }
    }
}

impl<T: Scalar> GradTape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parameter gradients, aligned with [`Network::parameters`].
    pub fn gradients(&self) -> &[Tensor<T>] {
        &self.grads
    }

    pub fn is_recorded(&self) -> bool {
        self.recorded
    }
}

#[derive(Debug, Clone)]
pub struct Network<T: Scalar = f32> {
    spec: ModelSpec,
    nodes: Vec<Node<T>>,
}

impl Network<f32> {
    /// Builds and initializes a network. The same spec and seed always give
    /// the same parameters.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        Self::build_as(spec, seed)
    }
}

impl<T: Scalar> Network<T> {
    pub fn build_as(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let resolved = resolve(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut channels = vec![spec.input.channels];
        let mut nodes = Vec::with_capacity(resolved.len());
        for (layer, r) in spec.layers.iter().zip(resolved) {
            let in_ch = channels[r.inputs[0]];
            let op = match layer.kind {
                LayerKind::Conv {
                    kernel,
                    filters,
                    stride,
                    padding,
                } => Op::Conv(
                    ConvParams::init(&mut rng, kernel, in_ch, filters, stride, padding)?,
                    Span::Local,
                ),
                LayerKind::ConvFat { kernel, filters } => Op::Conv(
                    ConvParams::init(&mut rng, kernel, in_ch, filters, 1, Padding::Valid)?,
                    Span::Fat,
                ),
                LayerKind::ConvTall { kernel, filters } => Op::Conv(
                    ConvParams::init(&mut rng, kernel, in_ch, filters, 1, Padding::Valid)?,
                    Span::Tall,
                ),
                LayerKind::BatchNorm => Op::BatchNorm(BatchNormParams::new(in_ch)?),
                LayerKind::Relu => Op::Relu,
                LayerKind::MaxPool { window, stride } => Op::MaxPool { window, stride },
                LayerKind::Flatten => Op::Flatten,
                LayerKind::FullyConnected {
                    in_features,
                    out_features,
                } => Op::Fc(FcParams::init(&mut rng, in_features, out_features)?),
                LayerKind::Softmax => Op::Softmax,
                LayerKind::OuterFuse => Op::OuterFuse,
                LayerKind::Concat => Op::Concat,
            };
            channels.push(r.shape.shape.channels);
            nodes.push(Node {
                name: layer.name.clone(),
                inputs: r.inputs,
                shape: r.shape,
                op,
            });
        }
        Ok(Network {
            spec: spec.clone(),
            nodes,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// The same network with every tensor converted to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node {
                name: n.name.clone(),
                inputs: n.inputs.clone(),
                shape: n.shape,
                op: match &n.op {
                    Op::Conv(p, span) => Op::Conv(
                        ConvParams {
                            weights: p.weights.cast(),
                            bias: p.bias.cast(),
                            kernel_height: p.kernel_height,
                            kernel_width: p.kernel_width,
                            in_channels: p.in_channels,
                            out_channels: p.out_channels,
                            stride: p.stride,
                            padding: p.padding,
                        },
                        *span,
                    ),
                    Op::BatchNorm(p) => Op::BatchNorm(BatchNormParams {
                        channels: p.channels,
                        alpha: p.alpha.cast(),
                        beta: p.beta.cast(),
                        running_mean: p.running_mean.cast(),
                        running_var: p.running_var.cast(),
                        momentum: U::of(p.momentum.as_f64()),
                        epsilon: U::of(p.epsilon.as_f64()),
                    }),
                    Op::Fc(p) => Op::Fc(FcParams {
                        in_features: p.in_features,
                        out_features: p.out_features,
                        weights: p.weights.cast(),
                        bias: p.bias.cast(),
                    }),
                    Op::Relu => Op::Relu,
                    Op::MaxPool { window, stride } => Op::MaxPool {
                        window: *window,
                        stride: *stride,
                    },
                    Op::Flatten => Op::Flatten,
                    Op::Softmax => Op::Softmax,
                    Op::OuterFuse => Op::OuterFuse,
                    Op::Concat => Op::Concat,
                },
            })
            .collect();
        Network {
            spec: self.spec.clone(),
            nodes,
        }
    }

    /// Learnable tensors in declaration order (conv/FC weights then bias,
    /// batch-norm scale then shift).
    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for n in &self.nodes {
            match &n.op {
                Op::Conv(p, _) => out.extend([&p.weights, &p.bias]),
                Op::BatchNorm(p) => out.extend([&p.alpha, &p.beta]),
                Op::Fc(p) => out.extend([&p.weights, &p.bias]),
                _ => {}
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for n in &mut self.nodes {
            match &mut n.op {
                Op::Conv(p, _) => out.extend([&mut p.weights, &mut p.bias]),
                Op::BatchNorm(p) => out.extend([&mut p.alpha, &mut p.beta]),
                Op::Fc(p) => out.extend([&mut p.weights, &mut p.bias]),
                _ => {}
            }
        }
        out
    }

    pub fn trainable_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Every persisted tensor in declaration order: the learnable ones plus
    /// batch-norm running mean and variance.
    pub fn state(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for n in &self.nodes {
            match &n.op {
                Op::Conv(p, _) => out.extend([&p.weights, &p.bias]),
                Op::BatchNorm(p) => {
                    out.extend([&p.alpha, &p.beta, &p.running_mean, &p.running_var])
                }
                Op::Fc(p) => out.extend([&p.weights, &p.bias]),
                _ => {}
            }
        }
        out
    }

    /// Replaces the persisted state. Nothing is modified unless every shape
    /// matches.
    pub fn load_state(&mut self, tensors: Vec<Tensor<T>>) -> Result<()> {
        let current = self.state();
        if current.len() != tensors.len() {
            return Err(Error::Corrupt(format!(
                "expected {} tensors, got {}",
                current.len(),
                tensors.len()
            )));
        }
        for (i, (a, b)) in current.iter().zip(&tensors).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::Corrupt(format!(
                    "tensor {i}: expected shape {:?}, got {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        let mut it = tensors.into_iter();
        for n in &mut self.nodes {
            let slots: Vec<&mut Tensor<T>> = match &mut n.op {
                Op::Conv(p, _) => vec![&mut p.weights, &mut p.bias],
                Op::BatchNorm(p) => vec![
                    &mut p.alpha,
                    &mut p.beta,
                    &mut p.running_mean,
                    &mut p.running_var,
                ],
                Op::Fc(p) => vec![&mut p.weights, &mut p.bias],
                _ => vec![],
            };
            for s in slots {
                *s = it.next().expect("count checked above");
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.nodes.last().map(|n| n.shape.shape.channels).unwrap_or(0)
    }

    fn ends_in_softmax(&self) -> bool {
        matches!(self.nodes.last().map(|n| &n.op), Some(Op::Softmax))
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape4()?;
        let i = self.spec.input;
        if (s.channels, s.height, s.width) != (i.channels, i.height, i.width) {
            return Err(Error::ShapeMismatch {
                left: x.shape().into(),
                right: vec![s.batch, i.channels, i.height, i.width],
            });
        }
        Ok(())
    }

    /// Inference: batch norm uses running statistics, the output is the final
    /// layer's value (class probabilities for the presets).
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len() + 1);
        values.push(x.clone());
        for node in &self.nodes {
            let (y, _) = eval_op(&node.name, &node.inputs, op_ref(&node.op), &values)?;
            values.push(y);
        }
        Ok(values.pop().expect("at least one layer"))
    }

    /// Training forward pass recorded on `tape`. A trailing softmax is
    /// skipped so the result is the logits; the loss fuses the softmax.
    pub fn forward_train(&mut self, x: &Tensor<T>, tape: &mut GradTape<T>) -> Result<Tensor<T>> {
        self.forward_recorded(x, Mode::Train, tape)
    }

    pub fn forward_recorded(
        &mut self,
        x: &Tensor<T>,
        mode: Mode,
        tape: &mut GradTape<T>,
    ) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let head = self.head();
        tape.recorded = false;
        tape.values.clear();
        tape.caches.clear();
        tape.values.push(x.clone());
        tape.caches.push(Cache::None);
        for node in &mut self.nodes[..head] {
            let op = match &mut node.op {
                Op::BatchNorm(p) => OpRef::BatchNormTrain(p, mode),
                other => op_ref(other),
            };
            let (y, cache) = eval_op(&node.name, &node.inputs, op, &tape.values)?;
            tape.values.push(y);
            tape.caches.push(cache);
        }
        tape.recorded = true;
        Ok(tape.values.last().expect("input pushed").clone())
    }

    fn head(&self) -> usize {
        if self.ends_in_softmax() {
            self.nodes.len() - 1
        } else {
            self.nodes.len()
        }
    }

    /// Reverse pass from the gradient of the recorded output. Fills the
    /// tape's parameter gradients (overwriting earlier ones).
    pub fn backward(&self, tape: &mut GradTape<T>, grad_out: &Tensor<T>) -> Result<()> {
        let head = self.head();
        if !tape.recorded || tape.values.len() != head + 1 {
            return Err(Error::EmptyTape);
        }
        if grad_out.shape() != tape.values[head].shape() {
            return Err(Error::ShapeMismatch {
                left: grad_out.shape().into(),
                right: tape.values[head].shape().into(),
            });
        }
        tape.grads = self
            .parameters()
            .iter()
            .map(|p| Tensor::zeros_like(p))
            .collect();
        let mut offsets = Vec::with_capacity(head);
        let mut off = 0;
        for n in &self.nodes[..head] {
            offsets.push(off);
            off += match n.op {
                Op::Conv(..) | Op::BatchNorm(_) | Op::Fc(_) => 2,
                _ => 0,
            };
        }

        let mut slot_grads: Vec<Option<Tensor<T>>> = vec![None; head + 1];
        slot_grads[head] = Some(grad_out.clone());
        for i in (0..head).rev() {
            let Some(g) = slot_grads[i + 1].take() else {
                continue;
            };
            let node = &self.nodes[i];
            let wrap = |e: Error| match e {
                Error::Layer { reason, .. } => Error::layer(&*node.name, reason),
                other => other,
            };
            let input = &tape.values[node.inputs[0]];
            let pg = offsets[i];
            let input_grads: Vec<Tensor<T>> = match (&node.op, &tape.caches[i + 1]) {
                (Op::Conv(p, _), _) => {
                    let r = layers::conv2d_backward(input, p, &g).map_err(wrap)?;
                    tape.grads[pg] = r.weights;
                    tape.grads[pg + 1] = r.bias;
                    vec![r.input]
                }
                (Op::BatchNorm(p), Cache::BatchNorm(c)) => {
                    let r = layers::batch_norm2d_backward(p, c, &g).map_err(wrap)?;
                    tape.grads[pg] = r.alpha;
                    tape.grads[pg + 1] = r.beta;
                    vec![r.input]
                }
                (Op::Relu, _) => vec![layers::relu_backward(&tape.values[i + 1], &g)?],
                (Op::MaxPool { .. }, Cache::Pool(idx)) => {
                    vec![layers::max_pool2d_backward(input.shape(), idx, &g)?]
                }
                (Op::Flatten, _) => vec![g.reshape(input.shape())?],
                (Op::Fc(p), _) => {
                    let flat = as_rows(input)?;
                    let r = layers::fully_connected_backward(&flat, p, &g).map_err(wrap)?;
                    tape.grads[pg] = r.weights;
                    tape.grads[pg + 1] = r.bias;
                    vec![r.input.reshape(input.shape())?]
                }
                (Op::OuterFuse, _) => {
                    let omega = &tape.values[node.inputs[1]];
                    let (dp, dom) = layers::outer_product_fuse_backward(input, omega, &g)?;
                    vec![dp, dom]
                }
                (Op::Concat, _) => {
                    let widths: Vec<usize> = node
                        .inputs
                        .iter()
                        .map(|&s| tape.values[s].shape()[1])
                        .collect();
                    layers::split_channels(&g, &widths)?
                }
                (Op::Softmax, _) => {
                    return Err(Error::layer(&*node.name, "softmax is only supported as the final layer"))
                }
                _ => return Err(Error::layer(&*node.name, "tape cache does not match layer")),
            };
            for (&slot, gi) in node.inputs.iter().zip(input_grads) {
                match &mut slot_grads[slot] {
                    Some(acc) => acc.add_assign(&gi)?,
                    empty => *empty = Some(gi),
                }
            }
        }
        Ok(())
    }

    /// Layer names in declaration order.
    pub fn layer_names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.to_string()).collect()
    }
}

fn as_rows<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let b = x.shape()[0];
    let f = x.len() / b;
    x.clone().reshape(&[b, f])
}

fn eval_op<T: Scalar>(
    name: &str,
    inputs: &[usize],
    op: OpRef<'_, T>,
    values: &[Tensor<T>],
) -> Result<(Tensor<T>, Cache<T>)> {
    let wrap = |e: Error| match e {
        Error::Layer { reason, .. } => Error::layer(name, reason),
        other => other,
    };
    let x = &values[inputs[0]];
    let out = match op {
        OpRef::Conv(p, span) => {
            let y = match span {
                Span::Local => layers::conv2d(x, p),
                Span::Fat => layers::conv_fat_1d(x, p),
                Span::Tall => layers::conv_tall_1d(x, p),
            };
            (y.map_err(wrap)?, Cache::None)
        }
        OpRef::BatchNormTrain(p, mode) => {
            let (y, c) = layers::batch_norm2d(x, p, mode).map_err(wrap)?;
            (y, Cache::BatchNorm(c))
        }
        OpRef::BatchNormEval(p) => {
            let mut p = p.clone();
            let (y, _) = layers::batch_norm2d(x, &mut p, Mode::Eval).map_err(wrap)?;
            (y, Cache::None)
        }
        OpRef::Relu => (layers::relu(x), Cache::None),
        OpRef::MaxPool { window, stride } => {
            let (y, idx) = layers::max_pool2d_with_indices(x, window, stride).map_err(wrap)?;
            (y, Cache::Pool(idx))
        }
        OpRef::Flatten => (as_rows(x)?, Cache::None),
        OpRef::Fc(p) => (
            layers::fully_connected(&as_rows(x)?, p).map_err(wrap)?,
            Cache::None,
        ),
        OpRef::Softmax => (layers::softmax(&as_rows(x)?).map_err(wrap)?, Cache::None),
        OpRef::OuterFuse => (
            layers::outer_product_fuse(x, &values[inputs[1]]).map_err(wrap)?,
            Cache::None,
        ),
        OpRef::Concat => {
            let parts: Vec<&Tensor<T>> = inputs.iter().map(|&s| &values[s]).collect();
            (layers::concat_channels(&parts).map_err(wrap)?, Cache::None)
        }
    };
    Ok(out)
}

/// Borrowed view of a node's op; batch norm is mutable only when recording.
enum OpRef<'a, T: Scalar> {
    Conv(&'a ConvParams<T>, Span),
    BatchNormTrain(&'a mut BatchNormParams<T>, Mode),
    BatchNormEval(&'a BatchNormParams<T>),
    Relu,
    MaxPool { window: usize, stride: usize },
    Flatten,
    Fc(&'a FcParams<T>),
    Softmax,
    OuterFuse,
    Concat,
}

fn op_ref<T: Scalar>(op: &Op<T>) -> OpRef<'_, T> {
    match op {
        Op::Conv(p, s) => OpRef::Conv(p, *s),
        Op::BatchNorm(p) => OpRef::BatchNormEval(p),
        Op::Relu => OpRef::Relu,
        Op::MaxPool { window, stride } => OpRef::MaxPool {
            window: *window,
            stride: *stride,
        },
        Op::Flatten => OpRef::Flatten,
        Op::Fc(p) => OpRef::Fc(p),
        Op::Softmax => OpRef::Softmax,
        Op::OuterFuse => OpRef::OuterFuse,
        Op::Concat => OpRef::Concat,
    }
}
