//! Parameter update rules.

use alloc::vec::Vec;

use crate::{Error, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
    #[default]
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::SgdMomentum => "sgd_momentum",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "sgd_momentum" | "momentum" => Ok(OptimizerKind::SgdMomentum),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(alloc::format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer<T: Scalar = f32> {
    cfg: OptimizerConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Optimizer {
            cfg,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. `params` and `grads` must line up one-to-one.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch {
                left: alloc::vec![params.len()],
                right: alloc::vec![grads.len()],
            });
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(Tensor::zeros_like).collect();
            if self.cfg.kind == OptimizerKind::Adam {
                self.second = grads.iter().map(Tensor::zeros_like).collect();
            }
        }
        self.step += 1;
        let lr = T::of(self.cfg.learning_rate);
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::SgdMomentum => {
                let mu = T::of(self.cfg.momentum);
                for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.first) {
                    for ((w, &d), vel) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                        *vel = mu * *vel + d;
                        *w -= lr * *vel;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
                let t = self.step as f64;
                let c1 = T::of(1.0 - libm::pow(b1, t));
                let c2 = T::of(1.0 - libm::pow(b2, t));
                let (b1, b2, eps) = (T::of(b1), T::of(b2), T::of(self.cfg.epsilon));
                let iter = params
                    .into_iter()
                    .zip(grads)
                    .zip(self.first.iter_mut().zip(&mut self.second));
                for ((p, g), (m, v)) in iter {
                    let lanes = p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut().zip(v.data_mut()));
                    for ((w, &d), (m, v)) in lanes {
                        *m = b1 * *m + (T::one() - b1) * d;
                        *v = b2 * *v + (T::one() - b2) * d * d;
                        let mh = *m / c1;
                        let vh = *v / c2;
                        *w -= lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
