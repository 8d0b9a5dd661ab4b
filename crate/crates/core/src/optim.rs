//! First-order update rules: SGD, Adam, Adagrad and RMSprop.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Adagrad,
    Rmsprop,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Rmsprop => "rmsprop",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "adagrad" => Ok(OptimizerKind::Adagrad),
            "rmsprop" => Ok(OptimizerKind::Rmsprop),
            other => Err(Error::Config(format!(
                "unknown optimizer {other:?} (sgd|adam|adagrad|rmsprop)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Hyper {
    /// Canonical defaults: SGD η=0.01; Adam η=0.001, β1=0.9, β2=0.999,
    /// ε=1e-8; Adagrad η=0.01; RMSprop η=0.001, ρ=0.9.
    pub fn defaults(kind: OptimizerKind) -> Self {
        let learning_rate = match kind {
            OptimizerKind::Sgd | OptimizerKind::Adagrad => 0.01,
            OptimizerKind::Adam | OptimizerKind::Rmsprop => 0.001,
        };
        Hyper {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Slot {
    first: Vec<f64>,
    second: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    hyper: Hyper,
    step: u64,
    slots: Vec<Slot>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self::with_hyper(kind, Hyper::defaults(kind))
    }

    pub fn with_hyper(kind: OptimizerKind, hyper: Hyper) -> Self {
        Optimizer {
            kind,
            hyper,
            step: 0,
            slots: Vec::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to a list of parameter slices. Accumulators are
    /// created on the first call and tied to the slice positions and lengths
    /// seen then.
    pub fn step_slices(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape {
                left: format!("{} parameter tensors", params.len()),
                right: format!("{} gradient tensors", grads.len()),
            });
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::Shape {
                    left: format!("parameter tensor {k} with {} values", p.len()),
                    right: format!("gradient with {} values", g.len()),
                });
            }
        }
        if self.slots.is_empty() {
            self.slots = params
                .iter()
                .map(|p| match self.kind {
                    OptimizerKind::Sgd => Slot::default(),
                    OptimizerKind::Adam => Slot {
                        first: vec![0.0; p.len()],
                        second: vec![0.0; p.len()],
                    },
                    OptimizerKind::Adagrad | OptimizerKind::Rmsprop => Slot {
                        first: Vec::new(),
                        second: vec![0.0; p.len()],
                    },
                })
                .collect();
        } else if self.slots.len() != params.len()
            || self
                .slots
                .iter()
                .zip(params.iter())
                .any(|(s, p)| self.kind != OptimizerKind::Sgd && s.second.len() != p.len())
        {
            return Err(Error::Shape {
                left: "optimizer state".into(),
                right: "parameters of a different shape".into(),
            });
        }

        self.step += 1;
        let h = self.hyper;
        let t = self.step as i32;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.iter_mut().zip(g.iter()) {
                        *pv -= h.learning_rate * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let c1 = 1.0 - h.beta1.powi(t);
                let c2 = 1.0 - h.beta2.powi(t);
                for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.slots) {
                    for (((pv, &gv), m), v) in p.iter_mut().zip(g.iter()).zip(&mut s.first).zip(&mut s.second) {
                        *m = h.beta1 * *m + (1.0 - h.beta1) * gv;
                        *v = h.beta2 * *v + (1.0 - h.beta2) * gv * gv;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *pv -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
                    }
                }
            }
            OptimizerKind::Adagrad => {
                for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.slots) {
                    for ((pv, &gv), acc) in p.iter_mut().zip(g.iter()).zip(&mut s.second) {
                        *acc += gv * gv;
                        *pv -= h.learning_rate * gv / (*acc + h.epsilon).sqrt();
                    }
                }
            }
            OptimizerKind::Rmsprop => {
                for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.slots) {
                    for ((pv, &gv), avg) in p.iter_mut().zip(g.iter()).zip(&mut s.second) {
                        *avg = h.rho * *avg + (1.0 - h.rho) * gv * gv;
                        *pv -= h.learning_rate * gv / (*avg + h.epsilon).sqrt();
                    }
                }
            }
        }
        Ok(())
    }

    /// Updates a model in place. The embedding pad row is excluded from the
    /// update and keeps its value.
    pub fn step(&mut self, model: &mut ModelParams, grads: &Gradients) -> Result<()> {
        let pad = model.config.embed_units;
        let mut params = model.weights.slices_mut();
        let mut grad_slices = grads.slices();
        if params[0].len() != grad_slices[0].len() {
            return Err(Error::Shape {
                left: model.weights.embedding.table.shape().to_string(),
                right: grads.embedding.table.shape().to_string(),
            });
        }
        params[0] = &mut std::mem::take(&mut params[0])[pad..];
        grad_slices[0] = &grad_slices[0][pad..];
        self.step_slices(&mut params, &grad_slices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, ModelConfig, ParamTensors};
    use crate::tensor::Rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn scalar_step(opt: &mut Optimizer, theta: f64, g: f64) -> f64 {
        let mut p = [theta];
        opt.step_slices(&mut [&mut p[..]], &[&[g][..]]).unwrap();
        p[0]
    }

    #[test]
    fn adam_first_step() {
        let mut opt = Optimizer::new(OptimizerKind::Adam);
        assert_abs_diff_eq!(scalar_step(&mut opt, 0.0, 0.5), -0.001, epsilon = 1e-10);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn sgd_step() {
        let mut opt = Optimizer::with_hyper(
            OptimizerKind::Sgd,
            Hyper {
                learning_rate: 0.1,
                ..Hyper::defaults(OptimizerKind::Sgd)
            },
        );
        assert_abs_diff_eq!(scalar_step(&mut opt, 1.0, 2.0), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn adagrad_first_step() {
        let mut opt = Optimizer::new(OptimizerKind::Adagrad);
        let theta = scalar_step(&mut opt, 0.0, 3.0);
        assert_abs_diff_eq!(theta, -0.01 * 3.0 / (9.0f64 + 1e-8).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(theta, -0.01, epsilon = 1e-9);
    }

    #[test]
    fn rmsprop_first_step() {
        let mut opt = Optimizer::new(OptimizerKind::Rmsprop);
        // E[g²] = 0.1 · 4
        let theta = scalar_step(&mut opt, 0.0, 2.0);
        assert_abs_diff_eq!(theta, -0.001 * 2.0 / (0.4f64 + 1e-8).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut opt = Optimizer::new(OptimizerKind::Adam);
        let mut p = [0.0, 1.0];
        assert!(opt.step_slices(&mut [&mut p[..]], &[&[1.0][..]]).is_err());
        opt.step_slices(&mut [&mut p[..]], &[&[1.0, 2.0][..]]).unwrap();
        let mut q = [0.0; 3];
        assert!(opt.step_slices(&mut [&mut q[..]], &[&[1.0; 3][..]]).is_err());
    }

    #[test]
    fn pad_row_is_never_updated() {
        let cfg = ModelConfig {
            vocab_size: 6,
            embed_units: 3,
            lstm_units: 2,
            max_len: 4,
            dropout: 0.0,
            activation: Activation::Sigmoid,
        };
        let mut model = ModelParams::init(cfg, &mut Rng::new(1)).unwrap();
        let mut grads = ParamTensors::zeros(&cfg);
        grads.fill(0.5);
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::Adagrad, OptimizerKind::Rmsprop] {
            let mut opt = Optimizer::new(kind);
            for _ in 0..3 {
                opt.step(&mut model, &grads).unwrap();
            }
            assert!(model.weights.embedding.table.row(0).iter().all(|&v| v == 0.0));
            assert_ne!(model.weights.embedding.table.row(1), ModelParams::init(cfg, &mut Rng::new(1)).unwrap().weights.embedding.table.row(1));
        }
    }

    fn kinds() -> impl Strategy<Value = OptimizerKind> {
        prop_oneof![
            Just(OptimizerKind::Sgd),
            Just(OptimizerKind::Adam),
            Just(OptimizerKind::Adagrad),
            Just(OptimizerKind::Rmsprop),
        ]
    }

    proptest! {
        #[test]
        fn zero_gradient_leaves_parameters(kind in kinds(), theta in prop::collection::vec(-5.0f64..5.0, 1..8), steps in 1usize..4) {
            let mut opt = Optimizer::new(kind);
            let mut p = theta.clone();
            let g = vec![0.0; p.len()];
            for _ in 0..steps {
                opt.step_slices(&mut [&mut p[..]], &[&g[..]]).unwrap();
            }
            prop_assert_eq!(p, theta);
        }

        #[test]
        fn adam_first_step_is_bounded_by_learning_rate(g in prop::collection::vec(-100.0f64..100.0, 1..8)) {
            prop_assume!(g.iter().all(|v| *v != 0.0));
            let mut opt = Optimizer::new(OptimizerKind::Adam);
            let mut p = vec![0.0; g.len()];
            opt.step_slices(&mut [&mut p[..]], &[&g[..]]).unwrap();
            for v in p {
                prop_assert!(v.abs() <= 0.001 * (1.0 + 1e-9));
            }
        }

        #[test]
        fn updates_are_deterministic(kind in kinds(), theta in prop::collection::vec(-5.0f64..5.0, 1..8), seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let g: Vec<f64> = theta.iter().map(|_| rng.uniform() - 0.5).collect();
            let run = || {
                let mut opt = Optimizer::new(kind);
                let mut p = theta.clone();
                for _ in 0..3 {
                    opt.step_slices(&mut [&mut p[..]], &[&g[..]]).unwrap();
                }
                p
            };
            let (a, b) = (run(), run());
            prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
