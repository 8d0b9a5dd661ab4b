//! Embedding → LSTM → Dropout → Dense classifier with hand-derived
//! gradients.
//!
//! The recurrence, with `σ` the logistic function and rows as vectors:
//!
//! ```text
//! i_t = σ(x_t W_i + h_{t-1} U_i + b_i)
//! f_t = σ(x_t W_f + h_{t-1} U_f + b_f)
//! g_t = tanh(x_t W_c + h_{t-1} U_c + b_c)
//! o_t = σ(x_t W_o + h_{t-1} U_o + b_o)
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ g_t
//! h_t = o_t ⊙ tanh(c_t)             h_0 = c_0 = 0
//! ```
//!
//! Only the final hidden state feeds the head. Dropout (inverted) is applied
//! to `h_T` during training, then `a = h·w + b` and the score is `σ(a)` or
//! `tanh(a)`. Row 0 of the embedding table is the padding vector and stays
//! zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedMessage, PAD_INDEX};
use crate::error::{Error, Result};
use crate::tensor::{kernel, sigmoid, Init, Rng, Shape, Tensor};

/// Clamp applied to probabilities before taking logs.
pub const LOSS_EPSILON: f64 = 1e-7;

/// Half-width of the uniform initializer for embedding rows.
pub const EMBEDDING_INIT_BOUND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(a),
            Activation::Tanh => a.tanh(),
        }
    }

    /// Scores at or above this value are labelled 1.
    pub fn threshold(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.5,
            Activation::Tanh => 0.0,
        }
    }

    pub fn label(self, score: f64) -> u8 {
        u8::from(score >= self.threshold())
    }

    /// Probability of class 1 implied by a score. A tanh score `s` maps to
    /// `(1 + s) / 2`, which equals `σ(2a)`.
    pub fn probability(self, score: f64) -> f64 {
        match self {
            Activation::Sigmoid => score,
            Activation::Tanh => 0.5 * (1.0 + score),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation {other:?} (sigmoid|tanh)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of ranked vocabulary tokens; the embedding table has V + 2 rows.
    pub vocab_size: usize,
    pub embed_units: usize,
    pub lstm_units: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub activation: Activation,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        if self.embed_units == 0 || self.lstm_units == 0 {
            return bad("unit counts must be positive".into());
        }
        if self.max_len == 0 {
            return bad("max_len must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    pub fn table_rows(&self) -> usize {
        self.vocab_size + 2
    }

    /// Total trainable scalars, in serialization order.
    pub fn parameter_count(&self) -> usize {
        let (e, h) = (self.embed_units, self.lstm_units);
        self.table_rows() * e + 4 * (e * h + h * h + h) + h + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Candidate = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Candidate, Gate::Output];
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    /// d_e × d_h
    pub w: Tensor,
    /// d_h × d_h
    pub u: Tensor,
    /// d_h
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Indexed by [`Gate`].
    pub gates: [GateParams; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    /// (V + 2) × d_e; row 0 is padding.
    pub table: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// d_h
    pub w: Tensor,
    pub b: f64,
}

/// Parameter-shaped container, used both for weights and for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensors {
    pub embedding: EmbeddingParams,
    pub lstm: LstmParams,
    pub dense: DenseParams,
}

pub type Gradients = ParamTensors;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub weights: ParamTensors,
}

impl ParamTensors {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (e, h) = (config.embed_units, config.lstm_units);
        let gate = || GateParams {
            w: Tensor::zeros(Shape::Matrix(e, h)),
            u: Tensor::zeros(Shape::Matrix(h, h)),
            b: Tensor::zeros(Shape::Vector(h)),
        };
        ParamTensors {
            embedding: EmbeddingParams {
                table: Tensor::zeros(Shape::Matrix(config.table_rows(), e)),
            },
            lstm: LstmParams {
                gates: [gate(), gate(), gate(), gate()],
            },
            dense: DenseParams {
                w: Tensor::zeros(Shape::Vector(h)),
                b: 0.0,
            },
        }
    }

    /// Every tensor as a flat slice, in the fixed order: embedding table,
    /// then `W, U, b` for the input, forget, candidate and output gates,
    /// then dense `w` and dense `b`.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.embedding.table.data()];
        for g in &self.lstm.gates {
            out.extend([g.w.data(), g.u.data(), g.b.data()]);
        }
        out.push(self.dense.w.data());
        out.push(std::slice::from_ref(&self.dense.b));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.embedding.table.data_mut()];
        for g in &mut self.lstm.gates {
            out.push(g.w.data_mut());
            out.push(g.u.data_mut());
            out.push(g.b.data_mut());
        }
        out.push(self.dense.w.data_mut());
        out.push(std::slice::from_mut(&mut self.dense.b));
        out
    }

    pub fn fill(&mut self, value: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v = value);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.l2_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

pub enum Mode<'a> {
    /// Dropout active, mask drawn from the generator.
    Train(&'a mut Rng),
    /// Dropout active with a caller-supplied mask (entries 0 or 1/(1-p)).
    /// Used to hold the mask fixed while probing the loss numerically.
    FixedMask(&'a [f64]),
    /// No dropout.
    Infer,
}

/// Per-step LSTM values kept for the backward pass. Gate activations, cell
/// states and hidden states are stored row-major with `lstm_units` columns;
/// `cells` and `hidden` have an extra leading zero row for t = 0.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub steps: usize,
    pub units: usize,
    pub gates: [Vec<f64>; 4],
    pub cells: Vec<f64>,
    pub hidden: Vec<f64>,
    pub tanh_cells: Vec<f64>,
}

impl LstmTrace {
    pub fn cell(&self, t: usize) -> &[f64] {
        &self.cells[t * self.units..(t + 1) * self.units]
    }

    pub fn hidden(&self, t: usize) -> &[f64] {
        &self.hidden[t * self.units..(t + 1) * self.units]
    }

    pub fn gate(&self, gate: Gate, t: usize) -> &[f64] {
        let t = t - 1;
        &self.gates[gate as usize][t * self.units..(t + 1) * self.units]
    }
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub indices: Vec<usize>,
    /// L × d_e embedded inputs.
    pub inputs: Tensor,
    pub lstm: LstmTrace,
    pub mask: Vec<f64>,
    pub dropped: Vec<f64>,
    pub logit: f64,
    pub score: f64,
}

impl EmbeddingParams {
    pub fn forward(&self, msg: &EncodedMessage) -> Result<Tensor> {
        let rows = self.table.rows();
        let d = self.table.cols();
        let mut out = Vec::with_capacity(msg.len() * d);
        for &idx in &msg.indices {
            if idx >= rows {
                return Err(Error::IndexOutOfRange { index: idx, rows });
            }
            out.extend_from_slice(self.table.row(idx));
        }
        Tensor::from_vec(Shape::Matrix(msg.len(), d), out)
    }
}

impl LstmParams {
    pub fn input_units(&self) -> usize {
        self.gates[0].w.rows()
    }

    pub fn units(&self) -> usize {
        self.gates[0].b.len()
    }

    /// Runs the recurrence over the rows of `x` and returns `h_T`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LstmTrace)> {
        let (e, h) = (self.input_units(), self.units());
        let steps = match x.shape() {
            Shape::Matrix(l, c) if c == e => l,
            other => {
                return Err(Error::Shape {
                    left: other.to_string(),
                    right: format!("(Lx{e})"),
                })
            }
        };
        let mut gates: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; steps * h]);
        let mut cells = vec![0.0; (steps + 1) * h];
        let mut hidden = vec![0.0; (steps + 1) * h];
        let mut tanh_cells = vec![0.0; steps * h];
        let mut z = vec![0.0; h];
        for t in 0..steps {
            let xt = x.row(t);
            let (h_prev, h_rest) = hidden.split_at_mut((t + 1) * h);
            let h_prev = &h_prev[t * h..];
            for gate in Gate::ALL {
                let p = &self.gates[gate as usize];
                z.copy_from_slice(p.b.data());
                kernel::vec_mat_acc(xt, p.w.data(), h, &mut z);
                kernel::vec_mat_acc(h_prev, p.u.data(), h, &mut z);
                let act = &mut gates[gate as usize][t * h..(t + 1) * h];
                if gate == Gate::Candidate {
                    act.iter_mut().zip(&z).for_each(|(a, &v)| *a = v.tanh());
                } else {
                    act.iter_mut().zip(&z).for_each(|(a, &v)| *a = sigmoid(v));
                }
            }
            let (c_prev, c_rest) = cells.split_at_mut((t + 1) * h);
            let c_prev = &c_prev[t * h..];
            let c_t = &mut c_rest[..h];
            let h_t = &mut h_rest[..h];
            let range = t * h..(t + 1) * h;
            let (i, f, g, o) = (
                &gates[0][range.clone()],
                &gates[1][range.clone()],
                &gates[2][range.clone()],
                &gates[3][range.clone()],
            );
            let tc = &mut tanh_cells[range];
            for j in 0..h {
                c_t[j] = f[j] * c_prev[j] + i[j] * g[j];
                tc[j] = c_t[j].tanh();
                h_t[j] = o[j] * tc[j];
            }
        }
        let h_final = Tensor::from_vec(Shape::Vector(h), hidden[steps * h..].to_vec())?;
        Ok((
            h_final,
            LstmTrace {
                steps,
                units: h,
                gates,
                cells,
                hidden,
                tanh_cells,
            },
        ))
    }
}

/// Inverted dropout. Returns the output and the multiplicative mask (0 or
/// `1/(1-p)` per entry in training, all ones otherwise).
pub fn dropout(h: &[f64], p: f64, mode: Mode<'_>) -> (Vec<f64>, Vec<f64>) {
    let mask: Vec<f64> = match mode {
        Mode::Infer => vec![1.0; h.len()],
        Mode::FixedMask(m) => {
            assert_eq!(m.len(), h.len(), "dropout mask length");
            m.to_vec()
        }
        Mode::Train(_) if p == 0.0 => vec![1.0; h.len()],
        Mode::Train(rng) => {
            let keep = 1.0 / (1.0 - p);
            (0..h.len())
                .map(|_| if rng.uniform() < p { 0.0 } else { keep })
                .collect()
        }
    };
    let out = h.iter().zip(&mask).map(|(v, m)| v * m).collect();
    (out, mask)
}

impl DenseParams {
    /// Returns `(logit, activation(logit))`.
    pub fn forward(&self, h: &[f64], activation: Activation) -> Result<(f64, f64)> {
        if h.len() != self.w.len() {
            return Err(Error::Shape {
                left: format!("({})", h.len()),
                right: self.w.shape().to_string(),
            });
        }
        let a = kernel::dot(h, self.w.data()) + self.b;
        Ok((a, activation.apply(a)))
    }
}

/// Binary cross-entropy with `p` clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(p: f64, y: u8) -> f64 {
    let p = p.clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Loss of a head output under the given activation.
pub fn output_loss(score: f64, y: u8, activation: Activation) -> f64 {
    bce_loss(activation.probability(score), y)
}

/// d(loss)/d(logit). Zero where the probability clamp is active.
fn logit_gradient(score: f64, y: u8, activation: Activation) -> f64 {
    let p = activation.probability(score);
    if !(LOSS_EPSILON..=1.0 - LOSS_EPSILON).contains(&p) {
        return 0.0;
    }
    let d = p - f64::from(y);
    match activation {
        Activation::Sigmoid => d,
        Activation::Tanh => 2.0 * d,
    }
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(ModelParams {
            weights: ParamTensors::zeros(&config),
            config,
        })
    }

    /// Embedding rows uniform on ±0.05 (pad row zero), `W` and `U`
    /// Glorot-uniform, forget-gate bias 1, other biases 0, dense weights
    /// Glorot-uniform. Draw order follows [`ParamTensors::slices`].
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (e, h) = (config.embed_units, config.lstm_units);
        let mut table = Init::Uniform(EMBEDDING_INIT_BOUND).tensor(Shape::Matrix(config.table_rows(), e), rng);
        table.row_mut(PAD_INDEX).fill(0.0);
        let mut gate = |g: Gate| GateParams {
            w: Init::GlorotUniform { fan_in: e, fan_out: h }.tensor(Shape::Matrix(e, h), rng),
            u: Init::GlorotUniform { fan_in: h, fan_out: h }.tensor(Shape::Matrix(h, h), rng),
            b: if g == Gate::Forget {
                Init::Constant(1.0).tensor(Shape::Vector(h), rng)
            } else {
                Tensor::zeros(Shape::Vector(h))
            },
        };
        let gates = Gate::ALL.map(&mut gate);
        let w = Init::GlorotUniform { fan_in: h, fan_out: 1 }.tensor(Shape::Vector(h), rng);
        Ok(ModelParams {
            config,
            weights: ParamTensors {
                embedding: EmbeddingParams { table },
                lstm: LstmParams { gates },
                dense: DenseParams { w, b: 0.0 },
            },
        })
    }

    /// Checks that every tensor has the shape implied by the config, that all
    /// values are finite and that the pad row is zero.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let expected = ParamTensors::zeros(&self.config);
        for (have, want) in self.weights.slices().iter().zip(expected.slices()) {
            if have.len() != want.len() {
                return Err(Error::Shape {
                    left: format!("{} values", have.len()),
                    right: format!("{} values", want.len()),
                });
            }
        }
        if self.weights.embedding.table.shape() != expected.embedding.table.shape() {
            return Err(Error::Shape {
                left: self.weights.embedding.table.shape().to_string(),
                right: expected.embedding.table.shape().to_string(),
            });
        }
        if !self.weights.is_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
        if self.weights.embedding.table.row(PAD_INDEX).iter().any(|&v| v != 0.0) {
            return Err(Error::Config("embedding pad row must be zero".into()));
        }
        Ok(())
    }

    /// Copy with every parameter rounded to 32-bit precision.
    pub fn rounded_to_f32(&self) -> ModelParams {
        let mut out = self.clone();
        for s in out.weights.slices_mut() {
            s.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        out
    }

    pub fn forward(&self, msg: &EncodedMessage, mode: Mode<'_>) -> Result<ForwardTrace> {
        let w = &self.weights;
        let inputs = w.embedding.forward(msg)?;
        let (h_final, lstm) = w.lstm.forward(&inputs)?;
        let (dropped, mask) = dropout(h_final.data(), self.config.dropout, mode);
        let (logit, score) = w.dense.forward(&dropped, self.config.activation)?;
        Ok(ForwardTrace {
            indices: msg.indices.clone(),
            inputs,
            lstm,
            mask,
            dropped,
            logit,
            score,
        })
    }

    /// Inference score for one message.
    pub fn score(&self, msg: &EncodedMessage) -> Result<f64> {
        Ok(self.forward(msg, Mode::Infer)?.score)
    }

    pub fn loss(&self, trace: &ForwardTrace, y: u8) -> f64 {
        output_loss(trace.score, y, self.config.activation)
    }

    /// Gradient of the loss of one example.
    pub fn backward(&self, trace: &ForwardTrace, y: u8) -> Gradients {
        let mut grads = ParamTensors::zeros(&self.config);
        self.backward_into(trace, y, 1.0, &mut grads);
        grads
    }

    /// Adds `scale ×` the gradient of one example's loss into `grads` by
    /// backpropagation through time.
    pub fn backward_into(&self, trace: &ForwardTrace, y: u8, scale: f64, grads: &mut Gradients) {
        let w = &self.weights;
        let h = self.config.lstm_units;
        let e = self.config.embed_units;
        let lt = &trace.lstm;
        let steps = lt.steps;

        let da = scale * logit_gradient(trace.score, y, self.config.activation);
        grads.dense.b += da;
        for (g, &v) in grads.dense.w.data_mut().iter_mut().zip(&trace.dropped) {
            *g += da * v;
        }
        let mut dh: Vec<f64> = w
            .dense
            .w
            .data()
            .iter()
            .zip(&trace.mask)
            .map(|(wj, m)| da * wj * m)
            .collect();
        let mut dc = vec![0.0; h];
        let mut dz: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h]);
        let mut dh_prev = vec![0.0; h];
        let mut dx = vec![0.0; e];

        for t in (1..=steps).rev() {
            let r = (t - 1) * h..t * h;
            let i = &lt.gates[0][r.clone()];
            let f = &lt.gates[1][r.clone()];
            let g = &lt.gates[2][r.clone()];
            let o = &lt.gates[3][r.clone()];
            let tc = &lt.tanh_cells[r];
            let c_prev = lt.cell(t - 1);
            for j in 0..h {
                let d_o = dh[j] * tc[j];
                let dcj = dc[j] + dh[j] * o[j] * (1.0 - tc[j] * tc[j]);
                dz[Gate::Input as usize][j] = dcj * g[j] * i[j] * (1.0 - i[j]);
                dz[Gate::Forget as usize][j] = dcj * c_prev[j] * f[j] * (1.0 - f[j]);
                dz[Gate::Candidate as usize][j] = dcj * i[j] * (1.0 - g[j] * g[j]);
                dz[Gate::Output as usize][j] = d_o * o[j] * (1.0 - o[j]);
                dc[j] = dcj * f[j];
            }

            let xt = trace.inputs.row(t - 1);
            let idx = trace.indices[t - 1];
            let h_prev = lt.hidden(t - 1);
            dh_prev.iter_mut().for_each(|v| *v = 0.0);
            dx.iter_mut().for_each(|v| *v = 0.0);
            for gate in Gate::ALL {
                let k = gate as usize;
                let p = &w.lstm.gates[k];
                let gp = &mut grads.lstm.gates[k];
                kernel::outer_acc(xt, &dz[k], gp.w.data_mut());
                kernel::outer_acc(h_prev, &dz[k], gp.u.data_mut());
                gp.b.data_mut().iter_mut().zip(&dz[k]).for_each(|(b, d)| *b += d);
                kernel::mat_vec_acc(p.u.data(), &dz[k], &mut dh_prev);
                if idx != PAD_INDEX {
                    kernel::mat_vec_acc(p.w.data(), &dz[k], &mut dx);
                }
            }
            if idx != PAD_INDEX {
                let row = grads.embedding.table.row_mut(idx);
                row.iter_mut().zip(&dx).for_each(|(r, d)| *r += d);
            }
            std::mem::swap(&mut dh, &mut dh_prev);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn config(v: usize, e: usize, h: usize, l: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: v,
            embed_units: e,
            lstm_units: h,
            max_len: l,
            dropout: 0.5,
            activation: Activation::Sigmoid,
        }
    }

    fn msg(indices: &[usize]) -> EncodedMessage {
        EncodedMessage {
            indices: indices.to_vec(),
            original_len: indices.iter().filter(|&&i| i != 0).count(),
        }
    }

    #[test]
    fn embedding_lookup_matches_table_rows() {
        let mut table = Tensor::zeros(Shape::Matrix(22, 2));
        table.row_mut(4).copy_from_slice(&[0.25, 0.1]);
        table.row_mut(20).copy_from_slice(&[0.6, -0.2]);
        let emb = EmbeddingParams { table };
        let out = emb.forward(&msg(&[0, 4, 20])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.25, 0.1, 0.6, -0.2]);
        assert!(emb.forward(&msg(&[0, 0, 0])).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(matches!(
            emb.forward(&msg(&[22])),
            Err(Error::IndexOutOfRange { index: 22, rows: 22 })
        ));
    }

    #[test]
    fn zero_lstm_stays_at_zero() {
        let p = ParamTensors::zeros(&config(5, 3, 4, 6)).lstm;
        let x = Init::Uniform(1.0).tensor(Shape::Matrix(6, 3), &mut Rng::new(1));
        let (h, _) = p.forward(&x).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_with_saturated_candidate() {
        let mut p = ParamTensors::zeros(&config(5, 1, 1, 1)).lstm;
        p.gates[Gate::Candidate as usize].b.data_mut()[0] = 50.0;
        let x = Tensor::zeros(Shape::Matrix(1, 1));
        let (h, trace) = p.forward(&x).unwrap();
        // i = f = o = 0.5, g = tanh(50) = 1: c1 = 0.5, h1 = 0.5 tanh(0.5)
        assert_abs_diff_eq!(trace.cell(1)[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(h.data()[0], 0.5 * 0.5f64.tanh(), epsilon = 1e-12);
        assert_abs_diff_eq!(h.data()[0], 0.231_058_578_630_004_9, epsilon = 1e-12);
    }

    #[test]
    fn recurrence_is_order_sensitive() {
        let cfg = config(10, 4, 3, 5);
        let model = ModelParams::init(cfg, &mut Rng::new(42)).unwrap();
        let a = model.score(&msg(&[1, 2, 3, 4, 5])).unwrap();
        let b = model.score(&msg(&[5, 4, 3, 2, 1])).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn pad_inputs_contribute_nothing() {
        let cfg = config(10, 4, 3, 5);
        let model = ModelParams::init(cfg, &mut Rng::new(5)).unwrap();
        let x = model.weights.embedding.forward(&msg(&[0, 0, 0, 0, 0])).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
        let (h, trace) = model.weights.lstm.forward(&x).unwrap();
        // with x_t = 0 each step only sees h_{t-1} U + b
        let mut hh = vec![0.0; 3];
        let mut cc = [0.0; 3];
        for t in 1..=5 {
            let pre = |g: Gate| {
                let p = &model.weights.lstm.gates[g as usize];
                let mut z = p.b.data().to_vec();
                kernel::vec_mat_acc(&hh, p.u.data(), 3, &mut z);
                z
            };
            let (zi, zf, zg, zo) = (pre(Gate::Input), pre(Gate::Forget), pre(Gate::Candidate), pre(Gate::Output));
            for j in 0..3 {
                cc[j] = sigmoid(zf[j]) * cc[j] + sigmoid(zi[j]) * zg[j].tanh();
            }
            hh = (0..3).map(|j| sigmoid(zo[j]) * cc[j].tanh()).collect();
            assert_eq!(trace.hidden(t), hh.as_slice());
        }
        assert_eq!(h.data(), hh.as_slice());
    }

    #[test]
    fn dropout_modes() {
        let h = [1.0, -2.0, 3.0, 0.5];
        let (out, _) = dropout(&h, 0.5, Mode::Infer);
        assert_eq!(out, h);
        let mut rng = Rng::new(3);
        let (out, _) = dropout(&h, 0.0, Mode::Train(&mut rng));
        assert_eq!(out, h);
        for seed in 0..20 {
            let mut rng = Rng::new(seed);
            let (out, mask) = dropout(&h, 0.5, Mode::Train(&mut rng));
            for ((o, x), m) in out.iter().zip(&h).zip(&mask) {
                assert!(*o == 0.0 || *o == 2.0 * x);
                assert!(*m == 0.0 || *m == 2.0);
            }
        }
    }

    #[test]
    fn dense_head() {
        let d = DenseParams {
            w: Tensor::vector(&[1.0, -1.0]).unwrap(),
            b: 0.5,
        };
        let (a, s) = d.forward(&[2.0, 1.0], Activation::Sigmoid).unwrap();
        assert_eq!(a, 1.5);
        assert_abs_diff_eq!(s, 0.8176, epsilon = 1e-4);
        let z = DenseParams {
            w: Tensor::vector(&[0.3, 0.2]).unwrap(),
            b: 0.0,
        };
        assert_eq!(z.forward(&[0.0, 0.0], Activation::Sigmoid).unwrap().1, 0.5);
        assert_eq!(z.forward(&[0.0, 0.0], Activation::Tanh).unwrap().1, 0.0);
        assert!(z.forward(&[0.0], Activation::Tanh).is_err());
    }

    #[test]
    fn bce_values() {
        assert_abs_diff_eq!(bce_loss(0.5, 1), std::f64::consts::LN_2, epsilon = 1e-12);
        assert!(bce_loss(1.0 - 1e-12, 1) < 1e-6);
        assert_abs_diff_eq!(bce_loss(0.9, 0), std::f64::consts::LN_10, epsilon = 1e-9);
        assert!(bce_loss(0.0, 1).is_finite());
        assert!(bce_loss(1.0, 0).is_finite());
    }

    #[test]
    fn zero_model_scores_one_half() {
        let model = ModelParams::zeros(config(10, 4, 3, 5)).unwrap();
        assert_eq!(model.score(&msg(&[1, 2, 3, 0, 11])).unwrap(), 0.5);
        let mut rng = Rng::new(1);
        assert_eq!(model.forward(&msg(&[1, 2]), Mode::Train(&mut rng)).unwrap().score, 0.5);
    }

    #[test]
    fn train_mode_is_seeded_and_infer_is_mask_free() {
        let model = ModelParams::init(config(10, 4, 3, 5), &mut Rng::new(8)).unwrap();
        let m = msg(&[0, 3, 4, 5, 11]);
        let a = model.forward(&m, Mode::Train(&mut Rng::new(2))).unwrap().score;
        let b = model.forward(&m, Mode::Train(&mut Rng::new(2))).unwrap().score;
        assert_eq!(a.to_bits(), b.to_bits());
        let t = model.forward(&m, Mode::Infer).unwrap();
        assert!(t.mask.iter().all(|&v| v == 1.0));
        assert_eq!(t.score.to_bits(), model.score(&m).unwrap().to_bits());
    }

    #[test]
    fn dense_bias_gradient_is_score_minus_label() {
        let model = ModelParams::init(config(10, 4, 3, 5), &mut Rng::new(4)).unwrap();
        let trace = model.forward(&msg(&[1, 2, 3, 4, 5]), Mode::Train(&mut Rng::new(1))).unwrap();
        for y in [0, 1] {
            let g = model.backward(&trace, y);
            assert_abs_diff_eq!(g.dense.b, trace.score - f64::from(y), epsilon = 1e-15);
        }
    }

    #[test]
    fn gradient_touches_only_present_rows() {
        let model = ModelParams::init(config(10, 4, 3, 6), &mut Rng::new(4)).unwrap();
        let trace = model.forward(&msg(&[0, 0, 2, 7, 2, 11]), Mode::Train(&mut Rng::new(1))).unwrap();
        let g = model.backward(&trace, 1);
        for row in 0..12 {
            let nonzero = g.embedding.table.row(row).iter().any(|&v| v != 0.0);
            assert_eq!(nonzero, [2, 7, 11].contains(&row), "row {row}");
        }
    }

    #[test]
    fn parameter_count() {
        assert_eq!(config(10, 4, 3, 6).parameter_count(), 48 + 96 + 4);
    }

    #[test]
    fn config_validation() {
        let mut c = config(10, 4, 3, 6);
        c.dropout = 1.0;
        assert!(ModelParams::zeros(c).is_err());
        c.dropout = 0.0;
        c.max_len = 0;
        assert!(c.validate().is_err());
    }
}
