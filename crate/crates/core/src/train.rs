//! Mini-batch training, evaluation and prediction.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{encode_text, Dataset, EncodedMessage, Vocabulary, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::nn::{output_loss, Activation, ModelConfig, ModelParams, Mode, ParamTensors};
use crate::optim::{Hyper, Optimizer, OptimizerKind};
use crate::tensor::Rng;

/// Training settings. Serialized as flat TOML; every key is optional and
/// falls back to the reference configuration (128 embedding units, 128 LSTM
/// units, dropout 0.5, Adam, batch 64, sigmoid head).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Overrides the optimizer's default step size.
    pub learning_rate: Option<f64>,
    /// Global L2 gradient clip; off when unset.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub max_len: usize,
    /// Expected vocabulary size; checked against the vocabulary when set.
    pub vocab_size: Option<usize>,
    pub embed_units: usize,
    pub lstm_units: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub shuffle: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 10,
            batch_size: 64,
            optimizer: OptimizerKind::Adam,
            learning_rate: None,
            clip_norm: None,
            seed: 0,
            max_len: DEFAULT_MAX_LEN,
            vocab_size: None,
            embed_units: 128,
            lstm_units: 128,
            dropout: 0.5,
            activation: Activation::Sigmoid,
            shuffle: true,
        }
    }
}

impl TrainingConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning_rate must be positive, got {lr}")));
            }
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("clip_norm must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn hyper(&self) -> Hyper {
        let mut h = Hyper::defaults(self.optimizer);
        if let Some(lr) = self.learning_rate {
            h.learning_rate = lr;
        }
        h
    }

    pub fn model_config(&self, vocab: &Vocabulary) -> Result<ModelConfig> {
        if let Some(v) = self.vocab_size {
            if v != vocab.len() {
                return Err(Error::Config(format!(
                    "config expects a vocabulary of {v} tokens, got {}",
                    vocab.len()
                )));
            }
        }
        let cfg = ModelConfig {
            vocab_size: vocab.len(),
            embed_units: self.embed_units,
            lstm_units: self.lstm_units,
            max_len: self.max_len,
            dropout: self.dropout,
            activation: self.activation,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub mean_loss: f64,
}

impl Metrics {
    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.true_pos + self.true_neg) as f64 / n as f64,
        }
    }

    /// Tallies `(predicted, actual, loss)` triples in order.
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = (u8, u8, f64)>) -> Self {
        let mut m = Metrics::default();
        let mut loss_sum = 0.0;
        for (pred, actual, loss) in outcomes {
            match (pred, actual) {
                (1, 1) => m.true_pos += 1,
                (0, 0) => m.true_neg += 1,
                (1, 0) => m.false_pos += 1,
                _ => m.false_neg += 1,
            }
            loss_sum += loss;
        }
        if m.total() > 0 {
            m.mean_loss = loss_sum / m.total() as f64;
        }
        m
    }

    /// Metrics of the union of the two evaluated sets.
    pub fn combine(&self, other: &Metrics) -> Metrics {
        let total = self.total() + other.total();
        let mean_loss = if total == 0 {
            0.0
        } else {
            (self.mean_loss * self.total() as f64 + other.mean_loss * other.total() as f64) / total as f64
        };
        Metrics {
            true_pos: self.true_pos + other.true_pos,
            true_neg: self.true_neg + other.true_neg,
            false_pos: self.false_pos + other.false_pos,
            false_neg: self.false_neg + other.false_neg,
            mean_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: TrainingConfig,
    /// Size of the vocabulary the model was trained with.
    pub vocab_size: usize,
    /// Mean training-mode loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub train: Metrics,
    pub test: Option<Metrics>,
    pub seconds: f64,
}

impl ExperimentReport {
    /// Human-readable summary. Wall-clock time is left out so the text is
    /// reproducible.
    pub fn summary(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "model: V={} embed={} lstm={} max_len={} dropout={} activation={}",
            self.vocab_size, c.embed_units, c.lstm_units, c.max_len, c.dropout, c.activation
        );
        let _ = writeln!(
            s,
            "training: optimizer={} lr={} batch={} epochs={} seed={}",
            c.optimizer,
            c.hyper().learning_rate,
            c.batch_size,
            c.epochs,
            c.seed
        );
        for (i, loss) in self.epoch_losses.iter().enumerate() {
            let _ = writeln!(s, "epoch {:>3}  loss {loss:.6}", i + 1);
        }
        let mut line = |name: &str, m: &Metrics| {
            let _ = writeln!(
                s,
                "{name} accuracy {:.4}  loss {:.6}  (tp {} tn {} fp {} fn {})",
                m.accuracy(),
                m.mean_loss,
                m.true_pos,
                m.true_neg,
                m.false_pos,
                m.false_neg
            );
        };
        line("train", &self.train);
        if let Some(t) = &self.test {
            line("test ", t);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub score: f64,
    pub label: u8,
}

/// Trains a fresh model. One generator seeded from `config.seed` drives, in
/// order: parameter initialization, then per epoch the example shuffle and
/// every dropout mask.
pub fn train_model(train: &Dataset, config: &TrainingConfig, vocab: &Vocabulary) -> Result<(ModelParams, ExperimentReport)> {
    train_model_with(train, config, vocab, |_, _| {})
}

/// As [`train_model`], calling `on_epoch(epoch, mean_loss)` after each epoch.
pub fn train_model_with(
    train: &Dataset,
    config: &TrainingConfig,
    vocab: &Vocabulary,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(ModelParams, ExperimentReport)> {
    let started = Instant::now();
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let model_config = config.model_config(vocab)?;
    let encoded: Vec<(EncodedMessage, u8)> = train
        .examples()
        .iter()
        .map(|ex| (encode_text(&ex.text, vocab, config.max_len), ex.label))
        .collect();

    let mut rng = Rng::new(config.seed);
    let mut model = ModelParams::init(model_config, &mut rng)?;
    let mut optimizer = Optimizer::with_hyper(config.optimizer, config.hyper());
    let mut grads = ParamTensors::zeros(&model_config);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        if config.shuffle {
            rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (msg, y) = &encoded[i];
                let trace = model.forward(msg, Mode::Train(&mut rng))?;
                loss_sum += model.loss(&trace, *y);
                model.backward_into(&trace, *y, scale, &mut grads);
            }
            if let Some(max) = config.clip_norm {
                grads.clip_norm(max);
            }
            optimizer.step(&mut model, &grads)?;
        }
        if !model.weights.is_finite() {
            return Err(Error::NonFinite("parameters after update"));
        }
        let mean = loss_sum / encoded.len() as f64;
        epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }

    let train_metrics = evaluate(&model, vocab, train)?;
    let report = ExperimentReport {
        config: config.clone(),
        vocab_size: vocab.len(),
        epoch_losses,
        train: train_metrics,
        test: None,
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

fn outcome(model: &ModelParams, vocab: &Vocabulary, text: &str, label: u8) -> Result<(u8, u8, f64)> {
    let p = predict(model, vocab, text)?;
    Ok((p.label, label, output_loss(p.score, label, model.config.activation)))
}

/// Inference-mode metrics over `data`.
pub fn evaluate(model: &ModelParams, vocab: &Vocabulary, data: &Dataset) -> Result<Metrics> {
    let outcomes = data
        .examples()
        .iter()
        .map(|ex| outcome(model, vocab, &ex.text, ex.label))
        .collect::<Result<Vec<_>>>()?;
    Ok(Metrics::from_outcomes(outcomes))
}

/// [`evaluate`] split across `threads` workers. Per-example results are
/// reassembled in dataset order, so the output equals the sequential one
/// exactly.
pub fn evaluate_parallel(model: &ModelParams, vocab: &Vocabulary, data: &Dataset, threads: usize) -> Result<Metrics> {
    let threads = threads.max(1);
    if threads == 1 || data.len() < 2 {
        return evaluate(model, vocab, data);
    }
    let chunk = data.len().div_ceil(threads);
    let parts: Vec<Result<Vec<(u8, u8, f64)>>> = std::thread::scope(|s| {
        let handles: Vec<_> = data
            .examples()
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|ex| outcome(model, vocab, &ex.text, ex.label))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut outcomes = Vec::with_capacity(data.len());
    for part in parts {
        outcomes.extend(part?);
    }
    Ok(Metrics::from_outcomes(outcomes))
}

/// Scores raw text: tokenize, encode, run the network without dropout.
pub fn predict(model: &ModelParams, vocab: &Vocabulary, text: &str) -> Result<Prediction> {
    let msg = encode_text(text, vocab, model.config.max_len);
    let score = model.score(&msg)?;
    Ok(Prediction {
        score,
        label: model.config.activation.label(score),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_synthetic, LabeledExample, Task};

    fn small_config() -> TrainingConfig {
        TrainingConfig {
            epochs: 3,
            batch_size: 8,
            max_len: 24,
            embed_units: 8,
            lstm_units: 8,
            seed: 5,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn accuracy_from_counts() {
        let m = Metrics::from_outcomes([(1, 1, 0.1), (0, 1, 0.9), (1, 1, 0.2)]);
        assert_eq!(m.accuracy(), 2.0 / 3.0);
        assert_eq!(m.total(), 3);
        assert_eq!(m.false_neg, 1);
    }

    #[test]
    fn zero_model_predicts_the_boundary() {
        let vocab = Vocabulary::from_indexed([("a", 1)]).unwrap();
        let cfg = small_config().model_config(&vocab).unwrap();
        let model = ModelParams::zeros(cfg).unwrap();
        let p = predict(&model, &vocab, "a b c").unwrap();
        assert_eq!(p, Prediction { score: 0.5, label: 1 });
    }

    #[test]
    fn threshold_is_monotone() {
        for s in [0.0, 0.2, 0.5, 0.51, 0.99] {
            let at_half = u8::from(s >= 0.5);
            let at_higher = u8::from(s >= 0.7);
            assert!(at_higher <= at_half);
            assert_eq!(Activation::Sigmoid.label(s), at_half);
        }
        assert_eq!(Activation::Tanh.label(-0.01), 0);
        assert_eq!(Activation::Tanh.label(0.0), 1);
    }

    #[test]
    fn rejects_bad_configs() {
        let data = gen_synthetic(Task::Keyword, 10, 20, 1).unwrap();
        let vocab = Vocabulary::build(&data, 50).unwrap();
        let cfg = TrainingConfig {
            epochs: 0,
            ..small_config()
        };
        assert!(train_model(&data, &cfg, &vocab).is_err());
        let cfg = TrainingConfig {
            vocab_size: Some(vocab.len() + 1),
            ..small_config()
        };
        assert!(train_model(&data, &cfg, &vocab).is_err());
        let empty = Dataset::new(vec![], "empty");
        assert!(matches!(train_model(&empty, &small_config(), &vocab), Err(Error::EmptyDataset)));
    }

    #[test]
    fn same_seed_same_parameters() {
        let data = gen_synthetic(Task::Keyword, 40, 20, 2).unwrap();
        let vocab = Vocabulary::build(&data, 50).unwrap();
        let (a, ra) = train_model(&data, &small_config(), &vocab).unwrap();
        let (b, rb) = train_model(&data, &small_config(), &vocab).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.epoch_losses, rb.epoch_losses);
        assert_eq!(ra.summary(), rb.summary());
    }

    #[test]
    fn parallel_evaluation_matches_sequential() {
        let data = gen_synthetic(Task::Order, 57, 20, 3).unwrap();
        let vocab = Vocabulary::build(&data, 50).unwrap();
        let cfg = small_config().model_config(&vocab).unwrap();
        let model = ModelParams::init(cfg, &mut Rng::new(1)).unwrap();
        let seq = evaluate(&model, &vocab, &data).unwrap();
        for threads in [2, 3, 8] {
            let par = evaluate_parallel(&model, &vocab, &data, threads).unwrap();
            assert_eq!(seq.mean_loss.to_bits(), par.mean_loss.to_bits());
            assert_eq!(seq, par);
        }
    }

    #[test]
    fn evaluation_is_additive_and_order_free() {
        let data = gen_synthetic(Task::Keyword, 60, 20, 4).unwrap();
        let vocab = Vocabulary::build(&data, 50).unwrap();
        let cfg = small_config().model_config(&vocab).unwrap();
        let model = ModelParams::init(cfg, &mut Rng::new(2)).unwrap();
        let all = evaluate(&model, &vocab, &data).unwrap();

        let (d1, d2) = data.examples().split_at(25);
        let m1 = evaluate(&model, &vocab, &Dataset::new(d1.to_vec(), "a")).unwrap();
        let m2 = evaluate(&model, &vocab, &Dataset::new(d2.to_vec(), "b")).unwrap();
        let sum = m1.combine(&m2);
        assert_eq!(
            (sum.true_pos, sum.true_neg, sum.false_pos, sum.false_neg),
            (all.true_pos, all.true_neg, all.false_pos, all.false_neg)
        );

        let mut rev: Vec<LabeledExample> = data.examples().to_vec();
        rev.reverse();
        let r = evaluate(&model, &vocab, &Dataset::new(rev, "rev")).unwrap();
        assert_eq!(r.accuracy(), all.accuracy());
        assert!((r.mean_loss - all.mean_loss).abs() < 1e-12);
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = TrainingConfig {
            learning_rate: Some(0.01),
            optimizer: OptimizerKind::Rmsprop,
            activation: Activation::Tanh,
            ..small_config()
        };
        assert_eq!(TrainingConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = TrainingConfig::from_toml("epochs = 4\noptimizer = \"adagrad\"\n").unwrap();
        assert_eq!(partial.epochs, 4);
        assert_eq!(partial.optimizer, OptimizerKind::Adagrad);
        assert_eq!(partial.embed_units, 128);
        assert!(TrainingConfig::from_toml("epoch = 4\n").is_err());
    }
}
