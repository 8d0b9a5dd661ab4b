//! Bag-of-words linear baselines: logistic regression and the averaged
//! perceptron.
//!
//! Features are token counts indexed by vocabulary position (OOV tokens share
//! index V + 1). Weight slot 0, the pad index, never occurs as a token and
//! holds the bias.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Dataset, Vocabulary};
use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Rng};
use crate::train::Metrics;

/// Step size for logistic-regression SGD.
pub const LOGREG_LEARNING_RATE: f64 = 0.1;

const BIAS: usize = 0;

/// Sparse token counts, sorted by index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BowVector {
    pub counts: Vec<(usize, u32)>,
}

impl BowVector {
    fn dot(&self, weights: &[f64]) -> f64 {
        weights[BIAS]
            + self
                .counts
                .iter()
                .map(|&(i, c)| weights[i] * f64::from(c))
                .sum::<f64>()
    }

    fn add_scaled(&self, weights: &mut [f64], scale: f64) {
        weights[BIAS] += scale;
        for &(i, c) in &self.counts {
            weights[i] += scale * f64::from(c);
        }
    }
}

pub fn featurize<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> BowVector {
    let mut idx: Vec<usize> = tokens.iter().map(|t| vocab.index_of(t.as_ref())).collect();
    idx.sort_unstable();
    let mut counts: Vec<(usize, u32)> = Vec::new();
    for i in idx {
        match counts.last_mut() {
            Some((j, c)) if *j == i => *c += 1,
            _ => counts.push((i, 1)),
        }
    }
    BowVector { counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Logreg,
    Perceptron,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Logreg => "logreg",
            BaselineKind::Perceptron => "perceptron",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(BaselineKind::Logreg),
            "perceptron" => Ok(BaselineKind::Perceptron),
            other => Err(Error::Config(format!("unknown baseline {other:?} (logreg|perceptron)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub kind: BaselineKind,
    /// V + 2 weights; slot 0 is the bias.
    pub weights: Vec<f64>,
}

impl LinearModel {
    /// Logistic probability for logreg, raw margin for the perceptron.
    pub fn score(&self, x: &BowVector) -> f64 {
        let m = x.dot(&self.weights);
        match self.kind {
            BaselineKind::Logreg => sigmoid(m),
            BaselineKind::Perceptron => m,
        }
    }

    pub fn predict(&self, x: &BowVector) -> u8 {
        let threshold = match self.kind {
            BaselineKind::Logreg => 0.5,
            BaselineKind::Perceptron => 0.0,
        };
        u8::from(self.score(x) >= threshold)
    }

    pub fn evaluate(&self, vocab: &Vocabulary, data: &Dataset) -> Metrics {
        Metrics::from_outcomes(data.examples().iter().map(|ex| {
            let x = featurize(&tokenize(&ex.text), vocab);
            let loss = match self.kind {
                BaselineKind::Logreg => crate::nn::bce_loss(self.score(&x), ex.label),
                BaselineKind::Perceptron => {
                    let y = if ex.label == 1 { 1.0 } else { -1.0 };
                    (-y * self.score(&x)).max(0.0)
                }
            };
            (self.predict(&x), ex.label, loss)
        }))
    }
}

/// Trains a baseline for `epochs` passes with a seeded shuffle each pass.
///
/// Logistic regression takes per-example SGD steps of size
/// [`LOGREG_LEARNING_RATE`] on the log loss. The perceptron updates on
/// mistakes (margin ≤ 0) and returns the average of the weight vector over
/// all examples seen.
pub fn train_baseline(kind: BaselineKind, train: &Dataset, vocab: &Vocabulary, epochs: usize, seed: u64) -> Result<LinearModel> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    let features: Vec<(BowVector, u8)> = train
        .examples()
        .iter()
        .map(|ex| (featurize(&tokenize(&ex.text), vocab), ex.label))
        .collect();
    let dim = vocab.table_rows();
    let mut rng = Rng::new(seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut w = vec![0.0; dim];

    match kind {
        BaselineKind::Logreg => {
            for _ in 0..epochs {
                rng.shuffle(&mut order);
                for &i in &order {
                    let (x, y) = &features[i];
                    let err = sigmoid(x.dot(&w)) - f64::from(*y);
                    x.add_scaled(&mut w, -LOGREG_LEARNING_RATE * err);
                }
            }
        }
        BaselineKind::Perceptron => {
            // Average via the timestamped accumulator: avg = w - u / c.
            let mut u = vec![0.0; dim];
            let mut c = 1.0;
            for _ in 0..epochs {
                rng.shuffle(&mut order);
                for &i in &order {
                    let (x, y) = &features[i];
                    let y = if *y == 1 { 1.0 } else { -1.0 };
                    if y * x.dot(&w) <= 0.0 {
                        x.add_scaled(&mut w, y);
                        x.add_scaled(&mut u, y * c);
                    }
                    c += 1.0;
                }
            }
            for (wi, ui) in w.iter_mut().zip(&u) {
                *wi -= ui / c;
            }
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("baseline weights"));
    }
    Ok(LinearModel { kind, weights: w })
}

/// Accuracy of one model on one test set, tagged with the set's fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub model: String,
    pub test_fingerprint: String,
    pub metrics: Metrics,
}

impl EvalSummary {
    pub fn new(model: impl Into<String>, test: &Dataset, metrics: Metrics) -> Self {
        EvalSummary {
            model: model.into(),
            test_fingerprint: test.fingerprint(),
            metrics,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub task: String,
    pub traditional: f64,
    pub lstm: f64,
}

impl ComparisonRow {
    pub fn delta(&self) -> f64 {
        self.lstm - self.traditional
    }
}

pub fn compare(task: &str, lstm: &EvalSummary, baseline: &EvalSummary) -> Result<ComparisonRow> {
    if lstm.test_fingerprint != baseline.test_fingerprint {
        return Err(Error::MismatchedTestSets);
    }
    Ok(ComparisonRow {
        task: task.to_string(),
        traditional: baseline.metrics.accuracy(),
        lstm: lstm.metrics.accuracy(),
    })
}

/// `task,traditional_accuracy,lstm_accuracy,delta` rows.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("task,traditional_accuracy,lstm_accuracy,delta\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.4},{:.4},{:.4}", r.task, r.traditional, r.lstm, r.delta());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_synthetic, split, Task};
    use proptest::prelude::*;
    use crate::tensor::Rng;

    fn ab_vocab() -> Vocabulary {
        Vocabulary::from_indexed([("a", 1), ("b", 2)]).unwrap()
    }

    #[test]
    fn counts_by_index() {
        let v = ab_vocab();
        assert_eq!(featurize(&["a", "b", "a"], &v).counts, [(1, 2), (2, 1)]);
        assert!(featurize::<&str>(&[], &v).counts.is_empty());
        assert_eq!(featurize(&["zz", "a", "q"], &v).counts, [(1, 1), (3, 2)]);
    }

    #[test]
    fn empty_vector_scores_only_the_bias() {
        let m = LinearModel {
            kind: BaselineKind::Perceptron,
            weights: vec![-0.25, 3.0, 4.0, 5.0],
        };
        assert_eq!(m.score(&BowVector::default()), -0.25);
        assert_eq!(m.predict(&BowVector::default()), 0);
    }

    #[test]
    fn both_learners_fit_the_keyword_task() {
        let data = gen_synthetic(Task::Keyword, 400, 100, 9).unwrap();
        let vocab = Vocabulary::build(&data, 1000).unwrap();
        for kind in [BaselineKind::Logreg, BaselineKind::Perceptron] {
            let m = train_baseline(kind, &data, &vocab, 20, 1).unwrap();
            let acc = m.evaluate(&vocab, &data).accuracy();
            assert!(acc >= 0.99, "{kind}: {acc}");
        }
    }

    #[test]
    fn order_task_defeats_bag_of_words() {
        let data = gen_synthetic(Task::Order, 2000, 100, 9).unwrap();
        let (train, test) = split(&data, 0.8, 1).unwrap();
        let vocab = Vocabulary::build(&train, 200).unwrap();
        for kind in [BaselineKind::Logreg, BaselineKind::Perceptron] {
            let m = train_baseline(kind, &train, &vocab, 10, 1).unwrap();
            let acc = m.evaluate(&vocab, &test).accuracy();
            assert!(acc <= 0.6, "{kind}: {acc}");
        }
    }

    #[test]
    fn seeded_training() {
        let data = gen_synthetic(Task::Keyword, 100, 30, 2).unwrap();
        let vocab = Vocabulary::build(&data, 100).unwrap();
        for kind in [BaselineKind::Logreg, BaselineKind::Perceptron] {
            assert_eq!(
                train_baseline(kind, &data, &vocab, 3, 4).unwrap(),
                train_baseline(kind, &data, &vocab, 3, 4).unwrap()
            );
        }
        let empty = Dataset::new(vec![], "e");
        assert!(train_baseline(BaselineKind::Logreg, &empty, &vocab, 3, 4).is_err());
    }

    #[test]
    fn comparison_rows() {
        let test = gen_synthetic(Task::Keyword, 10, 20, 1).unwrap();
        let other = gen_synthetic(Task::Keyword, 10, 20, 2).unwrap();
        let m = |tp, tn, fp, fneg| Metrics {
            true_pos: tp,
            true_neg: tn,
            false_pos: fp,
            false_neg: fneg,
            mean_loss: 0.0,
        };
        let lstm = EvalSummary::new("lstm", &test, m(5, 4, 1, 0));
        let base = EvalSummary::new("logreg", &test, m(3, 3, 2, 2));
        let row = compare("en", &lstm, &base).unwrap();
        assert_eq!((row.traditional, row.lstm), (0.6, 0.9));
        assert!((row.delta() - 0.3).abs() < 1e-12);
        assert_eq!(compare("en", &lstm, &lstm).unwrap().delta(), 0.0);
        let moved = EvalSummary::new("logreg", &other, m(3, 3, 2, 2));
        assert!(matches!(compare("en", &lstm, &moved), Err(Error::MismatchedTestSets)));
        assert_eq!(
            comparison_csv(&[ComparisonRow { task: "en".into(), traditional: 0.74, lstm: 0.85 }]),
            "task,traditional_accuracy,lstm_accuracy,delta\nen,0.7400,0.8500,0.1100\n"
        );
    }

    proptest! {
        #[test]
        fn featurize_ignores_order(toks in prop::collection::vec("[abcxy]", 0..12), seed in any::<u64>()) {
            let v = ab_vocab();
            let mut shuffled = toks.clone();
            Rng::new(seed).shuffle(&mut shuffled);
            let f = featurize(&toks, &v);
            prop_assert_eq!(&f, &featurize(&shuffled, &v));
            prop_assert!(f.counts.iter().all(|&(i, c)| (1..=3).contains(&i) && c >= 1));
        }
    }
}
