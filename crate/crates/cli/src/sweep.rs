//! Grid sweeps: cartesian product of training settings, one CSV row per run.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::Deserialize;

use seqclass::corpus::{Dataset, Vocabulary};
use seqclass::nn::Activation;
use seqclass::optim::OptimizerKind;
use seqclass::train::{evaluate, train_model, TrainingConfig};

use crate::CliError;

pub const CSV_HEADER: [&str; 11] = [
    "embed_units",
    "lstm_units",
    "vocab_size",
    "optimizer",
    "batch_size",
    "activation",
    "seed",
    "train_acc",
    "test_acc",
    "seconds",
    "status",
];

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Axis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> Axis<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            Axis::One(v) => vec![v],
            Axis::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    embed_units: Option<Axis<usize>>,
    lstm_units: Option<Axis<usize>>,
    vocab_size: Option<Axis<usize>>,
    optimizer: Option<Axis<OptimizerKind>>,
    batch_size: Option<Axis<usize>>,
    activation: Option<Axis<Activation>>,
    seed: Option<Axis<u64>>,
    epochs: Option<usize>,
    max_len: Option<usize>,
    dropout: Option<f64>,
    learning_rate: Option<f64>,
    clip_norm: Option<f64>,
}

/// Values per axis. An axis missing from the grid file holds the single
/// reference value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub embed_units: Vec<usize>,
    pub lstm_units: Vec<usize>,
    pub vocab_size: Vec<usize>,
    pub optimizer: Vec<OptimizerKind>,
    pub batch_size: Vec<usize>,
    pub activation: Vec<Activation>,
    pub seed: Vec<u64>,
    /// Settings shared by every run.
    pub base: TrainingConfig,
}

pub const DEFAULT_VOCAB_SIZE: usize = 20_000;

/// One grid point, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub vocab_size: usize,
    pub config: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub spec: RunSpec,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub seconds: f64,
    pub status: String,
}

impl RunRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    /// CSV fields, with or without the wall-clock column.
    pub fn record(&self, with_seconds: bool) -> Vec<String> {
        let c = &self.spec.config;
        let acc = |a: Option<f64>| a.map(|v| format!("{v:.4}")).unwrap_or_default();
        let mut r = vec![
            c.embed_units.to_string(),
            c.lstm_units.to_string(),
            self.spec.vocab_size.to_string(),
            c.optimizer.to_string(),
            c.batch_size.to_string(),
            c.activation.to_string(),
            c.seed.to_string(),
            acc(self.train_acc),
            acc(self.test_acc),
        ];
        if with_seconds {
            r.push(format!("{:.3}", self.seconds));
        }
        r.push(self.status.clone());
        r
    }
}

fn nonempty<T>(name: &str, axis: Option<Axis<T>>, default: T) -> Result<Vec<T>, CliError> {
    let v = axis.map_or_else(|| vec![default], Axis::into_vec);
    if v.is_empty() {
        return Err(CliError::Usage(format!("grid axis {name} is empty")));
    }
    Ok(v)
}

impl SweepGrid {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: RawGrid = toml::from_str(text).map_err(|e| CliError::Usage(format!("bad grid: {}", e.message())))?;
        let d = TrainingConfig::default();
        let mut base = TrainingConfig {
            learning_rate: raw.learning_rate,
            clip_norm: raw.clip_norm,
            ..TrainingConfig::default()
        };
        if let Some(e) = raw.epochs {
            base.epochs = e;
        }
        if let Some(l) = raw.max_len {
            base.max_len = l;
        }
        if let Some(p) = raw.dropout {
            base.dropout = p;
        }
        base.validate()?;
        Ok(SweepGrid {
            embed_units: nonempty("embed_units", raw.embed_units, d.embed_units)?,
            lstm_units: nonempty("lstm_units", raw.lstm_units, d.lstm_units)?,
            vocab_size: nonempty("vocab_size", raw.vocab_size, DEFAULT_VOCAB_SIZE)?,
            optimizer: nonempty("optimizer", raw.optimizer, d.optimizer)?,
            batch_size: nonempty("batch_size", raw.batch_size, d.batch_size)?,
            activation: nonempty("activation", raw.activation, d.activation)?,
            seed: nonempty("seed", raw.seed, d.seed)?,
            base,
        })
    }

    pub fn size(&self) -> usize {
        self.embed_units.len()
            * self.lstm_units.len()
            * self.vocab_size.len()
            * self.optimizer.len()
            * self.batch_size.len()
            * self.activation.len()
            * self.seed.len()
    }

    /// Every grid point, first axis outermost, in CSV column order.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::with_capacity(self.size());
        for &e in &self.embed_units {
            for &l in &self.lstm_units {
                for &v in &self.vocab_size {
                    for &o in &self.optimizer {
                        for &b in &self.batch_size {
                            for &a in &self.activation {
                                for &s in &self.seed {
                                    out.push(RunSpec {
                                        vocab_size: v,
                                        config: TrainingConfig {
                                            embed_units: e,
                                            lstm_units: l,
                                            optimizer: o,
                                            batch_size: b,
                                            activation: a,
                                            seed: s,
                                            ..self.base.clone()
                                        },
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn vocab_sizes(&self) -> BTreeSet<usize> {
        self.vocab_size.iter().copied().collect()
    }
}

pub fn run_one(spec: &RunSpec, train: &Dataset, test: &Dataset, vocab: &Vocabulary) -> RunRow {
    let started = Instant::now();
    let result = train_model(train, &spec.config, vocab).and_then(|(model, report)| {
        let t = evaluate(&model, vocab, test)?;
        Ok((report.train.accuracy(), t.accuracy()))
    });
    let seconds = started.elapsed().as_secs_f64();
    match result {
        Ok((tr, te)) => RunRow {
            spec: spec.clone(),
            train_acc: Some(tr),
            test_acc: Some(te),
            seconds,
            status: "ok".into(),
        },
        Err(e) => RunRow {
            spec: spec.clone(),
            train_acc: None,
            test_acc: None,
            seconds,
            status: format!("failed: {e}"),
        },
    }
}

/// Runs every spec on up to `threads` workers. `sink` sees the rows in spec
/// order as soon as each prefix is complete.
pub fn run_all(
    specs: &[RunSpec],
    train: &Dataset,
    test: &Dataset,
    vocabs: &BTreeMap<usize, Vocabulary>,
    threads: usize,
    mut sink: impl FnMut(&RunRow) -> std::io::Result<()>,
) -> Result<Vec<RunRow>, CliError> {
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, RunRow)>();
    let mut rows: Vec<Option<RunRow>> = vec![None; specs.len()];
    let mut written = 0;
    std::thread::scope(|s| -> Result<(), CliError> {
        for _ in 0..threads.clamp(1, specs.len().max(1)) {
            let tx = tx.clone();
            let next = &next;
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = specs.get(i) else { break };
                let row = run_one(spec, train, test, &vocabs[&spec.vocab_size]);
                if tx.send((i, row)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, row) in rx {
            rows[i] = Some(row);
            while let Some(Some(r)) = rows.get(written) {
                sink(r).map_err(|e| CliError::Run(format!("writing sweep row: {e}")))?;
                written += 1;
            }
        }
        Ok(())
    })?;
    Ok(rows.into_iter().map(|r| r.expect("every run reports")).collect())
}

pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_and_list_axes() {
        let g = SweepGrid::from_toml("embed_units = [16, 32]\nlstm_units = 8\noptimizer = [\"adam\", \"rmsprop\"]\nepochs = 2\n").unwrap();
        assert_eq!(g.size(), 4);
        assert_eq!(g.lstm_units, vec![8]);
        assert_eq!(g.vocab_size, vec![DEFAULT_VOCAB_SIZE]);
        let runs = g.runs();
        assert_eq!(runs.len(), 4);
        assert_eq!(runs[0].config.embed_units, 16);
        assert_eq!(runs[1].config.optimizer, OptimizerKind::Rmsprop);
        assert_eq!(runs[3].config.embed_units, 32);
        assert!(runs.iter().all(|r| r.config.epochs == 2));
    }

    #[test]
    fn bad_grids_are_usage_errors() {
        for text in ["embed_units = []", "colour = [1]", "epochs = 0", "optimizer = [\"sgdx\"]"] {
            assert!(matches!(SweepGrid::from_toml(text), Err(CliError::Usage(_))), "{text}");
        }
    }

    #[test]
    fn record_omits_seconds_on_request() {
        let row = RunRow {
            spec: RunSpec {
                vocab_size: 50,
                config: TrainingConfig::default(),
            },
            train_acc: Some(1.0),
            test_acc: None,
            seconds: 1.5,
            status: "ok".into(),
        };
        assert_eq!(row.record(true).len(), CSV_HEADER.len());
        assert_eq!(row.record(false).len(), CSV_HEADER.len() - 1);
        assert_eq!(row.record(false)[7], "1.0000");
        assert_eq!(row.record(false)[8], "");
    }
}
