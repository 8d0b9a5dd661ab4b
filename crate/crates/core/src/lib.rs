//! Binary text classification with a trainable embedding, a single LSTM
//! layer, dropout and a dense sigmoid head, plus bag-of-words linear
//! baselines for comparison.
//!
//! ```no_run
//! use seqclass::corpus::{gen_synthetic, split, Task, Vocabulary};
//! use seqclass::train::{evaluate, train_model, TrainingConfig};
//!
//! let data = gen_synthetic(Task::Keyword, 2_000, 200, 1)?;
//! let (train, test) = split(&data, 0.8, 1)?;
//! let vocab = Vocabulary::build(&train, 200)?;
//! let config = TrainingConfig { embed_units: 16, lstm_units: 16, epochs: 5, ..Default::default() };
//! let (model, _report) = train_model(&train, &config, &vocab)?;
//! println!("{:.3}", evaluate(&model, &vocab, &test)?.accuracy());
//! # Ok::<(), seqclass::Error>(())
//! ```

pub mod baseline;
pub mod corpus;
mod error;
mod io_util;
pub mod model_io;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use io_util::write_atomic;
