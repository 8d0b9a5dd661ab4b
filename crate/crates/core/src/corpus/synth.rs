//! Synthetic corpora for experiments that need known ground truth.
//!
//! Filler tokens are `w0 .. w{vocab_size-1}`, drawn uniformly.
//!
//! * [`Task::Keyword`]: label 1 iff the message contains a token from
//!   [`TRIGGERS`]. Every message has 5 to 20 fillers; positives get one or two
//!   triggers inserted at random positions.
//! * [`Task::Order`]: every message holds `alpha` and `beta` exactly once
//!   among 5 to 20 fillers; label 1 iff `alpha` comes first. Examples are
//!   generated in pairs sharing the same fillers and marker positions with
//!   the markers swapped, so for even `n` the token multisets of the two
//!   classes are identical.

use std::str::FromStr;

use crate::error::Error;
use crate::tensor::Rng;

use super::{Dataset, LabeledExample};

pub const TRIGGERS: [&str; 5] = ["refund", "broken", "cancel", "urgent", "help"];
pub const ORDER_MARKERS: [&str; 2] = ["alpha", "beta"];

const MIN_FILLERS: usize = 5;
const MAX_FILLERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Keyword,
    Order,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "keyword" => Ok(Task::Keyword),
            "order" => Ok(Task::Order),
            other => Err(Error::Config(format!("unknown task {other:?} (keyword|order)"))),
        }
    }
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Keyword => "keyword",
            Task::Order => "order",
        }
    }
}

/// Generates `n` examples, half of each label (`n / 2` negatives), in a
/// seeded random order.
pub fn gen_synthetic(task: Task, n: usize, vocab_size: usize, seed: u64) -> crate::Result<Dataset> {
    if n < 2 {
        return Err(Error::TooFewExamples { needed: 2, got: n });
    }
    if vocab_size < 10 {
        return Err(Error::Config(format!("vocab_size must be at least 10, got {vocab_size}")));
    }
    let mut rng = Rng::new(seed);
    let mut examples = match task {
        Task::Keyword => keyword(n, vocab_size, &mut rng),
        Task::Order => order(n, vocab_size, &mut rng),
    };
    rng.shuffle(&mut examples);
    Ok(Dataset::new(
        examples,
        format!("synthetic task={} n={n} vocab_size={vocab_size} seed={seed}", task.name()),
    ))
}

fn fillers(vocab_size: usize, rng: &mut Rng) -> Vec<String> {
    let len = rng.between(MIN_FILLERS, MAX_FILLERS);
    (0..len).map(|_| format!("w{}", rng.below(vocab_size))).collect()
}

fn keyword(n: usize, vocab_size: usize, rng: &mut Rng) -> Vec<LabeledExample> {
    (0..n)
        .map(|i| {
            let label = u8::from(i >= n / 2);
            let mut words = fillers(vocab_size, rng);
            if label == 1 {
                let count = rng.between(1, 2);
                for _ in 0..count {
                    let pos = rng.below(words.len() + 1);
                    words.insert(pos, TRIGGERS[rng.below(TRIGGERS.len())].to_string());
                }
            }
            LabeledExample::new(label, words.join(" "))
        })
        .collect()
}

fn order(n: usize, vocab_size: usize, rng: &mut Rng) -> Vec<LabeledExample> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let words = fillers(vocab_size, rng);
        let total = words.len() + 2;
        let first = rng.below(total);
        let mut second = rng.below(total - 1);
        if second >= first {
            second += 1;
        }
        let (early, late) = (first.min(second), first.max(second));
        for label in [1u8, 0] {
            if out.len() == n {
                break;
            }
            let (a, b) = if label == 1 { (early, late) } else { (late, early) };
            let mut msg = Vec::with_capacity(total);
            let mut rest = words.iter();
            for pos in 0..total {
                if pos == a {
                    msg.push(ORDER_MARKERS[0]);
                } else if pos == b {
                    msg.push(ORDER_MARKERS[1]);
                } else {
                    msg.push(rest.next().expect("filler count").as_str());
                }
            }
            out.push(LabeledExample::new(label, msg.join(" ")));
        }
    }
    out
}
