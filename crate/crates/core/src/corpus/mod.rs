//! Text preparation: tokenization, vocabulary, fixed-length encoding and
//! dataset handling.

mod dataset;
mod synth;
mod tokenize;
mod vocab;

pub use dataset::{balanced_sample, split, Dataset, LabeledExample};
pub use synth::{gen_synthetic, Task, ORDER_MARKERS, TRIGGERS};
pub use tokenize::tokenize;
pub use vocab::{Vocabulary, PAD_INDEX};

pub(crate) use vocab::line_of_offset;

/// Default sequence length for encoded messages.
pub const DEFAULT_MAX_LEN: usize = 50;

/// A message as the network sees it: exactly `max_len` vocabulary indices,
/// left-padded with [`PAD_INDEX`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedMessage {
    pub indices: Vec<usize>,
    pub original_len: usize,
}

impl EncodedMessage {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of leading pad entries.
    pub fn pad_count(&self) -> usize {
        self.indices.len() - self.original_len.min(self.indices.len())
    }
}

/// Maps tokens to indices, keeping the first `max_len` tokens and padding
/// shorter messages on the left.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> EncodedMessage {
    assert!(max_len >= 1, "max_len must be positive");
    let kept = tokens.len().min(max_len);
    let mut indices = vec![PAD_INDEX; max_len - kept];
    indices.extend(tokens[..kept].iter().map(|t| vocab.index_of(t.as_ref())));
    EncodedMessage {
        indices,
        original_len: tokens.len(),
    }
}

/// Tokenizes and encodes raw text.
pub fn encode_text(text: &str, vocab: &Vocabulary, max_len: usize) -> EncodedMessage {
    encode(&tokenize(text), vocab, max_len)
}
