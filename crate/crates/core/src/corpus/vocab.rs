use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{tokenize, Dataset};

/// Frequency-ranked token index.
///
/// Index 0 is padding, indices `1..=V` are tokens in rank order, and
/// `V + 1` is the shared out-of-vocabulary slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, usize>,
}

pub const PAD_INDEX: usize = 0;

impl Vocabulary {
    /// Builds the top-`max_size` vocabulary from token counts over every text
    /// in `corpus`. Ties in frequency go to the lexicographically smaller
    /// token.
    pub fn build(corpus: &Dataset, max_size: usize) -> Result<Self> {
        if max_size == 0 {
            return Err(Error::Config("vocabulary size must be at least 1".into()));
        }
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for ex in corpus.examples() {
            for tok in tokenize(&ex.text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.as_bytes().cmp(b.0.as_bytes())));
        ranked.truncate(max_size);
        let (tokens, freqs) = ranked.into_iter().unzip();
        Ok(Self::from_ranked(tokens, freqs))
    }

    fn from_ranked(tokens: Vec<String>, freqs: Vec<u64>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + 1))
            .collect();
        Vocabulary {
            tokens,
            freqs,
            index,
        }
    }

    /// Builds a vocabulary from explicit `(token, index)` pairs. Indices must
    /// cover `1..=n` exactly once. Frequencies are set to zero.
    pub fn from_indexed<S: Into<String>>(pairs: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut pairs: Vec<(String, usize)> = pairs.into_iter().map(|(t, i)| (t.into(), i)).collect();
        pairs.sort_by_key(|p| p.1);
        for (expected, (tok, idx)) in (1..).zip(&pairs) {
            if *idx != expected {
                return Err(Error::Config(format!(
                    "token {tok:?} has index {idx}, expected {expected}"
                )));
            }
        }
        let n = pairs.len();
        let vocab = Self::from_ranked(pairs.into_iter().map(|p| p.0).collect(), vec![0; n]);
        if vocab.index.len() != n {
            return Err(Error::Config("duplicate token".into()));
        }
        Ok(vocab)
    }

    /// Number of ranked tokens (V).
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pad_index(&self) -> usize {
        PAD_INDEX
    }

    pub fn oov_index(&self) -> usize {
        self.tokens.len() + 1
    }

    /// Rows needed by an embedding table over this vocabulary (V + 2).
    pub fn table_rows(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.oov_index())
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i)).map(String::as_str)
    }

    pub fn frequency(&self, index: usize) -> Option<u64> {
        index.checked_sub(1).and_then(|i| self.freqs.get(i)).copied()
    }

    /// `(token, index, frequency)` in index order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize, u64)> {
        self.tokens
            .iter()
            .zip(&self.freqs)
            .enumerate()
            .map(|(i, (t, &f))| (t.as_str(), i + 1, f))
    }

    /// TSV form: a `#V=<n>` header, then `token<TAB>index<TAB>frequency`
    /// rows in index order, LF line endings.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#V={}\n", self.len());
        for (tok, idx, freq) in self.entries() {
            let _ = writeln!(out, "{tok}\t{idx}\t{freq}");
        }
        out
    }

    pub fn from_tsv(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "missing #V= header".into()))?;
        let declared: usize = header
            .strip_prefix("#V=")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| err(1, format!("bad header {header:?}")))?;
        let mut tokens = Vec::with_capacity(declared);
        let mut freqs = Vec::with_capacity(declared);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let mut fields = line.split('\t');
            let (Some(tok), Some(idx), Some(freq), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(err(lineno, "expected token<TAB>index<TAB>frequency".into()));
            };
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(err(lineno, format!("invalid token {tok:?}")));
            }
            let idx: usize = idx.parse().map_err(|_| err(lineno, format!("bad index {idx:?}")))?;
            let freq: u64 = freq.parse().map_err(|_| err(lineno, format!("bad frequency {freq:?}")))?;
            if idx != tokens.len() + 1 {
                return Err(err(lineno, format!("index {idx} out of sequence")));
            }
            tokens.push(tok.to_string());
            freqs.push(freq);
        }
        if tokens.len() != declared {
            return Err(err(1, format!("header declares {declared} tokens, found {}", tokens.len())));
        }
        if declared == 0 {
            return Err(err(1, "vocabulary is empty".into()));
        }
        let vocab = Self::from_ranked(tokens, freqs);
        if vocab.index.len() != vocab.len() {
            return Err(err(1, "duplicate token".into()));
        }
        Ok(vocab)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_of_offset(&bytes, e.valid_up_to()),
            message: "invalid UTF-8".into(),
        })?;
        Self::from_tsv(text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, self.to_tsv().as_bytes())
    }
}

pub(crate) fn line_of_offset(bytes: &[u8], offset: usize) -> usize {
    bytes[..offset].iter().filter(|&&b| b == b'\n').count() + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledExample;
    use proptest::prelude::*;

    fn corpus(texts: &[&str]) -> Dataset {
        Dataset::new(
            texts.iter().map(|t| LabeledExample::new(1, *t)).collect(),
            "test",
        )
    }

    #[test]
    fn ranks_by_count_then_bytes() {
        let v = Vocabulary::build(&corpus(&["a b a", "a c"]), 2).unwrap();
        assert_eq!(v.get("a"), Some(1));
        assert_eq!(v.get("b"), Some(2));
        assert_eq!(v.get("c"), None);
        assert_eq!(v.oov_index(), 3);
        assert_eq!(v.frequency(1), Some(3));
    }

    #[test]
    fn fewer_distinct_tokens_than_requested() {
        let v = Vocabulary::build(&corpus(&["x"]), 5).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.get("x"), Some(1));
        assert_eq!(v.oov_index(), 2);
    }

    #[test]
    fn higher_count_wins() {
        let v = Vocabulary::build(&corpus(&["b a b a b"]), 2).unwrap();
        assert_eq!(v.get("b"), Some(1));
        assert_eq!(v.get("a"), Some(2));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = Vocabulary::build(&corpus(&[]), 3).unwrap_err();
        assert_eq!(err.to_string(), "empty corpus");
        assert!(matches!(
            Vocabulary::build(&corpus(&["", "  "]), 3),
            Err(Error::EmptyCorpus)
        ));
        assert!(Vocabulary::build(&corpus(&["a"]), 0).is_err());
    }

    #[test]
    fn tsv_format() {
        let v = Vocabulary::build(&corpus(&["b a b a b"]), 10).unwrap();
        assert_eq!(v.to_tsv(), "#V=2\nb\t1\t3\na\t2\t2\n");
        let back = Vocabulary::from_tsv(&v.to_tsv(), Path::new("v.tsv")).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn tsv_errors_carry_line_numbers() {
        let p = Path::new("v.tsv");
        let e = Vocabulary::from_tsv("#V=2\na\t1\t3\nb\t3\t1\n", p).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        assert!(Vocabulary::from_tsv("V=1\na\t1\t1\n", p).is_err());
        assert!(Vocabulary::from_tsv("#V=3\na\t1\t1\n", p).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_example_order(
            texts in prop::collection::vec("[a-e]( [a-e]){0,6}", 1..12),
            v in 1usize..6,
            seed in any::<u64>(),
        ) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let a = Vocabulary::build(&corpus(&refs), v).unwrap();
            let mut shuffled = refs.clone();
            crate::tensor::Rng::new(seed).shuffle(&mut shuffled);
            let b = Vocabulary::build(&corpus(&shuffled), v).unwrap();
            prop_assert_eq!(&a, &b);
            let freqs: Vec<u64> = a.entries().map(|e| e.2).collect();
            prop_assert!(freqs.windows(2).all(|w| w[0] >= w[1]));
            for (tok, idx, _) in a.entries() {
                prop_assert_eq!(a.index_of(tok), idx);
                prop_assert!(idx != a.pad_index() && idx != a.oov_index());
            }
        }
    }
}
