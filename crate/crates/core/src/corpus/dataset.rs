use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub label: u8,
    pub text: String,
    pub language: Option<String>,
}

impl LabeledExample {
    pub fn new(label: u8, text: impl Into<String>) -> Self {
        assert!(label <= 1, "labels are binary");
        LabeledExample {
            label,
            text: text.into(),
            language: None,
        }
    }

    pub fn with_language(mut self, lang: impl Into<String>) -> Self {
        self.language = Some(lang.into());
        self
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    provenance: String,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.examples == other.examples
    }
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, provenance: impl Into<String>) -> Self {
        Dataset {
            examples,
            provenance: provenance.into(),
        }
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    /// Serializes as `label<TAB>[lang<TAB>]text` rows. Backslash, tab, CR
    /// and LF inside text are escaped as `\\`, `\t`, `\r`, `\n`.
    pub fn to_tsv(&self) -> Result<String> {
        let mut out = String::new();
        for ex in &self.examples {
            let _ = write!(out, "{}\t", ex.label);
            if let Some(lang) = &ex.language {
                if !valid_language(lang) {
                    return Err(Error::Config(format!("invalid language tag {lang:?}")));
                }
                let _ = write!(out, "{lang}\t");
            }
            escape_into(&ex.text, &mut out);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut examples = Vec::new();
        for (i, line) in text.split('\n').enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let mut fields = line.splitn(3, '\t');
            let label = match fields.next() {
                Some("0") => 0,
                Some("1") => 1,
                Some(other) => return Err(err(format!("label must be 0 or 1, got {other:?}"))),
                None => unreachable!(),
            };
            let example = match (fields.next(), fields.next()) {
                (Some(text), None) => LabeledExample::new(label, unescape(text)),
                (Some(lang), Some(text)) => {
                    if !valid_language(lang) {
                        return Err(err(format!("invalid language tag {lang:?}")));
                    }
                    LabeledExample::new(label, unescape(text)).with_language(lang)
                }
                _ => return Err(err("expected label<TAB>text".into())),
            };
            examples.push(example);
        }
        Ok(Dataset::new(examples, path.display().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: super::line_of_offset(&bytes, e.valid_up_to()),
            message: "invalid UTF-8".into(),
        })?;
        Self::from_tsv(text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, self.to_tsv()?.as_bytes())
    }

    /// SHA-256 over labels and texts, used to check that two evaluations ran
    /// on the same data.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for ex in &self.examples {
            h.update([ex.label]);
            h.update((ex.text.len() as u64).to_le_bytes());
            h.update(ex.text.as_bytes());
        }
        crate::io_util::to_hex(&h.finalize())
    }
}

fn valid_language(lang: &str) -> bool {
    !lang.is_empty() && lang.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn escape_into(text: &str, out: &mut String) {
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
}

fn unescape(text: &str) -> String {
    if !text.contains('\\') {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Draws `min(#label0, #label1)` examples of each class without replacement
/// and shuffles the result.
pub fn balanced_sample(data: &Dataset, seed: u64) -> Result<Dataset> {
    let mut by_class: [Vec<&LabeledExample>; 2] = [Vec::new(), Vec::new()];
    for ex in data.examples() {
        by_class[ex.label as usize].push(ex);
    }
    for (label, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::ClassMissing(label as u8));
        }
    }
    let n = by_class[0].len().min(by_class[1].len());
    let mut rng = Rng::new(seed);
    let mut picked = Vec::with_capacity(2 * n);
    for members in &mut by_class {
        rng.shuffle(members);
        picked.extend(members[..n].iter().map(|&e| e.clone()));
    }
    rng.shuffle(&mut picked);
    Ok(Dataset::new(
        picked,
        format!("{} | balanced seed={seed}", data.provenance()),
    ))
}

/// Shuffles and partitions into `floor(train_fraction * n)` training
/// examples and the rest.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidFraction(train_fraction));
    }
    if data.len() < 2 {
        return Err(Error::TooFewExamples {
            needed: 2,
            got: data.len(),
        });
    }
    let mut examples = data.examples().to_vec();
    Rng::new(seed).shuffle(&mut examples);
    let n_train = (train_fraction * examples.len() as f64).floor() as usize;
    let test = examples.split_off(n_train);
    let prov = data.provenance();
    Ok((
        Dataset::new(examples, format!("{prov} | train {train_fraction} seed={seed}")),
        Dataset::new(test, format!("{prov} | test {train_fraction} seed={seed}")),
    ))
}
