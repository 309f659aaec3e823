//! Bag-of-words corpora: UCI ingestion, vocabulary truncation and splitting.
//!
//! The UCI layout is three header lines (`D`, `W`, `NNZ`) followed by `NNZ`
//! lines of `docID wordID count`, all 1-indexed. Internally word and document
//! ids are 0-indexed.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::invalid("vocabulary must not be empty"));
        }
        let mut seen = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if let Some(prev) = seen.insert(t.as_str(), i) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate token {t:?} (first seen at line {})", prev + 1),
                });
            }
        }
        Ok(Vocabulary { tokens })
    }

    /// Placeholder vocabulary whose tokens are the 1-based word ids.
    pub fn numbered(size: usize) -> Self {
        Vocabulary {
            tokens: (1..=size).map(|i| i.to_string()).collect(),
        }
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let t = line.trim();
            if !t.is_empty() {
                tokens.push(t.to_string());
            }
        }
        Vocabulary::new(tokens)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }
}

/// One document as sparse word counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    /// `(word id, count)` sorted by word id; counts are strictly positive.
    counts: Vec<(u32, u32)>,
    length: u32,
    /// Label indices into [`Corpus::label_names`], sorted and distinct.
    pub labels: Vec<u32>,
}

impl Document {
    /// Builds a document from `(word, count)` pairs. Duplicate words are
    /// summed; zero counts are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>, labels: Vec<u32>) -> Result<Self> {
        let mut counts: Vec<(u32, u32)> = pairs.into_iter().filter(|&(_, c)| c > 0).collect();
        counts.sort_unstable_by_key(|&(w, _)| w);
        counts.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        let length: u64 = counts.iter().map(|&(_, c)| c as u64).sum();
        if length == 0 {
            return Err(Error::invalid("document must contain at least one word"));
        }
        let length = u32::try_from(length).map_err(|_| Error::invalid("document too long"))?;
        let mut labels = labels;
        labels.sort_unstable();
        labels.dedup();
        Ok(Document { counts, length, labels })
    }

    /// Builds a document from a dense count vector.
    pub fn from_dense(counts: &[u32], labels: Vec<u32>) -> Result<Self> {
        Document::from_pairs(
            counts.iter().enumerate().map(|(k, &c)| (k as u32, c)),
            labels,
        )
    }

    pub fn counts(&self) -> &[(u32, u32)] {
        &self.counts
    }

    /// Number of words `N`.
    pub fn len(&self) -> u32 {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn dense(&self, vocab_size: usize) -> Vec<f64> {
        let mut v = vec![0.0; vocab_size];
        for &(w, c) in &self.counts {
            v[w as usize] = c as f64;
        }
        v
    }

    pub fn dense_counts(&self, vocab_size: usize) -> Vec<u32> {
        let mut v = vec![0; vocab_size];
        for &(w, c) in &self.counts {
            v[w as usize] = c;
        }
        v
    }

    pub fn max_word(&self) -> Option<u32> {
        self.counts.last().map(|&(w, _)| w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub documents: Vec<Document>,
    pub label_names: Vec<String>,
    pub splits: Vec<Split>,
}

impl Corpus {
    /// Assembles a corpus with every document tagged `train`.
    pub fn new(vocabulary: Vocabulary, documents: Vec<Document>, label_names: Vec<String>) -> Result<Self> {
        let k = vocabulary.len() as u32;
        for (i, d) in documents.iter().enumerate() {
            if d.max_word().is_some_and(|w| w >= k) {
                return Err(Error::invalid(format!("document {i} uses a word id >= {k}")));
            }
            if d.labels.iter().any(|&l| l as usize >= label_names.len()) {
                return Err(Error::invalid(format!("document {i} has an unknown label")));
            }
        }
        let splits = vec![Split::Train; documents.len()];
        Ok(Corpus {
            vocabulary,
            documents,
            label_names,
            splits,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn total_words(&self) -> u64 {
        self.documents.iter().map(|d| d.len() as u64).sum()
    }

    pub fn split_documents(&self, split: Split) -> Vec<&Document> {
        self.documents
            .iter()
            .zip(&self.splits)
            .filter(|(_, &s)| s == split)
            .map(|(d, _)| d)
            .collect()
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn with_splits(mut self, splits: Vec<Split>) -> Result<Self> {
        if splits.len() != self.documents.len() {
            return Err(Error::shape(format!(
                "{} split tags for {} documents",
                splits.len(),
                self.documents.len()
            )));
        }
        self.splits = splits;
        Ok(self)
    }

    /// Writes the documents in UCI format (words ascending within a document).
    pub fn write_uci<W: Write>(&self, mut w: W) -> Result<()> {
        let nnz: usize = self.documents.iter().map(|d| d.counts.len()).sum();
        writeln!(w, "{}", self.documents.len())?;
        writeln!(w, "{}", self.vocab_size())?;
        writeln!(w, "{nnz}")?;
        for (i, d) in self.documents.iter().enumerate() {
            for &(word, c) in &d.counts {
                writeln!(w, "{} {} {}", i + 1, word + 1, c)?;
            }
        }
        Ok(())
    }

    /// One line per document, space-separated label names.
    pub fn write_labels<W: Write>(&self, mut w: W) -> Result<()> {
        for d in &self.documents {
            let names: Vec<&str> = d.labels.iter().map(|&l| self.label_names[l as usize].as_str()).collect();
            writeln!(w, "{}", names.join(" "))?;
        }
        Ok(())
    }

    pub fn write_splits<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.splits {
            writeln!(w, "{s}")?;
        }
        Ok(())
    }
}

/// Reads one split tag per line.
pub fn read_splits<R: BufRead>(reader: R) -> Result<Vec<Split>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(t.parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("unknown split tag {t:?}"),
        })?);
    }
    Ok(out)
}

fn header_value(line: Option<(usize, std::io::Result<String>)>, expect: usize, what: &str) -> Result<u64> {
    let (_, text) = line.ok_or(Error::Parse {
        line: expect,
        msg: format!("missing header field {what}"),
    })?;
    let text = text?;
    text.trim().parse::<u64>().map_err(|_| Error::Parse {
        line: expect,
        msg: format!("invalid header field {what} {:?}", text.trim()),
    })
}

fn parse_field(tok: Option<&str>, line: usize, what: &str) -> Result<i64> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing {what}"),
    })?;
    tok.parse::<i64>().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {what} {tok:?}"),
    })
}

/// Parses a UCI bag-of-words stream, with optional vocabulary and label
/// streams.
///
/// Duplicate `(doc, word)` triples are summed. Document ids that never occur
/// in the body are dropped together with their label line, so every
/// returned document has `N >= 1`.
pub fn parse_uci_bow<R, V, L>(docword: R, vocabulary: Option<V>, labels: Option<L>) -> Result<Corpus>
where
    R: BufRead,
    V: BufRead,
    L: BufRead,
{
    let mut lines = docword.lines().enumerate().map(|(i, l)| (i + 1, l));
    let n_docs = header_value(lines.next(), 1, "D")? as usize;
    let vocab_size = header_value(lines.next(), 2, "W")? as usize;
    let nnz = header_value(lines.next(), 3, "NNZ")? as usize;
    if vocab_size == 0 {
        return Err(Error::Parse {
            line: 2,
            msg: "vocabulary size must be positive".into(),
        });
    }

    let mut per_doc: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n_docs];
    let mut seen = 0usize;
    let mut last_line = 3;
    for (lineno, text) in lines {
        let text = text?;
        last_line = lineno;
        let t = text.trim();
        if t.is_empty() {
            continue;
        }
        if seen == nnz {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("header/body count mismatch: more than {nnz} triples"),
            });
        }
        let mut toks = t.split_whitespace();
        let doc = parse_field(toks.next(), lineno, "document id")?;
        let word = parse_field(toks.next(), lineno, "word id")?;
        let count = parse_field(toks.next(), lineno, "count")?;
        if toks.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                msg: "expected exactly three fields".into(),
            });
        }
        if doc < 1 || doc as usize > n_docs {
            return Err(Error::Parse {
                line: lineno,
                msg: "document id out of range".into(),
            });
        }
        if word < 1 || word as usize > vocab_size {
            return Err(Error::Parse {
                line: lineno,
                msg: "word id out of range".into(),
            });
        }
        if count <= 0 || count > u32::MAX as i64 {
            return Err(Error::Parse {
                line: lineno,
                msg: "count must be a positive integer".into(),
            });
        }
        per_doc[doc as usize - 1].push((word as u32 - 1, count as u32));
        seen += 1;
    }
    if seen != nnz {
        return Err(Error::Parse {
            line: last_line + 1,
            msg: format!("header/body count mismatch: expected {nnz} triples, found {seen}"),
        });
    }

    let vocabulary = match vocabulary {
        Some(r) => {
            let v = Vocabulary::read(r)?;
            if v.len() != vocab_size {
                return Err(Error::invalid(format!(
                    "vocabulary file has {} tokens, header says {vocab_size}",
                    v.len()
                )));
            }
            v
        }
        None => Vocabulary::numbered(vocab_size),
    };

    let mut label_names: Vec<String> = Vec::new();
    let mut doc_labels: Vec<Vec<u32>> = vec![Vec::new(); n_docs];
    if let Some(r) = labels {
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut rows = 0usize;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if i >= n_docs {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("label file has more than {n_docs} lines"),
                });
            }
            rows += 1;
            for name in line.split_whitespace() {
                let id = *index.entry(name.to_string()).or_insert_with(|| {
                    label_names.push(name.to_string());
                    (label_names.len() - 1) as u32
                });
                doc_labels[i].push(id);
            }
        }
        if rows != n_docs {
            return Err(Error::invalid(format!("label file has {rows} lines, expected {n_docs}")));
        }
    }

    let documents = per_doc
        .into_iter()
        .zip(doc_labels)
        .filter(|(pairs, _)| !pairs.is_empty())
        .map(|(pairs, labels)| Document::from_pairs(pairs, labels))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(vocabulary, documents, label_names)
}

/// Keeps the `k_new` most frequent words, counting frequency over
/// `train` documents only. Ties go to the lower original index; kept words
/// retain their original relative order. Documents left empty are removed.
pub fn truncate_vocabulary(corpus: &Corpus, k_new: usize) -> Result<Corpus> {
    if k_new == 0 {
        return Err(Error::invalid("truncated vocabulary size must be positive"));
    }
    let k = corpus.vocab_size();
    if k_new > k {
        return Err(Error::invalid(format!("cannot truncate {k} words to {k_new}")));
    }
    let mut freq = vec![0u64; k];
    for d in corpus.split_documents(Split::Train) {
        for &(w, c) in d.counts() {
            freq[w as usize] += c as u64;
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| freq[y].cmp(&freq[x]).then(x.cmp(&y)));
    let mut keep: Vec<usize> = order[..k_new].to_vec();
    keep.sort_unstable();

    let mut remap = vec![None; k];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = Some(new as u32);
    }
    let tokens = keep.iter().map(|&i| corpus.vocabulary.token(i).to_string()).collect();
    let vocabulary = Vocabulary::new(tokens)?;

    let mut documents = Vec::new();
    let mut splits = Vec::new();
    for (d, &s) in corpus.documents.iter().zip(&corpus.splits) {
        let pairs: Vec<(u32, u32)> = d
            .counts()
            .iter()
            .filter_map(|&(w, c)| remap[w as usize].map(|nw| (nw, c)))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        documents.push(Document::from_pairs(pairs, d.labels.clone())?);
        splits.push(s);
    }
    Corpus::new(vocabulary, documents, corpus.label_names.clone())?.with_splits(splits)
}

/// Deterministically assigns `train`/`valid`/`test` tags.
///
/// Validation and test sizes are the rounded fractions of the document
/// count; the remainder goes to train.
pub fn split_corpus(corpus: &Corpus, fractions: [f64; 3], seed: u64) -> Result<Corpus> {
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions {fractions:?} must be nonnegative and sum to 1"
        )));
    }
    let n = corpus.len();
    let n_valid = ((fractions[1] * n as f64).round() as usize).min(n);
    let n_test = ((fractions[2] * n as f64).round() as usize).min(n - n_valid);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut splits = vec![Split::Train; n];
    for &i in &order[..n_valid] {
        splits[i] = Split::Valid;
    }
    for &i in &order[n_valid..n_valid + n_test] {
        splits[i] = Split::Test;
    }
    corpus.clone().with_splits(splits)
}
