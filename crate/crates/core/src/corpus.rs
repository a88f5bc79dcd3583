//! Document ingestion, text normalization, duplicate removal and the TF-IDF
//! term-document matrix.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::sparsemat::TermDocMatrix;

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const SPANISH_STOPWORDS: &str = include_str!("../data/stopwords_es.txt");

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Document {
    pub id: usize,
    pub raw: String,
    pub tokens: Vec<String>,
}

/// A set of terms removed during normalization.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StopList(HashSet<String>);

impl StopList {
    pub fn empty() -> Self {
        StopList(HashSet::new())
    }

    /// Parses one term per line; blank lines and `#` comments are ignored.
    /// Terms are lowercased.
    pub fn parse(text: &str) -> Self {
        StopList(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty())
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    pub fn spanish() -> Self {
        Self::parse(SPANISH_STOPWORDS)
    }

    /// English and Spanish lists combined.
    pub fn bilingual() -> Self {
        let mut s = Self::english();
        s.extend(&Self::spanish());
        s
    }

    pub fn extend(&mut self, other: &StopList) {
        self.0.extend(other.0.iter().cloned());
    }

    pub fn insert(&mut self, term: &str) {
        self.0.insert(term.to_lowercase());
    }

    pub fn contains(&self, term: &str) -> bool {
        self.0.contains(term)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<S> for StopList {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        StopList(
            iter.into_iter()
                .map(|s| s.as_ref().to_lowercase())
                .collect(),
        )
    }
}

/// Text normalization steps. Each one can be switched off independently.
pub struct Normalizer {
    pub lowercase: bool,
    pub strip_urls: bool,
    pub strip_mentions: bool,
    pub stoplist: StopList,
    stemmer: Option<Stemmer>,
}

impl Normalizer {
    pub fn new(stoplist: StopList, stem: bool) -> Self {
        Normalizer {
            lowercase: true,
            strip_urls: true,
            strip_mentions: true,
            stoplist,
            stemmer: stem.then(|| Stemmer::create(Algorithm::English)),
        }
    }

    pub fn stems(&self) -> bool {
        self.stemmer.is_some()
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for raw in text.split_whitespace() {
            let word = if self.lowercase {
                raw.to_lowercase()
            } else {
                raw.to_string()
            };
            if self.strip_urls && is_url(&word) {
                continue;
            }
            if self.strip_mentions && word.starts_with('@') {
                continue;
            }
            // apostrophes join ("don't" -> "dont"); other punctuation splits
            let cleaned: String = word
                .chars()
                .filter(|&c| c != '\'' && c != '\u{2019}')
                .map(|c| if c.is_alphanumeric() { c } else { ' ' })
                .collect();
            for piece in cleaned.split_whitespace() {
                if self.stoplist.contains(piece) {
                    continue;
                }
                let term = match &self.stemmer {
                    Some(s) => s.stem(piece).into_owned(),
                    None => piece.to_string(),
                };
                if !term.is_empty() {
                    out.push(term);
                }
            }
        }
        out
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer::new(StopList::bilingual(), true)
    }
}

fn is_url(word: &str) -> bool {
    let w = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    w.starts_with("http://") || w.starts_with("https://") || w.starts_with("www.")
}

/// Lowercases, strips URLs, @-mentions and punctuation (hashtags keep their
/// word), drops stop-list terms and optionally stems.
pub fn tokenize(text: &str, stoplist: &StopList, stem: bool) -> Vec<String> {
    Normalizer::new(stoplist.clone(), stem).tokenize(text)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// One document per line; the id is the 0-based line number.
    #[default]
    Lines,
    /// `id<TAB>text` with integer ids.
    Tsv,
}

/// Parses documents from text. Blank documents are skipped but keep their
/// line-number ids in `Lines` mode.
pub fn parse_documents(
    text: &str,
    format: InputFormat,
    normalizer: &Normalizer,
    origin: &Path,
) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in text.lines().enumerate() {
        let (id, body) = match format {
            InputFormat::Lines => (line_no, line),
            InputFormat::Tsv => {
                if line.trim().is_empty() {
                    continue;
                }
                let (id, body) = line.split_once('\t').ok_or_else(|| Error::Parse {
                    path: origin.to_path_buf(),
                    message: format!("line {}: expected `id<TAB>text`", line_no + 1),
                })?;
                let id: usize = id.trim().parse().map_err(|_| Error::Parse {
                    path: origin.to_path_buf(),
                    message: format!(
                        "line {}: id `{}` is not a nonnegative integer",
                        line_no + 1,
                        id
                    ),
                })?;
                (id, body)
            }
        };
        if body.trim().is_empty() {
            continue;
        }
        if !seen.insert(id) {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                message: format!("line {}: duplicate document id {id}", line_no + 1),
            });
        }
        docs.push(Document {
            id,
            raw: body.to_string(),
            tokens: normalizer.tokenize(body),
        });
    }
    Ok(docs)
}

pub fn read_documents(
    path: &Path,
    format: InputFormat,
    normalizer: &Normalizer,
) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_documents(&text, format, normalizer, path)
}

/// Collapses documents with identical token multisets onto the
/// lowest-id representative. Survivors keep their input order.
pub fn remove_duplicates(corpus: Vec<Document>) -> (Vec<Document>, usize) {
    let mut best: HashMap<Vec<&str>, usize> = HashMap::new();
    for (pos, doc) in corpus.iter().enumerate() {
        let mut key: Vec<&str> = doc.tokens.iter().map(String::as_str).collect();
        key.sort_unstable();
        best.entry(key)
            .and_modify(|p| {
                if doc.id < corpus[*p].id {
                    *p = pos;
                }
            })
            .or_insert(pos);
    }
    let mut keep = vec![false; corpus.len()];
    for &p in best.values() {
        keep[p] = true;
    }
    let total = corpus.len();
    let kept: Vec<Document> = corpus
        .into_iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then_some(d))
        .collect();
    let removed = total - kept.len();
    (kept, removed)
}

/// Terms backing the rows of a term-document matrix.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_frequency: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, row: usize) -> &str {
        &self.terms[row]
    }

    pub fn doc_frequency(&self, row: usize) -> usize {
        self.doc_frequency[row]
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }
}

/// Builds the TF-IDF matrix: `tf(t,d) · ln(n / df(t))` with raw counts,
/// followed by unit-norm column scaling. Terms present in every document
/// carry no weight and are left out of the vocabulary. Column `j` is
/// `corpus[j]`.
pub fn build_tdm(corpus: &[Document]) -> Result<(TermDocMatrix, Vocabulary)> {
    let n = corpus.len();
    let mut first_seen: Vec<&str> = Vec::new();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        let distinct: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for t in doc.tokens.iter().map(String::as_str) {
            if !df.contains_key(t) {
                first_seen.push(t);
                df.insert(t, 0);
            }
        }
        for t in distinct {
            *df.get_mut(t).expect("registered above") += 1;
        }
    }

    let mut vocab = Vocabulary::default();
    for t in first_seen {
        let f = df[t];
        if f < n {
            vocab.index.insert(t.to_string(), vocab.terms.len());
            vocab.terms.push(t.to_string());
            vocab.doc_frequency.push(f);
        }
    }
    if vocab.is_empty() {
        return Err(Error::AllDocumentsEmpty);
    }

    let idf: Vec<f64> = vocab
        .doc_frequency
        .iter()
        .map(|&f| (n as f64 / f as f64).ln())
        .collect();
    let columns = corpus
        .iter()
        .map(|doc| {
            let mut tf: HashMap<usize, usize> = HashMap::new();
            for t in &doc.tokens {
                if let Some(r) = vocab.index_of(t) {
                    *tf.entry(r).or_default() += 1;
                }
            }
            tf.into_iter()
                .map(|(r, c)| (r, c as f64 * idf[r]))
                .collect()
        })
        .collect();
    let mut tdm = TermDocMatrix::from_columns(vocab.len(), columns)?;
    tdm.normalize_columns();
    Ok((tdm, vocab))
}

/// Repeatedly drops documents whose column is empty and rebuilds the matrix
/// until every column is nonzero. Returns the surviving documents alongside
/// their matrix.
pub fn build_tdm_nonempty(
    mut corpus: Vec<Document>,
) -> Result<(Vec<Document>, TermDocMatrix, Vocabulary)> {
    corpus.retain(|d| !d.tokens.is_empty());
    loop {
        if corpus.is_empty() {
            return Err(Error::AllDocumentsEmpty);
        }
        let (tdm, vocab) = build_tdm(&corpus)?;
        let empty: HashSet<usize> = (0..tdm.cols())
            .filter(|&j| tdm.is_column_empty(j))
            .collect();
        if empty.is_empty() {
            return Ok((corpus, tdm, vocab));
        }
        corpus = corpus
            .into_iter()
            .enumerate()
            .filter_map(|(j, d)| (!empty.contains(&j)).then_some(d))
            .collect();
    }
}
