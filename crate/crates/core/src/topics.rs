//! Final topic structures: consensus k-means clusters, NMF topic
//! assignments, top terms and topic sentences.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::consensus::ConsensusMatrix;
use crate::corpus::{Document, Vocabulary};
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, ClusterAssignment, DenseRows, KMeansConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopicSummary {
    pub topic_id: usize,
    /// Weight-descending.
    pub top_terms: Vec<(String, f64)>,
    /// Document ids.
    pub member_docs: Vec<usize>,
    /// Document id of the representative document.
    pub topic_sentence: Option<usize>,
}

/// k-means with cosine distance on the rows of `C`, diagonal included.
/// Fails with `ZeroVector` when the matrix has no runs, since every row is
/// then zero.
pub fn cluster_consensus(
    c: &ConsensusMatrix,
    k: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<ClusterAssignment> {
    let n = c.len();
    if n > 0 && c.runs() == 0 {
        return Err(Error::ZeroVector { index: 0 });
    }
    let data: Vec<f64> = (0..n)
        .flat_map(|i| c.row(i).iter().map(|&v| v as f64))
        .collect();
    kmeans(&DenseRows::new(n, n, data)?, k, seed, config)
}

/// The `t` terms with the largest weight in column `j` of `W`. Ties keep
/// vocabulary order.
pub fn top_terms(w: &DMatrix<f64>, vocab: &Vocabulary, j: usize, t: usize) -> Vec<(String, f64)> {
    let mut rows: Vec<usize> = (0..w.nrows()).collect();
    rows.sort_by(|&a, &b| w[(b, j)].total_cmp(&w[(a, j)]).then(a.cmp(&b)));
    rows.truncate(t);
    rows.into_iter()
        .map(|r| (vocab.term(r).to_string(), w[(r, j)]))
        .collect()
}

/// Topic with the largest weight for each document; ties go to the lower
/// topic, all-zero columns are unassigned.
pub fn assign_topics(h: &DMatrix<f64>) -> Vec<Option<usize>> {
    (0..h.ncols())
        .map(|j| {
            let mut best: Option<usize> = None;
            for i in 0..h.nrows() {
                let v = h[(i, j)];
                if v > 0.0 && best.map_or(true, |b| v > h[(b, j)]) {
                    best = Some(i);
                }
            }
            best
        })
        .collect()
}

/// Among the documents assigned to `topic`, the one containing the most
/// distinct top terms; ties go to the larger `H` weight, then the lower id.
/// Returns the document id.
pub fn topic_sentence(
    corpus: &[Document],
    top: &[(String, f64)],
    h: &DMatrix<f64>,
    assignment: &[Option<usize>],
    topic: usize,
) -> Result<usize> {
    let terms: HashSet<&str> = top.iter().map(|(t, _)| t.as_str()).collect();
    let mut best: Option<(usize, f64, usize)> = None;
    for (col, doc) in corpus.iter().enumerate() {
        if assignment[col] != Some(topic) {
            continue;
        }
        let hits = doc
            .tokens
            .iter()
            .map(String::as_str)
            .filter(|t| terms.contains(t))
            .collect::<HashSet<_>>()
            .len();
        let weight = h[(topic, col)];
        let better = match best {
            None => true,
            Some((bh, bw, bid)) => {
                hits > bh || (hits == bh && (weight > bw || (weight == bw && doc.id < bid)))
            }
        };
        if better {
            best = Some((hits, weight, doc.id));
        }
    }
    best.map(|(_, _, id)| id).ok_or(Error::EmptyTopic(topic))
}

/// One summary per topic (column of `W`).
pub fn summarize(
    corpus: &[Document],
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    vocab: &Vocabulary,
    t: usize,
) -> Result<Vec<TopicSummary>> {
    if w.ncols() != h.nrows() || h.ncols() != corpus.len() || w.nrows() != vocab.len() {
        return Err(Error::ShapeMismatch(format!(
            "W {}x{}, H {}x{}, {} documents, {} terms",
            w.nrows(),
            w.ncols(),
            h.nrows(),
            h.ncols(),
            corpus.len(),
            vocab.len()
        )));
    }
    let assignment = assign_topics(h);
    (0..w.ncols())
        .map(|j| {
            let top = top_terms(w, vocab, j, t);
            let member_docs = corpus
                .iter()
                .zip(&assignment)
                .filter(|(_, a)| **a == Some(j))
                .map(|(d, _)| d.id)
                .collect();
            let topic_sentence = match topic_sentence(corpus, &top, h, &assignment, j) {
                Ok(id) => Some(id),
                Err(Error::EmptyTopic(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(TopicSummary {
                topic_id: j,
                top_terms: top,
                member_docs,
                topic_sentence,
            })
        })
        .collect()
}
