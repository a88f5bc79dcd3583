//! Output files: GEXF graphs for Gephi, word-count tables, topic and
//! membership TSVs, and the eigenvalue table.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::consensus::ConsensusMatrix;
use crate::corpus::{Document, Vocabulary};
use crate::error::{Error, Result};
use crate::spectral::LaplacianResult;
use crate::topics::TopicSummary;

const GEXF_NS: &str = "http://www.gexf.net/1.2draft";
const VIZ_NS: &str = "http://www.gexf.net/1.2draft/viz";

/// Escapes XML markup and drops characters XML 1.0 cannot carry.
pub fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\t' | '\n' | '\r' => out.push(ch),
            c if (c as u32) < 0x20 || c == '\u{FFFE}' || c == '\u{FFFF}' => {}
            c => out.push(c),
        }
    }
    out
}

/// Distinct, deterministic color for a group index.
pub fn palette(index: usize) -> (u8, u8, u8) {
    let hue = (index as f64 * 137.507_764) % 360.0;
    let (s, v) = (0.65, 0.9);
    let c = v * s;
    let x = c * (1.0 - ((hue / 60.0) % 2.0 - 1.0).abs());
    let (r, g, b) = match (hue / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to = |u: f64| ((u + m) * 255.0).round() as u8;
    (to(r), to(g), to(b))
}

fn gexf_header<W: Write>(out: &mut W, description: &str, edge_type: &str) -> io::Result<()> {
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        out,
        r#"<gexf xmlns="{GEXF_NS}" xmlns:viz="{VIZ_NS}" version="1.2">"#
    )?;
    writeln!(out, "  <meta>")?;
    writeln!(out, "    <creator>topicmine</creator>")?;
    writeln!(
        out,
        "    <description>{}</description>",
        xml_escape(description)
    )?;
    writeln!(out, "  </meta>")?;
    writeln!(
        out,
        r#"  <graph mode="static" defaultedgetype="{edge_type}">"#
    )
}

fn label(doc: &Document) -> String {
    xml_escape(doc.raw.trim())
}

/// Undirected co-clustering graph: a node per document carrying its cluster
/// label, and an edge of weight `C(i,j)` for every pair with
/// `C(i,j) > threshold`. Returns the number of edges.
pub fn write_gexf_consensus<W: Write>(
    mut out: W,
    c: &ConsensusMatrix,
    docs: &[Document],
    labels: Option<&[usize]>,
    threshold: u32,
) -> Result<usize> {
    let n = c.len();
    if docs.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: docs.len(),
        });
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: l.len(),
            });
        }
    }
    let io = |e| Error::io("consensus.gexf", e);
    let mut edges = 0;
    (|| -> io::Result<()> {
        gexf_header(
            &mut out,
            &format!(
                "documents linked when co-clustered more than {threshold} of {} times",
                c.runs()
            ),
            "undirected",
        )?;
        writeln!(out, r#"    <attributes class="node">"#)?;
        writeln!(
            out,
            r#"      <attribute id="cluster" title="cluster" type="integer"/>"#
        )?;
        writeln!(out, "    </attributes>")?;
        writeln!(out, "    <nodes>")?;
        for (i, d) in docs.iter().enumerate() {
            match labels {
                Some(l) => {
                    let (r, g, b) = palette(l[i]);
                    writeln!(out, r#"      <node id="d{}" label="{}">"#, d.id, label(d))?;
                    writeln!(
                        out,
                        r#"        <attvalues><attvalue for="cluster" value="{}"/></attvalues>"#,
                        l[i]
                    )?;
                    writeln!(out, r#"        <viz:color r="{r}" g="{g}" b="{b}"/>"#)?;
                    writeln!(out, "      </node>")?;
                }
                None => writeln!(out, r#"      <node id="d{}" label="{}"/>"#, d.id, label(d))?,
            }
        }
        writeln!(out, "    </nodes>")?;
        writeln!(out, "    <edges>")?;
        for i in 0..n {
            for j in i + 1..n {
                let w = c.get(i, j);
                if w > threshold {
                    writeln!(
                        out,
                        r#"      <edge id="{edges}" source="d{}" target="d{}" weight="{w}"/>"#,
                        docs[i].id, docs[j].id
                    )?;
                    edges += 1;
                }
            }
        }
        writeln!(out, "    </edges>")?;
        writeln!(out, "  </graph>")?;
        writeln!(out, "</gexf>")?;
        out.flush()
    })()
    .map_err(io)?;
    Ok(edges)
}

/// Directed document-to-topic graph. Document `j` links to topic `i` when
/// `H(i,j) > 0` and `H(i,j) ≥ cutoff · max_i H(i,j)`; the edge weight is
/// `H(i,j)`. Documents are colored by their strongest topic. Returns the
/// number of edges.
pub fn write_gexf_bipartite<W: Write>(
    mut out: W,
    h: &DMatrix<f64>,
    docs: &[Document],
    cutoff: f64,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&cutoff) {
        return Err(Error::InvalidParameter(format!(
            "cutoff {cutoff} outside [0, 1]"
        )));
    }
    if docs.len() != h.ncols() {
        return Err(Error::LengthMismatch {
            expected: h.ncols(),
            found: docs.len(),
        });
    }
    let assignment = crate::topics::assign_topics(h);
    let io = |e| Error::io("nmf_bipartite.gexf", e);
    let mut edges = 0;
    (|| -> io::Result<()> {
        gexf_header(&mut out, "documents linked to the topics they load on", "directed")?;
        writeln!(out, r#"    <attributes class="node">"#)?;
        writeln!(out, r#"      <attribute id="kind" title="kind" type="string"/>"#)?;
        writeln!(out, r#"      <attribute id="topic" title="topic" type="integer"/>"#)?;
        writeln!(out, "    </attributes>")?;
        writeln!(out, "    <nodes>")?;
        for t in 0..h.nrows() {
            let (r, g, b) = palette(t);
            writeln!(out, r#"      <node id="t{t}" label="topic {t}">"#)?;
            writeln!(out, r#"        <attvalues><attvalue for="kind" value="topic"/><attvalue for="topic" value="{t}"/></attvalues>"#)?;
            writeln!(out, r#"        <viz:color r="{r}" g="{g}" b="{b}"/>"#)?;
            writeln!(out, "      </node>")?;
        }
        for (j, d) in docs.iter().enumerate() {
            writeln!(out, r#"      <node id="d{}" label="{}">"#, d.id, label(d))?;
            match assignment[j] {
                Some(t) => {
                    let (r, g, b) = palette(t);
                    writeln!(out, r#"        <attvalues><attvalue for="kind" value="document"/><attvalue for="topic" value="{t}"/></attvalues>"#)?;
                    writeln!(out, r#"        <viz:color r="{r}" g="{g}" b="{b}"/>"#)?;
                }
                None => {
                    writeln!(out, r#"        <attvalues><attvalue for="kind" value="document"/><attvalue for="topic" value="-1"/></attvalues>"#)?;
                    writeln!(out, r#"        <viz:color r="160" g="160" b="160"/>"#)?;
                }
            }
            writeln!(out, "      </node>")?;
        }
        writeln!(out, "    </nodes>")?;
        writeln!(out, "    <edges>")?;
        for (j, d) in docs.iter().enumerate() {
            let col = h.column(j);
            let max = col.max();
            if !(max > 0.0) {
                continue;
            }
            for (t, &v) in col.iter().enumerate() {
                if v > 0.0 && v >= cutoff * max {
                    writeln!(out, r#"      <edge id="{edges}" source="d{}" target="t{t}" weight="{v}"/>"#, d.id)?;
                    edges += 1;
                }
            }
        }
        writeln!(out, "    </edges>")?;
        writeln!(out, "  </graph>")?;
        writeln!(out, "</gexf>")?;
        out.flush()
    })()
    .map_err(io)?;
    Ok(edges)
}

/// Token counts over the given documents, count-descending, ties by term.
pub fn word_counts<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for d in docs {
        for t in &d.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut out: Vec<(String, usize)> = counts
        .into_iter()
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

pub fn write_word_counts<W: Write>(mut out: W, counts: &[(String, usize)]) -> io::Result<()> {
    writeln!(out, "term\tcount")?;
    for (t, c) in counts {
        writeln!(out, "{t}\t{c}")?;
    }
    out.flush()
}

/// `topic_id  rank  term  weight`, ranks from 1.
pub fn write_topics_tsv<W: Write>(mut out: W, summaries: &[TopicSummary]) -> io::Result<()> {
    writeln!(out, "topic_id\trank\tterm\tweight")?;
    for s in summaries {
        for (rank, (term, weight)) in s.top_terms.iter().enumerate() {
            writeln!(out, "{}\t{}\t{term}\t{weight}", s.topic_id, rank + 1)?;
        }
    }
    out.flush()
}

/// `topic_id  doc_id  is_sentence`.
pub fn write_members_tsv<W: Write>(mut out: W, summaries: &[TopicSummary]) -> io::Result<()> {
    writeln!(out, "topic_id\tdoc_id\tis_sentence")?;
    for s in summaries {
        for &d in &s.member_docs {
            let flag = u8::from(s.topic_sentence == Some(d));
            writeln!(out, "{}\t{d}\t{flag}", s.topic_id)?;
        }
    }
    out.flush()
}

/// `cluster  doc_id` in document order.
pub fn write_cluster_members<W: Write>(
    mut out: W,
    labels: &[usize],
    docs: &[Document],
) -> io::Result<()> {
    writeln!(out, "cluster\tdoc_id")?;
    for (l, d) in labels.iter().zip(docs) {
        writeln!(out, "{l}\t{}", d.id)?;
    }
    out.flush()
}

/// `index  eigenvalue  gap  selected`, where `gap` is the distance to the
/// next eigenvalue and `selected` marks the lower end of the chosen gap.
pub fn write_eigenvalues_tsv<W: Write>(mut out: W, spectrum: &LaplacianResult) -> io::Result<()> {
    writeln!(out, "index\teigenvalue\tgap\tselected")?;
    for (i, e) in spectrum.eigenvalues.iter().enumerate() {
        let gap = spectrum
            .gaps
            .get(i)
            .map_or(String::new(), |g| g.to_string());
        let sel = u8::from(i == spectrum.gap_index);
        writeln!(out, "{}\t{e}\t{gap}\t{sel}", i + 1)?;
    }
    out.flush()
}

/// Consensus counts above `threshold` keyed by document id.
pub fn write_consensus_tsv<W: Write>(
    mut out: W,
    c: &ConsensusMatrix,
    docs: &[Document],
    threshold: u32,
) -> io::Result<()> {
    writeln!(out, "doc_i\tdoc_j\tcount")?;
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            let v = c.get(i, j);
            if v > threshold {
                writeln!(out, "{}\t{}\t{v}", docs[i].id, docs[j].id)?;
            }
        }
    }
    out.flush()
}

/// W with a leading term column and a header row of topic ids.
pub fn write_factor_w<W: Write>(
    mut out: W,
    w: &DMatrix<f64>,
    vocab: &Vocabulary,
) -> io::Result<()> {
    let header: String = (0..w.ncols()).map(|t| format!("\t{t}")).collect();
    writeln!(out, "term{header}")?;
    for r in 0..w.nrows() {
        write!(out, "{}", vocab.term(r))?;
        for t in 0..w.ncols() {
            write!(out, "\t{}", w[(r, t)])?;
        }
        writeln!(out)?;
    }
    out.flush()
}

/// H transposed: one row per document, keyed by document id.
pub fn write_factor_h<W: Write>(mut out: W, h: &DMatrix<f64>, docs: &[Document]) -> io::Result<()> {
    let header: String = (0..h.nrows()).map(|t| format!("\t{t}")).collect();
    writeln!(out, "doc_id{header}")?;
    for (j, d) in docs.iter().enumerate() {
        write!(out, "{}", d.id)?;
        for t in 0..h.nrows() {
            write!(out, "\t{}", h[(t, j)])?;
        }
        writeln!(out)?;
    }
    out.flush()
}

/// Tracks files written under an output directory so a failed run can
/// remove what it already produced.
pub struct OutputDir {
    root: std::path::PathBuf,
    written: Vec<String>,
    created_dirs: Vec<std::path::PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        let mut created_dirs = Vec::new();
        if !root.exists() {
            created_dirs.push(root.to_path_buf());
        }
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
            created_dirs,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Opens `rel` for writing (creating parent directories), hands it to
    /// `f`, and records the file.
    pub fn write<T>(
        &mut self,
        rel: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<T>,
    ) -> Result<T> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            if !parent.exists() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                self.created_dirs.push(parent.to_path_buf());
            }
        }
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.written.push(rel.to_string());
        let mut w = BufWriter::new(file);
        let out = f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(out)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Removes every recorded file and any directory this run created.
    pub fn discard(self) {
        for rel in &self.written {
            let _ = fs::remove_file(self.root.join(rel));
        }
        for dir in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir(dir);
        }
    }
}
