//! End-to-end run: ingest, dedupe, vectorize, consensus sweep, ensemble
//! noise removal, eigengap, clustering and exports.

use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use crate::config::{PipelineConfig, TopicCount};
use crate::consensus::{
    build_consensus, combine_noise, default_eps_counts, noise_alg1_consensus,
    noise_alg2_dbscan_distance, noise_alg3_dbscan_consensus, ConsensusMatrix, NoiseVerdict,
};
use crate::corpus::{
    build_tdm_nonempty, read_documents, remove_duplicates, Document, Normalizer, StopList,
    Vocabulary,
};
use crate::error::{Error, Result};
use crate::export::{self, OutputDir};
use crate::kmeans::{kmeans_sweep, ClusterAssignment};
use crate::nmf::{factorize, FactorPair};
use crate::seed;
use crate::sparsemat::{pairwise_cosine_distance, TermDocMatrix};
use crate::spectral::{self, LaplacianResult};
use crate::topics::{cluster_consensus, summarize, TopicSummary};

const SWEEP_BEFORE_NOISE: u64 = 1;
const SWEEP_AFTER_NOISE: u64 = 2;
const FINAL_KMEANS: u64 = 3;
const NMF: u64 = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StageSizes {
    pub ingested: usize,
    pub after_dedupe: usize,
    /// Documents with at least one weighted term.
    pub nonempty: usize,
    pub after_noise: usize,
    /// Documents that still carry a weighted term once the vocabulary is
    /// rebuilt without the noise.
    pub clustered: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NoiseCounts {
    pub consensus: usize,
    pub dbscan_distance: usize,
    pub dbscan_consensus: usize,
    pub combined: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub sizes: StageSizes,
    pub noise: NoiseCounts,
    pub clustering_runs: usize,
    pub suggested_k: usize,
    pub chosen_k: usize,
    pub unassigned_documents: usize,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    /// Wall-clock time per stage. Kept out of `manifest.json` so that
    /// repeated runs produce identical files.
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

/// State after noise removal on the first consensus matrix.
#[derive(Clone, Debug)]
pub struct Denoised {
    pub sizes: StageSizes,
    /// Nonempty documents before noise removal, aligned with the verdict.
    pub candidates: Vec<Document>,
    pub verdict: NoiseVerdict,
    pub consensus: ConsensusMatrix,
    pub runs: usize,
    pub timings: Vec<StageTiming>,
}

/// State after the second sweep on the noise-free corpus.
#[derive(Clone, Debug)]
pub struct Refit {
    pub denoised: Denoised,
    pub documents: Vec<Document>,
    pub tdm: TermDocMatrix,
    pub vocab: Vocabulary,
    pub consensus: ConsensusMatrix,
    pub spectrum: LaplacianResult,
}

/// Everything a run computes, before anything is written.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub refit: Refit,
    pub k: usize,
    pub kmeans: Option<ClusterAssignment>,
    pub factors: Option<FactorPair>,
    pub summaries: Vec<TopicSummary>,
}

impl PipelineOutput {
    pub fn documents(&self) -> &[Document] {
        &self.refit.documents
    }

    pub fn manifest(&self, config: &PipelineConfig, outputs: Vec<String>) -> RunManifest {
        let v = &self.refit.denoised.verdict;
        let count = |f: &[bool]| f.iter().filter(|&&x| x).count();
        let unassigned = match &self.factors {
            Some(_) => {
                self.documents().len()
                    - self
                        .summaries
                        .iter()
                        .map(|s| s.member_docs.len())
                        .sum::<usize>()
            }
            None => 0,
        };
        RunManifest {
            config: config.clone(),
            sizes: self.refit.denoised.sizes,
            noise: NoiseCounts {
                consensus: count(&v.consensus),
                dbscan_distance: count(&v.dbscan_distance),
                dbscan_consensus: count(&v.dbscan_consensus),
                combined: count(&v.combined),
            },
            clustering_runs: self.refit.denoised.runs,
            suggested_k: self.refit.spectrum.suggested_k,
            chosen_k: self.k,
            unassigned_documents: unassigned,
            outputs,
            timings: self.refit.denoised.timings.clone(),
        }
    }
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        e => Error::Stage {
            stage,
            source: Box::new(e),
        },
    })
}

fn timed<T>(
    timings: &mut Vec<StageTiming>,
    stage: &'static str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = staged(stage, f());
    timings.push(StageTiming {
        stage,
        seconds: start.elapsed().as_secs_f64(),
    });
    out
}

pub fn normalizer(config: &PipelineConfig) -> Result<Normalizer> {
    let mut stop = if config.input.builtin_stoplists {
        StopList::bilingual()
    } else {
        StopList::empty()
    };
    for p in &config.input.stoplists {
        stop.extend(&StopList::from_file(p)?);
    }
    Ok(Normalizer::new(stop, config.input.stem))
}

/// Reads and normalizes the configured input.
pub fn load_corpus(config: &PipelineConfig) -> Result<Vec<Document>> {
    let path = config
        .input
        .path
        .as_ref()
        .ok_or_else(|| Error::Config("no input file given".into()))?;
    let docs = read_documents(path, config.input.format, &normalizer(config)?)?;
    if docs.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(docs)
}

fn sweep(
    tdm: &TermDocMatrix,
    config: &PipelineConfig,
    stream: u64,
) -> Result<(ConsensusMatrix, usize)> {
    let s = &config.kmeans;
    let n = tdm.cols();
    let k_max = s.k_max.min(n);
    if s.k_min > k_max {
        return Err(Error::BadK { k: s.k_min, n });
    }
    if k_max < s.k_max {
        warn!("only {n} documents; sweep capped at k = {k_max}");
    }
    let runs = kmeans_sweep(
        tdm,
        s.k_min..=k_max,
        s.repeats_per_k,
        seed::derive(config.seed, &[stream]),
        &s.kmeans(),
    )?;
    Ok((build_consensus(&runs)?, runs.len()))
}

/// Dedupe, vectorize, sweep and remove noise.
pub fn denoise(docs: Vec<Document>, config: &PipelineConfig) -> Result<Denoised> {
    config.validate()?;
    let mut timings = Vec::new();
    let mut sizes = StageSizes {
        ingested: docs.len(),
        ..Default::default()
    };
    if docs.is_empty() {
        return staged("ingest", Err(Error::EmptyInput));
    }
    let (docs, tdm) = timed(&mut timings, "vectorize", || {
        let (docs, removed) = remove_duplicates(docs);
        info!("removed {removed} duplicate documents");
        sizes.after_dedupe = docs.len();
        let (docs, tdm, _) = build_tdm_nonempty(docs)?;
        Ok((docs, tdm))
    })?;
    sizes.nonempty = docs.len();

    let (c1, runs) = timed(&mut timings, "sweep", || {
        sweep(&tdm, config, SWEEP_BEFORE_NOISE)
    })?;
    let n = docs.len();
    let verdict = timed(&mut timings, "noise", || {
        let nz = &config.noise;
        if !nz.enabled {
            let none = vec![false; n];
            return combine_noise(&none, &none, &none);
        }
        let f1 = noise_alg1_consensus(&c1, nz.drop_tol, nz.threshold)?;
        let d = pairwise_cosine_distance(&tdm)?;
        let (lo, hi) = config.dbscan.eps_quantiles;
        let ceiling = if config.dbscan.exclude_disjoint {
            1.0 - 1e-12
        } else {
            f64::INFINITY
        };
        let mut eps = d.quantiles_between(lo, hi, config.dbscan.eps_count, ceiling);
        if eps.is_empty() {
            // no informative distance: a radius of 1 flags nobody
            eps = vec![1.0];
        }
        let f2 = noise_alg2_dbscan_distance(&d, &eps, config.dbscan.min_pts)?;
        let eps_counts = if nz.eps_counts.is_empty() {
            default_eps_counts(c1.runs(), nz.eps_counts_fraction)
        } else {
            nz.eps_counts.clone()
        };
        let f3 = noise_alg3_dbscan_consensus(&c1, &eps_counts, config.dbscan.min_pts)?;
        combine_noise(&f1, &f2, &f3)
    })?;
    sizes.after_noise = n - verdict.noise_count();
    info!(
        "noise removal flagged {} of {n} documents",
        verdict.noise_count()
    );
    Ok(Denoised {
        sizes,
        candidates: docs,
        verdict,
        consensus: c1,
        runs,
        timings,
    })
}

/// Rebuilds the matrix on the kept documents, reruns the sweep and reads
/// the Laplacian spectrum.
pub fn refit(mut denoised: Denoised, config: &PipelineConfig) -> Result<Refit> {
    let kept: Vec<Document> = denoised
        .verdict
        .kept()
        .into_iter()
        .map(|i| denoised.candidates[i].clone())
        .collect();
    let mut timings = std::mem::take(&mut denoised.timings);
    let (documents, tdm, vocab) = timed(&mut timings, "refit", || {
        if kept.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "only {} documents survive noise removal",
                kept.len()
            )));
        }
        build_tdm_nonempty(kept)
    })?;
    denoised.sizes.clustered = documents.len();
    let (consensus, runs) = timed(&mut timings, "sweep", || {
        sweep(&tdm, config, SWEEP_AFTER_NOISE)
    })?;
    denoised.runs += runs;
    let spectrum = timed(&mut timings, "spectral", || {
        spectral::analyze(&consensus, &config.spectral)
    })?;
    info!(
        "eigengap suggests k = {} (gap after eigenvalue {})",
        spectrum.suggested_k,
        spectrum.gap_index + 1
    );
    denoised.timings = timings;
    Ok(Refit {
        denoised,
        documents,
        tdm,
        vocab,
        consensus,
        spectrum,
    })
}

/// Consensus k-means and NMF with the configured or suggested k.
pub fn cluster(mut refit: Refit, config: &PipelineConfig) -> Result<PipelineOutput> {
    let k = match config.nmf.k {
        TopicCount::Auto => refit.spectrum.suggested_k,
        TopicCount::Fixed(k) => k,
    };
    let mut timings = std::mem::take(&mut refit.denoised.timings);
    let kmeans = if config.topics.consensus_kmeans {
        Some(timed(&mut timings, "consensus_kmeans", || {
            cluster_consensus(
                &refit.consensus,
                k,
                seed::derive(config.seed, &[FINAL_KMEANS]),
                &config.kmeans.kmeans(),
            )
        })?)
    } else {
        None
    };
    let (factors, summaries) = if config.nmf.enabled {
        let f = timed(&mut timings, "nmf", || {
            factorize(
                &refit.tdm,
                k,
                &config.nmf.nmf(seed::derive(config.seed, &[NMF])),
            )
        })?;
        let s = timed(&mut timings, "topics", || {
            summarize(
                &refit.documents,
                &f.w,
                &f.h,
                &refit.vocab,
                config.topics.top_terms,
            )
        })?;
        (Some(f), s)
    } else {
        (None, Vec::new())
    };
    refit.denoised.timings = timings;
    Ok(PipelineOutput {
        refit,
        k,
        kmeans,
        factors,
        summaries,
    })
}

/// Runs every stage on already-parsed documents without writing anything.
pub fn analyze(docs: Vec<Document>, config: &PipelineConfig) -> Result<PipelineOutput> {
    let d = denoise(docs, config)?;
    let r = refit(d, config)?;
    cluster(r, config)
}

/// Writes every enabled export plus `manifest.json` into the configured
/// output directory. On failure the files written so far are removed.
pub fn write_outputs(output: &PipelineOutput, config: &PipelineConfig) -> Result<RunManifest> {
    let mut dir = OutputDir::create(&config.export.out_dir)?;
    match write_all(output, config, &mut dir) {
        Ok(m) => Ok(m),
        Err(e) => {
            dir.discard();
            Err(Error::Stage {
                stage: "export",
                source: Box::new(e),
            })
        }
    }
}

fn write_all(
    output: &PipelineOutput,
    config: &PipelineConfig,
    dir: &mut OutputDir,
) -> Result<RunManifest> {
    let ex = &config.export;
    let docs = output.documents();
    let io = |rel: &'static str| move |e| Error::io(rel, e);
    if ex.eigenvalues {
        dir.write("eigenvalues.tsv", |w| {
            export::write_eigenvalues_tsv(w, &output.refit.spectrum).map_err(io("eigenvalues.tsv"))
        })?;
    }
    if ex.consensus_tsv {
        dir.write("consensus.tsv", |w| {
            export::write_consensus_tsv(w, &output.refit.consensus, docs, ex.edge_threshold)
                .map_err(io("consensus.tsv"))
        })?;
    }
    let labels = output.kmeans.as_ref().map(|a| a.labels.as_slice());
    if ex.consensus_gexf {
        dir.write("consensus.gexf", |w| {
            export::write_gexf_consensus(
                w,
                &output.refit.consensus,
                docs,
                labels,
                ex.edge_threshold,
            )
        })?;
    }
    if let Some(a) = &output.kmeans {
        dir.write("kmeans_members.tsv", |w| {
            export::write_cluster_members(w, &a.labels, docs).map_err(io("kmeans_members.tsv"))
        })?;
        if ex.wordcounts {
            for (c, members) in a.members().iter().enumerate() {
                let counts = export::word_counts(members.iter().map(|&i| &docs[i]));
                dir.write(&format!("wordcounts/kmeans/{c}.tsv"), |w| {
                    export::write_word_counts(w, &counts).map_err(io("wordcounts"))
                })?;
            }
        }
    }
    if let Some(f) = &output.factors {
        dir.write("topics.tsv", |w| {
            export::write_topics_tsv(w, &output.summaries).map_err(io("topics.tsv"))
        })?;
        dir.write("members.tsv", |w| {
            export::write_members_tsv(w, &output.summaries).map_err(io("members.tsv"))
        })?;
        if ex.bipartite_gexf {
            dir.write("nmf_bipartite.gexf", |w| {
                export::write_gexf_bipartite(w, &f.h, docs, ex.bipartite_cutoff)
            })?;
        }
        if ex.wordcounts {
            let by_id: std::collections::HashMap<usize, &Document> =
                docs.iter().map(|d| (d.id, d)).collect();
            for s in &output.summaries {
                let counts = export::word_counts(s.member_docs.iter().map(|id| by_id[id]));
                dir.write(&format!("wordcounts/nmf/{}.tsv", s.topic_id), |w| {
                    export::write_word_counts(w, &counts).map_err(io("wordcounts"))
                })?;
            }
        }
        if ex.factors {
            dir.write("factors_w.tsv", |w| {
                export::write_factor_w(w, &f.w, &output.refit.vocab).map_err(io("factors_w.tsv"))
            })?;
            dir.write("factors_h.tsv", |w| {
                export::write_factor_h(w, &f.h, docs).map_err(io("factors_h.tsv"))
            })?;
        }
    }
    let mut outputs = dir.written().to_vec();
    outputs.push("manifest.json".to_string());
    outputs.sort();
    let manifest = output.manifest(config, outputs);
    dir.write("manifest.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)
            .map_err(|e| Error::io("manifest.json", e.into()))?;
        std::io::Write::write_all(w, b"\n").map_err(io("manifest.json"))
    })?;
    Ok(manifest)
}

/// Loads the input, runs every stage and writes the outputs.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    config.validate()?;
    let start = Instant::now();
    let docs = staged("ingest", load_corpus(config))?;
    let output = analyze(docs, config)?;
    let mut manifest = write_outputs(&output, config)?;
    manifest.timings.push(StageTiming {
        stage: "total",
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(manifest)
}
