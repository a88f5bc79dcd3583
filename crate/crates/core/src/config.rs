//! Pipeline configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::consensus::RowSumThreshold;
use crate::corpus::InputFormat;
use crate::error::{Error, Result};
use crate::kmeans::{Init, KMeansConfig};
use crate::nmf::{NmfAlgorithm, NmfConfig};
use crate::spectral::SpectralConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every random choice in the run derives from it.
    pub seed: u64,
    pub input: InputConfig,
    pub kmeans: SweepConfig,
    pub dbscan: DbscanConfig,
    pub noise: NoiseConfig,
    pub spectral: SpectralConfig,
    pub nmf: NmfSection,
    pub topics: TopicsConfig,
    pub export: ExportConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub path: Option<PathBuf>,
    pub format: InputFormat,
    /// Use the bundled English and Spanish stop lists.
    pub builtin_stoplists: bool,
    /// Extra stop-list files, one term per line.
    pub stoplists: Vec<PathBuf>,
    pub stem: bool,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            path: None,
            format: InputFormat::Lines,
            builtin_stoplists: true,
            stoplists: Vec::new(),
            stem: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub repeats_per_k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub init: Init,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let base = KMeansConfig::default();
        SweepConfig {
            k_min: 2,
            k_max: 12,
            repeats_per_k: 1,
            max_iter: base.max_iter,
            tol: base.tol,
            init: base.init,
        }
    }
}

impl SweepConfig {
    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            init: self.init,
        }
    }

    pub fn runs(&self) -> usize {
        (self.k_max + 1).saturating_sub(self.k_min) * self.repeats_per_k
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanConfig {
    /// Quantile range of the positive distances spanned by the eps list.
    pub eps_quantiles: (f64, f64),
    pub eps_count: usize,
    pub min_pts: usize,
    /// Leave pairs without a shared term (cosine distance 1) out of the
    /// quantile computation.
    pub exclude_disjoint: bool,
}

impl Default for DbscanConfig {
    fn default() -> Self {
        DbscanConfig {
            eps_quantiles: (0.05, 0.60),
            eps_count: 20,
            min_pts: 5,
            exclude_disjoint: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub drop_tol: f64,
    pub threshold: RowSumThreshold,
    /// The consensus DBSCAN uses every count from `⌈fraction · runs⌉` to
    /// `runs` when `eps_counts` is empty.
    pub eps_counts_fraction: f64,
    pub eps_counts: Vec<u32>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            enabled: true,
            drop_tol: 0.10,
            threshold: RowSumThreshold::RowMean,
            eps_counts_fraction: 0.25,
            eps_counts: Vec::new(),
        }
    }
}

/// Number of topics: fixed, or picked from the eigengap.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TopicCount {
    #[default]
    Auto,
    Fixed(usize),
}

impl FromStr for TopicCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(TopicCount::Auto);
        }
        s.parse::<usize>().map(TopicCount::Fixed).map_err(|_| {
            Error::Config(format!(
                "topic count must be a positive integer or `auto`, got `{s}`"
            ))
        })
    }
}

impl fmt::Display for TopicCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopicCount::Auto => f.write_str("auto"),
            TopicCount::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl Serialize for TopicCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TopicCount::Auto => s.serialize_str("auto"),
            TopicCount::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for TopicCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) => Ok(TopicCount::Fixed(k as usize)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfSection {
    pub enabled: bool,
    pub algorithm: NmfAlgorithm,
    pub k: TopicCount,
    /// Defaults to 200 for MU and 50 otherwise.
    pub max_iter: Option<usize>,
    pub lambda_w: f64,
    pub lambda_h: f64,
    pub denom_eps: f64,
    pub early_stop: Option<f64>,
}

impl Default for NmfSection {
    fn default() -> Self {
        let base = NmfConfig::default();
        NmfSection {
            enabled: true,
            algorithm: base.algorithm,
            k: TopicCount::Auto,
            max_iter: None,
            lambda_w: base.lambda_w,
            lambda_h: base.lambda_h,
            denom_eps: base.denom_eps,
            early_stop: base.early_stop,
        }
    }
}

impl NmfSection {
    pub fn nmf(&self, seed: u64) -> NmfConfig {
        let base = NmfConfig::for_algorithm(self.algorithm);
        NmfConfig {
            algorithm: self.algorithm,
            max_iter: self.max_iter.unwrap_or(base.max_iter),
            seed,
            lambda_w: self.lambda_w,
            lambda_h: self.lambda_h,
            denom_eps: self.denom_eps,
            early_stop: self.early_stop,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicsConfig {
    /// Run consensus k-means on the final consensus matrix.
    pub consensus_kmeans: bool,
    pub top_terms: usize,
}

impl Default for TopicsConfig {
    fn default() -> Self {
        TopicsConfig {
            consensus_kmeans: true,
            top_terms: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    /// Not part of the run snapshot, so relocating the output leaves
    /// `manifest.json` unchanged.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub consensus_gexf: bool,
    pub bipartite_gexf: bool,
    pub wordcounts: bool,
    pub eigenvalues: bool,
    /// Consensus pairs with a count above this get an edge.
    pub edge_threshold: u32,
    /// Document-topic edges need `H(i,j) / max_i H(i,j)` at least this.
    pub bipartite_cutoff: f64,
    pub consensus_tsv: bool,
    pub factors: bool,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            out_dir: PathBuf::from("out"),
            consensus_gexf: true,
            bipartite_gexf: true,
            wordcounts: true,
            eigenvalues: true,
            edge_threshold: 8,
            bipartite_cutoff: 0.25,
            consensus_tsv: false,
            factors: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML file. Relative input and stop-list paths are taken
    /// relative to the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(p) = &config.input.path {
            config.input.path = Some(base.join(p));
        }
        for p in &mut config.input.stoplists {
            *p = base.join(&*p);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every numeric field against the preconditions of the stage
    /// that consumes it.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let s = &self.kmeans;
        if s.k_min < 1 || s.k_min > s.k_max {
            return bad(format!(
                "kmeans k range {}..={} is empty or starts below 1",
                s.k_min, s.k_max
            ));
        }
        if s.repeats_per_k < 1 {
            return bad("kmeans.repeats_per_k must be at least 1".into());
        }
        if s.max_iter < 1 || !(s.tol >= 0.0) {
            return bad("kmeans.max_iter must be at least 1 and kmeans.tol nonnegative".into());
        }
        if s.runs() > u32::MAX as usize {
            return bad("too many clustering runs".into());
        }
        let d = &self.dbscan;
        let (lo, hi) = d.eps_quantiles;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad(format!(
                "dbscan.eps_quantiles ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 1"
            ));
        }
        if d.eps_count < 1 || d.min_pts < 1 {
            return bad("dbscan.eps_count and dbscan.min_pts must be at least 1".into());
        }
        let nz = &self.noise;
        if !(0.0..1.0).contains(&nz.drop_tol) {
            return bad(format!("noise.drop_tol {} outside [0, 1)", nz.drop_tol));
        }
        if !(nz.eps_counts_fraction > 0.0 && nz.eps_counts_fraction <= 1.0) {
            return bad(format!(
                "noise.eps_counts_fraction {} outside (0, 1]",
                nz.eps_counts_fraction
            ));
        }
        let runs = s.runs() as u32;
        if let Some(&e) = nz.eps_counts.iter().find(|&&e| e < 1 || e > runs) {
            return bad(format!("noise.eps_counts entry {e} outside [1, {runs}]"));
        }
        if self.spectral.eigs < 2 {
            return bad("spectral.eigs must be at least 2".into());
        }
        let f = self.spectral.min_count_fraction;
        if !(0.0..1.0).contains(&f) {
            return bad(format!("spectral.min_count_fraction {f} outside [0, 1)"));
        }
        if let TopicCount::Fixed(0) = self.nmf.k {
            return bad("nmf.k must be at least 1".into());
        }
        self.nmf
            .nmf(self.seed)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.topics.top_terms < 1 {
            return bad("topics.top_terms must be at least 1".into());
        }
        let cutoff = self.export.bipartite_cutoff;
        if !(0.0..=1.0).contains(&cutoff) {
            return bad(format!("export.bipartite_cutoff {cutoff} outside [0, 1]"));
        }
        Ok(())
    }
}
