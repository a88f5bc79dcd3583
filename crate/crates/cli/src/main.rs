use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use topicmine::config::TopicCount;
use topicmine::pipeline::{self, Denoised};
use topicmine::spectral::LaplacianResult;
use topicmine::{Error, PipelineConfig, RunManifest};

/// Topic discovery in short-text corpora.
#[derive(Parser, Debug)]
#[command(name = "mine", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the whole pipeline and write every enabled export.
    Run(Common),
    /// Print the Laplacian spectrum and the eigengap choice of k.
    Eigs {
        #[command(flatten)]
        common: Common,
        /// Also write the table as TSV.
        #[arg(long, value_name = "FILE")]
        eigs_out: Option<PathBuf>,
    },
    /// Report what the noise filters flag.
    Noise {
        #[command(flatten)]
        common: Common,
        /// Print every flagged document.
        #[arg(long)]
        list: bool,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration; flags override its values.
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Input corpus, one document per line.
    #[arg(short, long, value_name = "FILE")]
    input: Option<PathBuf>,

    /// Topic count, or `auto` for the eigengap.
    #[arg(short, long, value_name = "N|auto", value_parser = parse_k)]
    k: Option<TopicCount>,

    #[arg(short, long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(short, long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Refuse to run without an explicit seed.
    #[arg(long, requires = "seed")]
    strict_repro: bool,
}

fn parse_k(s: &str) -> Result<TopicCount, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn config(&self) -> topicmine::Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(input) = &self.input {
            config.input.path = Some(input.clone());
        }
        if let Some(k) = self.k {
            config.nmf.k = k;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.export.out_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli.command) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            eprintln!("mine: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> topicmine::Result<String> {
    match command {
        Command::Run(common) => {
            let config = common.config()?;
            let manifest = pipeline::run_pipeline(&config)?;
            Ok(run_report(&manifest, &config))
        }
        Command::Eigs { common, eigs_out } => {
            let config = common.config()?;
            let docs = pipeline::load_corpus(&config)?;
            let refit = pipeline::refit(pipeline::denoise(docs, &config)?, &config)?;
            if let Some(path) = eigs_out {
                let file = std::fs::File::create(&path).map_err(|e| io_error(&path, e))?;
                let mut w = std::io::BufWriter::new(file);
                topicmine::export::write_eigenvalues_tsv(&mut w, &refit.spectrum)
                    .and_then(|_| std::io::Write::flush(&mut w))
                    .map_err(|e| io_error(&path, e))?;
            }
            Ok(spectrum_table(&refit.spectrum))
        }
        Command::Noise { common, list } => {
            let config = common.config()?;
            let docs = pipeline::load_corpus(&config)?;
            Ok(noise_report(&pipeline::denoise(docs, &config)?, list))
        }
    }
}

fn io_error(path: &std::path::Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run_report(m: &RunManifest, config: &PipelineConfig) -> String {
    let mut s = String::new();
    let z = &m.sizes;
    let _ = writeln!(
        s,
        "documents: {} read, {} after dedupe, {} after noise removal, {} clustered",
        z.ingested, z.after_dedupe, z.after_noise, z.clustered
    );
    let _ = writeln!(
        s,
        "k = {} (eigengap suggests {}), {} unassigned",
        m.chosen_k, m.suggested_k, m.unassigned_documents
    );
    let _ = writeln!(
        s,
        "{} files in {}",
        m.outputs.len(),
        config.export.out_dir.display()
    );
    for t in &m.timings {
        let _ = writeln!(s, "  {:<18} {:>8.2}s", t.stage, t.seconds);
    }
    s
}

fn spectrum_table(r: &LaplacianResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>5}  {:>14}  {:>14}", "index", "eigenvalue", "gap");
    for (i, v) in r.eigenvalues.iter().enumerate() {
        let gap = r.gaps.get(i).map_or(String::new(), |g| format!("{g:.6e}"));
        let mark = if i == r.gap_index { "  <" } else { "" };
        let _ = writeln!(s, "{:>5}  {v:>14.6e}  {gap:>14}{mark}", i + 1);
    }
    let _ = writeln!(s, "suggested k = {}", r.suggested_k);
    s
}

fn noise_report(d: &Denoised, list: bool) -> String {
    let v = &d.verdict;
    let count = |f: &[bool]| f.iter().filter(|&&x| x).count();
    let mut s = String::new();
    let z = &d.sizes;
    let _ = writeln!(
        s,
        "documents: {} read, {} after dedupe, {} with terms",
        z.ingested, z.after_dedupe, z.nonempty
    );
    let _ = writeln!(s, "consensus row sums  {:>6}", count(&v.consensus));
    let _ = writeln!(s, "dbscan on distance  {:>6}", count(&v.dbscan_distance));
    let _ = writeln!(s, "dbscan on consensus {:>6}", count(&v.dbscan_consensus));
    let _ = writeln!(s, "two of three        {:>6}", count(&v.combined));
    if list {
        for (doc, _) in d.candidates.iter().zip(&v.combined).filter(|(_, &f)| f) {
            let _ = writeln!(s, "{}\t{}", doc.id, doc.raw.trim());
        }
    }
    s
}
