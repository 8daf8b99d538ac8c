//! Command line: `train`, `eval`, `label`, `recommend`, `synth`, `geweke`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure (including a failed Geweke check).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tntm_core::corpus::{generate_synthetic, RawDocument, SyntheticParams, OOV_TOKEN};
use tntm_core::engine::{geweke_compare, GewekeReport};
use tntm_core::eval::{author_topics, evaluate, label_topics, recommend_authors, FoldIn, Recommendation};
use tntm_core::graph::{ForwardSizes, Mutation};
use tntm_core::tn::{build_tn_graph, TnConfig, TnMeta};

use crate::config::{ModelKind, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{save_corpus, save_edges, save_labels, write_file};
use crate::report;
use crate::run::{stream, train};
use crate::snapshot::{decode, Snapshot};

#[derive(Debug, Parser)]
#[command(name = "tntm", version, about = "Topic models over PDP networks for short texts with hashtags and author links")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every selected variant for every seed and aggregate the results.
    Train(TrainArgs),
    /// Re-evaluate a snapshot.
    Eval(EvalArgs),
    /// Hashtag labels per topic and the topics of authors.
    Label(LabelArgs),
    /// Rank training authors for a new author.
    Recommend(RecommendArgs),
    /// Write a planted synthetic corpus, edge list, labels and a matching config.
    Synth(SynthArgs),
    /// Check the sampler against forward draws.
    Geweke(GewekeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = ["tn", "hdp-lda", "npatm"])]
    pub model: Option<String>,
    /// `none`, `all` or a comma-separated list such as `no-author,no-hashtag`.
    #[arg(long)]
    pub ablate: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub min_author_docs: Option<usize>,
    #[arg(long)]
    pub iterations: Option<u32>,
    #[arg(long)]
    pub burnin: Option<u32>,
    #[arg(long, value_parser = ["cosine", "original"])]
    pub kernel: Option<String>,
    /// Record per-iteration wall time in traces.
    #[arg(long)]
    pub timing: bool,
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.model {
            cfg.model = m.parse::<ModelKind>()?;
        }
        if let Some(a) = &self.ablate {
            cfg.ablate = vec![a.clone()];
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(o) = &self.output {
            cfg.output_dir = o.clone();
        }
        if let Some(c) = &self.corpus {
            cfg.data.corpus = Some(c.clone());
        }
        if let Some(e) = &self.edges {
            cfg.data.edges = Some(e.clone());
        }
        if let Some(l) = &self.labels {
            cfg.data.labels = Some(l.clone());
        }
        if let Some(n) = self.min_author_docs {
            cfg.data.min_author_docs = n;
        }
        if let Some(n) = self.iterations {
            cfg.schedule.total_iterations = n;
        }
        if let Some(n) = self.burnin {
            cfg.schedule.text_only_burnin = n;
        }
        if let Some(k) = &self.kernel {
            cfg.network.kernel = k.parse()?;
        }
        cfg.timing |= self.timing;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SnapshotArg {
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Output directory; defaults to the snapshot's directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl SnapshotArg {
    fn out_dir(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| self.snapshot.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf))
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub snapshot: SnapshotArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[command(flatten)]
    pub snapshot: SnapshotArg,
    /// Hashtags per topic label.
    #[arg(long, default_value_t = 3)]
    pub tags: usize,
    #[arg(long, default_value_t = 10)]
    pub words: usize,
    /// Authors to list topics for (comma-separated names); all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub authors: Option<Vec<String>>,
    /// Topics listed per author.
    #[arg(long, default_value_t = 3)]
    pub author_topics: usize,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    /// Snapshots of network-trained runs, one per kernel to compare.
    #[arg(long, required = true)]
    pub snapshot: Vec<PathBuf>,
    /// The new author's documents, in corpus format.
    #[arg(long)]
    pub author_docs: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub ranks: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 40)]
    pub authors: u32,
    #[arg(long, default_value_t = 4)]
    pub topics: u32,
    #[arg(long)]
    pub docs_per_author: Option<u32>,
    #[arg(long)]
    pub words_per_doc: Option<u32>,
    #[arg(long)]
    pub hashtags_per_doc: Option<u32>,
    #[arg(long)]
    pub vocab_size: Option<u32>,
    #[arg(long)]
    pub author_signal: Option<f64>,
    #[arg(long)]
    pub topic_separation: Option<f64>,
    #[arg(long)]
    pub link_within: Option<f64>,
    #[arg(long)]
    pub link_across: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "synthetic")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GewekeArgs {
    #[arg(long, default_value_t = 10_000)]
    pub rounds: u32,
    #[arg(long, default_value_t = 3)]
    pub truncation: u32,
    #[arg(long, default_value_t = 5)]
    pub vocab: u32,
    #[arg(long, default_value_t = 3)]
    pub documents: u32,
    #[arg(long, default_value_t = 2)]
    pub authors: u32,
    #[arg(long, default_value_t = 2)]
    pub words_per_doc: u32,
    #[arg(long, default_value_t = 1)]
    pub hashtags_per_doc: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run a deliberately broken sampler that never closes tables.
    #[arg(long)]
    pub keep_tables: bool,
    /// Directory for `geweke.json`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// z-scores at or beyond this fail the `geweke` command.
pub const GEWEKE_LIMIT: f64 = 4.0;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Label(a) => cmd_label(&a),
        Command::Recommend(a) => cmd_recommend(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Geweke(a) => cmd_geweke(&a),
    }
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let blob = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&blob).map_err(|e| match e {
        crate::snapshot::SnapshotError::Decode(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.resolve()?;
    let summary = train(&cfg)?;
    print!("{}", report::results_text(&summary.rows));
    match summary.failure() {
        Some((code, msg)) => {
            let failed = summary.outcomes.iter().filter(|o| o.error.is_some()).count();
            let e = format!("{failed} of {} runs failed (first: {msg}); outputs are partial", summary.outcomes.len());
            Err(match code {
                1 => CliError::Usage(e),
                2 => CliError::Data(e),
                _ => CliError::Check(e),
            })
        }
        None => Ok(()),
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let s = read_snapshot(&a.snapshot.snapshot)?;
    let r = evaluate(&s.chain, &s.train, s.test.as_ref(), s.labels.as_deref(), &s.eval, &mut stream(a.seed, 2))?;
    let json = serde_json::to_string_pretty(&r).expect("report serializes") + "\n";
    write_file(&a.snapshot.out_dir().join("eval.json"), &json)?;
    print!("{json}");
    Ok(())
}

fn cmd_label(a: &LabelArgs) -> Result<()> {
    let s = read_snapshot(&a.snapshot.snapshot)?;
    let labels = label_topics(&s.chain.text, a.tags, a.words).map_err(|e| match e {
        tntm_core::Error::Unsupported(m) => CliError::Usage(format!("cannot label variant `{}`: {m}", s.variant)),
        other => other.into(),
    })?;
    let out = a.snapshot.out_dir();
    let corpus = &s.train;
    write_file(&out.join("topic_labels.csv"), report::labels_csv(&labels, corpus))?;
    let t2 = report::labels_text(&labels, corpus);
    write_file(&out.join("topic_labels.txt"), &t2)?;
    print!("{t2}");
    let names: Vec<String> = a.authors.clone().unwrap_or_else(|| corpus.authors.clone());
    let words: HashMap<u32, Vec<(u32, f64)>> = labels.iter().map(|l| (l.topic, l.words.clone())).collect();
    let mut rows = Vec::new();
    for name in names {
        let id = corpus
            .author_index(&name)
            .ok_or_else(|| CliError::Usage(format!("unknown author `{name}`")))?;
        let topics = author_topics(&s.chain.text, id)?
            .into_iter()
            .take(a.author_topics)
            .map(|(k, w)| (k, w, words.get(&k).cloned().unwrap_or_default()))
            .collect();
        rows.push(report::AuthorTopics { author: name, topics });
    }
    write_file(&out.join("author_topics.csv"), report::author_topics_csv(&rows, corpus))?;
    let t3 = report::author_topics_text(&rows, corpus);
    write_file(&out.join("author_topics.txt"), &t3)?;
    println!();
    print!("{t3}");
    Ok(())
}

/// Maps raw documents onto a snapshot vocabulary. Unknown tokens go to the
/// out-of-vocabulary index when there is one and are dropped otherwise.
pub fn encode_documents(raw: &[RawDocument], vocabulary: &[String]) -> Vec<(Vec<u32>, Vec<u32>)> {
    let index: HashMap<&str, u32> = vocabulary.iter().enumerate().map(|(i, v)| (v.as_str(), i as u32)).collect();
    let oov = index.get(OOV_TOKEN).copied();
    let map = |toks: &[String]| -> Vec<u32> {
        toks.iter()
            .filter_map(|t| index.get(t.trim_start_matches('#').to_lowercase().as_str()).copied().or(oov))
            .collect()
    };
    raw.iter().map(|d| (map(&d.tokens), map(&d.hashtags))).collect()
}

fn cmd_recommend(a: &RecommendArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.author_docs).map_err(|e| CliError::io(&a.author_docs, e))?;
    let raw: Vec<RawDocument> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", a.author_docs.display())))?;
    let mut recs: Vec<Recommendation> = Vec::new();
    let mut corpus = None;
    for path in &a.snapshot {
        let s = read_snapshot(path)?;
        let kernel = s
            .chain
            .network
            .as_ref()
            .map(|n| n.gp.kind())
            .ok_or_else(|| CliError::Usage(format!("{}: variant `{}` has no network model", path.display(), s.variant)))?;
        let docs = encode_documents(&raw, &s.train.vocabulary);
        let fold = FoldIn { fraction: 0.0, ..s.eval.fold_in };
        recs.push(recommend_authors(&s.chain, &docs, kernel, &fold, &mut stream(a.seed, 3))?);
        corpus.get_or_insert(s.train);
    }
    let corpus = corpus.expect("at least one snapshot");
    let out = a
        .output
        .clone()
        .unwrap_or_else(|| a.snapshot[0].parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
    write_file(&out.join("recommendations.csv"), report::recommendations_csv(&recs, &corpus, a.ranks))?;
    let t = report::recommendations_text(&recs, &corpus, a.ranks);
    write_file(&out.join("recommendations.txt"), &t)?;
    print!("{t}");
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut p = SyntheticParams {
        authors: a.authors,
        topics: a.topics,
        ..Default::default()
    };
    macro_rules! set {
        ($($f:ident),*) => {$(if let Some(v) = a.$f { p.$f = v; })*};
    }
    set!(docs_per_author, words_per_doc, hashtags_per_doc, vocab_size, author_signal, topic_separation, link_within, link_across);
    let syn = generate_synthetic(&p, &mut tntm_core::seeded_rng(a.seed)).map_err(|e| CliError::Usage(e.to_string()))?;
    let out = &a.output;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    save_corpus(&out.join("corpus.jsonl"), &syn.corpus)?;
    save_edges(&out.join("edges.csv"), &syn.edges, &syn.corpus)?;
    save_labels(&out.join("labels.csv"), &syn.corpus, &syn.doc_labels)?;
    let mut cfg = RunConfig::default();
    cfg.data.corpus = Some("corpus.jsonl".into());
    cfg.data.edges = Some("edges.csv".into());
    cfg.data.labels = Some("labels.csv".into());
    cfg.data.min_author_docs = 1;
    write_file(&out.join("config.toml"), cfg.to_toml())?;
    println!(
        "{}: {} documents by {} authors, {} links",
        out.display(),
        syn.corpus.documents.len(),
        syn.corpus.authors.len(),
        syn.edges.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct GewekeOutput<'a> {
    sizes: ForwardSizes,
    truncation: u32,
    seed: u64,
    mutated: bool,
    report: &'a GewekeReport,
}

fn cmd_geweke(a: &GewekeArgs) -> Result<()> {
    let sizes = ForwardSizes {
        authors: a.authors,
        documents: a.documents,
        words_per_doc: a.words_per_doc,
        hashtags_per_doc: a.hashtags_per_doc,
        vocab_size: a.vocab,
    };
    if a.authors == 0 || a.documents == 0 {
        return Err(CliError::Usage("authors and documents must be at least 1".into()));
    }
    let meta = TnMeta {
        authors: a.authors,
        doc_author: (0..a.documents).map(|m| m % a.authors).collect(),
        vocab_size: a.vocab,
    };
    let spec = build_tn_graph(&TnConfig::default(), &meta)?;
    let mutation = a.keep_tables.then_some(Mutation::KeepTables);
    let r = geweke_compare(&spec, a.truncation, sizes, a.rounds, mutation, &mut tntm_core::seeded_rng(a.seed))?;
    for s in &r.stats {
        println!("{:<20} forward {:>10.5}  gibbs {:>10.5}  z {:>8.3}", s.name, s.forward_mean, s.gibbs_mean, s.z);
    }
    if let Some(dir) = &a.output {
        let out = GewekeOutput {
            sizes,
            truncation: a.truncation,
            seed: a.seed,
            mutated: a.keep_tables,
            report: &r,
        };
        write_file(&dir.join("geweke.json"), serde_json::to_string_pretty(&out).expect("serializes") + "\n")?;
    }
    let worst = r.max_abs_z();
    if !(worst < GEWEKE_LIMIT) {
        return Err(CliError::Check(format!("max |z| = {worst:.2} reaches {GEWEKE_LIMIT}")));
    }
    Ok(())
}
