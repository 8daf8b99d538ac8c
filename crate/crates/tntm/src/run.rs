//! Training runs: every selected variant for every seed, written under
//! `output_dir/<variant key>/seed-<n>/`, then aggregated into one results row per variant.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use tntm_core::corpus::{split_train_test, Corpus, EdgeList};
use tntm_core::engine::{ChainState, NetworkState, Schedule, Trace};
use tntm_core::eval::{evaluate, EvalReport};
use tntm_core::gp::PairSet;
use tntm_core::graph::TextState;
use tntm_core::tn::{ablation_key, ablation_suite, build_baseline, variant, TnFlags, TnMeta, Variant, ABLATION_NAMES};
use tntm_core::{seeded_rng, ChainRng};

use crate::config::{ModelKind, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{load_corpus, load_edges, load_labels, write_file, Labels};
use crate::report::{results_csv, results_text, ResultRow, PERPLEXITY_NOTE};
use crate::snapshot::{encode, Snapshot};

pub const TRACE_FILE: &str = "trace.csv";
pub const SNAPSHOT_FILE: &str = "snapshot.tntm";
pub const REPORT_FILE: &str = "report.json";
pub const FAILED_FILE: &str = "FAILED";

/// Independent generator streams derived from one seed. The chain itself uses
/// stream 0 through its schedule seed.
pub fn stream(seed: u64, id: u64) -> ChainRng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(id);
    rng
}

const DATA_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

#[derive(Clone, Debug)]
pub struct Data {
    pub corpus: Corpus,
    pub edges: Option<EdgeList>,
    pub labels: Option<Labels>,
}

pub fn load_data(cfg: &RunConfig) -> Result<Data> {
    let path = cfg.data.corpus.as_ref().ok_or_else(|| CliError::Usage("config key `data.corpus`: no corpus given".into()))?;
    let (corpus, stats) = load_corpus(path, cfg.data.min_author_docs, cfg.data.min_token_count)?;
    log::info!(
        "{}: {} documents, {} authors, vocabulary {} ({} malformed records skipped)",
        path.display(),
        corpus.documents.len(),
        corpus.authors.len(),
        corpus.vocabulary.len(),
        stats.malformed
    );
    let edges = match &cfg.data.edges {
        Some(p) => {
            let (edges, skipped) = load_edges(p, &corpus)?;
            if skipped > 0 {
                log::warn!("{}: skipped {skipped} pairs naming unknown or dropped authors", p.display());
            }
            Some(edges)
        }
        None => None,
    };
    let labels = cfg.data.labels.as_deref().map(load_labels).transpose()?;
    if let Some(l) = &labels {
        l.align(&corpus)?;
    }
    Ok(Data { corpus, edges, labels })
}

/// Display name of a set of ablation keys.
fn ablated_name(keys: &[String]) -> String {
    let names: Vec<&str> = keys
        .iter()
        .map(|k| ABLATION_NAMES.iter().copied().find(|n| ablation_key(n) == *k).unwrap_or(k))
        .collect();
    names.join(" + ")
}

/// The variants a config selects, in report order.
pub fn variants(cfg: &RunConfig, meta: &TnMeta) -> Result<Vec<Variant>> {
    if let Some(kind) = cfg.model.baseline() {
        let name = match cfg.model {
            ModelKind::HdpLda => "HDP-LDA",
            _ => "NP-ATM",
        };
        return Ok(vec![Variant {
            name: name.into(),
            spec: build_baseline(kind, &cfg.tn, meta)?,
            config: cfg.tn,
            run_network: false,
        }]);
    }
    let keys = cfg.ablation_keys()?;
    if keys == ["all"] {
        return Ok(ablation_suite(&cfg.tn, meta)?);
    }
    let mut config = cfg.tn;
    let name = if keys == ["none"] {
        if config.flags == TnFlags::default() { "Full TN".to_string() } else { "TN".to_string() }
    } else {
        tntm_core::tn::apply_ablations(&mut config.flags, &keys)?;
        ablated_name(&keys)
    };
    Ok(vec![variant(&name, config, meta)?])
}

/// Directory name of a variant.
pub fn variant_key(name: &str) -> String {
    match name {
        "HDP-LDA" => "hdp-lda".into(),
        "NP-ATM" => "npatm".into(),
        "TN" => "tn".into(),
        _ => name.split(" + ").map(ablation_key).collect::<Vec<_>>().join("+"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedReport {
    pub variant: String,
    pub seed: u64,
    pub iterations: u32,
    pub train_documents: usize,
    pub test_documents: usize,
    pub network: bool,
    pub metrics: EvalReport,
    pub note: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedOutcome {
    pub variant: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub report: Option<SeedReport>,
    /// Exit code and message of a failed run.
    pub error: Option<(i32, String)>,
}

/// Trains one variant for one seed and writes its outputs into `dir`.
pub fn run_seed(cfg: &RunConfig, data: &Data, v: &Variant, seed: u64, dir: &Path) -> Result<SeedReport> {
    let mut rng = stream(seed, DATA_STREAM);
    let (train, test) = split_train_test(&data.corpus, cfg.data.train_ratio, &mut rng)?;
    let text = TextState::new(v.spec.validate()?, &train)?;
    let network = match (&data.edges, v.run_network) {
        (Some(edges), true) => {
            let pairs = PairSet::sample(edges, train.authors.len() as u32, &cfg.network.pairs, &mut rng)?;
            Some(NetworkState::for_tn(&text, pairs, cfg.network.kernel, cfg.network.params)?)
        }
        (None, true) => {
            log::warn!("{}: no edge file, training without the network model", v.name);
            None
        }
        _ => None,
    };
    let has_network = network.is_some();
    let schedule = Schedule { seed, ..cfg.schedule };
    let mut chain = ChainState::new(text, network, schedule, v.config.concentration_prior)?;
    let labels = data.labels.as_ref().map(|l| l.align(&train)).transpose()?;
    let test = (!test.documents.is_empty()).then_some(test);
    let snapshot = |chain: &ChainState| Snapshot {
        variant: v.name.clone(),
        seed,
        config: v.config,
        eval: cfg.eval.clone(),
        chain: chain.clone(),
        train: train.clone(),
        test: test.clone(),
        labels: labels.clone(),
    };
    let mut trace = Trace::default();
    let mut failure = None;
    while !chain.is_done() {
        let start = Instant::now();
        match chain.step() {
            Ok(mut rec) => {
                if cfg.timing {
                    rec.ms = start.elapsed().as_millis() as u64;
                }
                trace.records.push(rec);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        if chain.iteration() % cfg.schedule.snapshot_every == 0 && !chain.is_done() {
            write_file(&dir.join(SNAPSHOT_FILE), encode(&snapshot(&chain)))?;
        }
    }
    write_file(&dir.join(TRACE_FILE), trace.to_csv())?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    write_file(&dir.join(SNAPSHOT_FILE), encode(&snapshot(&chain)))?;
    let metrics = evaluate(&chain, &train, test.as_ref(), labels.as_deref(), &cfg.eval, &mut stream(seed, EVAL_STREAM))?;
    let report = SeedReport {
        variant: v.name.clone(),
        seed,
        iterations: chain.iteration(),
        train_documents: train.documents.len(),
        test_documents: test.as_ref().map_or(0, |t| t.documents.len()),
        network: has_network,
        metrics,
        note: PERPLEXITY_NOTE,
    };
    write_file(&dir.join(REPORT_FILE), serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub rows: Vec<ResultRow>,
    pub outcomes: Vec<SeedOutcome>,
}

impl TrainSummary {
    /// First failure, for the exit status.
    pub fn failure(&self) -> Option<&(i32, String)> {
        self.outcomes.iter().find_map(|o| o.error.as_ref())
    }
}

/// Runs every variant and seed with at most `cfg.workers` chains in parallel,
/// then writes `results.csv` and `results.txt`.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let meta = TnMeta::from_corpus(&data.corpus);
    let vs = variants(cfg, &meta)?;
    let out = &cfg.output_dir;
    write_file(&out.join("config.toml"), cfg.to_toml())?;
    let jobs: Vec<(usize, u64)> = (0..vs.len()).flat_map(|v| cfg.seeds.iter().map(move |&s| (v, s))).collect();
    let results: Vec<Mutex<Option<SeedOutcome>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(vi, seed)) = jobs.get(i) else { break };
                let v = &vs[vi];
                let dir = out.join(variant_key(&v.name)).join(format!("seed-{seed}"));
                log::info!("training {} seed {seed}", v.name);
                let outcome = match run_seed(cfg, &data, v, seed, &dir) {
                    Ok(report) => SeedOutcome { variant: v.name.clone(), seed, dir, report: Some(report), error: None },
                    Err(e) => {
                        log::error!("{} seed {seed} failed: {e}", v.name);
                        let _ = write_file(&dir.join(FAILED_FILE), format!("{e}\n"));
                        SeedOutcome { variant: v.name.clone(), seed, dir, report: None, error: Some((e.exit_code(), e.to_string())) }
                    }
                };
                *results[i].lock().expect("no poisoned workers") = Some(outcome);
            });
        }
    });
    let outcomes: Vec<SeedOutcome> = results.into_iter().map(|m| m.into_inner().unwrap().expect("every job ran")).collect();
    let rows: Vec<ResultRow> = vs
        .iter()
        .map(|v| {
            let mine: Vec<&SeedOutcome> = outcomes.iter().filter(|o| o.variant == v.name).collect();
            let metrics: Vec<&EvalReport> = mine.iter().filter_map(|o| o.report.as_ref().map(|r| &r.metrics)).collect();
            ResultRow {
                variant: v.name.clone(),
                perplexity: metrics.iter().filter_map(|m| m.perplexity).collect(),
                network_ll: metrics.iter().filter_map(|m| m.network_ll).collect(),
                failed: mine.iter().filter(|o| o.error.is_some()).count(),
            }
        })
        .collect();
    write_file(&out.join("results.csv"), results_csv(&rows))?;
    write_file(&out.join("results.txt"), results_text(&rows))?;
    Ok(TrainSummary { rows, outcomes })
}
