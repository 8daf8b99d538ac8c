//! Run configuration. One TOML file; every key has a default and unknown keys
//! are rejected.
//!
//! ```toml
//! model = "tn"                  # tn | hdp-lda | npatm
//! ablate = ["none"]             # none | all | no-author, no-hashtag, ...
//! seeds = [0, 1, 2, 3, 4]
//! workers = 1
//! output_dir = "runs"
//!
//! [data]
//! corpus = "corpus.jsonl"
//! edges = "edges.csv"
//! labels = "labels.csv"
//! min_author_docs = 100
//! min_token_count = 1
//! train_ratio = 0.9
//!
//! [tn]
//! discount_topic = 0.5
//! discount_vocab = 0.7
//! concentration_init = 0.5
//! concentration_prior = { shape = 0.1, rate = 0.1 }
//! flags = { use_network = true }
//!
//! [schedule]
//! total_iterations = 2000
//! text_only_burnin = 1000
//!
//! [network]
//! kernel = "cosine"             # cosine | original
//! params = { signal = 1.0, lengthscale = 1.0, noise = 1.0 }
//! pairs = { max_pairs = 200, heldout_fraction = 0.1 }
//!
//! [eval]
//! fold_in = { fraction = 0.5, sweeps = 20 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tntm_core::engine::Schedule;
use tntm_core::eval::EvalOptions;
use tntm_core::gp::{KernelKind, KernelParams, PairOptions};
use tntm_core::tn::{Baseline, TnConfig};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Tn,
    HdpLda,
    Npatm,
}

impl ModelKind {
    pub fn baseline(self) -> Option<Baseline> {
        match self {
            ModelKind::Tn => None,
            ModelKind::HdpLda => Some(Baseline::HdpLda),
            ModelKind::Npatm => Some(Baseline::Npatm),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tn" => Ok(ModelKind::Tn),
            "hdp-lda" => Ok(ModelKind::HdpLda),
            "npatm" => Ok(ModelKind::Npatm),
            other => Err(CliError::Usage(format!("model: unknown kind `{other}` (tn, hdp-lda, npatm)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub corpus: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub min_author_docs: usize,
    pub min_token_count: usize,
    pub train_ratio: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            corpus: None,
            edges: None,
            labels: None,
            min_author_docs: 100,
            min_token_count: 1,
            train_ratio: 0.9,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub kernel: KernelKind,
    pub params: KernelParams,
    pub pairs: PairOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub ablate: Vec<String>,
    pub seeds: Vec<u64>,
    pub workers: usize,
    /// Record wall time per iteration in traces (breaks byte-identical reruns).
    pub timing: bool,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub tn: TnConfig,
    pub schedule: Schedule,
    pub network: NetworkConfig,
    pub eval: EvalOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Tn,
            ablate: vec!["none".into()],
            seeds: (0..5).collect(),
            workers: 1,
            timing: false,
            output_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            tn: TnConfig::default(),
            schedule: Schedule::default(),
            network: NetworkConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {}", e.message().trim_end())))
    }

    /// Reads a config file. Relative paths in it are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.data.corpus, &mut cfg.data.edges, &mut cfg.data.labels].into_iter().flatten() {
            resolve(p);
        }
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks values and that every referenced path exists.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(CliError::Usage(format!("config key `{key}`: {msg}")));
        if self.seeds.is_empty() {
            return bad("seeds", "must not be empty".into());
        }
        if self.workers == 0 {
            return bad("workers", "must be at least 1".into());
        }
        if !(self.data.train_ratio > 0.0 && self.data.train_ratio < 1.0) {
            return bad("data.train_ratio", format!("{} outside (0, 1)", self.data.train_ratio));
        }
        if self.data.min_author_docs == 0 {
            return bad("data.min_author_docs", "must be at least 1".into());
        }
        match &self.data.corpus {
            None => return bad("data.corpus", "no corpus given".into()),
            Some(p) if !p.is_file() => return bad("data.corpus", format!("{} does not exist", p.display())),
            _ => {}
        }
        for (key, p) in [("data.edges", &self.data.edges), ("data.labels", &self.data.labels)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return bad(key, format!("{} does not exist", p.display()));
                }
            }
        }
        if let Err(e) = self.schedule.check() {
            return bad("schedule", e.to_string());
        }
        if let Err(e) = self.network.params.check() {
            return bad("network.params", e.to_string());
        }
        let p = &self.network.pairs;
        if !(0.0..1.0).contains(&p.heldout_fraction) || p.nonlinks_per_link < 0.0 {
            return bad("network.pairs", format!("{p:?}"));
        }
        let f = &self.eval.fold_in;
        if !(0.0..1.0).contains(&f.fraction) || f.sweeps == 0 {
            return bad("eval.fold_in", format!("{f:?}"));
        }
        if self.model != ModelKind::Tn && self.ablation_keys()? != ["none"] {
            return bad("ablate", "ablations apply to the tn model only".into());
        }
        self.ablation_keys().map(|_| ())
    }

    /// Normalized ablation keys: `["all"]`, `["none"]` or a list of component keys.
    pub fn ablation_keys(&self) -> Result<Vec<String>> {
        let keys: Vec<String> = self
            .ablate
            .iter()
            .flat_map(|k| k.split(','))
            .map(|k| k.trim().to_string())
            .filter(|k| !k.is_empty())
            .collect();
        if keys.is_empty() || keys.iter().all(|k| k == "none") {
            return Ok(vec!["none".into()]);
        }
        if keys.iter().any(|k| k == "all") {
            if keys.len() > 1 {
                return Err(CliError::Usage("config key `ablate`: `all` cannot be combined".into()));
            }
            return Ok(keys);
        }
        let mut flags = self.tn.flags;
        tntm_core::tn::apply_ablations(&mut flags, &keys)
            .map_err(|e| CliError::Usage(format!("config key `ablate`: {e}")))?;
        Ok(keys.into_iter().filter(|k| k != "none").collect())
    }
}
