//! Graph builders for the Twitter-Network topic model, its baselines and ablations.
//!
//! Full wiring: `μ0 → ν_i`, `μ0 → μ1`, `θ'_m ← {ν_a(m), μ1}`, `η_m ← θ'_m`,
//! `θ_m ← {θ'_m, η_m}`, `γ_k ← ψ_k`, `ψ_k ← uniform(V)`. Hashtags draw topics
//! from `η_m` and symbols from `γ_k`; words draw from `θ_m` and `ψ_k`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::graph::{EdgeSpec, GraphSpec, GroupSpec, LeafSpec, NodeSpec, Plate, RootBase, Stream};
use crate::pdp::{ConcentrationPrior, PdpHyper};
use crate::{Error, Result};

pub const MU0: &str = "mu0";
pub const NU: &str = "nu";
pub const MU1: &str = "mu1";
pub const THETA_PRIME: &str = "theta_prime";
pub const ETA: &str = "eta";
pub const THETA: &str = "theta";
pub const PSI: &str = "psi";
pub const GAMMA: &str = "gamma";

/// Hyperparameter group of topic-side nodes.
pub const TOPIC_GROUP: &str = "topic";
/// Hyperparameter group of vocabulary-side nodes.
pub const VOCAB_GROUP: &str = "vocab";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TnFlags {
    pub use_author: bool,
    pub use_hashtag: bool,
    pub use_mu1: bool,
    pub use_word_tag_link: bool,
    pub use_power_law: bool,
    pub use_network: bool,
}

impl Default for TnFlags {
    fn default() -> Self {
        TnFlags {
            use_author: true,
            use_hashtag: true,
            use_mu1: true,
            use_word_tag_link: true,
            use_power_law: true,
            use_network: true,
        }
    }
}

/// Mixture weights λ of the two-parent nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Lambdas {
    /// `ν → θ'`
    pub author: f64,
    /// `μ1 → θ'`
    pub misc: f64,
    /// `θ' → θ`
    pub document: f64,
    /// `η → θ`
    pub hashtag: f64,
}

impl Default for Lambdas {
    fn default() -> Self {
        Lambdas {
            author: 1.0,
            misc: 1.0,
            document: 1.0,
            hashtag: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TnConfig {
    pub discount_topic: f64,
    pub discount_vocab: f64,
    pub concentration_init: f64,
    pub concentration_prior: ConcentrationPrior,
    pub lambda: Lambdas,
    pub flags: TnFlags,
}

impl Default for TnConfig {
    fn default() -> Self {
        TnConfig {
            discount_topic: 0.5,
            discount_vocab: 0.7,
            concentration_init: 0.5,
            concentration_prior: ConcentrationPrior::default(),
            lambda: Lambdas::default(),
            flags: TnFlags::default(),
        }
    }
}

impl TnConfig {
    fn groups(&self) -> Result<BTreeMap<String, GroupSpec>> {
        let (dt, dv) = if self.flags.use_power_law {
            (self.discount_topic, self.discount_vocab)
        } else {
            (0.0, 0.0)
        };
        let mut g = BTreeMap::new();
        for (name, d) in [(TOPIC_GROUP, dt), (VOCAB_GROUP, dv)] {
            PdpHyper::new(d, self.concentration_init)?;
            g.insert(
                name.to_string(),
                GroupSpec {
                    discount: d,
                    concentration: self.concentration_init,
                },
            );
        }
        Ok(g)
    }
}

/// Plate sizes the builders check documents against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TnMeta {
    pub authors: u32,
    pub doc_author: Vec<u32>,
    pub vocab_size: u32,
}

impl TnMeta {
    pub fn from_corpus(corpus: &crate::corpus::Corpus) -> TnMeta {
        TnMeta {
            authors: corpus.authors.len() as u32,
            doc_author: corpus.documents.iter().map(|d| d.author).collect(),
            vocab_size: corpus.vocabulary.len() as u32,
        }
    }

    fn check(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::Input("empty vocabulary".into()));
        }
        if let Some((m, a)) = self
            .doc_author
            .iter()
            .enumerate()
            .find(|(_, &a)| a >= self.authors)
        {
            return Err(Error::Input(format!("document {m} maps to unknown author {a}")));
        }
        Ok(())
    }
}

fn node(id: &str, role: &str, group: &str, plate: Plate, base: Option<RootBase>) -> NodeSpec {
    NodeSpec {
        id: id.into(),
        role: role.into(),
        group: group.into(),
        plate,
        base,
    }
}

fn edge(parent: &str, child: &str, weight: f64) -> EdgeSpec {
    EdgeSpec {
        child: child.into(),
        parent: parent.into(),
        weight,
    }
}

fn leaf(node: &str, stream: Stream) -> LeafSpec {
    LeafSpec {
        node: node.into(),
        stream: Some(stream),
    }
}

fn vocabulary_nodes(spec: &mut GraphSpec, hashtags: bool) {
    spec.nodes.push(node(
        PSI,
        "per-topic word distribution",
        VOCAB_GROUP,
        Plate::PerTopic,
        Some(RootBase::Vocabulary),
    ));
    spec.leaves.push(leaf(PSI, Stream::Words));
    if hashtags {
        spec.nodes.push(node(
            GAMMA,
            "per-topic hashtag distribution",
            VOCAB_GROUP,
            Plate::PerTopic,
            None,
        ));
        spec.edges.push(edge(PSI, GAMMA, 1.0));
        spec.leaves.push(leaf(GAMMA, Stream::Hashtags));
    }
}

/// Builds the Twitter-Network graph with the configured components removed.
pub fn build_tn_graph(config: &TnConfig, meta: &TnMeta) -> Result<GraphSpec> {
    meta.check()?;
    let f = config.flags;
    if !f.use_author && !f.use_mu1 {
        return Err(Error::InvalidHyper(
            "removing both the author and the miscellaneous node orphans the documents".into(),
        ));
    }
    let topic = TOPIC_GROUP;
    let lam = config.lambda;
    let mut spec = GraphSpec {
        hyper_groups: config.groups()?,
        ..Default::default()
    };
    spec.nodes.push(node(MU0, "global topic distribution", topic, Plate::Global, Some(RootBase::Topics)));
    if f.use_author {
        spec.nodes.push(node(NU, "author topic distribution", topic, Plate::PerAuthor, None));
        spec.edges.push(edge(MU0, NU, 1.0));
    }
    if f.use_mu1 {
        spec.nodes.push(node(MU1, "miscellaneous topic distribution", topic, Plate::Global, None));
        spec.edges.push(edge(MU0, MU1, 1.0));
    }
    spec.nodes.push(node(THETA_PRIME, "document base topic distribution", topic, Plate::PerDocument, None));
    if f.use_author {
        spec.edges.push(edge(NU, THETA_PRIME, lam.author));
    }
    if f.use_mu1 {
        spec.edges.push(edge(MU1, THETA_PRIME, lam.misc));
    }
    if f.use_hashtag {
        spec.nodes.push(node(ETA, "document hashtag topic distribution", topic, Plate::PerDocument, None));
        spec.edges.push(edge(THETA_PRIME, ETA, 1.0));
        spec.leaves.push(leaf(ETA, Stream::Hashtags));
    }
    spec.nodes.push(node(THETA, "document word topic distribution", topic, Plate::PerDocument, None));
    spec.edges.push(edge(THETA_PRIME, THETA, lam.document));
    if f.use_hashtag && f.use_word_tag_link {
        spec.edges.push(edge(ETA, THETA, lam.hashtag));
    }
    spec.leaves.push(leaf(THETA, Stream::Words));
    vocabulary_nodes(&mut spec, f.use_hashtag);
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Baseline {
    HdpLda,
    Npatm,
}

impl core::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hdp-lda" | "hdp_lda" => Ok(Baseline::HdpLda),
            "npatm" | "atm" => Ok(Baseline::Npatm),
            other => Err(Error::Input(format!("unknown baseline `{other}`"))),
        }
    }
}

/// HDP-LDA (`μ0 → θ_m`) or the nonparametric author-topic model
/// (`μ0 → ν_i → θ_m`), both with `ψ_k` vocabularies and no hashtags.
pub fn build_baseline(kind: Baseline, config: &TnConfig, meta: &TnMeta) -> Result<GraphSpec> {
    meta.check()?;
    let mut spec = GraphSpec {
        hyper_groups: config.groups()?,
        ..Default::default()
    };
    spec.nodes.push(node(MU0, "global topic distribution", TOPIC_GROUP, Plate::Global, Some(RootBase::Topics)));
    let parent = match kind {
        Baseline::HdpLda => MU0,
        Baseline::Npatm => {
            spec.nodes.push(node(NU, "author topic distribution", TOPIC_GROUP, Plate::PerAuthor, None));
            spec.edges.push(edge(MU0, NU, 1.0));
            NU
        }
    };
    spec.nodes.push(node(THETA, "document topic distribution", TOPIC_GROUP, Plate::PerDocument, None));
    spec.edges.push(edge(parent, THETA, 1.0));
    spec.leaves.push(leaf(THETA, Stream::Words));
    vocabulary_nodes(&mut spec, false);
    spec.validate()?;
    Ok(spec)
}

/// One model variant of the ablation study.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub spec: GraphSpec,
    pub config: TnConfig,
    pub run_network: bool,
}

pub const ABLATION_NAMES: [&str; 7] = [
    "No Author",
    "No Hashtag",
    "No μ1 node",
    "No Word-tag link",
    "No Power-law",
    "No Network",
    "Full TN",
];

/// The six single-component ablations followed by the full model.
pub fn ablation_suite(config: &TnConfig, meta: &TnMeta) -> Result<Vec<Variant>> {
    let mut out = Vec::with_capacity(ABLATION_NAMES.len());
    for name in ABLATION_NAMES {
        let mut c = *config;
        c.flags = TnFlags::default();
        match name {
            "No Author" => c.flags.use_author = false,
            "No Hashtag" => c.flags.use_hashtag = false,
            "No μ1 node" => c.flags.use_mu1 = false,
            "No Word-tag link" => c.flags.use_word_tag_link = false,
            "No Power-law" => c.flags.use_power_law = false,
            "No Network" => c.flags.use_network = false,
            _ => {}
        }
        out.push(variant(name, c, meta)?);
    }
    Ok(out)
}

/// A named variant: the graph for `config` and whether the network phase runs.
/// The network needs author nodes, so it is off whenever they are.
pub fn variant(name: &str, config: TnConfig, meta: &TnMeta) -> Result<Variant> {
    Ok(Variant {
        name: name.to_string(),
        spec: build_tn_graph(&config, meta)?,
        config,
        run_network: config.flags.use_network && config.flags.use_author,
    })
}

/// Short identifier of an ablation name, for file names and config keys.
pub fn ablation_key(name: &str) -> String {
    match name {
        "No Author" => "no-author",
        "No Hashtag" => "no-hashtag",
        "No μ1 node" => "no-mu1",
        "No Word-tag link" => "no-word-tag-link",
        "No Power-law" => "no-power-law",
        "No Network" => "no-network",
        "Full TN" => "full",
        _ => return name.to_lowercase().replace(' ', "-"),
    }
    .to_string()
}

/// Applies ablation keys (as produced by [`ablation_key`]) to a flag set.
pub fn apply_ablations(flags: &mut TnFlags, keys: &[String]) -> Result<()> {
    for k in keys {
        match k.as_str() {
            "none" | "full" => {}
            "no-author" => flags.use_author = false,
            "no-hashtag" => flags.use_hashtag = false,
            "no-mu1" => flags.use_mu1 = false,
            "no-word-tag-link" => flags.use_word_tag_link = false,
            "no-power-law" => flags.use_power_law = false,
            "no-network" => flags.use_network = false,
            other => return Err(Error::Input(format!("unknown ablation `{other}`"))),
        }
    }
    Ok(())
}
