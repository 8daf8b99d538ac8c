//! Held-out evaluation, clustering and coherence metrics, topic labels and
//! author recommendation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::Corpus;
use crate::engine::{ChainState, NetworkState};
use crate::gp::{auc, cosine, embedding, network_loglik, KernelKind};
use crate::graph::{Stream, TextState, UNASSIGNED};
use crate::math;
use crate::tn;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FoldIn {
    /// Leading share of each document's words seen during fold-in.
    pub fraction: f64,
    pub sweeps: u32,
}

impl Default for FoldIn {
    fn default() -> Self {
        FoldIn {
            fraction: 0.5,
            sweeps: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Perplexity {
    pub perplexity: f64,
    pub log_prob: f64,
    pub scored_tokens: u64,
    /// Documents skipped because nothing was left to score.
    pub excluded_docs: u32,
}

/// Sweeps the tokens of documents `docs` of a frozen state, calling `observe`
/// after each sweep of the second half (or once after initialization when
/// `sweeps` is 0).
fn fold_in<R: Rng + ?Sized, F: FnMut(&TextState)>(
    state: &mut TextState,
    docs: core::ops::Range<u32>,
    sweeps: u32,
    rng: &mut R,
    mut observe: F,
) -> Result<u32> {
    state.initialize(rng)?;
    let start = if docs.is_empty() { 0 } else { state.doc_token_range(docs.start).start };
    let end = state.tokens().len();
    if sweeps == 0 {
        observe(state);
        return Ok(1);
    }
    let mut samples = 0;
    for s in 0..sweeps {
        state.sweep_tokens(start..end, rng, None)?;
        if s >= sweeps / 2 {
            observe(state);
            samples += 1;
        }
    }
    Ok(samples)
}

/// Document-completion perplexity of the words of `test`: the first
/// `⌈fraction·len⌉` words and all hashtags of each document are folded in with
/// the trained nodes frozen, the remaining words are scored by the predictive
/// averaged over the second half of the fold-in sweeps.
pub fn perplexity<R: Rng + ?Sized>(state: &TextState, test: &Corpus, opts: &FoldIn, rng: &mut R) -> Result<Perplexity> {
    if !(opts.fraction >= 0.0 && opts.fraction < 1.0) {
        return Err(Error::Input(format!("fold-in fraction {} outside [0, 1)", opts.fraction)));
    }
    let leaves = state
        .graph()
        .stream(Stream::Words)
        .ok_or_else(|| Error::Unsupported("model has no word stream".into()))?;
    let mut s = state.clone();
    s.freeze();
    let first_doc = s.num_documents();
    let mut heldout: Vec<(u32, Vec<u32>)> = Vec::new();
    let mut excluded = 0;
    for doc in &test.documents {
        let seen = libm::ceil(opts.fraction * doc.words.len() as f64) as usize;
        if seen >= doc.words.len() {
            excluded += 1;
            continue;
        }
        let mut author = doc.author;
        while author >= s.num_authors() {
            author = s.push_author();
        }
        let d = s.push_document(author, &doc.words[..seen], &doc.hashtags)?;
        heldout.push((d, doc.words[seen..].to_vec()));
    }
    if heldout.is_empty() {
        return Err(Error::Input("no test document has held-out words".into()));
    }
    let mut sums: Vec<Vec<f64>> = heldout.iter().map(|(_, w)| vec![0.0; w.len()]).collect();
    let docs = first_doc..s.num_documents();
    let samples = fold_in(&mut s, docs, opts.sweeps, rng, |st| {
        for ((d, words), acc) in heldout.iter().zip(sums.iter_mut()) {
            let tv = st.joint_predictive(leaves.topic_leaf, *d).expect("topic-side leaf");
            for (w, a) in words.iter().zip(acc.iter_mut()) {
                *a += tv
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(k, p)| p * st.symbol_probability(leaves.vocab_leaf, k as u32, *w))
                    .sum::<f64>();
            }
        }
    })?;
    let mut log_prob = 0.0;
    let mut n = 0u64;
    for acc in &sums {
        for a in acc {
            log_prob += math::ln(a / samples as f64);
            n += 1;
        }
    }
    Ok(Perplexity {
        perplexity: math::exp(-log_prob / n as f64),
        log_prob,
        scored_tokens: n,
        excluded_docs: excluded,
    })
}

/// GP conditional mean of the link function at the held-out pairs, from the
/// posterior mean over the training pairs.
pub fn heldout_link_means(net: &NetworkState) -> Result<Vec<f64>> {
    let gp = &net.gp;
    if gp.pairs().heldout.is_empty() {
        return Ok(Vec::new());
    }
    gp.conditional_mean(gp.embeddings(), gp.kind(), &gp.posterior_mean(), &gp.pairs().heldout)
}

/// Network log-likelihood of the held-out pairs; 0 when there are none.
pub fn heldout_network_ll(net: &NetworkState) -> Result<f64> {
    let means = heldout_link_means(net)?;
    Ok(network_loglik(&means, &net.gp.pairs().heldout_x))
}

/// Held-out link AUC, `None` when one class is missing.
pub fn heldout_auc(net: &NetworkState) -> Result<Option<f64>> {
    let means = heldout_link_means(net)?;
    Ok(auc(&means, &net.gp.pairs().heldout_x))
}

/// Log-likelihood of `heldout` under a Bernoulli at the link density of `train`.
pub fn bernoulli_baseline_ll(train: &[u8], heldout: &[u8]) -> f64 {
    let n = train.len().max(1) as f64;
    let rho = (train.iter().filter(|&&x| x != 0).count() as f64 / n).clamp(1e-6, 1.0 - 1e-6);
    heldout
        .iter()
        .map(|&x| if x != 0 { math::ln(rho) } else { math::ln(1.0 - rho) })
        .sum()
}

/// `(purity, NMI)` of a predicted clustering against reference labels. NMI
/// normalizes by the arithmetic mean of the two entropies and is 1 when both
/// clusterings are a single block.
pub fn cluster_metrics(pred: &[u32], truth: &[u32]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Input("clusterings must be non-empty and of equal length".into()));
    }
    let n = pred.len() as f64;
    let mut joint: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut pc: BTreeMap<u32, f64> = BTreeMap::new();
    let mut tc: BTreeMap<u32, f64> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *joint.entry((p, t)).or_default() += 1.0;
        *pc.entry(p).or_default() += 1.0;
        *tc.entry(t).or_default() += 1.0;
    }
    let mut best: BTreeMap<u32, f64> = BTreeMap::new();
    for (&(p, _), &c) in &joint {
        let b = best.entry(p).or_default();
        *b = b.max(c);
    }
    let purity = best.values().sum::<f64>() / n;
    // I = H(P) + H(T) - H(P, T), each entropy summed over sorted counts so that
    // identical partitions give bitwise identical terms.
    let entropy = |counts: &mut Vec<f64>| -> f64 {
        counts.sort_by(f64::total_cmp);
        -counts.iter().map(|c| c / n * math::ln(c / n)).sum::<f64>()
    };
    let hp = entropy(&mut pc.values().copied().collect());
    let ht = entropy(&mut tc.values().copied().collect());
    let mi = hp + ht - entropy(&mut joint.values().copied().collect());
    let nmi = if hp + ht == 0.0 { 1.0 } else { (2.0 * mi / (hp + ht)).clamp(0.0, 1.0) };
    Ok((purity, nmi))
}

/// Mean over topics of the mean pairwise PMI of their word lists, with
/// document-level co-occurrence in `reference` and `eps` added to every document
/// count. Lists with fewer than two words are skipped; `None` when all are.
pub fn pmi_coherence(topics: &[Vec<u32>], reference: &Corpus, eps: f64) -> Option<f64> {
    let d = reference.documents.len() as f64;
    let sets: Vec<alloc::collections::BTreeSet<u32>> = reference
        .documents
        .iter()
        .map(|doc| doc.words.iter().copied().collect())
        .collect();
    let df = |w: u32| sets.iter().filter(|s| s.contains(&w)).count() as f64;
    let co = |a: u32, b: u32| sets.iter().filter(|s| s.contains(&a) && s.contains(&b)).count() as f64;
    let mut per_topic = Vec::new();
    for words in topics {
        if words.len() < 2 {
            continue;
        }
        let mut total = 0.0;
        let mut pairs = 0;
        for i in 0..words.len() {
            for j in i + 1..words.len() {
                let (pi, pj) = ((df(words[i]) + eps) / d, (df(words[j]) + eps) / d);
                let pij = (co(words[i], words[j]) + eps) / d;
                total += math::ln(pij / (pi * pj));
                pairs += 1;
            }
        }
        per_topic.push(total / pairs as f64);
    }
    if per_topic.is_empty() {
        None
    } else {
        Some(per_topic.iter().sum::<f64>() / per_topic.len() as f64)
    }
}

/// Most frequent topic among each document's word tokens (hashtags when a
/// document has no words); `UNASSIGNED` for empty documents.
pub fn doc_topic_argmax(state: &TextState) -> Vec<u32> {
    (0..state.num_documents())
        .map(|d| {
            let toks = &state.tokens()[state.doc_token_range(d)];
            let has_words = toks.iter().any(|t| t.stream == Stream::Words);
            let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
            for t in toks {
                if (t.stream == Stream::Words || !has_words) && t.topic != UNASSIGNED {
                    *counts.entry(t.topic).or_default() += 1;
                }
            }
            counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&k, _)| k)
                .unwrap_or(UNASSIGNED)
        })
        .collect()
}

fn live_topic_ids(state: &TextState) -> Vec<u32> {
    let mut live = vec![0u64; state.num_topics() as usize];
    for t in state.tokens() {
        if t.topic != UNASSIGNED {
            live[t.topic as usize] += 1;
        }
    }
    (0..state.num_topics()).filter(|&k| live[k as usize] > 0).collect()
}

/// Symbols seated at the leaf of `stream` for `topic`, ranked by that leaf's
/// predictive mass.
fn ranked_symbols(state: &TextState, stream: Stream, topic: u32, top: usize) -> Result<Vec<(u32, f64)>> {
    let leaf = state
        .graph()
        .stream(stream)
        .ok_or_else(|| Error::Unsupported(format!("model has no {} stream", stream.name())))?
        .vocab_leaf;
    let Some(node) = state.node(state.topic_instance(leaf, topic)) else {
        return Ok(Vec::new());
    };
    let probs = state.symbol_predictive(leaf, topic)?;
    let mut seen: Vec<(u32, f64)> = node.iter().map(|(w, _)| (w, probs[w as usize])).collect();
    seen.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    seen.truncate(top);
    Ok(seen)
}

/// Top `n` words of every live topic by word-leaf predictive mass.
pub fn top_words(state: &TextState, n: usize) -> Result<Vec<Vec<u32>>> {
    live_topic_ids(state)
        .into_iter()
        .map(|k| Ok(ranked_symbols(state, Stream::Words, k, n)?.into_iter().map(|(w, _)| w).collect()))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TopicLabel {
    pub topic: u32,
    pub tags: Vec<(u32, f64)>,
    pub words: Vec<(u32, f64)>,
}

/// Hashtag labels and top words of every live topic.
pub fn label_topics(state: &TextState, top_tags: usize, top_words: usize) -> Result<Vec<TopicLabel>> {
    if state.graph().stream(Stream::Hashtags).is_none() {
        return Err(Error::Unsupported(
            "model has no hashtag nodes (trained with the no-hashtag ablation)".into(),
        ));
    }
    live_topic_ids(state)
        .into_iter()
        .map(|k| {
            Ok(TopicLabel {
                topic: k,
                tags: ranked_symbols(state, Stream::Hashtags, k, top_tags)?,
                words: ranked_symbols(state, Stream::Words, k, top_words)?,
            })
        })
        .collect()
}

/// An author's topics by normalized author-node counts, heaviest first.
pub fn author_topics(state: &TextState, author: u32) -> Result<Vec<(u32, f64)>> {
    let role = state
        .graph()
        .role(tn::NU)
        .ok_or_else(|| Error::Unsupported("model has no author nodes".into()))?;
    let node = state
        .instance(role, author)
        .ok_or_else(|| Error::Input(format!("unknown author {author}")))?;
    let counts = state.topic_counts(node, state.num_topics() as usize);
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Ok(Vec::new());
    }
    let mut out: Vec<(u32, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| (k as u32, c as f64 / total as f64))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Recommendation {
    pub kernel: KernelKind,
    pub embedding: Vec<f64>,
    /// `(author, link score, cosine of embeddings)`, best score first.
    pub ranked: Vec<(u32, f64, f64)>,
}

impl Recommendation {
    pub fn recommended(&self, k: usize) -> &[(u32, f64, f64)] {
        &self.ranked[..k.min(self.ranked.len())]
    }

    /// Lowest scoring `k`, worst first.
    pub fn not_recommended(&self, k: usize) -> Vec<(u32, f64, f64)> {
        self.ranked.iter().rev().take(k).copied().collect()
    }

    /// Mean cosine of the best (or worst) `k` authors.
    pub fn mean_cosine(&self, k: usize, best: bool) -> f64 {
        let xs: Vec<f64> = if best {
            self.recommended(k).iter().map(|r| r.2).collect()
        } else {
            self.not_recommended(k).iter().map(|r| r.2).collect()
        };
        xs.iter().sum::<f64>() / xs.len().max(1) as f64
    }
}

/// Folds a new author's documents into a frozen copy of the chain, estimates
/// its embedding and ranks the training authors by the GP conditional mean of
/// the link function under `kernel`.
pub fn recommend_authors<R: Rng + ?Sized>(
    chain: &ChainState,
    docs: &[(Vec<u32>, Vec<u32>)],
    kernel: KernelKind,
    opts: &FoldIn,
    rng: &mut R,
) -> Result<Recommendation> {
    let net = chain
        .network
        .as_ref()
        .ok_or_else(|| Error::Unsupported("model has no network component".into()))?;
    if docs.iter().all(|(w, h)| w.is_empty() && h.is_empty()) {
        return Err(Error::Input("new author has no tokens".into()));
    }
    let mut s = chain.text.clone();
    s.freeze();
    let author = s.push_author();
    let first = s.num_documents();
    for (w, h) in docs {
        s.push_document(author, w, h)?;
    }
    let role = net.author_role();
    let node = s.instance(role, author).expect("new author node");
    let dims = net.gp.embeddings().first().map_or(1, |e| e.len());
    let mut sum = vec![0.0; dims];
    let new_docs = first..s.num_documents();
    let samples = fold_in(&mut s, new_docs, opts.sweeps, rng, |st| {
        for (a, c) in sum.iter_mut().zip(st.topic_counts(node, dims)) {
            *a += c as f64;
        }
    })?;
    let total: f64 = sum.iter().sum::<f64>() / samples as f64 + 0.5 * dims as f64;
    let new: Vec<f64> = sum.iter().map(|c| (c / samples as f64 + 0.5) / total).collect();
    let mut emb = net.gp.embeddings().to_vec();
    let train = emb.len() as u32;
    emb.push(new.clone());
    let targets: Vec<(u32, u32)> = (0..train).map(|a| (a, train)).collect();
    let scores = net.gp.conditional_mean(&emb, kernel, &net.gp.posterior_mean(), &targets)?;
    let mut ranked: Vec<(u32, f64, f64)> = (0..train)
        .map(|a| (a, scores[a as usize], cosine(&emb[a as usize], &new).unwrap_or(0.0)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(Recommendation {
        kernel,
        embedding: new,
        ranked,
    })
}

/// Smoothed embedding of every author node, for reporting.
pub fn author_embeddings(state: &TextState) -> Result<Vec<Vec<f64>>> {
    let role = state
        .graph()
        .role(tn::NU)
        .ok_or_else(|| Error::Unsupported("model has no author nodes".into()))?;
    let dims = state.num_topics() as usize;
    Ok((0..state.num_authors())
        .map(|a| embedding(&state.topic_counts(state.instance(role, a).expect("author node"), dims)))
        .collect())
}

/// Metrics of one trained chain; fields the model variant cannot produce are `None`.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub perplexity: Option<f64>,
    pub network_ll: Option<f64>,
    pub link_auc: Option<f64>,
    pub purity: Option<f64>,
    pub nmi: Option<f64>,
    pub pmi: Option<f64>,
    pub excluded_docs: u32,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, math::sqrt(v))
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EvalOptions {
    pub fold_in: FoldIn,
    pub pmi_top_words: usize,
    pub pmi_epsilon: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            fold_in: FoldIn::default(),
            pmi_top_words: 10,
            pmi_epsilon: 0.01,
        }
    }
}

/// Runs every applicable metric on a trained chain. `labels` are reference
/// document labels of the training corpus, if known.
pub fn evaluate<R: Rng + ?Sized>(
    chain: &ChainState,
    train: &Corpus,
    test: Option<&Corpus>,
    labels: Option<&[u32]>,
    opts: &EvalOptions,
    rng: &mut R,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    if let Some(test) = test {
        let p = perplexity(&chain.text, test, &opts.fold_in, rng)?;
        report.perplexity = Some(p.perplexity);
        report.excluded_docs = p.excluded_docs;
    }
    if let Some(net) = &chain.network {
        if net.gp.samples() > 0 {
            report.network_ll = Some(heldout_network_ll(net)?);
            report.link_auc = heldout_auc(net)?;
        }
    }
    if let Some(labels) = labels {
        let (purity, nmi) = cluster_metrics(&doc_topic_argmax(&chain.text), labels)?;
        report.purity = Some(purity);
        report.nmi = Some(nmi);
    }
    report.pmi = pmi_coherence(&top_words(&chain.text, opts.pmi_top_words)?, train, opts.pmi_epsilon);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    #[test]
    fn clustering_examples() {
        assert_eq!(cluster_metrics(&[0, 1, 2], &[5, 6, 7]).unwrap(), (1.0, 1.0));
        let (p, n) = cluster_metrics(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap();
        assert_eq!((p, n), (0.5, 0.0));
        let (p, _) = cluster_metrics(&[1, 1, 2, 2], &[0, 0, 0, 1]).unwrap();
        assert_eq!(p, 0.75);
        assert!(cluster_metrics(&[0], &[]).is_err());
    }

    fn doc(words: &[u32]) -> Document {
        Document {
            id: "d".into(),
            author: 0,
            words: words.to_vec(),
            hashtags: Vec::new(),
        }
    }

    #[test]
    fn pmi_by_hand() {
        let c = Corpus {
            documents: vec![doc(&[0, 1]), doc(&[0, 2]), doc(&[1])],
            authors: vec!["a".into()],
            vocabulary: vec!["x".into(), "y".into(), "z".into()],
        };
        let eps = 0.5;
        let p = |c: f64| (c + eps) / 3.0;
        let pmi01 = math::ln(p(1.0) / (p(2.0) * p(2.0)));
        let pmi02 = math::ln(p(1.0) / (p(2.0) * p(1.0)));
        let pmi12 = math::ln(p(0.0) / (p(2.0) * p(1.0)));
        let want = ((pmi01 + pmi02 + pmi12) / 3.0 + pmi01) / 2.0;
        let got = pmi_coherence(&[vec![0, 1, 2], vec![0, 1], vec![2]], &c, eps).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert_eq!(pmi_coherence(&[vec![1]], &c, eps), None);
    }

    #[test]
    fn bernoulli_baseline_at_half_density() {
        let ll = bernoulli_baseline_ll(&[1, 0], &[1, 0, 0]);
        assert!((ll - 3.0 * math::ln(0.5)).abs() < 1e-12);
        assert_eq!(mean_sd(&[1.0, 3.0]), (2.0, math::sqrt(2.0)));
    }
}
