//! In-memory corpora, vocabulary construction, splitting and the synthetic generator.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::math;
use crate::{Error, Result};

/// Vocabulary entry that collects tokens rarer than the minimum count.
pub const OOV_TOKEN: &str = "<oov>";

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Document {
    pub id: String,
    pub author: u32,
    pub words: Vec<u32>,
    /// Hashtag tokens, indexed in the same vocabulary as words.
    pub hashtags: Vec<u32>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.words.len() + self.hashtags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub authors: Vec<String>,
    pub vocabulary: Vec<String>,
}

/// A tweet as read from disk, before vocabulary mapping.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RawDocument {
    pub id: String,
    pub author: String,
    #[cfg_attr(feature = "serde", serde(rename = "text-tokens"))]
    pub tokens: Vec<String>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub hashtags: Vec<String>,
}

fn normalize(token: &str) -> String {
    token.trim_start_matches('#').to_lowercase()
}

impl Corpus {
    /// Builds a corpus from raw records: lowercases tokens, strips the `#` sigil so
    /// a hashtag shares the index of the bare word, drops authors with fewer than
    /// `min_author_docs` documents and maps tokens seen fewer than
    /// `min_token_count` times to [`OOV_TOKEN`].
    pub fn from_raw(raw: &[RawDocument], min_author_docs: usize, min_token_count: usize) -> Result<Corpus> {
        let mut per_author: BTreeMap<&str, usize> = BTreeMap::new();
        for d in raw {
            *per_author.entry(d.author.as_str()).or_default() += 1;
        }
        let kept: Vec<&RawDocument> = raw
            .iter()
            .filter(|d| per_author[d.author.as_str()] >= min_author_docs)
            .collect();
        if kept.is_empty() {
            return Err(Error::Input("no documents left after author filtering".into()));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for d in &kept {
            for t in d.tokens.iter().chain(&d.hashtags) {
                *counts.entry(normalize(t)).or_default() += 1;
            }
        }
        let mut corpus = Corpus::default();
        let mut vocab: BTreeMap<String, u32> = BTreeMap::new();
        let mut authors: BTreeMap<String, u32> = BTreeMap::new();
        let mut oov: Option<u32> = None;
        for d in &kept {
            let author = *authors.entry(d.author.clone()).or_insert_with(|| {
                corpus.authors.push(d.author.clone());
                corpus.authors.len() as u32 - 1
            });
            let mut map = |t: &String| -> u32 {
                let t = normalize(t);
                if counts[&t] < min_token_count {
                    return *oov.get_or_insert_with(|| {
                        corpus.vocabulary.push(OOV_TOKEN.into());
                        corpus.vocabulary.len() as u32 - 1
                    });
                }
                *vocab.entry(t.clone()).or_insert_with(|| {
                    corpus.vocabulary.push(t);
                    corpus.vocabulary.len() as u32 - 1
                })
            };
            let words = d.tokens.iter().map(&mut map).collect();
            let hashtags = d.hashtags.iter().map(&mut map).collect();
            corpus.documents.push(Document {
                id: d.id.clone(),
                author,
                words,
                hashtags,
            });
        }
        Ok(corpus)
    }

    /// Inverse of [`Corpus::from_raw`] up to normalization; hashtags get their sigil back.
    pub fn to_raw(&self) -> Vec<RawDocument> {
        self.documents
            .iter()
            .map(|d| RawDocument {
                id: d.id.clone(),
                author: self.authors[d.author as usize].clone(),
                tokens: d.words.iter().map(|&w| self.vocabulary[w as usize].clone()).collect(),
                hashtags: d
                    .hashtags
                    .iter()
                    .map(|&w| format!("#{}", self.vocabulary[w as usize]))
                    .collect(),
            })
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        let v = self.vocabulary.len() as u32;
        for d in &self.documents {
            if d.author as usize >= self.authors.len() {
                return Err(Error::Input(format!("document `{}` has unknown author {}", d.id, d.author)));
            }
            if d.words.iter().chain(&d.hashtags).any(|&w| w >= v) {
                return Err(Error::Input(format!("document `{}` has a token outside the vocabulary", d.id)));
            }
        }
        Ok(())
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(|d| d.len()).sum()
    }

    pub fn word_count(&self) -> usize {
        self.documents.iter().map(|d| d.words.len()).sum()
    }

    pub fn vocab_index(&self, token: &str) -> Option<u32> {
        let t = normalize(token);
        self.vocabulary.iter().position(|v| *v == t).map(|i| i as u32)
    }

    pub fn author_index(&self, name: &str) -> Option<u32> {
        self.authors.iter().position(|a| a == name).map(|i| i as u32)
    }

    /// Same author and vocabulary tables, only the given documents.
    pub fn subset(&self, docs: &[usize]) -> Corpus {
        Corpus {
            documents: docs.iter().map(|&i| self.documents[i].clone()).collect(),
            authors: self.authors.clone(),
            vocabulary: self.vocabulary.clone(),
        }
    }
}

/// Splits documents so that about `ratio` of them train. Every author keeps at
/// least one training document; deterministic given the rng state.
pub fn split_train_test<R: Rng + ?Sized>(corpus: &Corpus, ratio: f64, rng: &mut R) -> Result<(Corpus, Corpus)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Input(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = corpus.documents.len();
    let target = libm::round((1.0 - ratio) * n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut remaining = vec![0usize; corpus.authors.len()];
    for d in &corpus.documents {
        remaining[d.author as usize] += 1;
    }
    let mut test = BTreeSet::new();
    for i in order {
        if test.len() == target {
            break;
        }
        let a = corpus.documents[i].author as usize;
        if remaining[a] > 1 {
            remaining[a] -= 1;
            test.insert(i);
        }
    }
    let train: Vec<usize> = (0..n).filter(|i| !test.contains(i)).collect();
    let test: Vec<usize> = test.into_iter().collect();
    Ok((corpus.subset(&train), corpus.subset(&test)))
}

/// Undirected author pairs `(i, j)` with `i < j`, sorted and deduplicated.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EdgeList {
    pub pairs: Vec<(u32, u32)>,
}

impl EdgeList {
    /// Drops self-loops and duplicates; fails on endpoints `>= authors`.
    pub fn new(pairs: impl IntoIterator<Item = (u32, u32)>, authors: u32) -> Result<EdgeList> {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if a >= authors || b >= authors {
                return Err(Error::Input(format!("edge ({a}, {b}) names an unknown author")));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        Ok(EdgeList {
            pairs: set.into_iter().collect(),
        })
    }

    /// Maps named pairs through the corpus author table, skipping pairs whose
    /// authors were filtered out. Returns the list and the number skipped.
    pub fn from_named<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>, corpus: &Corpus) -> (EdgeList, usize) {
        let index: BTreeMap<&str, u32> = corpus
            .authors
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i as u32))
            .collect();
        let mut skipped = 0;
        let mut ok = Vec::new();
        for (a, b) in pairs {
            match (index.get(a), index.get(b)) {
                (Some(&x), Some(&y)) => ok.push((x, y)),
                _ => skipped += 1,
            }
        }
        let list = EdgeList::new(ok, corpus.authors.len() as u32).expect("indices come from the table");
        (list, skipped)
    }

    pub fn contains(&self, a: u32, b: u32) -> bool {
        self.pairs.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Parameters of the planted synthetic corpus.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SyntheticParams {
    pub authors: u32,
    pub docs_per_author: u32,
    pub words_per_doc: u32,
    pub hashtags_per_doc: u32,
    pub topics: u32,
    pub vocab_size: u32,
    /// Share of an author's topic mass placed on its community topic.
    pub author_signal: f64,
    /// Share of a topic's word mass kept inside its own vocabulary block.
    pub topic_separation: f64,
    /// Dirichlet concentration of document topic distributions around their author's.
    pub doc_concentration: f64,
    pub link_within: f64,
    pub link_across: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            authors: 40,
            docs_per_author: 10,
            words_per_doc: 10,
            hashtags_per_doc: 2,
            topics: 4,
            vocab_size: 200,
            author_signal: 0.8,
            topic_separation: 0.9,
            doc_concentration: 2.0,
            link_within: 0.8,
            link_across: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthetic {
    pub corpus: Corpus,
    pub edges: EdgeList,
    /// Dominant topic of each document's word distribution.
    pub doc_labels: Vec<u32>,
    /// Dominant topic of each author's distribution.
    pub author_community: Vec<u32>,
    /// Per-topic word distributions used for generation.
    pub topic_words: Vec<Vec<f64>>,
}

fn dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut g: Vec<f64> = alpha
        .iter()
        .map(|&a| math::sample_gamma(a.max(1e-3), 1.0, rng).max(1e-300))
        .collect();
    let s: f64 = g.iter().sum();
    for x in &mut g {
        *x /= s;
    }
    g
}

/// Power-law weights from a truncated two-parameter stick-breaking draw.
fn stick_breaking<R: Rng + ?Sized>(n: usize, discount: f64, concentration: f64, rng: &mut R) -> Vec<f64> {
    let mut w = Vec::with_capacity(n);
    let mut rest = 1.0;
    for i in 0..n {
        let v = if i + 1 == n {
            1.0
        } else {
            math::sample_beta(1.0 - discount, concentration + (i + 1) as f64 * discount, rng)
        };
        w.push(rest * v);
        rest *= 1.0 - v;
    }
    w
}

fn argmax(v: &[f64]) -> u32 {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best as u32
}

/// Draws a planted corpus from a finite version of the Twitter-Network forward
/// model: a global topic mixture, author mixtures concentrated on a community
/// topic (`author i` → community `i mod K`), a miscellaneous mixture, document
/// mixtures for hashtags and words, power-law topic-word distributions on
/// mostly disjoint vocabulary blocks and hashtags drawn from each topic's head
/// words. Authors in one community link with probability `link_within`, others
/// with `link_across`.
pub fn generate_synthetic<R: Rng + ?Sized>(p: &SyntheticParams, rng: &mut R) -> Result<Synthetic> {
    if p.authors == 0 || p.docs_per_author == 0 || p.topics == 0 || p.vocab_size < p.topics {
        return Err(Error::Input("synthetic sizes must be positive and V >= K".into()));
    }
    let k = p.topics as usize;
    let v = p.vocab_size as usize;
    let block = v / k;
    let mut topic_words = Vec::with_capacity(k);
    let mut topic_tags = Vec::with_capacity(k);
    for t in 0..k {
        let lo = t * block;
        let hi = if t + 1 == k { v } else { lo + block };
        let head = stick_breaking(hi - lo, 0.7, 1.0, rng);
        let mut phi = vec![(1.0 - p.topic_separation) / v as f64; v];
        for (i, w) in head.iter().enumerate() {
            phi[lo + i] += p.topic_separation * w;
        }
        topic_words.push(phi);
        let tags = (hi - lo).min(3);
        let mut gamma = vec![0.0; v];
        for i in 0..tags {
            gamma[lo + i] = 1.0 / tags as f64;
        }
        topic_tags.push(gamma);
    }
    let mu0 = dirichlet(&vec![1.0; k], rng);
    let mu1 = dirichlet(&vec![1.0; k], rng);
    let mut author_community = Vec::with_capacity(p.authors as usize);
    let mut nu = Vec::with_capacity(p.authors as usize);
    for a in 0..p.authors as usize {
        let c = a % k;
        let noise = dirichlet(&mu0.iter().map(|m| m * k as f64).collect::<Vec<_>>(), rng);
        let mix: Vec<f64> = (0..k)
            .map(|t| (1.0 - p.author_signal) * noise[t] + if t == c { p.author_signal } else { 0.0 })
            .collect();
        author_community.push(argmax(&mix));
        nu.push(mix);
    }
    let mut corpus = Corpus {
        documents: Vec::new(),
        authors: (0..p.authors).map(|a| format!("a{a}")).collect(),
        vocabulary: (0..p.vocab_size).map(|w| format!("w{w}")).collect(),
    };
    let mut doc_labels = Vec::new();
    let b = p.doc_concentration * k as f64;
    for a in 0..p.authors as usize {
        for d in 0..p.docs_per_author {
            let base: Vec<f64> = (0..k).map(|t| b * (0.9 * nu[a][t] + 0.1 * mu1[t])).collect();
            let theta_prime = dirichlet(&base, rng);
            let eta = dirichlet(&theta_prime.iter().map(|x| x * b).collect::<Vec<_>>(), rng);
            let theta = dirichlet(
                &(0..k).map(|t| b * 0.5 * (theta_prime[t] + eta[t])).collect::<Vec<_>>(),
                rng,
            );
            let hashtags = (0..p.hashtags_per_doc)
                .map(|_| {
                    let z = math::sample_weighted(&eta, rng);
                    math::sample_weighted(&topic_tags[z], rng) as u32
                })
                .collect();
            let words = (0..p.words_per_doc)
                .map(|_| {
                    let z = math::sample_weighted(&theta, rng);
                    math::sample_weighted(&topic_words[z], rng) as u32
                })
                .collect();
            doc_labels.push(argmax(&theta));
            corpus.documents.push(Document {
                id: format!("a{a}-d{d}"),
                author: a as u32,
                words,
                hashtags,
            });
        }
    }
    let mut pairs = Vec::new();
    for i in 0..p.authors {
        for j in i + 1..p.authors {
            let same = author_community[i as usize] == author_community[j as usize];
            let prob = if same { p.link_within } else { p.link_across };
            if rng.random::<f64>() < prob {
                pairs.push((i, j));
            }
        }
    }
    let edges = EdgeList::new(pairs, p.authors)?;
    Ok(Synthetic {
        corpus,
        edges,
        doc_labels,
        author_community,
        topic_words,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use alloc::string::ToString;

    fn raw(id: &str, author: &str, tokens: &[&str], tags: &[&str]) -> RawDocument {
        RawDocument {
            id: id.into(),
            author: author.into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            hashtags: tags.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn hashtag_shares_word_index() {
        let c = Corpus::from_raw(&[raw("1", "x", &["happy", "day"], &["#Happy"])], 1, 1).unwrap();
        assert_eq!(c.documents[0].words[0], c.documents[0].hashtags[0]);
        assert_eq!(c.vocab_index("#happy"), Some(c.documents[0].words[0]));
    }

    #[test]
    fn rare_authors_and_tokens_filtered() {
        let docs = [
            raw("1", "busy", &["a", "b"], &[]),
            raw("2", "busy", &["a", "c"], &[]),
            raw("3", "rare", &["a"], &[]),
        ];
        let c = Corpus::from_raw(&docs, 2, 2).unwrap();
        assert_eq!(c.authors, vec!["busy".to_string()]);
        assert_eq!(c.documents.len(), 2);
        let oov = c.vocab_index(OOV_TOKEN).unwrap();
        assert_eq!(c.documents[0].words[1], oov);
        assert_eq!(c.documents[1].words[1], oov);
        assert!(Corpus::from_raw(&docs, 100, 1).is_err());
        assert!(Corpus::from_raw(&[], 1, 1).is_err());
    }

    #[test]
    fn split_counts_and_guard() {
        let docs: Vec<RawDocument> = (0..10).map(|i| raw(&format!("{i}"), &format!("a{}", i % 2), &["w"], &[])).collect();
        let c = Corpus::from_raw(&docs, 1, 1).unwrap();
        let (train, test) = split_train_test(&c, 0.9, &mut seeded_rng(1)).unwrap();
        assert_eq!((train.documents.len(), test.documents.len()), (9, 1));
        let again = split_train_test(&c, 0.9, &mut seeded_rng(1)).unwrap();
        assert_eq!(again.1, test);

        let two = Corpus::from_raw(&[raw("1", "x", &["w"], &[]), raw("2", "x", &["w"], &[])], 1, 1).unwrap();
        for seed in 0..10 {
            let (train, _) = split_train_test(&two, 0.5, &mut seeded_rng(seed)).unwrap();
            assert!(!train.documents.is_empty());
        }
        let one = Corpus::from_raw(&[raw("1", "x", &["w"], &[])], 1, 1).unwrap();
        let (train, test) = split_train_test(&one, 0.5, &mut seeded_rng(0)).unwrap();
        assert_eq!((train.documents.len(), test.documents.len()), (1, 0));
    }

    #[test]
    fn edges_deduplicated() {
        let e = EdgeList::new([(1, 0), (0, 1), (2, 2), (1, 2)], 3).unwrap();
        assert_eq!(e.pairs, vec![(0, 1), (1, 2)]);
        assert!(EdgeList::new([(0, 5)], 3).is_err());
    }

    #[test]
    fn synthetic_sizes() {
        let p = SyntheticParams {
            authors: 6,
            docs_per_author: 3,
            words_per_doc: 5,
            hashtags_per_doc: 1,
            topics: 1,
            vocab_size: 20,
            ..Default::default()
        };
        let s = generate_synthetic(&p, &mut seeded_rng(3)).unwrap();
        assert_eq!(s.corpus.word_count(), 6 * 3 * 5);
        assert!(s.doc_labels.iter().all(|&l| l == 0));
        assert!(s.author_community.iter().all(|&c| c == 0));
        s.corpus.check().unwrap();
    }
}
