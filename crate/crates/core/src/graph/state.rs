use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::spec::{CompiledGraph, Plate, RootBase, Side, Stream, StreamLeaves};
use crate::corpus::Corpus;
use crate::math;
use crate::pdp::{NodeState, PdpHyper, SeatChoice, Seating, TopicId};
use crate::{Error, Result};

/// Topic of a token that is not seated.
pub const UNASSIGNED: TopicId = TopicId::MAX;

/// One materialized node instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NodeRef {
    /// Global, per-author or per-document instance.
    Fixed(u32),
    /// Per-topic instance; `slot` enumerates the per-topic roles.
    Topic { topic: TopicId, slot: u16 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TokenAssignment {
    pub doc: u32,
    pub position: u32,
    pub symbol: u32,
    pub stream: Stream,
    pub topic: TopicId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[doc(hidden)]
pub enum Mutation {
    /// Departing customers avoid closing tables.
    KeepTables,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FixedInfo {
    pub role: u32,
    /// Author index, document index or 0 for global nodes.
    pub index: u32,
}

/// Extra Metropolis-Hastings term attached to Gibbs moves.
pub trait MoveCoupling {
    /// Log acceptance term for the move that just changed the fixed nodes in
    /// `touched`. `state` already reflects the move.
    fn log_ratio(&mut self, state: &TextState, touched: &[u32]) -> f64;
    fn accept(&mut self) {}
    fn reject(&mut self) {}
}

/// Adapts a closure into a [`MoveCoupling`] with no accept/reject bookkeeping.
pub struct FnCoupling<F>(pub F);

impl<F: FnMut(&TextState, &[u32]) -> f64> MoveCoupling for FnCoupling<F> {
    fn log_ratio(&mut self, state: &TextState, touched: &[u32]) -> f64 {
        (self.0)(state, touched)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MoveOutcome {
    pub topic: TopicId,
    pub accepted: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SweepStats {
    pub log_likelihood: f64,
    pub live_topics: u32,
    pub tables_created: u64,
    pub tables_removed: u64,
    pub accepted: u64,
    pub rejected: u64,
}

#[derive(Clone, Debug, Default)]
struct Scratch {
    vecs: Vec<Vec<f64>>,
    base: Vec<f64>,
    vals: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
    journaling: bool,
    journal: Vec<(NodeRef, TopicId, Option<Seating>)>,
    touched: Vec<u32>,
}

impl PartialEq for Scratch {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// All text-side state of a chain: node instances, token assignments and
/// hyperparameters.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TextState {
    graph: CompiledGraph,
    doc_author: Vec<u32>,
    num_authors: u32,
    vocab_size: u32,
    fixed: Vec<NodeState>,
    fixed_info: Vec<FixedInfo>,
    /// Per role, fixed instance indices by plate index.
    instances: Vec<Vec<u32>>,
    topic_slot: Vec<Option<u16>>,
    slot_role: Vec<u32>,
    topic_nodes: Vec<Vec<NodeState>>,
    num_topics: u32,
    hypers: Vec<PdpHyper>,
    tokens: Vec<TokenAssignment>,
    doc_tokens: Vec<(u32, u32)>,
    frozen_fixed: u32,
    frozen_topics: bool,
    mutation: Option<Mutation>,
    tables_created: u64,
    tables_removed: u64,
    #[cfg_attr(feature = "serde", serde(skip))]
    scratch: Scratch,
}

impl TextState {
    /// Instantiates the graph over a corpus. Tokens start unassigned; call
    /// [`TextState::initialize`] to seat them.
    pub fn new(graph: CompiledGraph, corpus: &Corpus) -> Result<Self> {
        corpus.check()?;
        let hypers = graph.groups.iter().map(|(_, h)| *h).collect();
        let mut topic_slot = vec![None; graph.nodes.len()];
        let mut slot_role = Vec::new();
        for (r, node) in graph.nodes.iter().enumerate() {
            if node.plate == Plate::PerTopic {
                topic_slot[r] = Some(slot_role.len() as u16);
                slot_role.push(r as u32);
            }
        }
        let mut state = TextState {
            instances: vec![Vec::new(); graph.nodes.len()],
            graph,
            doc_author: Vec::new(),
            num_authors: 0,
            vocab_size: corpus.vocabulary.len() as u32,
            fixed: Vec::new(),
            fixed_info: Vec::new(),
            topic_slot,
            slot_role,
            topic_nodes: Vec::new(),
            num_topics: 0,
            hypers,
            tokens: Vec::new(),
            doc_tokens: Vec::new(),
            frozen_fixed: 0,
            frozen_topics: false,
            mutation: None,
            tables_created: 0,
            tables_removed: 0,
            scratch: Scratch::default(),
        };
        for r in 0..state.graph.nodes.len() {
            if state.graph.nodes[r].plate == Plate::Global {
                state.push_fixed(r, 0);
            }
        }
        for _ in 0..corpus.authors.len() {
            state.push_author();
        }
        for doc in &corpus.documents {
            state.push_document(doc.author, &doc.words, &doc.hashtags)?;
        }
        Ok(state)
    }

    /// Seats every unassigned token in scan order by sequential draws from the
    /// conditional (the Chinese restaurant franchise prior combined with the data).
    pub fn initialize<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for t in 0..self.tokens.len() {
            if self.tokens[t].topic == UNASSIGNED {
                let mut sc = core::mem::take(&mut self.scratch);
                sc.journaling = false;
                let out = self.sample_and_seat(t, &mut sc, rng);
                self.scratch = sc;
                out?;
            }
        }
        Ok(())
    }

    fn push_fixed(&mut self, role: usize, index: u32) -> u32 {
        let id = self.fixed.len() as u32;
        let group = self.graph.nodes[role].group;
        self.fixed.push(NodeState::new(self.hypers[group]));
        self.fixed_info.push(FixedInfo {
            role: role as u32,
            index,
        });
        self.instances[role].push(id);
        id
    }

    /// Adds an author and its per-author node instances; returns its index.
    pub fn push_author(&mut self) -> u32 {
        let a = self.num_authors;
        for r in 0..self.graph.nodes.len() {
            if self.graph.nodes[r].plate == Plate::PerAuthor {
                self.push_fixed(r, a);
            }
        }
        self.num_authors += 1;
        a
    }

    /// Adds a document with unassigned tokens; returns its index.
    pub fn push_document(&mut self, author: u32, words: &[u32], hashtags: &[u32]) -> Result<u32> {
        if author >= self.num_authors {
            return Err(Error::Input(format!("unknown author {author}")));
        }
        if let Some(&w) = words.iter().chain(hashtags).find(|&&w| w >= self.vocab_size) {
            return Err(Error::Input(format!(
                "token {w} outside vocabulary of size {}",
                self.vocab_size
            )));
        }
        let d = self.doc_author.len() as u32;
        self.doc_author.push(author);
        for r in 0..self.graph.nodes.len() {
            if self.graph.nodes[r].plate == Plate::PerDocument {
                self.push_fixed(r, d);
            }
        }
        let start = self.tokens.len() as u32;
        for (stream, list) in [(Stream::Hashtags, hashtags), (Stream::Words, words)] {
            if self.graph.stream(stream).is_none() {
                continue;
            }
            for (i, &symbol) in list.iter().enumerate() {
                self.tokens.push(TokenAssignment {
                    doc: d,
                    position: i as u32,
                    symbol,
                    stream,
                    topic: UNASSIGNED,
                });
            }
        }
        self.doc_tokens.push((start, self.tokens.len() as u32));
        Ok(d)
    }

    /// Freezes every node that exists now: later moves neither seat nor unseat
    /// customers there, but still read their predictive. Used for fold-in.
    pub fn freeze(&mut self) {
        self.frozen_fixed = self.fixed.len() as u32;
        self.frozen_topics = true;
    }

    pub fn is_frozen(&self, r: NodeRef) -> bool {
        match r {
            NodeRef::Fixed(i) => i < self.frozen_fixed,
            NodeRef::Topic { .. } => self.frozen_topics,
        }
    }

    pub fn has_frozen_nodes(&self) -> bool {
        self.frozen_fixed > 0 || self.frozen_topics
    }

    #[doc(hidden)]
    pub fn set_mutation(&mut self, mutation: Option<Mutation>) {
        self.mutation = mutation;
    }

    pub fn graph(&self) -> &CompiledGraph {
        &self.graph
    }

    pub fn num_topics(&self) -> u32 {
        self.num_topics
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn num_documents(&self) -> u32 {
        self.doc_author.len() as u32
    }

    pub fn num_authors(&self) -> u32 {
        self.num_authors
    }

    pub fn doc_author(&self, doc: u32) -> u32 {
        self.doc_author[doc as usize]
    }

    pub fn tokens(&self) -> &[TokenAssignment] {
        &self.tokens
    }

    /// Token index range of a document.
    pub fn doc_token_range(&self, doc: u32) -> core::ops::Range<usize> {
        let (s, e) = self.doc_tokens[doc as usize];
        s as usize..e as usize
    }

    pub fn hypers(&self) -> &[PdpHyper] {
        &self.hypers
    }

    pub fn fixed_count(&self) -> usize {
        self.fixed.len()
    }

    pub fn fixed_node(&self, i: u32) -> &NodeState {
        &self.fixed[i as usize]
    }

    pub fn fixed_info(&self, i: u32) -> FixedInfo {
        self.fixed_info[i as usize]
    }

    /// Fixed instance of a global, per-author or per-document role.
    pub fn instance(&self, role: usize, index: u32) -> Option<u32> {
        match self.graph.nodes.get(role)?.plate {
            Plate::Global => self.instances[role].first().copied(),
            Plate::PerTopic => None,
            _ => self.instances[role].get(index as usize).copied(),
        }
    }

    /// Instance of `role` serving document `doc`.
    pub fn doc_instance(&self, role: usize, doc: u32) -> NodeRef {
        let list = &self.instances[role];
        let i = match self.graph.nodes[role].plate {
            Plate::Global => list[0],
            Plate::PerAuthor => list[self.doc_author[doc as usize] as usize],
            Plate::PerDocument => list[doc as usize],
            Plate::PerTopic => unreachable!("per-topic role on the topic side"),
        };
        NodeRef::Fixed(i)
    }

    /// Instance of a vocabulary-side role serving `topic`.
    pub fn topic_instance(&self, role: usize, topic: TopicId) -> NodeRef {
        match self.topic_slot[role] {
            Some(slot) => NodeRef::Topic { topic, slot },
            None => NodeRef::Fixed(self.instances[role][0]),
        }
    }

    pub fn node(&self, r: NodeRef) -> Option<&NodeState> {
        match r {
            NodeRef::Fixed(i) => self.fixed.get(i as usize),
            NodeRef::Topic { topic, slot } => self
                .topic_nodes
                .get(topic as usize)
                .and_then(|v| v.get(slot as usize)),
        }
    }

    fn node_mut(&mut self, r: NodeRef) -> &mut NodeState {
        match r {
            NodeRef::Fixed(i) => &mut self.fixed[i as usize],
            NodeRef::Topic { topic, slot } => &mut self.topic_nodes[topic as usize][slot as usize],
        }
    }

    pub fn role_of(&self, r: NodeRef) -> usize {
        match r {
            NodeRef::Fixed(i) => self.fixed_info[i as usize].role as usize,
            NodeRef::Topic { slot, .. } => self.slot_role[slot as usize] as usize,
        }
    }

    /// Instance of the `j`-th parent of `child`.
    pub fn parent_at(&self, child: NodeRef, j: usize) -> NodeRef {
        let role = self.role_of(child);
        let (p, _) = self.graph.nodes[role].parents[j];
        match self.graph.nodes[p].plate {
            Plate::Global => NodeRef::Fixed(self.instances[p][0]),
            Plate::PerTopic => match child {
                NodeRef::Topic { topic, .. } => NodeRef::Topic {
                    topic,
                    slot: self.topic_slot[p].expect("per-topic role has a slot"),
                },
                NodeRef::Fixed(_) => unreachable!("fixed node with a per-topic parent"),
            },
            Plate::PerAuthor => {
                let NodeRef::Fixed(i) = child else {
                    unreachable!("per-topic node with a per-author parent")
                };
                let info = self.fixed_info[i as usize];
                let author = match self.graph.nodes[role].plate {
                    Plate::PerDocument => self.doc_author[info.index as usize],
                    _ => info.index,
                };
                NodeRef::Fixed(self.instances[p][author as usize])
            }
            Plate::PerDocument => {
                let NodeRef::Fixed(i) = child else {
                    unreachable!("per-topic node with a per-document parent")
                };
                NodeRef::Fixed(self.instances[p][self.fixed_info[i as usize].index as usize])
            }
        }
    }

    fn allocate_topic(&mut self) -> TopicId {
        let k = self.num_topics;
        let plates = self
            .slot_role
            .iter()
            .map(|&r| NodeState::new(self.hypers[self.graph.nodes[r as usize].group]))
            .collect();
        self.topic_nodes.push(plates);
        self.num_topics += 1;
        k
    }

    /// Root base probability of topic `k` when the index space has `dim - 1`
    /// existing topics plus the new-topic entry.
    fn root_topic_base(&self, role: usize, k: usize, dim: usize) -> f64 {
        let existing = dim - 1;
        match self.graph.nodes[role].base {
            Some(RootBase::Topics) => {
                if k == existing {
                    1.0
                } else {
                    0.0
                }
            }
            Some(RootBase::FiniteTopics(c)) => {
                let c = c as usize;
                if k < existing {
                    if k < c {
                        1.0 / c as f64
                    } else {
                        0.0
                    }
                } else {
                    c.saturating_sub(existing) as f64 / c as f64
                }
            }
            _ => unreachable!("topic-side root with a vocabulary base"),
        }
    }

    fn fill_topic_vectors(&self, leaf_role: usize, doc: u32, sc: &mut Scratch) {
        let dim = self.num_topics as usize + 1;
        sc.dim = dim;
        if sc.vecs.len() < self.graph.nodes.len() {
            sc.vecs.resize(self.graph.nodes.len(), Vec::new());
        }
        for &role in &self.graph.nodes[leaf_role].ancestors {
            let r = self.doc_instance(role, doc);
            sc.base.clear();
            sc.base.resize(dim, 0.0);
            let spec = &self.graph.nodes[role];
            if spec.is_root() {
                for k in 0..dim {
                    sc.base[k] = self.root_topic_base(role, k, dim);
                }
            } else {
                for &(p, w) in &spec.parents {
                    for (b, v) in sc.base.iter_mut().zip(&sc.vecs[p]) {
                        *b += w * v;
                    }
                }
            }
            let mut out = core::mem::take(&mut sc.vecs[role]);
            out.clear();
            out.resize(dim, 0.0);
            self.node(r).expect("instance exists").predictive_into(&sc.base, &mut out);
            sc.vecs[role] = out;
        }
    }

    fn fill_vocab_values(&self, leaf_role: usize, topic: TopicId, symbol: u32, vals: &mut Vec<f64>) {
        if vals.len() < self.graph.nodes.len() {
            vals.resize(self.graph.nodes.len(), 0.0);
        }
        let uniform = 1.0 / self.vocab_size as f64;
        for &role in &self.graph.nodes[leaf_role].ancestors {
            let spec = &self.graph.nodes[role];
            let base = if spec.is_root() {
                uniform
            } else {
                spec.parents.iter().map(|&(p, w)| w * vals[p]).sum()
            };
            vals[role] = match self.node(self.topic_instance(role, topic)) {
                Some(n) => n.predictive_at(symbol, base),
                None => base,
            };
        }
    }

    /// Predictive distribution of the next topic at a topic-side node for
    /// document `doc`: one entry per existing topic id plus a final new-topic entry.
    pub fn joint_predictive(&self, role: usize, doc: u32) -> Result<Vec<f64>> {
        let spec = self
            .graph
            .nodes
            .get(role)
            .ok_or_else(|| Error::Structural(format!("unknown node role {role}")))?;
        if spec.side != Side::Topic {
            return Err(Error::Structural(format!("`{}` is not a topic-side node", spec.id)));
        }
        if doc >= self.num_documents() {
            return Err(Error::Structural(format!("unknown document {doc}")));
        }
        let mut sc = Scratch::default();
        self.fill_topic_vectors(role, doc, &mut sc);
        Ok(core::mem::take(&mut sc.vecs[role]))
    }

    /// Predictive probability of `symbol` at a vocabulary-side node for `topic`.
    pub fn symbol_probability(&self, role: usize, topic: TopicId, symbol: u32) -> f64 {
        let mut vals = Vec::new();
        self.fill_vocab_values(role, topic, symbol, &mut vals);
        vals[role]
    }

    /// Full predictive distribution over the vocabulary at a vocabulary-side node.
    pub fn symbol_predictive(&self, role: usize, topic: TopicId) -> Result<Vec<f64>> {
        let spec = self
            .graph
            .nodes
            .get(role)
            .ok_or_else(|| Error::Structural(format!("unknown node role {role}")))?;
        if spec.side != Side::Vocabulary {
            return Err(Error::Structural(format!("`{}` is not a vocabulary-side node", spec.id)));
        }
        let mut vals = Vec::new();
        Ok((0..self.vocab_size)
            .map(|w| {
                self.fill_vocab_values(role, topic, w, &mut vals);
                vals[role]
            })
            .collect())
    }

    fn leaves(&self, stream: Stream) -> StreamLeaves {
        self.graph.stream(stream).expect("token stream has leaves")
    }

    /// Unnormalized conditional of a token's topic; fills `sc.weights` and
    /// leaves the topic-side vectors in `sc.vecs`.
    fn topic_weights(&self, t: usize, sc: &mut Scratch) -> f64 {
        let tok = self.tokens[t];
        let leaves = self.leaves(tok.stream);
        self.fill_topic_vectors(leaves.topic_leaf, tok.doc, sc);
        let dim = sc.dim;
        sc.weights.clear();
        sc.weights.resize(dim, 0.0);
        let mut total = 0.0;
        for k in 0..dim {
            let tv = sc.vecs[leaves.topic_leaf][k];
            if tv > 0.0 {
                self.fill_vocab_values(leaves.vocab_leaf, k as TopicId, tok.symbol, &mut sc.vals);
                let w = tv * sc.vals[leaves.vocab_leaf];
                sc.weights[k] = w;
                total += w;
            }
        }
        total
    }

    /// Conditional distribution of token `t`'s topic given all other tokens,
    /// as computed by the sampler. The token must be unassigned.
    pub fn topic_conditional(&self, t: usize) -> Vec<f64> {
        let mut sc = Scratch::default();
        let total = self.topic_weights(t, &mut sc);
        sc.weights.iter().map(|w| w / total).collect()
    }

    fn journal(&self, sc: &mut Scratch, r: NodeRef, key: TopicId) {
        if let NodeRef::Fixed(i) = r {
            if !sc.touched.contains(&i) {
                sc.touched.push(i);
            }
        }
        if sc.journaling && !sc.journal.iter().any(|(n, k, _)| *n == r && *k == key) {
            let seating = self.node(r).and_then(|n| n.seating(key)).cloned();
            sc.journal.push((r, key, seating));
        }
    }

    fn unseat_chain<R: Rng + ?Sized>(
        &mut self,
        start: NodeRef,
        key: TopicId,
        sc: &mut Scratch,
        rng: &mut R,
    ) -> Result<()> {
        let mut r = start;
        loop {
            if self.is_frozen(r) {
                return Ok(());
            }
            self.journal(sc, r, key);
            let mutation = self.mutation;
            let node = self.node_mut(r);
            let delta = match mutation {
                Some(Mutation::KeepTables) => node.remove_customer_keeping_tables(key, rng)?,
                None => node.remove_customer(key, rng)?,
            };
            if !delta.removed_table {
                return Ok(());
            }
            self.tables_removed += 1;
            if self.graph.nodes[self.role_of(r)].is_root() {
                return Ok(());
            }
            r = self.parent_at(r, delta.parent as usize);
        }
    }

    fn unseat_token<R: Rng + ?Sized>(&mut self, t: usize, sc: &mut Scratch, rng: &mut R) -> Result<()> {
        let tok = self.tokens[t];
        if tok.topic == UNASSIGNED {
            return Err(Error::Logic(format!("token {t} is not seated")));
        }
        let leaves = self.leaves(tok.stream);
        let start = self.doc_instance(leaves.topic_leaf, tok.doc);
        self.unseat_chain(start, tok.topic, sc, rng)?;
        let start = self.topic_instance(leaves.vocab_leaf, tok.topic);
        self.unseat_chain(start, tok.symbol, sc, rng)?;
        self.tokens[t].topic = UNASSIGNED;
        Ok(())
    }

    /// Seats a customer of topic `k` on the topic side starting at `leaf_role`,
    /// using the vectors computed before the move.
    fn seat_topic_side<R: Rng + ?Sized>(
        &mut self,
        leaf_role: usize,
        doc: u32,
        k: TopicId,
        sc: &mut Scratch,
        rng: &mut R,
    ) -> Result<()> {
        let ki = k as usize;
        let mut r = self.doc_instance(leaf_role, doc);
        loop {
            if self.is_frozen(r) {
                return Ok(());
            }
            let role = self.role_of(r);
            let base = if self.graph.nodes[role].is_root() {
                self.root_topic_base(role, ki, sc.dim)
            } else {
                self.graph.nodes[role]
                    .parents
                    .iter()
                    .map(|&(p, w)| w * sc.vecs[p][ki])
                    .sum()
            };
            self.journal(sc, r, k);
            let choice = self.node(r).expect("instance exists").choose_seat(k, base, rng);
            match choice {
                SeatChoice::Join { parent, size } => {
                    self.node_mut(r).apply_join(k, parent, size)?;
                    return Ok(());
                }
                SeatChoice::NewTable => {
                    self.tables_created += 1;
                    let spec = &self.graph.nodes[role];
                    if spec.is_root() {
                        self.node_mut(r).open_table(k, 0);
                        return Ok(());
                    }
                    let j = if spec.parents.len() == 1 {
                        0
                    } else {
                        sc.weights.clear();
                        for &(p, w) in &spec.parents {
                            sc.weights.push(w * sc.vecs[p][ki]);
                        }
                        math::sample_weighted(&sc.weights, rng)
                    };
                    self.node_mut(r).open_table(k, j as u16);
                    r = self.parent_at(r, j);
                }
            }
        }
    }

    fn seat_vocab_side<R: Rng + ?Sized>(
        &mut self,
        leaf_role: usize,
        k: TopicId,
        symbol: u32,
        sc: &mut Scratch,
        rng: &mut R,
    ) -> Result<()> {
        self.fill_vocab_values(leaf_role, k, symbol, &mut sc.vals);
        let uniform = 1.0 / self.vocab_size as f64;
        let mut r = self.topic_instance(leaf_role, k);
        loop {
            if self.is_frozen(r) {
                return Ok(());
            }
            let role = self.role_of(r);
            let spec = &self.graph.nodes[role];
            let base = if spec.is_root() {
                uniform
            } else {
                spec.parents.iter().map(|&(p, w)| w * sc.vals[p]).sum()
            };
            self.journal(sc, r, symbol);
            let choice = self.node(r).expect("instance exists").choose_seat(symbol, base, rng);
            match choice {
                SeatChoice::Join { parent, size } => {
                    self.node_mut(r).apply_join(symbol, parent, size)?;
                    return Ok(());
                }
                SeatChoice::NewTable => {
                    self.tables_created += 1;
                    let spec = &self.graph.nodes[role];
                    if spec.is_root() {
                        self.node_mut(r).open_table(symbol, 0);
                        return Ok(());
                    }
                    let j = if spec.parents.len() == 1 {
                        0
                    } else {
                        sc.weights.clear();
                        for &(p, w) in &spec.parents {
                            sc.weights.push(w * sc.vals[p]);
                        }
                        math::sample_weighted(&sc.weights, rng)
                    };
                    self.node_mut(r).open_table(symbol, j as u16);
                    r = self.parent_at(r, j);
                }
            }
        }
    }

    fn sample_and_seat<R: Rng + ?Sized>(&mut self, t: usize, sc: &mut Scratch, rng: &mut R) -> Result<TopicId> {
        let total = self.topic_weights(t, sc);
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Numerical(format!(
                "topic conditional of token {t} has mass {total}"
            )));
        }
        let mut k = math::sample_index(&sc.weights, total, rng) as TopicId;
        if k == self.num_topics {
            k = self.allocate_topic();
        }
        let tok = self.tokens[t];
        let leaves = self.leaves(tok.stream);
        self.seat_topic_side(leaves.topic_leaf, tok.doc, k, sc, rng)?;
        self.seat_vocab_side(leaves.vocab_leaf, k, tok.symbol, sc, rng)?;
        self.tokens[t].topic = k;
        Ok(k)
    }

    /// Draws a new topic for a seated token: unseat it along its tables, sample
    /// the topic from the collapsed conditional, reseat it. With a coupling the
    /// move is accepted with probability `min(1, exp(log_ratio))` and undone
    /// exactly otherwise.
    pub fn gibbs_resample_token<'c, R: Rng + ?Sized>(
        &mut self,
        t: usize,
        rng: &mut R,
        coupling: Option<&mut (dyn MoveCoupling + 'c)>,
    ) -> Result<MoveOutcome> {
        let mut sc = core::mem::take(&mut self.scratch);
        sc.journal.clear();
        sc.touched.clear();
        sc.journaling = coupling.is_some();
        let old_topic = self.tokens[t].topic;
        let old_topics = self.num_topics;
        let counters = (self.tables_created, self.tables_removed);
        let result = self
            .unseat_token(t, &mut sc, rng)
            .and_then(|_| self.sample_and_seat(t, &mut sc, rng));
        let topic = match result {
            Ok(k) => k,
            Err(e) => {
                self.scratch = sc;
                return Err(e);
            }
        };
        let mut accepted = true;
        if let Some(c) = coupling {
            if !sc.touched.is_empty() {
                let x = c.log_ratio(self, &sc.touched);
                accepted = if x >= 0.0 {
                    true
                } else if x == f64::NEG_INFINITY || x.is_nan() {
                    false
                } else {
                    math::ln(rng.random::<f64>()) < x
                };
                if accepted {
                    c.accept();
                } else {
                    for (r, key, seating) in sc.journal.drain(..).rev() {
                        self.node_mut(r).restore_seating(key, seating);
                    }
                    self.topic_nodes.truncate(old_topics as usize);
                    self.num_topics = old_topics;
                    self.tokens[t].topic = old_topic;
                    (self.tables_created, self.tables_removed) = counters;
                    c.reject();
                }
            }
        }
        self.scratch = sc;
        Ok(MoveOutcome {
            topic: if accepted { topic } else { old_topic },
            accepted,
        })
    }

    /// Resamples the tokens in `range` once each, in order.
    pub fn sweep_tokens<'c, R: Rng + ?Sized>(
        &mut self,
        range: core::ops::Range<usize>,
        rng: &mut R,
        mut coupling: Option<&mut (dyn MoveCoupling + 'c)>,
    ) -> Result<(u64, u64)> {
        let (mut acc, mut rej) = (0, 0);
        for t in range {
            let out = self.gibbs_resample_token(t, rng, coupling.as_deref_mut())?;
            if out.accepted {
                acc += 1;
            } else {
                rej += 1;
            }
        }
        Ok((acc, rej))
    }

    /// One Gibbs pass over every token in scan order, then topic compaction.
    pub fn full_sweep<'c, R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        coupling: Option<&mut (dyn MoveCoupling + 'c)>,
    ) -> Result<SweepStats> {
        let before = (self.tables_created, self.tables_removed);
        let (accepted, rejected) = self.sweep_tokens(0..self.tokens.len(), rng, coupling)?;
        if !self.has_frozen_nodes() {
            self.compact_topics()?;
        }
        Ok(SweepStats {
            log_likelihood: self.log_likelihood(),
            live_topics: self.live_topics(),
            tables_created: self.tables_created - before.0,
            tables_removed: self.tables_removed - before.1,
            accepted,
            rejected,
        })
    }

    /// Topics holding at least one token.
    pub fn live_topics(&self) -> u32 {
        let mut live = vec![false; self.num_topics as usize];
        for tok in &self.tokens {
            if tok.topic != UNASSIGNED {
                live[tok.topic as usize] = true;
            }
        }
        live.iter().filter(|&&l| l).count() as u32
    }

    /// Renumbers live topics to `0..live` preserving order and drops dead ones.
    /// Returns the old → new map.
    pub fn compact_topics(&mut self) -> Result<Vec<Option<TopicId>>> {
        let mut live = vec![false; self.num_topics as usize];
        for tok in &self.tokens {
            if tok.topic != UNASSIGNED {
                live[tok.topic as usize] = true;
            }
        }
        let mut map = vec![None; live.len()];
        let mut next = 0;
        for (k, &l) in live.iter().enumerate() {
            if l {
                map[k] = Some(next);
                next += 1;
            }
        }
        if next == self.num_topics {
            return Ok(map);
        }
        for (i, node) in self.fixed.iter_mut().enumerate() {
            if self.graph.nodes[self.fixed_info[i].role as usize].side == Side::Topic {
                node.remap_topics(&map)?;
            }
        }
        let old = core::mem::take(&mut self.topic_nodes);
        for (k, plates) in old.into_iter().enumerate() {
            if map[k].is_some() {
                self.topic_nodes.push(plates);
            } else if plates.iter().any(|n| !n.is_empty()) {
                return Err(Error::Logic(format!("dead topic {k} still has vocabulary customers")));
            }
        }
        for tok in &mut self.tokens {
            if tok.topic != UNASSIGNED {
                tok.topic = map[tok.topic as usize].expect("live topic");
            }
        }
        self.num_topics = next;
        Ok(map)
    }

    /// Collapsed joint log probability of all seating arrangements plus the root
    /// base terms.
    pub fn log_likelihood(&self) -> f64 {
        let ln_v = if self.vocab_size > 0 {
            math::ln(self.vocab_size as f64)
        } else {
            0.0
        };
        let root_term = |role: usize, node: &NodeState| -> f64 {
            match self.graph.nodes[role].base {
                Some(RootBase::Vocabulary) => -(node.total_tables() as f64) * ln_v,
                Some(RootBase::FiniteTopics(c)) => -(node.total_tables() as f64) * math::ln(c as f64),
                _ => 0.0,
            }
        };
        let mut ll = 0.0;
        for (i, node) in self.fixed.iter().enumerate() {
            let role = self.fixed_info[i].role as usize;
            ll += node.log_seating_probability() + root_term(role, node);
        }
        for plates in &self.topic_nodes {
            for (slot, node) in plates.iter().enumerate() {
                let role = self.slot_role[slot] as usize;
                ll += node.log_seating_probability() + root_term(role, node);
            }
        }
        ll
    }

    /// Every node instance with its reference, fixed nodes first.
    pub fn nodes(&self) -> impl Iterator<Item = (NodeRef, &NodeState)> + '_ {
        let fixed = self
            .fixed
            .iter()
            .enumerate()
            .map(|(i, n)| (NodeRef::Fixed(i as u32), n));
        let topics = self.topic_nodes.iter().enumerate().flat_map(|(k, plates)| {
            plates.iter().enumerate().map(move |(s, n)| {
                (
                    NodeRef::Topic {
                        topic: k as TopicId,
                        slot: s as u16,
                    },
                    n,
                )
            })
        });
        fixed.chain(topics)
    }

    /// Verifies node invariants and, when nothing is frozen, that every node's
    /// customers equal the tables its children sent it plus its observations.
    pub fn check_consistency(&self) -> Result<()> {
        for (r, n) in self.nodes() {
            n.check_invariants()
                .map_err(|e| Error::Logic(format!("{r:?}: {e}")))?;
        }
        if self.has_frozen_nodes() {
            return Ok(());
        }
        let mut expected: BTreeMap<(NodeRef, TopicId), u64> = BTreeMap::new();
        for tok in &self.tokens {
            if tok.topic == UNASSIGNED {
                continue;
            }
            let leaves = self.leaves(tok.stream);
            *expected
                .entry((self.doc_instance(leaves.topic_leaf, tok.doc), tok.topic))
                .or_default() += 1;
            *expected
                .entry((self.topic_instance(leaves.vocab_leaf, tok.topic), tok.symbol))
                .or_default() += 1;
        }
        for (r, n) in self.nodes() {
            if self.graph.nodes[self.role_of(r)].is_root() {
                continue;
            }
            for (key, seating) in n.iter() {
                for c in seating.classes() {
                    let p = self.parent_at(r, c.parent as usize);
                    *expected.entry((p, key)).or_default() += c.count as u64;
                }
            }
        }
        for (r, n) in self.nodes() {
            for (key, seating) in n.iter() {
                let want = expected.remove(&(r, key)).unwrap_or(0);
                if want != seating.customers() as u64 {
                    return Err(Error::Logic(format!(
                        "{r:?} key {key}: {} customers but {want} arrivals",
                        seating.customers()
                    )));
                }
            }
        }
        if let Some(((r, key), n)) = expected.into_iter().find(|(_, n)| *n > 0) {
            return Err(Error::Logic(format!("{r:?} key {key}: {n} arrivals but no customers")));
        }
        Ok(())
    }

    /// `(customers, tables)` of every node of a hyperparameter group.
    pub fn group_stats(&self, group: usize) -> Vec<(u64, u64)> {
        self.nodes()
            .filter(|(r, _)| self.graph.nodes[self.role_of(*r)].group == group)
            .map(|(_, n)| (n.total_customers(), n.total_tables()))
            .collect()
    }

    pub fn set_group_concentration(&mut self, group: usize, concentration: f64) {
        self.hypers[group].concentration = concentration;
        for (i, node) in self.fixed.iter_mut().enumerate() {
            if self.graph.nodes[self.fixed_info[i].role as usize].group == group {
                node.set_concentration(concentration);
            }
        }
        for plates in &mut self.topic_nodes {
            for (slot, node) in plates.iter_mut().enumerate() {
                if self.graph.nodes[self.slot_role[slot] as usize].group == group {
                    node.set_concentration(concentration);
                }
            }
        }
    }

    /// Empties every vocabulary-side node; the tokens keep their topics but are
    /// no longer seated on the vocabulary side.
    pub(crate) fn clear_vocabulary_side(&mut self) {
        for plates in &mut self.topic_nodes {
            for (slot, node) in plates.iter_mut().enumerate() {
                let h = self.hypers[self.graph.nodes[self.slot_role[slot] as usize].group];
                *node = NodeState::new(h);
            }
        }
        for (i, node) in self.fixed.iter_mut().enumerate() {
            let spec = &self.graph.nodes[self.fixed_info[i].role as usize];
            if spec.side == Side::Vocabulary {
                *node = NodeState::new(self.hypers[spec.group]);
            }
        }
    }

    /// Draws a symbol for token `t` from the vocabulary predictive of its topic
    /// and seats it on the vocabulary side.
    pub(crate) fn draw_symbol<R: Rng + ?Sized>(&mut self, t: usize, rng: &mut R) -> Result<u32> {
        let tok = self.tokens[t];
        let leaf = self.leaves(tok.stream).vocab_leaf;
        let mut sc = core::mem::take(&mut self.scratch);
        sc.journaling = false;
        let mut probs = Vec::with_capacity(self.vocab_size as usize);
        for w in 0..self.vocab_size {
            self.fill_vocab_values(leaf, tok.topic, w, &mut sc.vals);
            probs.push(sc.vals[leaf]);
        }
        let symbol = math::sample_weighted(&probs, rng) as u32;
        let out = self.seat_vocab_side(leaf, tok.topic, symbol, &mut sc, rng);
        self.scratch = sc;
        out?;
        self.tokens[t].symbol = symbol;
        Ok(symbol)
    }

    /// Draws a topic for unassigned token `t` from the topic-side predictive alone
    /// (ignoring its symbol) and seats it on the topic side.
    pub(crate) fn draw_topic<R: Rng + ?Sized>(&mut self, t: usize, rng: &mut R) -> Result<TopicId> {
        let tok = self.tokens[t];
        let leaf = self.leaves(tok.stream).topic_leaf;
        let mut sc = core::mem::take(&mut self.scratch);
        sc.journaling = false;
        self.fill_topic_vectors(leaf, tok.doc, &mut sc);
        let probs = sc.vecs[leaf].clone();
        let mut k = math::sample_weighted(&probs, rng) as TopicId;
        if k == self.num_topics {
            k = self.allocate_topic();
        }
        let out = self.seat_topic_side(leaf, tok.doc, k, &mut sc, rng);
        self.scratch = sc;
        out?;
        self.tokens[t].topic = k;
        Ok(k)
    }


    /// Customer count of each topic id `< dims` at a fixed node.
    pub fn topic_counts(&self, node: u32, dims: usize) -> Vec<u32> {
        let n = &self.fixed[node as usize];
        (0..dims as TopicId).map(|k| n.customers(k)).collect()
    }
}
