use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::pdp::PdpHyper;
use crate::{Error, Result};

/// Most parents a mixture node may have.
pub const MAX_PARENTS: usize = 8;

/// How a node is replicated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Plate {
    /// One shared instance.
    #[cfg_attr(feature = "serde", serde(rename = "none"))]
    Global,
    PerAuthor,
    PerDocument,
    /// One instance per live topic, created lazily.
    PerTopic,
}

/// Base measure of a root node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum RootBase {
    /// Diffuse base over an unbounded set of topics: every table at the root
    /// carries a topic of its own.
    Topics,
    /// Uniform over a fixed number of topics (finite truncation).
    FiniteTopics(u32),
    /// Uniform over the vocabulary.
    Vocabulary,
}

impl RootBase {
    pub fn is_topic_base(&self) -> bool {
        !matches!(self, RootBase::Vocabulary)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Stream {
    Words,
    Hashtags,
}

impl Stream {
    pub const ALL: [Stream; 2] = [Stream::Words, Stream::Hashtags];

    pub fn index(self) -> usize {
        match self {
            Stream::Words => 0,
            Stream::Hashtags => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stream::Words => "words",
            Stream::Hashtags => "hashtags",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeSpec {
    pub id: String,
    /// Free-form description of what the node models.
    #[cfg_attr(feature = "serde", serde(default))]
    pub role: String,
    /// Name of the hyperparameter group the node shares its discount and concentration with.
    pub group: String,
    pub plate: Plate,
    /// Required on roots, forbidden elsewhere.
    #[cfg_attr(feature = "serde", serde(default))]
    pub base: Option<RootBase>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EdgeSpec {
    pub child: String,
    pub parent: String,
    /// Mixture weight λ of this parent in the child's base.
    #[cfg_attr(feature = "serde", serde(default = "unit_weight"))]
    pub weight: f64,
}

#[cfg(feature = "serde")]
fn unit_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LeafSpec {
    pub node: String,
    #[cfg_attr(feature = "serde", serde(default))]
    pub stream: Option<Stream>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupSpec {
    pub discount: f64,
    pub concentration: f64,
}

/// Declarative network of PDP nodes.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraphSpec {
    pub nodes: Vec<NodeSpec>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub edges: Vec<EdgeSpec>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub leaves: Vec<LeafSpec>,
    pub hyper_groups: BTreeMap<String, GroupSpec>,
}

impl GraphSpec {
    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn has_node(&self, id: &str) -> bool {
        self.node(id).is_some()
    }

    pub fn parents_of(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|e| e.child == id)
            .map(|e| e.parent.as_str())
            .collect()
    }

    pub fn has_stream(&self, stream: Stream) -> bool {
        self.leaves.iter().any(|l| l.stream == Some(stream))
    }

    /// Node instances materialized for the given plate sizes and live topic count.
    pub fn instance_count(&self, authors: usize, documents: usize, live_topics: usize) -> usize {
        self.nodes
            .iter()
            .map(|n| match n.plate {
                Plate::Global => 1,
                Plate::PerAuthor => authors,
                Plate::PerDocument => documents,
                Plate::PerTopic => live_topics,
            })
            .sum()
    }

    pub fn validate(&self) -> Result<CompiledGraph> {
        validate(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Side {
    Topic,
    Vocabulary,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CompiledNode {
    pub id: String,
    pub role: String,
    pub plate: Plate,
    pub group: usize,
    /// Parent role indices with normalized mixture weights, in declaration order.
    pub parents: Vec<(usize, f64)>,
    pub base: Option<RootBase>,
    pub side: Side,
    /// Ancestor roles including this one, parents before children.
    pub ancestors: Vec<usize>,
}

impl CompiledNode {
    pub fn is_root(&self) -> bool {
        self.parents.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StreamLeaves {
    /// Per-document node the token's topic is drawn from.
    pub topic_leaf: usize,
    /// Per-topic node the token's symbol is drawn from.
    pub vocab_leaf: usize,
}

/// Validated graph with roles in topological order.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CompiledGraph {
    pub nodes: Vec<CompiledNode>,
    pub groups: Vec<(String, PdpHyper)>,
    pub streams: [Option<StreamLeaves>; 2],
    pub topic_root: usize,
    pub spec: GraphSpec,
}

impl CompiledGraph {
    pub fn role(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn group(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|(g, _)| g == name)
    }

    pub fn stream(&self, stream: Stream) -> Option<StreamLeaves> {
        self.streams[stream.index()]
    }

    pub fn topic_base(&self) -> RootBase {
        self.nodes[self.topic_root].base.expect("root has a base")
    }

    pub fn topological_ids(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.id.as_str()).collect()
    }
}

fn allowed_parent(child: Plate, parent: Plate) -> bool {
    use Plate::*;
    match child {
        Global => parent == Global,
        PerAuthor => matches!(parent, PerAuthor | Global),
        PerDocument => matches!(parent, PerDocument | PerAuthor | Global),
        PerTopic => matches!(parent, PerTopic | Global),
    }
}

/// Checks every structural rule and compiles the graph; all violations are
/// reported together.
pub fn validate(spec: &GraphSpec) -> Result<CompiledGraph> {
    let mut errors: Vec<String> = Vec::new();
    let n = spec.nodes.len();

    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, node) in spec.nodes.iter().enumerate() {
        if index.insert(node.id.as_str(), i).is_some() {
            errors.push(format!("duplicate node id `{}`", node.id));
        }
    }
    if n == 0 {
        errors.push("graph has no nodes".into());
    }

    let mut groups: Vec<(String, PdpHyper)> = Vec::new();
    for (name, g) in &spec.hyper_groups {
        match PdpHyper::new(g.discount, g.concentration) {
            Ok(h) => groups.push((name.clone(), h)),
            Err(e) => errors.push(format!("hyper group `{name}`: {e}")),
        }
    }
    let mut node_group = vec![0usize; n];
    for (i, node) in spec.nodes.iter().enumerate() {
        match spec.hyper_groups.keys().position(|g| *g == node.group) {
            Some(g) => node_group[i] = g,
            None => errors.push(format!(
                "node `{}` refers to unknown hyper group `{}`",
                node.id, node.group
            )),
        }
    }

    let mut parents: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut seen_edges = BTreeSet::new();
    for e in &spec.edges {
        let (Some(&c), Some(&p)) = (index.get(e.child.as_str()), index.get(e.parent.as_str())) else {
            errors.push(format!(
                "edge `{}` -> `{}` names an unknown node",
                e.parent, e.child
            ));
            continue;
        };
        if !(e.weight > 0.0 && e.weight.is_finite()) {
            errors.push(format!(
                "edge `{}` -> `{}` has non-positive or non-finite weight {}",
                e.parent, e.child, e.weight
            ));
        }
        if !seen_edges.insert((c, p)) {
            errors.push(format!("duplicate edge `{}` -> `{}`", e.parent, e.child));
            continue;
        }
        if !allowed_parent(spec.nodes[c].plate, spec.nodes[p].plate) {
            errors.push(format!(
                "edge `{}` -> `{}` joins incompatible plates {:?} -> {:?}",
                e.parent, e.child, spec.nodes[p].plate, spec.nodes[c].plate
            ));
        }
        parents[c].push((p, e.weight));
    }
    for (i, ps) in parents.iter().enumerate() {
        if ps.len() > MAX_PARENTS {
            errors.push(format!(
                "node `{}` has {} parents, at most {MAX_PARENTS} supported",
                spec.nodes[i].id,
                ps.len()
            ));
        }
    }

    // Kahn's algorithm, ties broken by declaration order.
    let mut indegree: Vec<usize> = parents.iter().map(|p| p.len()).collect();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &(p, _) in ps {
            children[p].push(c);
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    while let Some(&i) = ready.iter().next() {
        ready.remove(&i);
        order.push(i);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() < n {
        let stuck: Vec<usize> = (0..n).filter(|&i| indegree[i] > 0).collect();
        let on_cycle: Vec<&str> = stuck
            .iter()
            .filter(|&&i| reaches(i, i, &children))
            .map(|&i| spec.nodes[i].id.as_str())
            .collect();
        errors.push(format!("cycle detected among nodes {}", on_cycle.join(", ")));
        return Err(Error::Validation(errors));
    }

    for (i, node) in spec.nodes.iter().enumerate() {
        match (parents[i].is_empty(), node.base) {
            (true, None) => errors.push(format!(
                "node `{}` has no parent and no root base (orphan)",
                node.id
            )),
            (false, Some(_)) => errors.push(format!(
                "node `{}` has parents and must not declare a root base",
                node.id
            )),
            (true, Some(RootBase::FiniteTopics(0))) => {
                errors.push(format!("root `{}` has an empty finite topic base", node.id))
            }
            _ => {}
        }
    }

    // Roots reachable from each node, computed parents-first.
    let mut roots: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &i in &order {
        if parents[i].is_empty() {
            roots[i].insert(i);
        } else {
            let mut acc = BTreeSet::new();
            for &(p, _) in &parents[i] {
                acc.extend(roots[p].iter().copied());
            }
            roots[i] = acc;
        }
    }
    let mut side = vec![Side::Topic; n];
    for i in 0..n {
        if roots[i].len() > 1 {
            let names: Vec<&str> = roots[i].iter().map(|&r| spec.nodes[r].id.as_str()).collect();
            errors.push(format!(
                "node `{}` reaches several roots ({})",
                spec.nodes[i].id,
                names.join(", ")
            ));
        }
        if let Some(&r) = roots[i].iter().next() {
            side[i] = match spec.nodes[r].base {
                Some(RootBase::Vocabulary) => Side::Vocabulary,
                _ => Side::Topic,
            };
        }
        let plate = spec.nodes[i].plate;
        match side[i] {
            Side::Topic if plate == Plate::PerTopic => errors.push(format!(
                "topic-side node `{}` cannot be replicated per topic",
                spec.nodes[i].id
            )),
            Side::Vocabulary if !matches!(plate, Plate::PerTopic | Plate::Global) => {
                errors.push(format!(
                    "vocabulary-side node `{}` must be per-topic or global",
                    spec.nodes[i].id
                ))
            }
            _ => {}
        }
    }
    let topic_roots: Vec<usize> = (0..n)
        .filter(|&i| parents[i].is_empty() && side[i] == Side::Topic && spec.nodes[i].base.is_some())
        .collect();
    if topic_roots.len() > 1 {
        errors.push("more than one topic root".into());
    }

    let mut streams: [Option<(Option<usize>, Option<usize>)>; 2] = [None, None];
    let mut leaf_seen = BTreeSet::new();
    for leaf in &spec.leaves {
        let Some(&i) = index.get(leaf.node.as_str()) else {
            errors.push(format!("leaf names unknown node `{}`", leaf.node));
            continue;
        };
        let Some(stream) = leaf.stream else {
            errors.push(format!("leaf `{}` has no observation stream", leaf.node));
            continue;
        };
        if !leaf_seen.insert((i, stream)) {
            errors.push(format!("leaf `{}` listed twice for {}", leaf.node, stream.name()));
            continue;
        }
        let entry = streams[stream.index()].get_or_insert((None, None));
        let slot = match side[i] {
            Side::Topic => {
                if spec.nodes[i].plate != Plate::PerDocument {
                    errors.push(format!(
                        "topic leaf `{}` must be per-document",
                        leaf.node
                    ));
                }
                &mut entry.0
            }
            Side::Vocabulary => {
                if spec.nodes[i].plate != Plate::PerTopic {
                    errors.push(format!(
                        "vocabulary leaf `{}` must be per-topic",
                        leaf.node
                    ));
                }
                &mut entry.1
            }
        };
        if slot.replace(i).is_some() {
            errors.push(format!(
                "stream {} has more than one {} leaf",
                stream.name(),
                if side[i] == Side::Topic { "topic" } else { "vocabulary" }
            ));
        }
    }
    let mut compiled_streams_raw = [None, None];
    for s in Stream::ALL {
        if let Some((t, v)) = streams[s.index()] {
            match (t, v) {
                (Some(t), Some(v)) => compiled_streams_raw[s.index()] = Some((t, v)),
                (None, _) => errors.push(format!("stream {} has no topic leaf", s.name())),
                (_, None) => errors.push(format!("stream {} has no vocabulary leaf", s.name())),
            }
        }
    }
    if spec.leaves.is_empty() {
        errors.push("graph declares no leaves".into());
    }
    if topic_roots.is_empty() {
        errors.push("graph has no topic root".into());
    }

    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }

    // Renumber roles in topological order.
    let mut position = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        position[i] = pos;
    }
    let mut nodes: Vec<CompiledNode> = order
        .iter()
        .map(|&i| {
            let spec_node = &spec.nodes[i];
            let total: f64 = parents[i].iter().map(|(_, w)| w).sum();
            CompiledNode {
                id: spec_node.id.clone(),
                role: spec_node.role.clone(),
                plate: spec_node.plate,
                group: node_group[i],
                parents: parents[i]
                    .iter()
                    .map(|&(p, w)| (position[p], w / total))
                    .collect(),
                base: spec_node.base,
                side: side[i],
                ancestors: Vec::new(),
            }
        })
        .collect();
    for r in 0..nodes.len() {
        let mut anc = BTreeSet::new();
        anc.insert(r);
        let mut stack = vec![r];
        while let Some(x) = stack.pop() {
            for &(p, _) in &nodes[x].parents {
                if anc.insert(p) {
                    stack.push(p);
                }
            }
        }
        nodes[r].ancestors = anc.into_iter().collect();
    }
    let mut compiled_streams = [None, None];
    for (slot, raw) in compiled_streams.iter_mut().zip(compiled_streams_raw) {
        *slot = raw.map(|(t, v)| StreamLeaves {
            topic_leaf: position[t],
            vocab_leaf: position[v],
        });
    }
    Ok(CompiledGraph {
        nodes,
        groups,
        streams: compiled_streams,
        topic_root: position[topic_roots[0]],
        spec: spec.clone(),
    })
}

fn reaches(from: usize, target: usize, children: &[Vec<usize>]) -> bool {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<usize> = children[from].clone();
    while let Some(x) = stack.pop() {
        if x == target {
            return true;
        }
        if seen.insert(x) {
            stack.extend(children[x].iter().copied());
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn node(id: &str, plate: Plate, base: Option<RootBase>) -> NodeSpec {
        NodeSpec {
            id: id.into(),
            role: String::new(),
            group: "g".into(),
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

    fn groups() -> BTreeMap<String, GroupSpec> {
        let mut g = BTreeMap::new();
        g.insert(
            "g".to_string(),
            GroupSpec {
                discount: 0.5,
                concentration: 1.0,
            },
        );
        g
    }

    fn chain() -> GraphSpec {
        GraphSpec {
            nodes: vec![
                node("leaf", Plate::PerDocument, None),
                node("root", Plate::Global, Some(RootBase::Topics)),
                node("psi", Plate::PerTopic, Some(RootBase::Vocabulary)),
            ],
            edges: vec![edge("root", "leaf", 1.0)],
            leaves: vec![
                LeafSpec {
                    node: "leaf".into(),
                    stream: Some(Stream::Words),
                },
                LeafSpec {
                    node: "psi".into(),
                    stream: Some(Stream::Words),
                },
            ],
            hyper_groups: groups(),
        }
    }

    #[test]
    fn two_node_chain_compiles_in_topological_order() {
        let g = validate(&chain()).unwrap();
        let ids = g.topological_ids();
        let root = ids.iter().position(|&i| i == "root").unwrap();
        let leaf = ids.iter().position(|&i| i == "leaf").unwrap();
        assert!(root < leaf);
        assert_eq!(g.nodes[leaf].parents, vec![(root, 1.0)]);
        assert_eq!(g.topic_root, root);
    }

    #[test]
    fn cycle_is_reported_with_names() {
        let mut spec = chain();
        spec.nodes.push(node("A", Plate::Global, None));
        spec.nodes.push(node("B", Plate::Global, None));
        spec.edges.push(edge("A", "B", 1.0));
        spec.edges.push(edge("B", "A", 1.0));
        let Err(Error::Validation(errs)) = validate(&spec) else {
            panic!("expected a validation error")
        };
        let msg = errs.join("\n");
        assert!(msg.contains("cycle"), "{msg}");
        assert!(msg.contains('A') && msg.contains('B'), "{msg}");
    }

    #[test]
    fn equal_lambdas_normalize_to_halves() {
        let mut spec = chain();
        spec.nodes.push(node("p2", Plate::Global, None));
        spec.edges.push(edge("root", "p2", 1.0));
        spec.edges.push(edge("p2", "leaf", 1.0));
        let g = validate(&spec).unwrap();
        let leaf = g.role("leaf").unwrap();
        let weights: Vec<f64> = g.nodes[leaf].parents.iter().map(|p| p.1).collect();
        assert_eq!(weights, vec![0.5, 0.5]);
    }

    #[test]
    fn every_violation_is_listed() {
        let mut spec = chain();
        spec.nodes.push(node("orphan", Plate::Global, None));
        spec.edges.push(edge("root", "psi", 0.0));
        spec.leaves.push(LeafSpec {
            node: "leaf".into(),
            stream: None,
        });
        let Err(Error::Validation(errs)) = validate(&spec) else {
            panic!("expected a validation error")
        };
        let msg = errs.join("\n");
        assert!(msg.contains("orphan"), "{msg}");
        assert!(msg.contains("weight"), "{msg}");
        assert!(msg.contains("no observation stream"), "{msg}");
    }

    #[test]
    fn incompatible_plates_rejected() {
        let mut spec = chain();
        spec.nodes.push(node("docs", Plate::PerDocument, None));
        spec.nodes.push(node("glob", Plate::Global, None));
        spec.edges.push(edge("root", "docs", 1.0));
        spec.edges.push(edge("docs", "glob", 1.0));
        assert!(validate(&spec).is_err());
    }

    #[test]
    fn instance_census() {
        let spec = chain();
        assert_eq!(spec.instance_count(2, 3, 4), 3 + 1 + 4);
    }
}
