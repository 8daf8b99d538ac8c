//! Brute-force oracle for a two-level restaurant hierarchy (child under a root
//! whose base is uniform over `k` topics). Explicit labelled tables are generated
//! customer by customer; nothing here uses table histograms.

use std::collections::BTreeMap;

use tntm_core::pdp::{NodeState, PdpHyper, TopicId};

#[derive(Clone, Debug)]
struct Explicit {
    /// Child tables: (topic, customers, root table index).
    child: Vec<(u32, u32, usize)>,
    /// Root tables: (topic, child tables seated there).
    root: Vec<(u32, u32)>,
}

/// Histogram key: per node, sorted `(topic, size)` list of tables.
pub type Key = (Vec<(u32, u32)>, Vec<(u32, u32)>);

impl Explicit {
    fn key(&self) -> Key {
        let mut c: Vec<(u32, u32)> = self.child.iter().map(|&(k, s, _)| (k, s)).collect();
        let mut r = self.root.clone();
        c.sort();
        r.sort();
        (c, r)
    }

    fn customers(&self) -> u32 {
        self.child.iter().map(|t| t.1).sum()
    }

    /// Every way the next customer can arrive, with its probability and topic.
    fn arrivals(&self, child: PdpHyper, root: PdpHyper, k: u32) -> Vec<(f64, u32, Explicit)> {
        let n = self.customers() as f64;
        let tc = self.child.len() as f64;
        let tr = self.root.len() as f64;
        let mut out = Vec::new();
        for (i, &(topic, size, _)) in self.child.iter().enumerate() {
            let mut next = self.clone();
            next.child[i].1 += 1;
            out.push(((size as f64 - child.discount) / (n + child.concentration), topic, next));
        }
        let fresh = (child.concentration + child.discount * tc) / (n + child.concentration);
        for (j, &(topic, size)) in self.root.iter().enumerate() {
            let mut next = self.clone();
            next.root[j].1 += 1;
            next.child.push((topic, 1, j));
            let p = (size as f64 - root.discount) / (tc + root.concentration);
            out.push((fresh * p, topic, next));
        }
        let open = (root.concentration + root.discount * tr) / (tc + root.concentration);
        for topic in 0..k {
            let mut next = self.clone();
            next.root.push((topic, 1));
            next.child.push((topic, 1, self.root.len()));
            out.push((fresh * open / k as f64, topic, next));
        }
        out
    }
}

fn node_from(tables: &[(u32, u32)], hyper: PdpHyper) -> NodeState {
    let mut node = NodeState::new(hyper);
    for &(topic, size) in tables {
        node.open_table(topic as TopicId, 0);
        for s in 1..size {
            node.apply_join(topic as TopicId, 0, s).unwrap();
        }
    }
    node
}

fn key_of(child: &NodeState, root: &NodeState) -> Key {
    let flat = |n: &NodeState| {
        let mut v = Vec::new();
        for (k, s) in n.iter() {
            for c in s.classes() {
                for _ in 0..c.count {
                    v.push((k, c.size));
                }
            }
        }
        v.sort();
        v
    };
    (flat(child), flat(root))
}

fn predictive(child: &NodeState, root: &NodeState, k: u32) -> Vec<f64> {
    let base = vec![1.0 / k as f64; k as usize];
    let pr = root.predictive(&base).unwrap();
    child.predictive(&pr).unwrap()
}

/// Worst absolute gap between the library's two-level predictive and the
/// enumerated next-customer distribution, over every explicit state with at most
/// `max_customers - 1` customers.
pub fn predictive_error(child: PdpHyper, root: PdpHyper, k: u32, max_customers: u32) -> f64 {
    let mut worst = 0.0f64;
    let mut stack = vec![Explicit { child: vec![], root: vec![] }];
    while let Some(s) = stack.pop() {
        if s.customers() >= max_customers {
            continue;
        }
        let arrivals = s.arrivals(child, root, k);
        let mut oracle = vec![0.0; k as usize];
        for (p, topic, _) in &arrivals {
            oracle[*topic as usize] += p;
        }
        let (ck, rk) = s.key();
        let lib = predictive(&node_from(&ck, child), &node_from(&rk, root), k);
        for (a, b) in oracle.iter().zip(&lib) {
            worst = worst.max((a - b).abs());
        }
        stack.extend(arrivals.into_iter().map(|(_, _, next)| next));
    }
    worst
}

/// Exact prior distribution over histogram states after `n` customers.
pub fn prior_states(child: PdpHyper, root: PdpHyper, k: u32, n: u32) -> BTreeMap<Key, f64> {
    let mut out = BTreeMap::new();
    let mut stack = vec![(1.0, Explicit { child: vec![], root: vec![] })];
    while let Some((p, s)) = stack.pop() {
        if s.customers() == n {
            *out.entry(s.key()).or_insert(0.0) += p;
            continue;
        }
        for (q, _, next) in s.arrivals(child, root, k) {
            stack.push((p * q, next));
        }
    }
    out
}

/// One library Gibbs move from histogram state `key`: a uniformly chosen customer
/// leaves, draws a topic from the predictive and is reseated.
fn gibbs_move(key: &Key, child: PdpHyper, root: PdpHyper, k: u32) -> Vec<(f64, Key)> {
    let c0 = node_from(&key.0, child);
    let r0 = node_from(&key.1, root);
    let n = c0.total_customers() as f64;
    let mut out = Vec::new();
    for (topic, seating) in c0.iter() {
        let p_topic = seating.customers() as f64 / n;
        for (class, p_class) in c0.removal_probabilities(topic) {
            let mut c1 = c0.clone();
            let delta = c1.apply_removal(topic, class.parent, class.size).unwrap();
            let mut removed = vec![(p_topic * p_class, r0.clone())];
            if delta.removed_table {
                removed = r0
                    .removal_probabilities(topic)
                    .into_iter()
                    .map(|(rc, q)| {
                        let mut r1 = r0.clone();
                        r1.apply_removal(topic, rc.parent, rc.size).unwrap();
                        (p_topic * p_class * q, r1)
                    })
                    .collect();
            }
            for (p, r1) in removed {
                let pred = predictive(&c1, &r1, k);
                let base = vec![1.0 / k as f64; k as usize];
                let pr = r1.predictive(&base).unwrap();
                for new in 0..k {
                    let pk = p * pred[new as usize];
                    let (joins, fresh) = c1.seat_probabilities(new, pr[new as usize]);
                    for (jc, q) in joins {
                        let mut c2 = c1.clone();
                        c2.apply_join(new, jc.parent, jc.size).unwrap();
                        out.push((pk * q, key_of(&c2, &r1)));
                    }
                    let mut c2 = c1.clone();
                    c2.open_table(new, 0);
                    let (rjoins, rfresh) = r1.seat_probabilities(new, 1.0 / k as f64);
                    for (rc, q) in rjoins {
                        let mut r2 = r1.clone();
                        r2.apply_join(new, rc.parent, rc.size).unwrap();
                        out.push((pk * fresh * q, key_of(&c2, &r2)));
                    }
                    let mut r2 = r1.clone();
                    r2.open_table(new, 0);
                    out.push((pk * fresh * rfresh, key_of(&c2, &r2)));
                }
            }
        }
    }
    out
}

/// Largest violation of `π T = π` for the exact prior `π` over histogram states with
/// `n` customers and the library's Gibbs kernel `T`.
pub fn gibbs_invariance_error(child: PdpHyper, root: PdpHyper, k: u32, n: u32) -> f64 {
    let pi = prior_states(child, root, k, n);
    let mut pushed: BTreeMap<Key, f64> = BTreeMap::new();
    for (key, p) in &pi {
        for (q, to) in gibbs_move(key, child, root, k) {
            *pushed.entry(to).or_insert(0.0) += p * q;
        }
    }
    let mut worst = 0.0f64;
    for (key, p) in &pi {
        worst = worst.max((pushed.get(key).copied().unwrap_or(0.0) - p).abs());
    }
    for (key, q) in &pushed {
        if !pi.contains_key(key) {
            worst = worst.max(*q);
        }
    }
    worst
}

/// The hyperparameter grid `(a, b) ∈ {0, 0.5} × {0.5, 1}`.
pub fn grid() -> Vec<PdpHyper> {
    let mut v = Vec::new();
    for a in [0.0, 0.5] {
        for b in [0.5, 1.0] {
            v.push(PdpHyper::new(a, b).unwrap());
        }
    }
    v
}
