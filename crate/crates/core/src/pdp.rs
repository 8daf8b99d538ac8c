//! A single Poisson-Dirichlet (Pitman-Yor) restaurant.
//!
//! Customers of a topic sit at tables; the node stores, per topic, how many tables
//! of each size there are (and, for nodes with several parents, which parent each
//! table sent its customer to). That histogram is all the collapsed sampler needs:
//! a departing customer leaves a table chosen proportionally to its size, an
//! arriving one joins a table proportionally to `size - discount` or opens a new
//! one proportionally to `(concentration + discount·T)·base(k)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::{Error, Result};

pub type TopicId = u32;

/// Discount `a ∈ [0, 1)` and concentration `b > -a`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PdpHyper {
    pub discount: f64,
    pub concentration: f64,
}

impl PdpHyper {
    pub fn new(discount: f64, concentration: f64) -> Result<Self> {
        let hyper = PdpHyper {
            discount,
            concentration,
        };
        if hyper.is_valid() {
            Ok(hyper)
        } else {
            Err(Error::InvalidHyper(format!(
                "discount {discount} must lie in [0,1) and concentration {concentration} must exceed -discount"
            )))
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..1.0).contains(&self.discount)
            && self.concentration.is_finite()
            && self.concentration + self.discount > 0.0
    }
}

/// Gamma(shape, rate) prior on a concentration.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConcentrationPrior {
    pub shape: f64,
    pub rate: f64,
}

impl ConcentrationPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite() {
            Ok(ConcentrationPrior { shape, rate })
        } else {
            Err(Error::InvalidHyper(format!(
                "gamma prior needs positive shape and rate, got ({shape}, {rate})"
            )))
        }
    }
}

impl Default for ConcentrationPrior {
    fn default() -> Self {
        ConcentrationPrior {
            shape: 0.1,
            rate: 0.1,
        }
    }
}

/// `count` tables of `size` customers that all sent their customer to `parent`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TableClass {
    pub parent: u16,
    pub size: u32,
    pub count: u32,
}

/// Seating of one topic at one node.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Seating {
    customers: u32,
    tables: u32,
    /// Sorted by `(parent, size)`, no zero counts.
    classes: Vec<TableClass>,
}

impl Seating {
    pub fn customers(&self) -> u32 {
        self.customers
    }

    pub fn tables(&self) -> u32 {
        self.tables
    }

    pub fn classes(&self) -> &[TableClass] {
        &self.classes
    }

    /// Tables sending their customer to `parent`.
    pub fn tables_to(&self, parent: u16) -> u32 {
        self.classes
            .iter()
            .filter(|c| c.parent == parent)
            .map(|c| c.count)
            .sum()
    }

    fn position(&self, parent: u16, size: u32) -> core::result::Result<usize, usize> {
        self.classes
            .binary_search_by(|c| (c.parent, c.size).cmp(&(parent, size)))
    }

    fn insert_table(&mut self, parent: u16, size: u32) {
        match self.position(parent, size) {
            Ok(i) => self.classes[i].count += 1,
            Err(i) => self.classes.insert(
                i,
                TableClass {
                    parent,
                    size,
                    count: 1,
                },
            ),
        }
    }

    fn take_table(&mut self, parent: u16, size: u32) -> bool {
        match self.position(parent, size) {
            Ok(i) => {
                self.classes[i].count -= 1;
                if self.classes[i].count == 0 {
                    self.classes.remove(i);
                }
                true
            }
            Err(_) => false,
        }
    }

    fn check(&self) -> core::result::Result<(), &'static str> {
        let customers: u64 = self
            .classes
            .iter()
            .map(|c| c.size as u64 * c.count as u64)
            .sum();
        let tables: u64 = self.classes.iter().map(|c| c.count as u64).sum();
        if customers != self.customers as u64 || tables != self.tables as u64 {
            return Err("table histogram disagrees with totals");
        }
        if self.classes.iter().any(|c| c.size == 0 || c.count == 0) {
            return Err("empty table class");
        }
        if self.tables > self.customers || (self.customers > 0) != (self.tables > 0) {
            return Err("table count out of range");
        }
        Ok(())
    }
}

/// Record of what one insertion or removal did to the tables of a topic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableDelta {
    pub topic: TopicId,
    pub created_table: bool,
    pub removed_table: bool,
    /// Parent slot of the created or removed table (0 for single-parent nodes).
    pub parent: u16,
}

/// Where an arriving customer sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeatChoice {
    /// Join one of the existing tables of this size sending to `parent`.
    Join { parent: u16, size: u32 },
    NewTable,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeState {
    hyper: PdpHyper,
    seats: BTreeMap<TopicId, Seating>,
    total_customers: u64,
    total_tables: u64,
}

impl NodeState {
    pub fn new(hyper: PdpHyper) -> Self {
        NodeState {
            hyper,
            seats: BTreeMap::new(),
            total_customers: 0,
            total_tables: 0,
        }
    }

    pub fn hyper(&self) -> PdpHyper {
        self.hyper
    }

    pub fn set_concentration(&mut self, concentration: f64) {
        self.hyper.concentration = concentration;
    }

    pub fn set_hyper(&mut self, hyper: PdpHyper) {
        self.hyper = hyper;
    }

    pub fn customers(&self, topic: TopicId) -> u32 {
        self.seats.get(&topic).map_or(0, |s| s.customers)
    }

    pub fn tables(&self, topic: TopicId) -> u32 {
        self.seats.get(&topic).map_or(0, |s| s.tables)
    }

    pub fn seating(&self, topic: TopicId) -> Option<&Seating> {
        self.seats.get(&topic)
    }

    pub fn total_customers(&self) -> u64 {
        self.total_customers
    }

    pub fn total_tables(&self) -> u64 {
        self.total_tables
    }

    pub fn is_empty(&self) -> bool {
        self.total_customers == 0
    }

    /// Occupied topics in increasing id order.
    pub fn iter(&self) -> impl Iterator<Item = (TopicId, &Seating)> + '_ {
        self.seats.iter().map(|(k, s)| (*k, s))
    }

    pub fn max_topic(&self) -> Option<TopicId> {
        self.seats.keys().next_back().copied()
    }

    /// Replaces the seating of `topic` wholesale (used to undo rejected moves).
    pub fn restore_seating(&mut self, topic: TopicId, seating: Option<Seating>) {
        if let Some(old) = self.seats.remove(&topic) {
            self.total_customers -= old.customers as u64;
            self.total_tables -= old.tables as u64;
        }
        if let Some(new) = seating {
            if new.customers > 0 {
                self.total_customers += new.customers as u64;
                self.total_tables += new.tables as u64;
                self.seats.insert(topic, new);
            }
        }
    }

    /// `(b + a·T) / (N + b)`: the share of predictive mass passed to the base.
    pub fn base_share(&self) -> f64 {
        if self.total_customers == 0 {
            return 1.0;
        }
        let PdpHyper {
            discount: a,
            concentration: b,
        } = self.hyper;
        (b + a * self.total_tables as f64) / (self.total_customers as f64 + b)
    }

    /// Predictive probability of `topic` given the base probability of that topic.
    pub fn predictive_at(&self, topic: TopicId, base: f64) -> f64 {
        if self.total_customers == 0 {
            return base;
        }
        let a = self.hyper.discount;
        let denom = self.total_customers as f64 + self.hyper.concentration;
        let own = self
            .seats
            .get(&topic)
            .map_or(0.0, |s| (s.customers as f64 - a * s.tables as f64) / denom);
        own + self.base_share() * base
    }

    /// Two-parameter CRP predictive over a dense index space given the base
    /// (parent) probabilities. Every occupied topic must index into `parent_probs`.
    pub fn predictive(&self, parent_probs: &[f64]) -> Result<Vec<f64>> {
        if let Some(k) = self.max_topic() {
            if k as usize >= parent_probs.len() {
                return Err(Error::Structural(format!(
                    "node holds topic {k} but the base covers only {} entries",
                    parent_probs.len()
                )));
            }
        }
        let mut out = vec![0.0; parent_probs.len()];
        self.predictive_into(parent_probs, &mut out);
        Ok(out)
    }

    /// Unchecked form of [`NodeState::predictive`] writing into `out`.
    pub fn predictive_into(&self, parent_probs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(parent_probs.len(), out.len());
        if self.total_customers == 0 {
            out.copy_from_slice(parent_probs);
            return;
        }
        let share = self.base_share();
        for (o, p) in out.iter_mut().zip(parent_probs) {
            *o = share * p;
        }
        let a = self.hyper.discount;
        let denom = self.total_customers as f64 + self.hyper.concentration;
        for (k, s) in &self.seats {
            out[*k as usize] += (s.customers as f64 - a * s.tables as f64) / denom;
        }
    }

    /// Unnormalized weight of opening a new table for `topic`.
    pub fn new_table_weight(&self, base: f64) -> f64 {
        let a = self.hyper.discount;
        (self.hyper.concentration + a * self.total_tables as f64) * base
    }

    /// Exact distribution of the seat an arriving customer of `topic` takes:
    /// `(join options, probability of a new table)`. Join options carry the table
    /// class and the probability of joining one of its tables.
    pub fn seat_probabilities(&self, topic: TopicId, base: f64) -> (Vec<(TableClass, f64)>, f64) {
        let Some(seating) = self.seats.get(&topic) else {
            return (Vec::new(), 1.0);
        };
        let a = self.hyper.discount;
        let fresh = self.new_table_weight(base);
        let joined: f64 = seating.customers as f64 - a * seating.tables as f64;
        let total = joined + fresh;
        let options = seating
            .classes
            .iter()
            .map(|c| (*c, c.count as f64 * (c.size as f64 - a) / total))
            .collect();
        (options, fresh / total)
    }

    pub fn choose_seat<R: Rng + ?Sized>(&self, topic: TopicId, base: f64, rng: &mut R) -> SeatChoice {
        let Some(seating) = self.seats.get(&topic) else {
            return SeatChoice::NewTable;
        };
        let a = self.hyper.discount;
        let fresh = self.new_table_weight(base);
        let joined = seating.customers as f64 - a * seating.tables as f64;
        let mut u = rng.random::<f64>() * (joined + fresh);
        if u >= joined {
            return SeatChoice::NewTable;
        }
        for c in &seating.classes {
            let w = c.count as f64 * (c.size as f64 - a);
            if u < w {
                return SeatChoice::Join {
                    parent: c.parent,
                    size: c.size,
                };
            }
            u -= w;
        }
        let c = seating.classes.last().expect("occupied topic has tables");
        SeatChoice::Join {
            parent: c.parent,
            size: c.size,
        }
    }

    /// Seats a customer at an existing table of the given class.
    pub fn apply_join(&mut self, topic: TopicId, parent: u16, size: u32) -> Result<TableDelta> {
        let seating = self
            .seats
            .get_mut(&topic)
            .ok_or_else(|| Error::Logic(format!("join on empty topic {topic}")))?;
        if !seating.take_table(parent, size) {
            return Err(Error::Logic(format!(
                "no table of size {size} (parent {parent}) for topic {topic}"
            )));
        }
        seating.insert_table(parent, size + 1);
        seating.customers += 1;
        self.total_customers += 1;
        Ok(TableDelta {
            topic,
            created_table: false,
            removed_table: false,
            parent,
        })
    }

    /// Seats a customer at a brand-new table sending to `parent`.
    pub fn open_table(&mut self, topic: TopicId, parent: u16) -> TableDelta {
        let seating = self.seats.entry(topic).or_default();
        seating.insert_table(parent, 1);
        seating.customers += 1;
        seating.tables += 1;
        self.total_customers += 1;
        self.total_tables += 1;
        TableDelta {
            topic,
            created_table: true,
            removed_table: false,
            parent,
        }
    }

    /// Adds a customer to a single-parent node. `base` is the parent's predictive
    /// probability of `topic`.
    pub fn add_customer<R: Rng + ?Sized>(&mut self, topic: TopicId, base: f64, rng: &mut R) -> TableDelta {
        match self.choose_seat(topic, base, rng) {
            SeatChoice::NewTable => self.open_table(topic, 0),
            SeatChoice::Join { parent, size } => self
                .apply_join(topic, parent, size)
                .expect("chosen class exists"),
        }
    }

    /// Exact distribution over which table class loses a departing customer of `topic`.
    pub fn removal_probabilities(&self, topic: TopicId) -> Vec<(TableClass, f64)> {
        let Some(seating) = self.seats.get(&topic) else {
            return Vec::new();
        };
        let n = seating.customers as f64;
        seating
            .classes
            .iter()
            .map(|c| (*c, (c.count as f64 * c.size as f64) / n))
            .collect()
    }

    /// Removes one customer from a table of the given class.
    pub fn apply_removal(&mut self, topic: TopicId, parent: u16, size: u32) -> Result<TableDelta> {
        let seating = self
            .seats
            .get_mut(&topic)
            .ok_or_else(|| Error::Logic(format!("removal from empty topic {topic}")))?;
        if !seating.take_table(parent, size) {
            return Err(Error::Logic(format!(
                "no table of size {size} (parent {parent}) for topic {topic}"
            )));
        }
        seating.customers -= 1;
        self.total_customers -= 1;
        let removed = size == 1;
        if removed {
            seating.tables -= 1;
            self.total_tables -= 1;
        } else {
            seating.insert_table(parent, size - 1);
        }
        if seating.customers == 0 {
            self.seats.remove(&topic);
        }
        Ok(TableDelta {
            topic,
            created_table: false,
            removed_table: removed,
            parent,
        })
    }

    /// Removes a uniformly chosen customer of `topic`; its table goes with it when
    /// it was the last one there.
    pub fn remove_customer<R: Rng + ?Sized>(&mut self, topic: TopicId, rng: &mut R) -> Result<TableDelta> {
        let seating = self
            .seats
            .get(&topic)
            .ok_or_else(|| Error::Logic(format!("removal from empty topic {topic}")))?;
        let mut u = rng.random_range(0..seating.customers) as u64;
        let mut chosen = *seating.classes.last().expect("occupied topic has tables");
        for c in &seating.classes {
            let w = c.count as u64 * c.size as u64;
            if u < w {
                chosen = *c;
                break;
            }
            u -= w;
        }
        self.apply_removal(topic, chosen.parent, chosen.size)
    }

    /// Broken removal that avoids closing tables whenever it can. Exists only so the
    /// Geweke harness can demonstrate that it detects a faulty sampler.
    #[doc(hidden)]
    pub fn remove_customer_keeping_tables<R: Rng + ?Sized>(
        &mut self,
        topic: TopicId,
        rng: &mut R,
    ) -> Result<TableDelta> {
        let seating = self
            .seats
            .get(&topic)
            .ok_or_else(|| Error::Logic(format!("removal from empty topic {topic}")))?;
        let crowded: Vec<TableClass> = seating.classes.iter().copied().filter(|c| c.size > 1).collect();
        if crowded.is_empty() {
            return self.remove_customer(topic, rng);
        }
        let weights: Vec<f64> = crowded.iter().map(|c| (c.count * c.size) as f64).collect();
        let c = crowded[math::sample_weighted(&weights, rng)];
        self.apply_removal(topic, c.parent, c.size)
    }

    /// Log probability of the current seating arrangement (tables unlabeled,
    /// customers exchangeable) excluding the base measure: `(b|a)_T / (b)_N ·
    /// Π_tables (1-a)_{size-1}`.
    pub fn log_seating_probability(&self) -> f64 {
        if self.total_customers == 0 {
            return 0.0;
        }
        let PdpHyper {
            discount: a,
            concentration: b,
        } = self.hyper;
        let mut ll = math::ln_generalized_rising_tail(b, a, self.total_tables)
            - math::ln_rising_tail(b, self.total_customers);
        for s in self.seats.values() {
            for c in &s.classes {
                ll += c.count as f64 * math::ln_table_weight(a, c.size);
            }
        }
        ll
    }

    /// Renames topics through `map` (old id → new id); topics mapped to `None` must be empty.
    pub fn remap_topics(&mut self, map: &[Option<TopicId>]) -> Result<()> {
        let old = core::mem::take(&mut self.seats);
        for (k, s) in old {
            match map.get(k as usize).copied().flatten() {
                Some(new) => {
                    self.seats.insert(new, s);
                }
                None => {
                    return Err(Error::Logic(format!("topic {k} dropped while occupied")));
                }
            }
        }
        Ok(())
    }

    pub fn check_invariants(&self) -> Result<()> {
        let mut n = 0u64;
        let mut t = 0u64;
        for (k, s) in &self.seats {
            s.check()
                .map_err(|e| Error::Logic(format!("topic {k}: {e}")))?;
            if s.customers == 0 {
                return Err(Error::Logic(format!("topic {k} stored while empty")));
            }
            n += s.customers as u64;
            t += s.tables as u64;
        }
        if n != self.total_customers || t != self.total_tables {
            return Err(Error::Logic("node totals disagree with per-topic counts".into()));
        }
        Ok(())
    }
}

/// Draws a new shared concentration for nodes summarized by their `(N, T)` totals,
/// targeting the posterior under a Gamma prior by slice sampling on `ln b`.
/// With no customers anywhere the draw comes straight from the prior.
pub fn sample_concentration<R: Rng + ?Sized>(
    stats: &[(u64, u64)],
    discount: f64,
    current: f64,
    prior: &ConcentrationPrior,
    rng: &mut R,
) -> f64 {
    if stats.iter().all(|&(n, _)| n == 0) {
        return math::sample_gamma(prior.shape, prior.rate, rng);
    }
    let log_target = |u: f64| -> f64 {
        let b = math::exp(u);
        if !(b > 0.0) || !b.is_finite() {
            return f64::NEG_INFINITY;
        }
        let mut lp = prior.shape * u - prior.rate * b;
        for &(n, t) in stats {
            if n > 0 {
                lp += math::ln_generalized_rising_tail(b, discount, t) - math::ln_rising_tail(b, n);
            }
        }
        lp
    };
    let start = if current > 0.0 {
        math::ln(current)
    } else {
        math::ln(math::sample_gamma(prior.shape, prior.rate, rng).max(1e-12))
    };
    let u = slice_sample(start, 1.0, &log_target, rng);
    math::exp(u)
}

/// Resamples the concentration shared by `nodes` and writes it back into each.
pub fn resample_concentration<R: Rng + ?Sized>(
    nodes: &mut [&mut NodeState],
    prior: &ConcentrationPrior,
    rng: &mut R,
) -> Result<f64> {
    let Some(first) = nodes.first() else {
        return Ok(math::sample_gamma(prior.shape, prior.rate, rng));
    };
    let hyper = first.hyper();
    if nodes.iter().any(|n| n.hyper() != hyper) {
        return Err(Error::InvalidHyper("nodes do not share one hyperparameter set".into()));
    }
    let stats: Vec<(u64, u64)> = nodes
        .iter()
        .map(|n| (n.total_customers(), n.total_tables()))
        .collect();
    let b = sample_concentration(&stats, hyper.discount, hyper.concentration, prior, rng);
    for n in nodes.iter_mut() {
        n.set_concentration(b);
    }
    Ok(b)
}

/// Univariate slice sampler with stepping out and shrinkage.
pub(crate) fn slice_sample<R: Rng + ?Sized, F: Fn(f64) -> f64>(
    x0: f64,
    width: f64,
    log_density: &F,
    rng: &mut R,
) -> f64 {
    let ly0 = log_density(x0);
    if !ly0.is_finite() {
        return x0;
    }
    let level = ly0 + math::ln(1.0 - rng.random::<f64>());
    let mut left = x0 - width * rng.random::<f64>();
    let mut right = left + width;
    let mut steps = 64;
    while steps > 0 && log_density(left) > level {
        left -= width;
        steps -= 1;
    }
    steps = 64;
    while steps > 0 && log_density(right) > level {
        right += width;
        steps -= 1;
    }
    for _ in 0..512 {
        let x1 = left + rng.random::<f64>() * (right - left);
        if log_density(x1) > level {
            return x1;
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
    }
    x0
}
