//! The alternating sampler: Gibbs sweeps over the text graph, pCN moves on the
//! link function and concentration resampling, plus the Geweke harness.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::SeedableRng;

use crate::gp::{embedding, GpState, KernelKind, KernelParams, PairSet};
use crate::graph::{
    forward_generate, regenerate_symbols, ForwardSizes, GraphSpec, MoveCoupling, Mutation, TextState,
};
use crate::math;
use crate::pdp::{sample_concentration, ConcentrationPrior};
use crate::tn;
use crate::{ChainRng, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Schedule {
    pub total_iterations: u32,
    /// Leading iterations that sample the text model alone.
    pub text_only_burnin: u32,
    pub hyper_resample_every: u32,
    /// pCN steps per iteration.
    pub gp_inner_steps: u32,
    pub snapshot_every: u32,
    pub seed: u64,
    /// pCN step size ε.
    pub pcn_step: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            total_iterations: 2000,
            text_only_burnin: 1000,
            hyper_resample_every: 1,
            gp_inner_steps: 20,
            snapshot_every: 100,
            seed: 0,
            pcn_step: 0.2,
        }
    }
}

impl Schedule {
    pub fn check(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.text_only_burnin > self.total_iterations {
            errs.push(format!(
                "text_only_burnin {} exceeds total_iterations {}",
                self.text_only_burnin, self.total_iterations
            ));
        }
        if self.hyper_resample_every == 0 {
            errs.push("hyper_resample_every must be at least 1".into());
        }
        if self.gp_inner_steps == 0 {
            errs.push("gp_inner_steps must be at least 1".into());
        }
        if self.snapshot_every == 0 {
            errs.push("snapshot_every must be at least 1".into());
        }
        if !(self.pcn_step > 0.0 && self.pcn_step < 1.0) {
            errs.push(format!("pcn_step {} outside (0, 1)", self.pcn_step));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// Link model attached to the per-author role of the text graph.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkState {
    pub gp: GpState,
    author_role: usize,
    /// Topic ids below this enter the embeddings.
    dims: usize,
}

impl NetworkState {
    /// Binds a GP over `pairs` to the per-author node `author_role` of `text`.
    pub fn new(text: &TextState, author_role: &str, pairs: PairSet, kind: KernelKind, params: KernelParams) -> Result<Self> {
        let role = text
            .graph()
            .role(author_role)
            .ok_or_else(|| Error::Structural(format!("graph has no node `{author_role}`")))?;
        if text.graph().nodes[role].plate != crate::graph::Plate::PerAuthor {
            return Err(Error::Structural(format!("node `{author_role}` is not per author")));
        }
        let dims = (text.num_topics() as usize).max(1);
        let emb = author_embeddings(text, role, dims);
        let gp = GpState::new(pairs, kind, params, emb)?;
        Ok(NetworkState {
            gp,
            author_role: role,
            dims,
        })
    }

    /// Binds to the TN author node.
    pub fn for_tn(text: &TextState, pairs: PairSet, kind: KernelKind, params: KernelParams) -> Result<Self> {
        Self::new(text, tn::NU, pairs, kind, params)
    }

    pub fn author_role(&self) -> usize {
        self.author_role
    }

    /// Recomputes every embedding from the current counts and refactors.
    pub fn sync(&mut self, text: &TextState) -> Result<()> {
        self.dims = (text.num_topics() as usize).max(1);
        let emb = author_embeddings(text, self.author_role, self.dims);
        self.gp.set_embeddings(emb)
    }
}

/// Smoothed topic proportions of every author node over topics `< dims`.
pub fn author_embeddings(text: &TextState, author_role: usize, dims: usize) -> Vec<Vec<f64>> {
    (0..text.num_authors())
        .map(|a| {
            let node = text.instance(author_role, a).expect("per-author instance");
            embedding(&text.topic_counts(node, dims))
        })
        .collect()
}

/// Network term of a Gibbs move: the change of the GP prior density of `f`
/// when the moved token's author embedding changes.
pub struct GpCoupling<'a> {
    net: &'a mut NetworkState,
}

impl<'a> GpCoupling<'a> {
    pub fn new(net: &'a mut NetworkState) -> Self {
        GpCoupling { net }
    }
}

impl MoveCoupling for GpCoupling<'_> {
    fn log_ratio(&mut self, state: &TextState, touched: &[u32]) -> f64 {
        let role = self.net.author_role as u32;
        let Some(&node) = touched.iter().find(|&&n| state.fixed_info(n).role == role) else {
            return 0.0;
        };
        let author = state.fixed_info(node).index as usize;
        let new = embedding(&state.topic_counts(node, self.net.dims));
        self.net.gp.nu_move_log_ratio(author, &new)
    }

    fn accept(&mut self) {
        if let Err(e) = self.net.gp.commit_nu_move() {
            log::warn!("could not commit embedding move: {e}");
        }
    }

    fn reject(&mut self) {
        self.net.gp.discard_nu_move();
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub iter: u32,
    pub text_ll: f64,
    pub net_ll: Option<f64>,
    pub topics: u32,
    pub beta_topic: Option<f64>,
    pub beta_vocab: Option<f64>,
    pub gp_accept: Option<f64>,
    /// Wall time in milliseconds; left at 0 unless the caller times iterations.
    pub ms: u64,
}

pub const TRACE_HEADER: &str = "iter,text_ll,net_ll,topics,beta_topic,beta_vocab,gp_accept,ms";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iter,
            self.text_ll,
            opt(self.net_ll),
            self.topics,
            opt(self.beta_topic),
            opt(self.beta_vocab),
            opt(self.gp_accept),
            self.ms
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRACE_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(s, "{}", r.csv_row());
        }
        s
    }
}

/// A running chain: text state, optional link model, RNG and schedule position.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChainState {
    pub text: TextState,
    pub network: Option<NetworkState>,
    rng: ChainRng,
    iteration: u32,
    schedule: Schedule,
    prior: ConcentrationPrior,
}

impl ChainState {
    /// Seeds the RNG from the schedule and draws the initial assignments.
    pub fn new(
        mut text: TextState,
        network: Option<NetworkState>,
        schedule: Schedule,
        prior: ConcentrationPrior,
    ) -> Result<Self> {
        schedule.check()?;
        let mut rng = ChainRng::seed_from_u64(schedule.seed);
        text.initialize(&mut rng)?;
        Ok(ChainState {
            text,
            network,
            rng,
            iteration: 0,
            schedule,
            prior,
        })
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn prior(&self) -> &ConcentrationPrior {
        &self.prior
    }

    pub fn rng_mut(&mut self) -> &mut ChainRng {
        &mut self.rng
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.schedule.total_iterations
    }

    /// Extends the run by `extra` iterations.
    pub fn extend(&mut self, extra: u32) {
        self.schedule.total_iterations += extra;
    }

    /// Runs one iteration and returns its trace record.
    pub fn step(&mut self) -> Result<TraceRecord> {
        let iter = self.iteration + 1;
        let network_phase = iter > self.schedule.text_only_burnin;
        let mut gp_accept = None;
        match (&mut self.network, network_phase) {
            (Some(net), true) => {
                net.sync(&self.text)?;
                let mut coupling = GpCoupling::new(net);
                self.text.full_sweep(&mut self.rng, Some(&mut coupling))?;
                net.sync(&self.text)?;
                let stats = net.gp.mh_sweep_f(self.schedule.pcn_step, self.schedule.gp_inner_steps, &mut self.rng)?;
                net.gp.record_sample();
                gp_accept = Some(stats.rate());
            }
            _ => {
                self.text.full_sweep(&mut self.rng, None)?;
            }
        }
        if iter % self.schedule.hyper_resample_every == 0 {
            resample_hypers(&mut self.text, &self.prior, &mut self.rng);
        }
        #[cfg(debug_assertions)]
        self.text.check_consistency()?;
        self.iteration = iter;
        let graph = self.text.graph();
        let beta = |name: &str| graph.group(name).map(|g| self.text.hypers()[g].concentration);
        Ok(TraceRecord {
            iter,
            text_ll: self.text.log_likelihood(),
            net_ll: match (&self.network, network_phase) {
                (Some(n), true) => Some(n.gp.network_loglik()),
                _ => None,
            },
            topics: self.text.live_topics(),
            beta_topic: beta(tn::TOPIC_GROUP),
            beta_vocab: beta(tn::VOCAB_GROUP),
            gp_accept,
            ms: 0,
        })
    }

    /// Runs the remaining iterations, appending to `trace`.
    pub fn run_into(&mut self, trace: &mut Trace) -> Result<()> {
        while !self.is_done() {
            trace.records.push(self.step()?);
        }
        Ok(())
    }
}

/// Builds a chain and runs its whole schedule.
pub fn run(
    text: TextState,
    network: Option<NetworkState>,
    schedule: Schedule,
    prior: ConcentrationPrior,
) -> Result<(ChainState, Trace)> {
    let mut chain = ChainState::new(text, network, schedule, prior)?;
    let mut trace = Trace::default();
    chain.run_into(&mut trace)?;
    Ok((chain, trace))
}

/// Draws one shared concentration per hyperparameter group.
pub fn resample_hypers<R: rand::Rng + ?Sized>(text: &mut TextState, prior: &ConcentrationPrior, rng: &mut R) {
    for g in 0..text.hypers().len() {
        let h = text.hypers()[g];
        let stats = text.group_stats(g);
        let b = sample_concentration(&stats, h.discount, h.concentration, prior, rng);
        text.set_group_concentration(g, b);
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GewekeStat {
    pub name: &'static str,
    pub forward_mean: f64,
    pub gibbs_mean: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GewekeReport {
    pub rounds: u32,
    pub stats: Vec<GewekeStat>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }
}

pub const GEWEKE_STATS: [&str; 3] = ["live_topics", "root_tables", "first_topic_share"];

fn geweke_statistics(state: &TextState) -> [f64; 3] {
    let root = state.graph().topic_root;
    let node = state.doc_instance(root, 0);
    let tables = state.node(node).map(|n| n.total_tables()).unwrap_or(0);
    let tokens = state.tokens();
    let first = tokens.first().map(|t| t.topic);
    let share = tokens.iter().filter(|t| Some(t.topic) == first).count() as f64 / tokens.len().max(1) as f64;
    [state.live_topics() as f64, tables as f64, share]
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

/// Squared standard error of the mean of an autocorrelated series by batch means.
fn batch_means_var(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    if size == 0 {
        return mean_var(xs).1 / xs.len() as f64;
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    mean_var(&means).1 / batches as f64
}

/// Compares forward draws of the graph at truncation `truncation` against a
/// successive-conditional chain that alternates a Gibbs sweep over the topics
/// with a redraw of the symbols. Concentrations stay fixed. `mutation` perturbs
/// the Gibbs side only.
pub fn geweke_compare<R: rand::Rng + ?Sized>(
    spec: &GraphSpec,
    truncation: u32,
    sizes: ForwardSizes,
    rounds: u32,
    mutation: Option<Mutation>,
    rng: &mut R,
) -> Result<GewekeReport> {
    if rounds < 2 {
        return Err(Error::Input("need at least two rounds".into()));
    }
    let mut forward: [Vec<f64>; 3] = Default::default();
    for _ in 0..rounds {
        let s = forward_generate(spec, truncation, sizes, rng)?;
        for (v, x) in forward.iter_mut().zip(geweke_statistics(&s.state)) {
            v.push(x);
        }
    }
    let mut state = forward_generate(spec, truncation, sizes, rng)?.state;
    state.set_mutation(mutation);
    let mut gibbs: [Vec<f64>; 3] = Default::default();
    for _ in 0..rounds {
        state.full_sweep(rng, None)?;
        regenerate_symbols(&mut state, rng)?;
        for (v, x) in gibbs.iter_mut().zip(geweke_statistics(&state)) {
            v.push(x);
        }
    }
    let stats = GEWEKE_STATS
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            let (fm, fv) = mean_var(&forward[i]);
            let gm = mean_var(&gibbs[i]).0;
            let se2 = fv / rounds as f64 + batch_means_var(&gibbs[i], 50);
            let z = if se2 > 0.0 {
                (gm - fm) / math::sqrt(se2)
            } else if gm == fm {
                0.0
            } else {
                f64::INFINITY
            };
            GewekeStat {
                name,
                forward_mean: fm,
                gibbs_mean: gm,
                z,
            }
        })
        .collect();
    Ok(GewekeReport { rounds, stats })
}
