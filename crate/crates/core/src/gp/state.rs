use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::kernel::{cosine, squared_distance, AuthorGeometry, KernelKind, KernelParams};
use super::linalg;
use crate::corpus::EdgeList;
use crate::math;
use crate::{Error, Result};

/// Largest jitter tried before a Gram matrix is declared singular.
pub const MAX_JITTER: f64 = 1e-2;

/// Smoothed, normalized topic counts of an author: `(c_k + 0.5) / (Σc + 0.5·K)`.
pub fn embedding(counts: &[u32]) -> Vec<f64> {
    let total: f64 = counts.iter().map(|&c| c as f64).sum::<f64>() + 0.5 * counts.len() as f64;
    counts.iter().map(|&c| (c as f64 + 0.5) / total).collect()
}

/// `Σ x·ln σ(f) + (1-x)·ln(1-σ(f))`.
pub fn network_loglik(f: &[f64], x: &[u8]) -> f64 {
    f.iter()
        .zip(x)
        .map(|(&f, &x)| {
            if x != 0 {
                math::log_sigmoid(f)
            } else {
                math::log_sigmoid(-f)
            }
        })
        .sum()
}

/// Area under the ROC curve of `scores` for binary `labels`, ties counted half.
/// `None` when one class is absent.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l != 0).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PairOptions {
    /// Cap on training plus held-out pairs; `None` keeps them all.
    pub max_pairs: Option<usize>,
    /// Share of links and of non-links held out for evaluation.
    pub heldout_fraction: f64,
    /// Sampled non-links per observed link.
    pub nonlinks_per_link: f64,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            max_pairs: Some(200),
            heldout_fraction: 0.1,
            nonlinks_per_link: 1.0,
        }
    }
}

/// Author pairs `i < j` with link indicators, split into training and held-out parts.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairSet {
    pub pairs: Vec<(u32, u32)>,
    pub x: Vec<u8>,
    pub heldout: Vec<(u32, u32)>,
    pub heldout_x: Vec<u8>,
}

impl PairSet {
    pub fn new(pairs: Vec<(u32, u32)>, x: Vec<u8>) -> Result<PairSet> {
        if pairs.len() != x.len() {
            return Err(Error::Structural("pair and observation counts differ".into()));
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &pairs {
            if a >= b {
                return Err(Error::Input(format!("pair ({a}, {b}) is not ordered i < j")));
            }
            if !seen.insert((a, b)) {
                return Err(Error::Input(format!("duplicate pair ({a}, {b})")));
            }
        }
        Ok(PairSet {
            pairs,
            x,
            heldout: Vec::new(),
            heldout_x: Vec::new(),
        })
    }

    /// All observed links plus sampled non-links, capped and split.
    pub fn sample<R: Rng + ?Sized>(edges: &EdgeList, authors: u32, opts: &PairOptions, rng: &mut R) -> Result<PairSet> {
        let mut links = edges.pairs.clone();
        let mut nonlinks: Vec<(u32, u32)> = Vec::new();
        for i in 0..authors {
            for j in i + 1..authors {
                if !edges.contains(i, j) {
                    nonlinks.push((i, j));
                }
            }
        }
        links.shuffle(rng);
        nonlinks.shuffle(rng);
        let wanted = if links.is_empty() {
            nonlinks.len()
        } else {
            libm::round(links.len() as f64 * opts.nonlinks_per_link) as usize
        };
        nonlinks.truncate(wanted);
        if let Some(cap) = opts.max_pairs {
            let total = links.len() + nonlinks.len();
            if total > cap {
                let keep_links = libm::round(cap as f64 * links.len() as f64 / total as f64) as usize;
                links.truncate(keep_links);
                nonlinks.truncate(cap - keep_links);
            }
        }
        if links.is_empty() && nonlinks.is_empty() {
            return Err(Error::Input("no author pairs to model".into()));
        }
        let h_links = libm::round(links.len() as f64 * opts.heldout_fraction) as usize;
        let h_non = libm::round(nonlinks.len() as f64 * opts.heldout_fraction) as usize;
        let mut train: Vec<((u32, u32), u8)> = Vec::new();
        let mut held: Vec<((u32, u32), u8)> = Vec::new();
        for (i, p) in links.iter().enumerate() {
            if i < h_links { &mut held } else { &mut train }.push((*p, 1));
        }
        for (i, p) in nonlinks.iter().enumerate() {
            if i < h_non { &mut held } else { &mut train }.push((*p, 0));
        }
        train.sort();
        held.sort();
        Ok(PairSet {
            pairs: train.iter().map(|t| t.0).collect(),
            x: train.iter().map(|t| t.1).collect(),
            heldout: held.iter().map(|t| t.0).collect(),
            heldout_x: held.iter().map(|t| t.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Covariance `K + (σ² + jitter)·I` over `pairs`.
fn covariance(geometry: &AuthorGeometry, pairs: &[(u32, u32)], kind: KernelKind, p: &KernelParams, jitter: f64) -> Vec<f64> {
    let n = pairs.len();
    let mut c = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..=a {
            let k = geometry.pair_kernel(kind, p, pairs[a], pairs[b]);
            c[a * n + b] = k;
            c[b * n + a] = k;
        }
        c[a * n + a] += p.noise * p.noise + jitter;
    }
    c
}

/// Cholesky factor of the pair covariance with the jitter that made it succeed.
#[derive(Clone, Debug, PartialEq)]
pub struct GramFactor {
    pub n: usize,
    pub lower: Vec<f64>,
    pub jitter: f64,
}

/// Factors `K + (σ² + jitter)·I`, multiplying the jitter by ten on failure up to
/// [`MAX_JITTER`].
pub fn gram(pairs: &[(u32, u32)], embeddings: &[Vec<f64>], kind: KernelKind, params: &KernelParams) -> Result<GramFactor> {
    if pairs.is_empty() {
        return Err(Error::Input("empty pair set".into()));
    }
    params.check()?;
    let geometry = AuthorGeometry::new(embeddings)?;
    factor(&geometry, pairs, kind, params)
}

fn factor(geometry: &AuthorGeometry, pairs: &[(u32, u32)], kind: KernelKind, params: &KernelParams) -> Result<GramFactor> {
    let n = pairs.len();
    let mut jitter = params.jitter;
    loop {
        let c = covariance(geometry, pairs, kind, params, jitter);
        if let Some(lower) = linalg::cholesky(&c, n) {
            return Ok(GramFactor { n, lower, jitter });
        }
        if jitter >= MAX_JITTER {
            let c = covariance(geometry, pairs, kind, params, 0.0);
            return Err(Error::Numerical(format!(
                "gram matrix not positive definite up to jitter {MAX_JITTER}; minimum eigenvalue {:.3e}",
                linalg::min_eigenvalue(&c, n)
            )));
        }
        jitter = (jitter * 10.0).min(MAX_JITTER);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MhStats {
    pub proposed: u32,
    pub accepted: u32,
}

impl MhStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Blocks of the covariance around one author: `S` are the pairs containing it,
/// `R` the rest, `W = C_RR⁻¹` and `a = W f_R`.
#[derive(Clone, Debug)]
struct Conditioning {
    author: usize,
    stamp: u64,
    s: Vec<usize>,
    r: Vec<usize>,
    w: Vec<f64>,
    a: Vec<f64>,
    /// Cosine kernel only: `C_SR` is linear in the author's unit embedding.
    linear: Option<LinearBlocks>,
    /// Conditional at the author's current embedding, once computed.
    current: Option<Conditional>,
    /// The precision has not yet absorbed committed moves of this author.
    dirty: bool,
}

/// With `û` the author's unit embedding, row `p` of `C_SR` is `ûᵀ G_p`.
#[derive(Clone, Debug)]
struct LinearBlocks {
    dim: usize,
    /// `G_p`, `dim × r` per pair of `S`.
    g: Vec<f64>,
    /// `W G_pᵀ`, `r × dim` per pair of `S`.
    wg: Vec<f64>,
    /// `G_p a` per pair of `S`.
    ga: Vec<f64>,
}

/// Conditional of `f_S` given `f_R` under one embedding of the author.
#[derive(Clone, Debug)]
struct Conditional {
    /// `W C_RS`, `r × m` row-major.
    b: Vec<f64>,
    v_lower: Vec<f64>,
    log_density: f64,
}

#[derive(Clone, Debug)]
struct Pending {
    author: usize,
    embedding: Vec<f64>,
    new: Conditional,
    old_logdet_v: f64,
}

/// Latent link function over the training pairs and its Gram bookkeeping.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GpState {
    pairs: PairSet,
    kind: KernelKind,
    params: KernelParams,
    embeddings: Vec<Vec<f64>>,
    f: Vec<f64>,
    jitter: f64,
    lower: Vec<f64>,
    precision: Vec<f64>,
    logdet: f64,
    /// Bumped whenever the embeddings change.
    version: u64,
    /// Version the Cholesky factor was computed at.
    factor_version: u64,
    /// Bumped whenever the precision changes.
    stamp: u64,
    by_author: Vec<Vec<usize>>,
    f_sum: Vec<f64>,
    samples: u64,
    #[cfg_attr(feature = "serde", serde(skip))]
    geometry: Option<AuthorGeometry>,
    #[cfg_attr(feature = "serde", serde(skip))]
    conditioning: Option<Conditioning>,
    #[cfg_attr(feature = "serde", serde(skip))]
    pending: Option<Pending>,
}

impl PartialEq for GpState {
    fn eq(&self, o: &Self) -> bool {
        self.pairs == o.pairs
            && self.kind == o.kind
            && self.params == o.params
            && self.embeddings == o.embeddings
            && self.f == o.f
            && self.jitter == o.jitter
            && self.lower == o.lower
            && self.precision == o.precision
            && self.logdet == o.logdet
            && self.version == o.version
            && self.factor_version == o.factor_version
            && self.f_sum == o.f_sum
            && self.samples == o.samples
    }
}

impl GpState {
    /// Starts at `f = 0` with a fresh factor for the given embeddings.
    pub fn new(pairs: PairSet, kind: KernelKind, params: KernelParams, embeddings: Vec<Vec<f64>>) -> Result<Self> {
        params.check()?;
        if pairs.is_empty() {
            return Err(Error::Input("empty pair set".into()));
        }
        let authors = embeddings.len();
        let mut by_author = vec![Vec::new(); authors];
        for (p, &(a, b)) in pairs.pairs.iter().enumerate() {
            if b as usize >= authors {
                return Err(Error::Input(format!("pair ({a}, {b}) names an unknown author")));
            }
            by_author[a as usize].push(p);
            by_author[b as usize].push(p);
        }
        let n = pairs.len();
        let mut gp = GpState {
            pairs,
            kind,
            params,
            embeddings,
            f: vec![0.0; n],
            jitter: params.jitter,
            lower: Vec::new(),
            precision: Vec::new(),
            logdet: 0.0,
            version: 0,
            factor_version: u64::MAX,
            stamp: 0,
            by_author,
            f_sum: vec![0.0; n],
            samples: 0,
            geometry: None,
            conditioning: None,
            pending: None,
        };
        gp.refresh()?;
        Ok(gp)
    }

    pub fn pairs(&self) -> &PairSet {
        &self.pairs
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn set_f(&mut self, f: Vec<f64>) -> Result<()> {
        if f.len() != self.f.len() {
            return Err(Error::Structural("latent vector length differs from pair count".into()));
        }
        self.f = f;
        self.stamp += 1;
        Ok(())
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn is_fresh(&self) -> bool {
        self.factor_version == self.version
    }

    /// Lower Cholesky factor of the current covariance.
    pub fn factor(&self) -> Result<&[f64]> {
        if !self.is_fresh() {
            return Err(Error::StaleGram);
        }
        Ok(&self.lower)
    }

    /// Inverse of the current covariance.
    pub fn precision(&mut self) -> &[f64] {
        self.flush_precision();
        &self.precision
    }

    pub fn log_det(&self) -> f64 {
        self.logdet
    }

    fn geometry(&mut self) -> Result<&AuthorGeometry> {
        if self.geometry.is_none() {
            self.geometry = Some(AuthorGeometry::new(&self.embeddings)?);
        }
        Ok(self.geometry.as_ref().expect("just built"))
    }

    /// Dense covariance `K + (σ² + jitter)·I` at the current embeddings.
    pub fn covariance(&mut self) -> Result<Vec<f64>> {
        let (kind, params, jitter) = (self.kind, self.params, self.jitter);
        let pairs = self.pairs.pairs.clone();
        let g = self.geometry()?;
        Ok(covariance(g, &pairs, kind, &params, jitter))
    }

    /// Replaces every embedding and refactors.
    pub fn set_embeddings(&mut self, embeddings: Vec<Vec<f64>>) -> Result<()> {
        if embeddings.len() != self.embeddings.len() {
            return Err(Error::Structural("author count changed".into()));
        }
        self.geometry = Some(AuthorGeometry::new(&embeddings)?);
        self.embeddings = embeddings;
        self.version += 1;
        self.refresh()
    }

    /// Refactors the covariance from scratch at the current embeddings.
    pub fn refresh(&mut self) -> Result<()> {
        let (kind, params) = (self.kind, self.params);
        let pairs = self.pairs.pairs.clone();
        let g = self.geometry()?;
        let fac = factor(g, &pairs, kind, &params)?;
        let n = fac.n;
        self.precision = linalg::chol_inverse(&fac.lower, n);
        self.logdet = linalg::logdet(&fac.lower, n);
        self.lower = fac.lower;
        self.jitter = fac.jitter;
        self.factor_version = self.version;
        self.stamp += 1;
        self.conditioning = None;
        self.pending = None;
        Ok(())
    }

    pub fn network_loglik(&self) -> f64 {
        network_loglik(&self.f, &self.pairs.x)
    }

    /// `ln N(f; 0, C)` at the current precision.
    pub fn prior_log_density(&mut self) -> f64 {
        self.flush_precision();
        let n = self.f.len();
        let qf = linalg::mat_vec(&self.precision, n, &self.f);
        let quad: f64 = qf.iter().zip(&self.f).map(|(a, b)| a * b).sum();
        -0.5 * quad - 0.5 * self.logdet - 0.5 * n as f64 * math::LN_2PI
    }

    /// pCN Metropolis-Hastings on `f` against the logistic link likelihood.
    pub fn mh_sweep_f<R: Rng + ?Sized>(&mut self, eps: f64, steps: u32, rng: &mut R) -> Result<MhStats> {
        let x = self.pairs.x.clone();
        self.mh_sweep_f_with(eps, steps, &|f: &[f64]| network_loglik(f, &x), rng)
    }

    /// pCN Metropolis-Hastings on `f` against an arbitrary log likelihood:
    /// `f' = √(1-ε²)·f + ε·L·z`, accepted with `min(1, exp(ℓ(f') - ℓ(f)))`.
    pub fn mh_sweep_f_with<R: Rng + ?Sized>(
        &mut self,
        eps: f64,
        steps: u32,
        loglik: &dyn Fn(&[f64]) -> f64,
        rng: &mut R,
    ) -> Result<MhStats> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidHyper(format!("pCN step {eps} outside (0, 1)")));
        }
        if !self.is_fresh() {
            return Err(Error::StaleGram);
        }
        let n = self.f.len();
        let keep = math::sqrt(1.0 - eps * eps);
        let mut current = loglik(&self.f);
        let mut stats = MhStats::default();
        let mut z = vec![0.0; n];
        for _ in 0..steps {
            for v in z.iter_mut() {
                *v = math::sample_std_normal(rng);
            }
            let g = linalg::lower_mul(&self.lower, n, &z);
            let proposal: Vec<f64> = self.f.iter().zip(&g).map(|(f, g)| keep * f + eps * g).collect();
            let ll = loglik(&proposal);
            stats.proposed += 1;
            let log_u = math::ln(rng.random::<f64>());
            if ll - current >= 0.0 || log_u < ll - current {
                self.f = proposal;
                self.stamp += 1;
                current = ll;
                stats.accepted += 1;
            }
        }
        Ok(stats)
    }

    /// Adds the current `f` to the running posterior mean.
    pub fn record_sample(&mut self) {
        for (s, f) in self.f_sum.iter_mut().zip(&self.f) {
            *s += f;
        }
        self.samples += 1;
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Running mean of recorded samples, or the current `f` when none were recorded.
    pub fn posterior_mean(&self) -> Vec<f64> {
        if self.samples == 0 {
            return self.f.clone();
        }
        self.f_sum.iter().map(|s| s / self.samples as f64).collect()
    }

    fn sim_with(&self, author: usize, emb: &[f64], x: usize, y: usize) -> (f64, f64) {
        let g = self.geometry.as_ref().expect("geometry built");
        match (x == author, y == author) {
            (true, true) => (1.0, 0.0),
            (true, false) => (
                cosine(emb, &self.embeddings[y]).unwrap_or(0.0),
                squared_distance(emb, &self.embeddings[y]),
            ),
            (false, true) => (
                cosine(emb, &self.embeddings[x]).unwrap_or(0.0),
                squared_distance(emb, &self.embeddings[x]),
            ),
            (false, false) => g.similarity(x, y),
        }
    }

    fn kernel_with(&self, author: usize, emb: &[f64], p: (u32, u32), q: (u32, u32)) -> f64 {
        let (a, b, c, d) = (p.0 as usize, p.1 as usize, q.0 as usize, q.1 as usize);
        let s2 = self.params.signal * self.params.signal;
        let ac = self.sim_with(author, emb, a, c);
        let bd = self.sim_with(author, emb, b, d);
        let ad = self.sim_with(author, emb, a, d);
        let bc = self.sim_with(author, emb, b, c);
        match self.kind {
            KernelKind::Cosine => s2 * (ac.0 * bd.0 + ad.0 * bc.0) / 2.0,
            KernelKind::Original => {
                let l2 = 2.0 * self.params.lengthscale * self.params.lengthscale;
                s2 * (math::exp(-(ac.1 + bd.1) / l2) + math::exp(-(ad.1 + bc.1) / l2)) / 2.0
            }
        }
    }

    fn unit(v: &[f64]) -> Vec<f64> {
        let norm = math::sqrt(v.iter().map(|x| x * x).sum());
        v.iter().map(|x| x / norm).collect()
    }

    fn conditioning(&mut self, author: usize) -> Result<()> {
        if let Some(c) = &self.conditioning {
            if c.author == author && c.stamp == self.stamp {
                return Ok(());
            }
        }
        self.flush_precision();
        self.geometry()?;
        let n = self.f.len();
        let s = self.by_author[author].clone();
        let in_s: BTreeSet<usize> = s.iter().copied().collect();
        let r: Vec<usize> = (0..n).filter(|i| !in_s.contains(i)).collect();
        let (m, rn) = (s.len(), r.len());
        let q = &self.precision;
        let mut q_ss = vec![0.0; m * m];
        for (i, &si) in s.iter().enumerate() {
            for (j, &sj) in s.iter().enumerate() {
                q_ss[i * m + j] = q[si * n + sj];
            }
        }
        let l_ss = linalg::cholesky(&q_ss, m)
            .ok_or_else(|| Error::Numerical("precision block not positive definite".into()))?;
        // X = Q_SS⁻¹ Q_SR, m × r, stored by columns of R.
        let mut x = vec![0.0; rn * m];
        let mut col = vec![0.0; m];
        for (j, &rj) in r.iter().enumerate() {
            for (i, &si) in s.iter().enumerate() {
                col[i] = q[si * n + rj];
            }
            linalg::chol_solve(&l_ss, m, &mut col);
            x[j * m..(j + 1) * m].copy_from_slice(&col);
        }
        let mut w = vec![0.0; rn * rn];
        for (i, &ri) in r.iter().enumerate() {
            for (j, &rj) in r.iter().enumerate().skip(i) {
                let mut v = q[ri * n + rj];
                for (k, &sk) in s.iter().enumerate() {
                    v -= q[ri * n + sk] * x[j * m + k];
                }
                w[i * rn + j] = v;
                w[j * rn + i] = v;
            }
        }
        let f_r: Vec<f64> = r.iter().map(|&i| self.f[i]).collect();
        let a = linalg::mat_vec(&w, rn, &f_r);
        let linear = match self.kind {
            KernelKind::Cosine => Some(self.linear_blocks(author, &s, &r, &w, &a)),
            KernelKind::Original => None,
        };
        self.conditioning = Some(Conditioning {
            author,
            stamp: self.stamp,
            s,
            r,
            w,
            a,
            linear,
            current: None,
            dirty: false,
        });
        Ok(())
    }

    /// For `p = (i, o)` and `q = (c, d)`:
    /// `k(p, q) = s²/2·[cos(i,c)·cos(o,d) + cos(i,d)·cos(o,c)] = ûᵢᵀ G_p[:, q]`.
    fn linear_blocks(&self, author: usize, s: &[usize], r: &[usize], w: &[f64], a: &[f64]) -> LinearBlocks {
        let geometry = self.geometry.as_ref().expect("geometry built");
        let units: Vec<Vec<f64>> = self.embeddings.iter().map(|e| Self::unit(e)).collect();
        let dim = units[author].len();
        let (m, rn) = (s.len(), r.len());
        let half = self.params.signal * self.params.signal / 2.0;
        let mut g = vec![0.0; m * dim * rn];
        let mut wg = vec![0.0; m * rn * dim];
        let mut ga = vec![0.0; m * dim];
        for (pi, &p) in s.iter().enumerate() {
            let (x, y) = self.pairs.pairs[p];
            let other = if x as usize == author { y } else { x } as usize;
            let gp = &mut g[pi * dim * rn..(pi + 1) * dim * rn];
            for (qi, &q) in r.iter().enumerate() {
                let (c, d) = (self.pairs.pairs[q].0 as usize, self.pairs.pairs[q].1 as usize);
                let od = half * geometry.similarity(other, d).0;
                let oc = half * geometry.similarity(other, c).0;
                for k in 0..dim {
                    gp[k * rn + qi] = units[c][k] * od + units[d][k] * oc;
                }
            }
            for k in 0..dim {
                ga[pi * dim + k] = (0..rn).map(|q| gp[k * rn + q] * a[q]).sum();
            }
            let wgp = &mut wg[pi * rn * dim..(pi + 1) * rn * dim];
            for i in 0..rn {
                let wi = &w[i * rn..(i + 1) * rn];
                for k in 0..dim {
                    wgp[i * dim + k] = wi.iter().zip(&gp[k * rn..(k + 1) * rn]).map(|(x, y)| x * y).sum();
                }
            }
        }
        LinearBlocks { dim, g, wg, ga }
    }

    fn conditional(&self, emb: &[f64]) -> Result<Conditional> {
        let c = self.conditioning.as_ref().expect("conditioning computed");
        let pairs = &self.pairs.pairs;
        let (m, rn) = (c.s.len(), c.r.len());
        let diag = self.params.noise * self.params.noise + self.jitter;
        let mut c_sr = vec![0.0; m * rn];
        // B = W C_RS, r × m.
        let mut b = vec![0.0; rn * m];
        let mut mean = vec![0.0; m];
        match &c.linear {
            Some(lin) => {
                let u = Self::unit(emb);
                let dim = lin.dim;
                for p in 0..m {
                    let gp = &lin.g[p * dim * rn..(p + 1) * dim * rn];
                    let row = &mut c_sr[p * rn..(p + 1) * rn];
                    for (k, &uk) in u.iter().enumerate() {
                        for (x, g) in row.iter_mut().zip(&gp[k * rn..(k + 1) * rn]) {
                            *x += uk * g;
                        }
                    }
                    let wgp = &lin.wg[p * rn * dim..(p + 1) * rn * dim];
                    for i in 0..rn {
                        b[i * m + p] = (0..dim).map(|k| wgp[i * dim + k] * u[k]).sum();
                    }
                    mean[p] = (0..dim).map(|k| lin.ga[p * dim + k] * u[k]).sum();
                }
            }
            None => {
                for (i, &si) in c.s.iter().enumerate() {
                    for (j, &rj) in c.r.iter().enumerate() {
                        c_sr[i * rn + j] = self.kernel_with(c.author, emb, pairs[si], pairs[rj]);
                    }
                }
                for i in 0..rn {
                    let wi = &c.w[i * rn..(i + 1) * rn];
                    for p in 0..m {
                        b[i * m + p] = wi.iter().zip(&c_sr[p * rn..(p + 1) * rn]).map(|(x, y)| x * y).sum();
                    }
                }
                for p in 0..m {
                    mean[p] = (0..rn).map(|k| c_sr[p * rn + k] * c.a[k]).sum();
                }
            }
        }
        let mut v = vec![0.0; m * m];
        for p in 0..m {
            for q in 0..=p {
                let mut x = self.kernel_with(c.author, emb, pairs[c.s[p]], pairs[c.s[q]]);
                if p == q {
                    x += diag;
                }
                for k in 0..rn {
                    x -= c_sr[p * rn + k] * b[k * m + q];
                }
                v[p * m + q] = x;
                v[q * m + p] = x;
            }
        }
        let v_lower = linalg::cholesky(&v, m)
            .ok_or_else(|| Error::Numerical("conditional covariance not positive definite".into()))?;
        let f_s: Vec<f64> = c.s.iter().map(|&i| self.f[i]).collect();
        let log_density = linalg::gaussian_logpdf(&f_s, &mean, &v_lower, m);
        Ok(Conditional {
            b,
            v_lower,
            log_density,
        })
    }

    /// `ln N(f; 0, C_new) - ln N(f; 0, C_old)` where the two covariances differ in
    /// author `author`'s embedding only (`old` → `new`), holding `f` fixed. Only
    /// the pairs containing the author enter, through their conditional given
    /// the other pairs. A failed factorization yields `-∞`.
    pub fn nu_move_log_ratio_between(&mut self, author: usize, old: &[f64], new: &[f64]) -> f64 {
        self.pending = None;
        if author >= self.embeddings.len() || self.by_author[author].is_empty() || old == new {
            return 0.0;
        }
        let run = |gp: &mut GpState| -> Result<(Conditional, Conditional)> {
            gp.conditioning(author)?;
            let is_current = gp.embeddings[author] == old;
            let cached = gp.conditioning.as_ref().and_then(|c| c.current.clone());
            let o = match (is_current, cached) {
                (true, Some(o)) => o,
                _ => gp.conditional(old)?,
            };
            if is_current {
                gp.conditioning.as_mut().expect("conditioning computed").current = Some(o.clone());
            }
            Ok((o, gp.conditional(new)?))
        };
        match run(self) {
            Ok((o, n)) => {
                let ratio = n.log_density - o.log_density;
                let m = self.by_author[author].len();
                self.pending = Some(Pending {
                    author,
                    embedding: new.to_vec(),
                    old_logdet_v: linalg::logdet(&o.v_lower, m),
                    new: n,
                });
                ratio
            }
            Err(e) => {
                log::warn!("coupling ratio for author {author} rejected: {e}");
                f64::NEG_INFINITY
            }
        }
    }

    /// Coupling ratio for moving `author` from its current embedding to `new`.
    pub fn nu_move_log_ratio(&mut self, author: usize, new: &[f64]) -> f64 {
        let old = match self.embeddings.get(author) {
            Some(e) => e.clone(),
            None => return 0.0,
        };
        self.nu_move_log_ratio_between(author, &old, new)
    }

    /// Makes the embedding from the last ratio current. The log-determinant is
    /// updated at once; the precision is updated by block inversion when a
    /// different author is conditioned on or the precision is read. The
    /// Cholesky factor goes stale.
    pub fn commit_nu_move(&mut self) -> Result<()> {
        let Some(p) = self.pending.take() else {
            return Ok(());
        };
        let m = self.by_author[p.author].len();
        self.logdet += linalg::logdet(&p.new.v_lower, m) - p.old_logdet_v;
        self.embeddings[p.author] = p.embedding;
        let emb = core::mem::take(&mut self.embeddings);
        let updated = match self.geometry.as_mut() {
            Some(g) => g.update(&emb, p.author),
            None => Ok(()),
        };
        self.embeddings = emb;
        updated?;
        self.version += 1;
        self.stamp += 1;
        // C_RR and f_R do not involve this author, so its blocks stay valid.
        let c = self.conditioning.as_mut().expect("conditioning of the pending move");
        c.stamp = self.stamp;
        c.current = Some(p.new);
        c.dirty = true;
        Ok(())
    }

    /// Writes committed moves into the precision:
    /// `Q_SS = V⁻¹`, `Q_SR = -V⁻¹ Bᵀ`, `Q_RR = W + B V⁻¹ Bᵀ`.
    fn flush_precision(&mut self) {
        let Some(c) = self.conditioning.as_mut() else {
            return;
        };
        if !c.dirty {
            return;
        }
        c.dirty = false;
        let cur = c.current.as_ref().expect("committed conditional");
        let n = self.f.len();
        let (m, rn) = (c.s.len(), c.r.len());
        let vinv = linalg::chol_inverse(&cur.v_lower, m);
        let b = &cur.b;
        // B V⁻¹, r × m.
        let mut bv = vec![0.0; rn * m];
        for i in 0..rn {
            for q in 0..m {
                bv[i * m + q] = (0..m).map(|k| b[i * m + k] * vinv[k * m + q]).sum();
            }
        }
        let q = &mut self.precision;
        for (i, &si) in c.s.iter().enumerate() {
            for (j, &sj) in c.s.iter().enumerate() {
                q[si * n + sj] = vinv[i * m + j];
            }
            for (j, &rj) in c.r.iter().enumerate() {
                let v = -bv[j * m + i];
                q[si * n + rj] = v;
                q[rj * n + si] = v;
            }
        }
        for (i, &ri) in c.r.iter().enumerate() {
            for (j, &rj) in c.r.iter().enumerate().skip(i) {
                let mut v = c.w[i * rn + j];
                for k in 0..m {
                    v += bv[i * m + k] * b[j * m + k];
                }
                q[ri * n + rj] = v;
                q[rj * n + ri] = v;
            }
        }
    }

    /// Drops the move computed by the last ratio.
    pub fn discard_nu_move(&mut self) {
        self.pending = None;
    }

    /// GP conditional mean `k_*ᵀ C⁻¹ f̄` of the latent function at `targets`,
    /// using the given embeddings (which may include authors beyond the training
    /// ones) and kernel.
    pub fn conditional_mean(
        &self,
        embeddings: &[Vec<f64>],
        kind: KernelKind,
        f_bar: &[f64],
        targets: &[(u32, u32)],
    ) -> Result<Vec<f64>> {
        let geometry = AuthorGeometry::new(embeddings)?;
        let pairs = &self.pairs.pairs;
        let fac = factor(&geometry, pairs, kind, &self.params)?;
        let mut alpha = f_bar.to_vec();
        linalg::chol_solve(&fac.lower, fac.n, &mut alpha);
        Ok(targets
            .iter()
            .map(|&t| {
                pairs
                    .iter()
                    .zip(&alpha)
                    .map(|(&p, a)| geometry.pair_kernel(kind, &self.params, t, p) * a)
                    .sum()
            })
            .collect())
    }
}
