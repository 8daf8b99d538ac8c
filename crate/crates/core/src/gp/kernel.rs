use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct KernelParams {
    pub signal: f64,
    /// Used by the squared-exponential kernel only.
    pub lengthscale: f64,
    pub noise: f64,
    pub jitter: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            signal: 1.0,
            lengthscale: 1.0,
            noise: 1.0,
            jitter: 1e-6,
        }
    }
}

impl KernelParams {
    pub fn check(&self) -> Result<()> {
        if !(self.signal > 0.0 && self.lengthscale > 0.0 && self.noise >= 0.0 && self.jitter > 0.0) {
            return Err(Error::InvalidHyper(format!("invalid kernel parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum KernelKind {
    /// Symmetrized product of cosine similarities.
    #[default]
    Cosine,
    /// Symmetrized squared exponential over concatenated pairs.
    Original,
}

impl core::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" | "tn" => Ok(KernelKind::Cosine),
            "original" | "se" => Ok(KernelKind::Original),
            other => Err(Error::Input(format!("unknown kernel `{other}`"))),
        }
    }
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Cosine => "cosine",
            KernelKind::Original => "original",
        }
    }
}

fn check_dims(vs: [&[f64]; 4]) -> Result<()> {
    if vs.iter().any(|v| v.len() != vs[0].len()) {
        return Err(Error::Structural("embedding dimensions differ".into()));
    }
    Ok(())
}

/// Cosine similarity; errors on a zero vector.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::Numerical("cosine of a zero-norm vector".into()));
    }
    Ok(uv / math::sqrt(uu * vv))
}

pub fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `s²·[cos(u,u')·cos(v,v') + cos(u,v')·cos(v,u')]/2`.
pub fn cosine_kernel(u: &[f64], v: &[f64], u2: &[f64], v2: &[f64], p: &KernelParams) -> Result<f64> {
    check_dims([u, v, u2, v2])?;
    let s2 = p.signal * p.signal;
    Ok(s2 * (cosine(u, u2)? * cosine(v, v2)? + cosine(u, v2)? * cosine(v, u2)?) / 2.0)
}

/// `s²·[exp(-(|u-u'|²+|v-v'|²)/2l²) + exp(-(|u-v'|²+|v-u'|²)/2l²)]/2`.
pub fn original_kernel(u: &[f64], v: &[f64], u2: &[f64], v2: &[f64], p: &KernelParams) -> Result<f64> {
    check_dims([u, v, u2, v2])?;
    let s2 = p.signal * p.signal;
    let c = 2.0 * p.lengthscale * p.lengthscale;
    let direct = squared_distance(u, u2) + squared_distance(v, v2);
    let crossed = squared_distance(u, v2) + squared_distance(v, u2);
    Ok(s2 * (math::exp(-direct / c) + math::exp(-crossed / c)) / 2.0)
}

/// Pairwise author similarities from which every pair kernel value follows.
#[derive(Clone, Debug, PartialEq)]
pub struct AuthorGeometry {
    n: usize,
    cos: Vec<f64>,
    sqdist: Vec<f64>,
}

impl AuthorGeometry {
    pub fn new(embeddings: &[Vec<f64>]) -> Result<Self> {
        let n = embeddings.len();
        let mut cos = vec![0.0; n * n];
        let mut sqdist = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                if embeddings[i].len() != embeddings[j].len() {
                    return Err(Error::Structural("embedding dimensions differ".into()));
                }
                let c = cosine(&embeddings[i], &embeddings[j])?;
                let d = squared_distance(&embeddings[i], &embeddings[j]);
                cos[i * n + j] = c;
                cos[j * n + i] = c;
                sqdist[i * n + j] = d;
                sqdist[j * n + i] = d;
            }
        }
        Ok(AuthorGeometry { n, cos, sqdist })
    }

    pub fn authors(&self) -> usize {
        self.n
    }

    /// Replaces author `i`'s embedding.
    pub fn update(&mut self, embeddings: &[Vec<f64>], i: usize) -> Result<()> {
        let n = self.n;
        for j in 0..n {
            let c = cosine(&embeddings[i], &embeddings[j])?;
            let d = squared_distance(&embeddings[i], &embeddings[j]);
            self.cos[i * n + j] = c;
            self.cos[j * n + i] = c;
            self.sqdist[i * n + j] = d;
            self.sqdist[j * n + i] = d;
        }
        Ok(())
    }

    /// `(cosine, squared distance)` between authors `i` and `j`.
    pub fn similarity(&self, i: usize, j: usize) -> (f64, f64) {
        (self.cos[i * self.n + j], self.sqdist[i * self.n + j])
    }

    /// Kernel between pairs `(a, b)` and `(c, d)`.
    pub fn pair_kernel(&self, kind: KernelKind, p: &KernelParams, (a, b): (u32, u32), (c, d): (u32, u32)) -> f64 {
        let n = self.n;
        let (a, b, c, d) = (a as usize, b as usize, c as usize, d as usize);
        let s2 = p.signal * p.signal;
        match kind {
            KernelKind::Cosine => {
                s2 * (self.cos[a * n + c] * self.cos[b * n + d] + self.cos[a * n + d] * self.cos[b * n + c]) / 2.0
            }
            KernelKind::Original => {
                let l2 = 2.0 * p.lengthscale * p.lengthscale;
                let direct = self.sqdist[a * n + c] + self.sqdist[b * n + d];
                let crossed = self.sqdist[a * n + d] + self.sqdist[b * n + c];
                s2 * (math::exp(-direct / l2) + math::exp(-crossed / l2)) / 2.0
            }
        }
    }
}
