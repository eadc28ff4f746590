use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{flat_ancestor_level, overlap, ModelParams, SpinConfig};
use crate::rng::{tag, StreamKey};
use crate::rpc::CascadeConfig;
use crate::stats::{log_sum_exp, Moments};

use super::hamiltonian::{check_n, gray_config, DisorderRealization};
use super::pressure::{check_replicas, leaf_log_masses};

pub const MAX_GIBBS_SPINS: usize = 20;
pub const MAX_GG_SPINS: usize = 16;
pub const MAX_GG_REPLICAS: usize = 5;

fn cumulative(logs: &[f64]) -> Vec<f64> {
    let total = log_sum_exp(logs);
    let mut acc = 0.0;
    logs.iter()
        .map(|l| {
            acc += (l - total).exp();
            acc
        })
        .collect()
}

fn pick<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Exact sampler for `mu(sigma, alpha) ~ nu_alpha exp H_N(sigma, alpha)`.
pub struct GibbsSampler<'a> {
    disorder: &'a DisorderRealization,
    leaf_cdf: Vec<f64>,
    state_cdf: HashMap<usize, Vec<f64>>,
    g: Vec<f64>,
    energies: Vec<f64>,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(disorder: &'a DisorderRealization) -> Self {
        let n = disorder.n();
        GibbsSampler {
            disorder,
            leaf_cdf: cumulative(&leaf_log_masses(disorder)),
            state_cdf: HashMap::new(),
            g: vec![0.0; n * n],
            energies: Vec::new(),
        }
    }

    /// One draw `(leaf, sigma)`.
    pub fn sample<R: Rng>(&mut self, rng: &mut R) -> (usize, SpinConfig) {
        let leaf = pick(&self.leaf_cdf, rng);
        if !self.state_cdf.contains_key(&leaf) {
            self.disorder.leaf_energies(leaf, &mut self.g, &mut self.energies);
            self.state_cdf.insert(leaf, cumulative(&self.energies));
        }
        let t = pick(&self.state_cdf[&leaf], rng);
        let sigma = gray_config(t, self.disorder.n());
        // H is even, so both global signs carry the same weight
        let sigma = if rng.random::<bool>() { sigma.flipped() } else { sigma };
        (leaf, sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapPair {
    pub level: usize,
    pub overlap: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapDistribution {
    pub n: usize,
    pub replicas: usize,
    pub pairs_per_replica: usize,
    pub pairs: Vec<OverlapPair>,
    /// Quenched frequency of each ancestor level `0..=r`.
    pub level_frequency: Vec<f64>,
    /// Standard error across disorder replicas.
    pub level_stderr: Vec<f64>,
    /// `(q, mass)` over the `N + 1` attainable overlaps `1 - 2k/N`.
    pub overlap_histogram: Vec<(f64, f64)>,
}

fn overlap_bin(q: f64, n: usize) -> usize {
    // q = 1 - 2k/N
    ((1.0 - q) * n as f64 / 2.0).round() as usize
}

/// Draws independent pairs from the Gibbs measure of each disorder replica
/// and aggregates the ancestor level and spin overlap.
pub fn gibbs_overlap_distribution(
    params: &ModelParams,
    n: usize,
    config: &CascadeConfig,
    replicas: usize,
    pairs_per_replica: usize,
    seed: u64,
) -> Result<OverlapDistribution> {
    check_n(n, MAX_GIBBS_SPINS)?;
    check_replicas(replicas)?;
    if pairs_per_replica == 0 {
        return Err(Error::InsufficientSamples("need at least one pair per replica".into()));
    }
    let depth = params.depth();
    let key = StreamKey::new(seed);
    let per_replica = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let k = key.child(rep as u64);
            let d = DisorderRealization::from_key(params, n, config, k, seed)?;
            let children = d.cascade().shape().children;
            let mut sampler = GibbsSampler::new(&d);
            let mut rng = k.child(tag::GIBBS).rng();
            let mut pairs = Vec::with_capacity(pairs_per_replica);
            for _ in 0..pairs_per_replica {
                let (a1, s1) = sampler.sample(&mut rng);
                let (a2, s2) = sampler.sample(&mut rng);
                pairs.push((flat_ancestor_level(a1, a2, depth, children), overlap(&s1, &s2)?));
            }
            Ok(pairs)
        })
        .collect::<Result<Vec<Vec<(usize, f64)>>>>()?;

    let total = (replicas * pairs_per_replica) as f64;
    let mut level_moments = vec![Moments::new(); depth + 1];
    let mut hist = vec![0.0; n + 1];
    let mut pairs = Vec::with_capacity(replicas * pairs_per_replica);
    for rows in &per_replica {
        let mut counts = vec![0usize; depth + 1];
        for &(level, q) in rows {
            counts[level] += 1;
            hist[overlap_bin(q, n)] += 1.0 / total;
            pairs.push(OverlapPair {
                level,
                overlap: q,
                weight: 1.0 / total,
            });
        }
        for (m, c) in level_moments.iter_mut().zip(&counts) {
            m.push(*c as f64 / pairs_per_replica as f64);
        }
    }
    Ok(OverlapDistribution {
        n,
        replicas,
        pairs_per_replica,
        pairs,
        level_frequency: level_moments.iter().map(|m| m.mean()).collect(),
        level_stderr: level_moments.iter().map(|m| m.stderr()).collect(),
        overlap_histogram: (0..=n)
            .map(|k| (1.0 - 2.0 * k as f64 / n as f64, hist[k]))
            .collect(),
    })
}

/// Versioned library of bounded functions of the `n x n` overlap array.
pub const TEST_FUNCTION_LIBRARY_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    /// `1`
    One,
    /// `R_12`
    R12,
    /// `R_12^2`
    R12Sq,
    /// `R_12 R_13` (needs `n >= 3`)
    R12R13,
    /// `|R_12|`
    AbsR12,
    /// `1 / (1 + exp(-(R_12 - 1/2) / 0.05))`
    StepR12,
}

impl TestFunction {
    pub const ALL: [TestFunction; 6] = [
        TestFunction::One,
        TestFunction::R12,
        TestFunction::R12Sq,
        TestFunction::R12R13,
        TestFunction::AbsR12,
        TestFunction::StepR12,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::One => "one",
            TestFunction::R12 => "r12",
            TestFunction::R12Sq => "r12_sq",
            TestFunction::R12R13 => "r12_r13",
            TestFunction::AbsR12 => "abs_r12",
            TestFunction::StepR12 => "step_r12",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownTestFunction(s.to_string()))
    }

    fn min_replicas(&self) -> usize {
        match self {
            TestFunction::One => 1,
            TestFunction::R12R13 => 3,
            _ => 2,
        }
    }

    /// `r(a, b)` gives the overlap of replicas `a` and `b` (0-based).
    fn eval(&self, r: impl Fn(usize, usize) -> f64) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::R12 => r(0, 1),
            TestFunction::R12Sq => r(0, 1).powi(2),
            TestFunction::R12R13 => r(0, 1) * r(0, 2),
            TestFunction::AbsR12 => r(0, 1).abs(),
            TestFunction::StepR12 => 1.0 / (1.0 + (-(r(0, 1) - 0.5) / 0.05).exp()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgSettings {
    /// Weights `(w_0, w_1)` of `R = w_0 gamma_{a ^ b} + w_1 q_N`.
    pub w: (f64, f64),
    /// Number of replicas `n` in the test function.
    pub n: usize,
    pub p: u32,
    pub f: TestFunction,
    pub tuples_per_replica: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GgDelta {
    pub delta: f64,
    /// Jackknife standard error over disorder replicas.
    pub stderr: f64,
    /// `<f R_{1,n+1}^p>`
    pub joint: f64,
    /// `<f>`
    pub f_mean: f64,
    /// `<R_{1,2}^p>`
    pub pair_moment: f64,
    /// `sum_{l=2}^n <f R_{1,l}^p>`
    pub within: f64,
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (0..k.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            return out;
        };
        let j = (i + 1..k).rev().find(|&j| cur[j] > cur[i]).expect("successor exists");
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
}

fn gg_combine(t: [f64; 4], n: usize) -> f64 {
    let nf = n as f64;
    (t[0] - t[1] * t[2] / nf - t[3] / nf).abs()
}

/// The Ghirlanda-Guerra discrepancy
/// `|<f R_{1,n+1}^p> - (1/n)<f><R_{12}^p> - (1/n) sum_{l=2}^n <f R_{1l}^p>|`
/// under the quenched Gibbs measure. Every sampled tuple of `n + 1`
/// replicas is averaged over all relabelings, so for `f = 1` the three
/// terms cancel identically.
pub fn gg_delta(
    params: &ModelParams,
    n_spins: usize,
    config: &CascadeConfig,
    settings: &GgSettings,
    replicas: usize,
    seed: u64,
) -> Result<GgDelta> {
    check_n(n_spins, MAX_GG_SPINS)?;
    check_replicas(replicas)?;
    let n = settings.n;
    if n < settings.f.min_replicas().max(2) || n > MAX_GG_REPLICAS {
        return Err(Error::Config(format!(
            "test function {} needs 2 <= n <= {MAX_GG_REPLICAS} with n >= {}, got n = {n}",
            settings.f.name(),
            settings.f.min_replicas()
        )));
    }
    if settings.tuples_per_replica == 0 {
        return Err(Error::InsufficientSamples("need at least one tuple per replica".into()));
    }
    let depth = params.depth();
    let perms = permutations(n + 1);
    let key = StreamKey::new(seed);
    let (w0, w1) = settings.w;
    let p = settings.p as i32;
    let f = settings.f;

    let per_replica = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let k = key.child(rep as u64);
            let d = DisorderRealization::from_key(params, n_spins, config, k, seed)?;
            let children = d.cascade().shape().children;
            let mut sampler = GibbsSampler::new(&d);
            let mut rng = k.child(tag::GIBBS).rng();
            let mut sums = [0.0; 4];
            let m = n + 1;
            let mut r = vec![0.0; m * m];
            for _ in 0..settings.tuples_per_replica {
                let draws: Vec<(usize, SpinConfig)> = (0..m).map(|_| sampler.sample(&mut rng)).collect();
                for a in 0..m {
                    for b in 0..m {
                        let level = flat_ancestor_level(draws[a].0, draws[b].0, depth, children);
                        r[a * m + b] =
                            w0 * params.gamma_at(level) + w1 * overlap(&draws[a].1, &draws[b].1)?;
                    }
                }
                let mut t = [0.0; 4];
                for perm in &perms {
                    let rr = |a: usize, b: usize| r[perm[a] * m + perm[b]];
                    let fv = f.eval(rr);
                    t[0] += fv * rr(0, n).powi(p);
                    t[1] += fv;
                    t[2] += rr(0, 1).powi(p);
                    t[3] += (1..n).map(|l| fv * rr(0, l).powi(p)).sum::<f64>();
                }
                for (s, v) in sums.iter_mut().zip(t) {
                    *s += v / perms.len() as f64;
                }
            }
            let tuples = settings.tuples_per_replica as f64;
            Ok(sums.map(|s| s / tuples))
        })
        .collect::<Result<Vec<[f64; 4]>>>()?;

    let mean_of = |rows: &[&[f64; 4]]| -> [f64; 4] {
        let mut acc = [0.0; 4];
        for row in rows {
            for (a, v) in acc.iter_mut().zip(row.iter()) {
                *a += v;
            }
        }
        acc.map(|a| a / rows.len() as f64)
    };
    let all: Vec<&[f64; 4]> = per_replica.iter().collect();
    let t = mean_of(&all);
    let delta = gg_combine(t, n);
    let loo: Vec<f64> = (0..replicas)
        .map(|i| {
            let rest: Vec<&[f64; 4]> = per_replica
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, row)| row)
                .collect();
            gg_combine(mean_of(&rest), n)
        })
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / replicas as f64;
    let rf = replicas as f64;
    let jack_var = (rf - 1.0) / rf * loo.iter().map(|x| (x - loo_mean).powi(2)).sum::<f64>();
    Ok(GgDelta {
        delta,
        stderr: jack_var.sqrt(),
        joint: t[0],
        f_mean: t[1],
        pair_moment: t[2],
        within: t[3],
    })
}
