//! Model parameters, configurations and the covariance kernel of the
//! multi-scale Hamiltonian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest spin count accepted by operations that enumerate all `2^N` states.
pub const MAX_ENUM_SPINS: usize = 24;

/// The pair `(zeta, gamma)` of a depth-`r` model.
///
/// Only the free entries are stored: `zeta_0..zeta_{r-1}` and
/// `gamma_1..gamma_r`. The fixed endpoints `zeta_{-1} = 0`, `zeta_r = 1`
/// and `gamma_0 = 0` are materialized by the accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    zeta: Vec<f64>,
    gamma: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    r: usize,
    zeta: Vec<f64>,
    gamma: Vec<f64>,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        if raw.zeta.len() != raw.r || raw.gamma.len() != raw.r {
            return Err(Error::DepthMismatch(format!(
                "r = {} but zeta has {} and gamma has {} entries",
                raw.r,
                raw.zeta.len(),
                raw.gamma.len()
            )));
        }
        ModelParams::new(raw.zeta, raw.gamma)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            r: p.depth(),
            zeta: p.zeta,
            gamma: p.gamma,
        }
    }
}

impl ModelParams {
    pub fn new(zeta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let params = ModelParams { zeta, gamma };
        validate_params(&params)?;
        Ok(params)
    }

    /// Tree depth `r`.
    pub fn depth(&self) -> usize {
        self.zeta.len()
    }

    /// `zeta_0..zeta_{r-1}`.
    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    /// `gamma_1..gamma_r`.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// `zeta_l` for `l` in `-1..=r`.
    pub fn zeta_at(&self, l: isize) -> f64 {
        let r = self.depth() as isize;
        match l {
            -1 => 0.0,
            l if l == r => 1.0,
            l => self.zeta[l as usize],
        }
    }

    /// `gamma_l` for `l` in `0..=r`.
    pub fn gamma_at(&self, l: usize) -> f64 {
        if l == 0 {
            0.0
        } else {
            self.gamma[l - 1]
        }
    }

    /// `(gamma_0, ..., gamma_r)` with the leading zero.
    pub fn gamma_full(&self) -> Vec<f64> {
        (0..=self.depth()).map(|l| self.gamma_at(l)).collect()
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma_at(self.depth())
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("model parameters always serialize")
    }

    pub fn from_config_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }
}

/// Checks the strict chains `0 < zeta_0 < ... < zeta_{r-1} < 1` and
/// `0 < gamma_1 < ... < gamma_r < inf`.
pub fn validate_params(params: &ModelParams) -> Result<()> {
    let (zeta, gamma) = (&params.zeta, &params.gamma);
    if zeta.is_empty() {
        return Err(Error::DepthMismatch("depth r must be at least 1".into()));
    }
    if gamma.len() != zeta.len() {
        return Err(Error::DepthMismatch(format!(
            "zeta has {} entries but gamma has {}",
            zeta.len(),
            gamma.len()
        )));
    }
    let mut prev = 0.0;
    for (l, &z) in zeta.iter().enumerate() {
        if !(z > prev && z < 1.0) {
            return Err(Error::NonMonotoneZeta(format!("zeta_{l} = {z}")));
        }
        prev = z;
    }
    let mut prev = 0.0;
    for (l, &g) in gamma.iter().enumerate() {
        if !(g > prev && g.is_finite()) {
            return Err(Error::NonMonotoneGamma(format!("gamma_{} = {g}", l + 1)));
        }
        prev = g;
    }
    Ok(())
}

/// A leaf `alpha` of the depth-`r` index tree, as its path of child indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeafIndex(pub Vec<usize>);

impl LeafIndex {
    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// Path of the leaf with flat index `flat` in a tree where every node has
    /// `children` children.
    pub fn from_flat(flat: usize, depth: usize, children: usize) -> Self {
        let mut path = vec![0; depth];
        let mut rest = flat;
        for slot in path.iter_mut().rev() {
            *slot = rest % children;
            rest /= children;
        }
        LeafIndex(path)
    }
}

/// Level of the deepest common ancestor of two leaves; `r` when they coincide.
pub fn ancestor_level(a: &LeafIndex, b: &LeafIndex) -> Result<usize> {
    if a.depth() != b.depth() {
        return Err(Error::LengthMismatch {
            left: a.depth(),
            right: b.depth(),
        });
    }
    Ok(a.0.iter().zip(&b.0).take_while(|(x, y)| x == y).count())
}

/// Ancestor level of two flat leaf indices in a complete tree.
pub fn flat_ancestor_level(a: usize, b: usize, depth: usize, children: usize) -> usize {
    if a == b {
        return depth;
    }
    let (mut a, mut b) = (a, b);
    let mut common_below = 0;
    while a != b {
        a /= children;
        b /= children;
        common_below += 1;
    }
    depth - common_below
}

/// A spin configuration in `{-1, +1}^N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::Config("spin configuration must have N >= 1".into()));
        }
        if let Some(bad) = spins.iter().find(|s| **s != 1 && **s != -1) {
            return Err(Error::Config(format!("spin value {bad} is not +-1")));
        }
        Ok(SpinConfig(spins))
    }

    /// Configuration whose spin `i` is `-1` iff bit `i` of `bits` is set.
    pub fn from_bits(bits: u64, n: usize) -> Self {
        SpinConfig(
            (0..n)
                .map(|i| if bits >> i & 1 == 1 { -1 } else { 1 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn flipped(&self) -> Self {
        SpinConfig(self.0.iter().map(|s| -s).collect())
    }
}

/// `(1/N) sum_i s1_i s2_i`.
pub fn overlap(s1: &SpinConfig, s2: &SpinConfig) -> Result<f64> {
    if s1.len() != s2.len() {
        return Err(Error::LengthMismatch {
            left: s1.len(),
            right: s2.len(),
        });
    }
    let dot: i64 = s1
        .0
        .iter()
        .zip(&s2.0)
        .map(|(a, b)| i64::from(a * b))
        .sum();
    Ok(dot as f64 / s1.len() as f64)
}

/// `gamma_{a ^ b} * q_N(s1, s2)`, the normalized covariance of the
/// Hamiltonian at two configurations.
pub fn scaled_covariance(
    params: &ModelParams,
    a: &LeafIndex,
    b: &LeafIndex,
    s1: &SpinConfig,
    s2: &SpinConfig,
) -> Result<f64> {
    for leaf in [a, b] {
        if leaf.depth() != params.depth() {
            return Err(Error::LengthMismatch {
                left: leaf.depth(),
                right: params.depth(),
            });
        }
    }
    let level = ancestor_level(a, b)?;
    Ok(params.gamma_at(level) * overlap(s1, s2)?)
}

/// Carrier for every Monte-Carlo estimate produced by the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureEstimate {
    pub mean: f64,
    /// Sample standard deviation divided by `sqrt(replicas)`.
    pub stderr: f64,
    pub replicas: usize,
    pub seed: u64,
}

impl PressureEstimate {
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let m = crate::stats::Moments::from_slice(samples);
        PressureEstimate {
            mean: m.mean(),
            stderr: m.stderr(),
            replicas: samples.len(),
            seed,
        }
    }

    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}
