use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{ModelParams, SpinConfig, MAX_ENUM_SPINS};
use crate::rng::{tag, StreamKey};
use crate::rpc::{CascadeConfig, CascadeSample, TreeShape};

pub(crate) fn check_n(n: usize, max: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    if n > max {
        return Err(Error::NTooLarge { n, max });
    }
    Ok(())
}

/// Standard deviations `sqrt(gamma_l^2 - gamma_{l-1}^2)` for `l = 1..=r`.
pub(crate) fn level_sds(params: &ModelParams) -> Vec<f64> {
    (1..=params.depth())
        .map(|l| (params.gamma_at(l).powi(2) - params.gamma_at(l - 1).powi(2)).sqrt())
        .collect()
}

/// Tree-indexed Gaussian arrays `g_e(alpha)` with `Cov = gamma^2_{alpha ^ alpha'}`
/// per entry, stored as increments. Sums over all levels above the leaves
/// are kept; the leaf increments are regenerated from their streams.
#[derive(Debug, Clone)]
pub struct TreeCouplings {
    shape: TreeShape,
    entries: usize,
    sds: Vec<f64>,
    parent_sums: Vec<f64>,
    key: StreamKey,
}

impl TreeCouplings {
    pub fn sample(shape: TreeShape, entries: usize, sds: &[f64], key: StreamKey) -> Self {
        let depth = shape.depth;
        let mut sums = vec![0.0; entries];
        for level in 1..depth {
            let nodes = shape.children.pow(level as u32);
            let mut next = vec![0.0; nodes * entries];
            for node in 0..nodes {
                let parent = node / shape.children;
                let mut rng = key.child(level as u64).child(node as u64).rng();
                let dst = &mut next[node * entries..(node + 1) * entries];
                let src = &sums[parent * entries..(parent + 1) * entries];
                for (d, s) in dst.iter_mut().zip(src) {
                    let j: f64 = rng.sample(StandardNormal);
                    *d = s + sds[level - 1] * j;
                }
            }
            sums = next;
        }
        TreeCouplings {
            shape,
            entries,
            sds: sds.to_vec(),
            parent_sums: sums,
            key,
        }
    }

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    /// Writes the full array at leaf `flat` into `out`.
    pub fn leaf(&self, flat: usize, out: &mut [f64]) {
        let e = self.entries;
        let depth = self.shape.depth;
        if depth == 0 {
            out.fill(0.0);
            return;
        }
        let parent = flat / self.shape.children;
        let src = &self.parent_sums[parent * e..(parent + 1) * e];
        let mut rng = self.key.child(depth as u64).child(flat as u64).rng();
        let sd = self.sds[depth - 1];
        for (d, s) in out.iter_mut().zip(src) {
            let j: f64 = rng.sample(StandardNormal);
            *d = s + sd * j;
        }
    }
}

/// Energies `scale * sigma^T G sigma` for the `2^(n-1)` configurations with
/// `sigma_n = +1`, in Gray-code order: entry `t` is the configuration
/// [`gray_config`]`(t, n)`. `g` is row-major `n x n`, diagonal included.
pub fn quadratic_energies(g: &[f64], n: usize, scale: f64, out: &mut Vec<f64>) {
    debug_assert_eq!(g.len(), n * n);
    let states = 1usize << (n - 1);
    out.clear();
    out.reserve(states);
    let mut a = vec![0.0; n * n];
    let mut energy = 0.0;
    for i in 0..n {
        energy += g[i * n + i];
        for j in 0..n {
            if i != j {
                a[i * n + j] = g[i * n + j] + g[j * n + i];
                if i < j {
                    energy += a[i * n + j];
                }
            }
        }
    }
    let mut local: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum()).collect();
    let mut spin = vec![1.0f64; n];
    out.push(scale * energy);
    for t in 1..states {
        let i = t.trailing_zeros() as usize;
        let s = spin[i];
        energy -= 2.0 * s * local[i];
        let row = &a[i * n..(i + 1) * n];
        for (h, aij) in local.iter_mut().zip(row) {
            *h -= 2.0 * s * aij;
        }
        spin[i] = -s;
        out.push(scale * energy);
    }
}

/// `scale * sum_i b_i sigma_i` in the same order as [`quadratic_energies`].
pub fn linear_values(b: &[f64], scale: f64, out: &mut Vec<f64>) {
    let n = b.len();
    let states = 1usize << (n - 1);
    out.clear();
    out.reserve(states);
    let mut value: f64 = b.iter().sum();
    let mut spin = vec![1.0f64; n];
    out.push(scale * value);
    for t in 1..states {
        let i = t.trailing_zeros() as usize;
        value -= 2.0 * spin[i] * b[i];
        spin[i] = -spin[i];
        out.push(scale * value);
    }
}

/// Configuration visited at step `t` of the Gray-code enumeration.
pub fn gray_config(t: usize, n: usize) -> SpinConfig {
    SpinConfig::from_bits((t ^ (t >> 1)) as u64, n)
}

/// `(1/sqrt(N)) sum_{i,j} g_ij sigma_i sigma_j`.
pub fn hamiltonian(g: &[f64], sigma: &SpinConfig) -> f64 {
    let n = sigma.len();
    let s = sigma.spins();
    let mut h = 0.0;
    for i in 0..n {
        for j in 0..n {
            h += g[i * n + j] * f64::from(s[i] * s[j]);
        }
    }
    h / (n as f64).sqrt()
}

/// One draw of the disorder: cascade weights plus coupling arrays.
#[derive(Debug, Clone)]
pub struct DisorderRealization {
    params: ModelParams,
    n: usize,
    cascade: CascadeSample,
    couplings: TreeCouplings,
    seed: u64,
}

impl DisorderRealization {
    pub fn sample(params: &ModelParams, n: usize, config: &CascadeConfig, seed: u64) -> Result<Self> {
        Self::from_key(params, n, config, StreamKey::new(seed), seed)
    }

    pub(crate) fn from_key(
        params: &ModelParams,
        n: usize,
        config: &CascadeConfig,
        key: StreamKey,
        seed: u64,
    ) -> Result<Self> {
        check_n(n, MAX_ENUM_SPINS)?;
        let cascade = CascadeSample::sample(params.zeta(), config, key.child(tag::CASCADE))?;
        let couplings =
            TreeCouplings::sample(cascade.shape(), n * n, &level_sds(params), key.child(tag::COUPLING));
        Ok(DisorderRealization {
            params: params.clone(),
            n,
            cascade,
            couplings,
            seed,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cascade(&self) -> &CascadeSample {
        &self.cascade
    }

    pub fn num_leaves(&self) -> usize {
        self.cascade.num_leaves()
    }

    /// Row-major `g(alpha)` for leaf `flat`.
    pub fn coupling_matrix(&self, flat: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.n * self.n];
        self.couplings.leaf(flat, &mut g);
        g
    }

    pub fn hamiltonian(&self, flat: usize, sigma: &SpinConfig) -> Result<f64> {
        if sigma.len() != self.n {
            return Err(Error::LengthMismatch {
                left: sigma.len(),
                right: self.n,
            });
        }
        Ok(hamiltonian(&self.coupling_matrix(flat), sigma))
    }

    /// Energies of leaf `flat` in Gray-code order (half the configurations).
    pub fn leaf_energies(&self, flat: usize, g: &mut [f64], out: &mut Vec<f64>) {
        self.couplings.leaf(flat, g);
        quadratic_energies(g, self.n, 1.0 / (self.n as f64).sqrt(), out);
    }
}
