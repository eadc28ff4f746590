use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::stats::log_sum_exp;

use super::TreeShape;

/// Truncation settings for a sampled cascade.
///
/// Each node keeps its `width` largest Poisson-Dirichlet atoms. The mass of
/// the discarded atoms is estimated from the last retained arrival time and
/// spread evenly over `tail_children` extra children, each with its own
/// subtree. With `tail_children = 0` the tail is simply dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub width: usize,
    pub tail_children: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            width: 32,
            tail_children: 16,
        }
    }
}

impl CascadeConfig {
    pub fn new(width: usize, tail_children: usize) -> Self {
        CascadeConfig {
            width,
            tail_children,
        }
    }

    pub fn children(&self) -> usize {
        self.width + self.tail_children
    }

    pub fn shape(&self, depth: usize) -> TreeShape {
        TreeShape {
            depth,
            children: self.children(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 {
            return Err(Error::WidthTooSmall(self.width));
        }
        Ok(())
    }
}

/// Checks `0 < zeta_0 < ... < zeta_{d-1} < 1`.
pub fn validate_zeta(zeta: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for (l, &z) in zeta.iter().enumerate() {
        if !(z > prev && z < 1.0) {
            return Err(Error::InvalidZeta(format!("entry {l} = {z}")));
        }
        prev = z;
    }
    Ok(())
}

/// A truncated realization of the cascade weights `nu_alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSample {
    zeta: Vec<f64>,
    config: CascadeConfig,
    /// Level `l` (index `l - 1`): log of the unnormalized child weights of
    /// every node at depth `l - 1`, node-major.
    log_child_weights: Vec<Vec<f64>>,
    log_leaf_weights: Vec<f64>,
    log_total_mass: f64,
    leftover_mass_bound: f64,
}

impl CascadeSample {
    /// Samples a cascade of depth `zeta.len()`. Children of nodes at depth
    /// `l` are the atoms `Gamma_n^(-1/zeta_l)` of a Poisson process with
    /// intensity `zeta_l x^(-1 - zeta_l) dx`, `Gamma_n` the arrival times of
    /// a unit-rate process.
    pub fn sample(zeta: &[f64], config: &CascadeConfig, key: StreamKey) -> Result<Self> {
        validate_zeta(zeta)?;
        config.validate()?;
        let depth = zeta.len();
        let (m, k) = (config.width, config.tail_children);
        let children = config.children();

        let mut log_child_weights = Vec::with_capacity(depth);
        // retained share of each child slot, used for the leftover estimate
        let mut shares = Vec::with_capacity(depth);
        let mut nodes = 1usize;
        for (level, &z) in zeta.iter().enumerate() {
            let mut logs = Vec::with_capacity(nodes * children);
            let mut share = Vec::with_capacity(nodes * children);
            for node in 0..nodes {
                let mut rng = key.child(level as u64).child(node as u64).rng();
                let mut arrival = 0.0;
                let start = logs.len();
                for _ in 0..m {
                    let e: f64 = rng.sample(Exp1);
                    arrival += e;
                    logs.push(-arrival.ln() / z);
                }
                // E[sum_{n>M} Gamma_n^(-1/z) | Gamma_M] = z/(1-z) Gamma_M^(1-1/z)
                let log_tail = (z / (1.0 - z)).ln() + (1.0 - 1.0 / z) * arrival.ln();
                let log_retained = log_sum_exp(&logs[start..]);
                let log_all = log_sum_exp(&[log_retained, log_tail]);
                for &lw in &logs[start..start + m] {
                    share.push((lw - log_all).exp());
                }
                if k > 0 {
                    let per_child = log_tail - (k as f64).ln();
                    for _ in 0..k {
                        logs.push(per_child);
                        share.push(0.0);
                    }
                }
            }
            log_child_weights.push(logs);
            shares.push(share);
            nodes *= children;
        }

        let mut partial = vec![0.0];
        for logs in &log_child_weights {
            partial = partial
                .iter()
                .enumerate()
                .flat_map(|(node, &base)| {
                    logs[node * children..(node + 1) * children]
                        .iter()
                        .map(move |lw| base + lw)
                })
                .collect();
        }
        let log_total_mass = log_sum_exp(&partial);
        let log_leaf_weights = partial.iter().map(|lw| lw - log_total_mass).collect();

        let mut retained = vec![1.0; nodes];
        for share in shares.iter().rev() {
            retained = share
                .chunks(children)
                .zip(retained.chunks(children))
                .map(|(s, r)| s.iter().zip(r).map(|(a, b)| a * b).sum())
                .collect();
        }
        let leftover_mass_bound = (1.0 - retained[0]).max(0.0);

        Ok(CascadeSample {
            zeta: zeta.to_vec(),
            config: *config,
            log_child_weights,
            log_leaf_weights,
            log_total_mass,
            leftover_mass_bound,
        })
    }

    pub fn depth(&self) -> usize {
        self.zeta.len()
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn config(&self) -> CascadeConfig {
        self.config
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn shape(&self) -> TreeShape {
        self.config.shape(self.depth())
    }

    pub fn num_leaves(&self) -> usize {
        self.log_leaf_weights.len()
    }

    /// Normalized `log nu_alpha` over all leaves, in lexicographic order.
    pub fn log_leaf_weights(&self) -> &[f64] {
        &self.log_leaf_weights
    }

    pub fn leaf_weights(&self) -> Vec<f64> {
        self.log_leaf_weights.iter().map(|l| l.exp()).collect()
    }

    /// `log sum_alpha w_alpha` before normalization.
    pub fn log_total_mass(&self) -> f64 {
        self.log_total_mass
    }

    /// Estimated fraction of the untruncated mass that is not carried by
    /// retained atoms.
    pub fn leftover_mass_bound(&self) -> f64 {
        self.leftover_mass_bound
    }

    /// Normalized weights of the children of `node` (node-major index at
    /// depth `level - 1`), for `level` in `1..=depth`.
    pub fn child_weights(&self, level: usize, node: usize) -> Vec<f64> {
        let c = self.config.children();
        let logs = &self.log_child_weights[level - 1][node * c..(node + 1) * c];
        let total = log_sum_exp(logs);
        logs.iter().map(|l| (l - total).exp()).collect()
    }

    /// Unnormalized log child weights at `level`, node-major.
    pub fn log_child_weights(&self, level: usize) -> &[f64] {
        &self.log_child_weights[level - 1]
    }
}

/// Samples a cascade from a plain seed.
pub fn sample_cascade(zeta: &[f64], config: &CascadeConfig, seed: u64) -> Result<CascadeSample> {
    CascadeSample::sample(zeta, config, StreamKey::new(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::flat_ancestor_level;
    use crate::stats::Moments;

    #[test]
    fn normalization_and_positivity() {
        for (zeta, cfg) in [
            (vec![0.5], CascadeConfig::new(8, 0)),
            (vec![0.3, 0.7], CascadeConfig::new(6, 3)),
            (vec![0.05, 0.2, 0.9], CascadeConfig::new(4, 2)),
        ] {
            let c = sample_cascade(&zeta, &cfg, 11).unwrap();
            assert_eq!(c.num_leaves(), cfg.children().pow(zeta.len() as u32));
            let w = c.leaf_weights();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(c.log_leaf_weights().iter().all(|l| l.is_finite()));
            for level in 1..=zeta.len() {
                let cw = c.child_weights(level, 0);
                assert!((cw.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let atoms = &cw[..cfg.width];
                assert!(atoms.windows(2).all(|p| p[0] >= p[1]));
            }
            assert!((0.0..1.0).contains(&c.leftover_mass_bound()));
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            sample_cascade(&[0.5], &CascadeConfig::new(1, 0), 0),
            Err(Error::WidthTooSmall(1))
        ));
        assert!(matches!(
            sample_cascade(&[0.7, 0.3], &CascadeConfig::default(), 0),
            Err(Error::InvalidZeta(_))
        ));
        assert!(matches!(
            sample_cascade(&[1.0], &CascadeConfig::default(), 0),
            Err(Error::InvalidZeta(_))
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = CascadeConfig::new(5, 2);
        let a = sample_cascade(&[0.2, 0.6], &cfg, 99).unwrap();
        let b = sample_cascade(&[0.2, 0.6], &cfg, 99).unwrap();
        let c = sample_cascade(&[0.2, 0.6], &cfg, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn depth_one_self_overlap_mean() {
        // E sum nu^2 = 1 - zeta_0 for the untruncated process
        let cfg = CascadeConfig::new(64, 64);
        let mut m = Moments::new();
        for seed in 0..20_000 {
            let c = sample_cascade(&[0.5], &cfg, seed).unwrap();
            m.push(c.leaf_weights().iter().map(|w| w * w).sum());
        }
        assert!(
            (m.mean() - 0.5).abs() <= 3.0 * m.stderr() + 0.003,
            "{} +- {}",
            m.mean(),
            m.stderr()
        );
    }

    #[test]
    fn depth_two_root_split_probability() {
        // P(alpha^1 ^ alpha^2 = 0) = zeta_0 for two leaves drawn from nu
        let cfg = CascadeConfig::new(16, 16);
        let shape = cfg.shape(2);
        let mut m = Moments::new();
        for seed in 0..4_000 {
            let c = sample_cascade(&[0.3, 0.7], &cfg, seed).unwrap();
            let w = c.leaf_weights();
            let mut same_top = 0.0;
            for top in 0..shape.children {
                let s: f64 = w[top * shape.children..(top + 1) * shape.children].iter().sum();
                same_top += s * s;
            }
            m.push(1.0 - same_top);
            if seed == 0 {
                assert_eq!(flat_ancestor_level(0, shape.children, 2, shape.children), 0);
            }
        }
        assert!(
            (m.mean() - 0.3).abs() <= 3.0 * m.stderr() + 0.005,
            "{} +- {}",
            m.mean(),
            m.stderr()
        );
    }

    #[test]
    fn leftover_shrinks_with_width() {
        let mean_leftover = |width| {
            let cfg = CascadeConfig::new(width, 0);
            let mut m = Moments::new();
            for seed in 0..400 {
                m.push(sample_cascade(&[0.7], &cfg, seed).unwrap().leftover_mass_bound());
            }
            m.mean()
        };
        let (a, b, c) = (mean_leftover(8), mean_leftover(32), mean_leftover(128));
        assert!(a > b && b > c, "{a} {b} {c}");
    }
}
