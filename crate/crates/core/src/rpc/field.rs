use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

use super::TreeShape;

/// Covariance of a tree-indexed Gaussian field as a function of the ancestor
/// level: `E g(a) g(b) = v_{a ^ b}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceProfile {
    values: Vec<f64>,
}

impl CovarianceProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NonMonotoneProfile("profile needs v_0".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonMonotoneProfile(format!("non-finite entry {bad}")));
        }
        if values[0] < 0.0 {
            return Err(Error::NonMonotoneProfile(format!("v_0 = {} < 0", values[0])));
        }
        for l in 1..values.len() {
            if values[l] < values[l - 1] {
                return Err(Error::NonMonotoneProfile(format!(
                    "v_{l} = {} < v_{} = {}",
                    values[l],
                    l - 1,
                    values[l - 1]
                )));
            }
        }
        Ok(CovarianceProfile { values })
    }

    /// `v_l = gamma_l^2` for the Hamiltonian-type fields.
    pub fn from_gamma(gamma_full: &[f64]) -> Result<Self> {
        Self::new(gamma_full.iter().map(|g| g * g).collect())
    }

    pub fn zero(depth: usize) -> Self {
        CovarianceProfile {
            values: vec![0.0; depth + 1],
        }
    }

    pub fn depth(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Standard deviation of the increment entering at depth `l`; `l = 0`
    /// is the root shift shared by every leaf.
    pub fn increment_sd(&self, l: usize) -> f64 {
        if l == 0 {
            self.values[0].sqrt()
        } else {
            (self.values[l] - self.values[l - 1]).max(0.0).sqrt()
        }
    }

    pub fn increment_sds(&self) -> Vec<f64> {
        (0..=self.depth()).map(|l| self.increment_sd(l)).collect()
    }

    pub fn total_variance(&self) -> f64 {
        self.values[self.depth()]
    }

    pub(crate) fn check_depth(&self, depth: usize) -> Result<()> {
        if self.depth() != depth {
            return Err(Error::DepthMismatch(format!(
                "profile has depth {} but the tree has depth {depth}",
                self.depth()
            )));
        }
        Ok(())
    }
}

/// Per-node standard Gaussians `J_beta` on a complete tree; the value at a
/// leaf is the path sum `sum_beta J_beta sqrt(v_|beta| - v_{|beta|-1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeGaussianField {
    shape: TreeShape,
    profile: CovarianceProfile,
    root: f64,
    /// Level `l` (index `l - 1`): draws for the `children^l` nodes at depth `l`.
    draws: Vec<Vec<f64>>,
}

impl TreeGaussianField {
    pub fn sample(profile: &CovarianceProfile, shape: TreeShape, key: StreamKey) -> Result<Self> {
        profile.check_depth(shape.depth)?;
        let root = key.child(u64::MAX).rng().sample(StandardNormal);
        let mut draws = Vec::with_capacity(shape.depth);
        let mut parents = 1usize;
        for level in 1..=shape.depth {
            let mut level_draws = Vec::with_capacity(parents * shape.children);
            for parent in 0..parents {
                let mut rng = key.child(level as u64).child(parent as u64).rng();
                level_draws.extend((0..shape.children).map(|_| rng.sample::<f64, _>(StandardNormal)));
            }
            draws.push(level_draws);
            parents *= shape.children;
        }
        Ok(TreeGaussianField {
            shape,
            profile: profile.clone(),
            root,
            draws,
        })
    }

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    pub fn profile(&self) -> &CovarianceProfile {
        &self.profile
    }

    /// Field values at every leaf, lexicographic order.
    pub fn leaf_values(&self) -> Vec<f64> {
        let mut partial = vec![self.root * self.profile.increment_sd(0)];
        for (l, draws) in self.draws.iter().enumerate() {
            let sd = self.profile.increment_sd(l + 1);
            let c = self.shape.children;
            partial = draws
                .iter()
                .enumerate()
                .map(|(i, j)| partial[i / c] + sd * j)
                .collect();
        }
        partial
    }

    /// Scaled increments `(root, level 1, ..., level depth)` along the path
    /// to leaf `flat`.
    pub fn leaf_increments(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.depth + 1];
        out[0] = self.root * self.profile.increment_sd(0);
        let mut node = flat;
        for l in (1..=self.shape.depth).rev() {
            out[l] = self.draws[l - 1][node] * self.profile.increment_sd(l);
            node /= self.shape.children;
        }
        out
    }
}

/// Samples a field from a plain seed.
pub fn sample_tree_field(
    profile: &CovarianceProfile,
    shape: TreeShape,
    seed: u64,
) -> Result<TreeGaussianField> {
    TreeGaussianField::sample(profile, shape, StreamKey::new(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Moments;

    #[test]
    fn profile_validation() {
        assert!(CovarianceProfile::new(vec![0.0, 0.3, 0.3, 1.0]).is_ok());
        assert!(matches!(
            CovarianceProfile::new(vec![0.0, 0.5, 0.2]),
            Err(Error::NonMonotoneProfile(_))
        ));
        assert!(matches!(
            CovarianceProfile::new(vec![-0.1, 0.5]),
            Err(Error::NonMonotoneProfile(_))
        ));
    }

    #[test]
    fn zero_profile_gives_zero_field() {
        let shape = TreeShape { depth: 2, children: 3 };
        let f = sample_tree_field(&CovarianceProfile::zero(2), shape, 4).unwrap();
        assert!(f.leaf_values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn increments_sum_to_leaf_values() {
        let p = CovarianceProfile::new(vec![0.2, 0.5, 1.5]).unwrap();
        let shape = TreeShape { depth: 2, children: 4 };
        let f = sample_tree_field(&p, shape, 8).unwrap();
        let vals = f.leaf_values();
        for (i, v) in vals.iter().enumerate() {
            let s: f64 = f.leaf_increments(i).iter().sum();
            assert!((s - v).abs() < 1e-14);
        }
    }

    #[test]
    fn depth_one_unit_variance() {
        let p = CovarianceProfile::new(vec![0.0, 1.0]).unwrap();
        let shape = TreeShape { depth: 1, children: 8 };
        let mut m = Moments::new();
        for seed in 0..5_000 {
            for v in sample_tree_field(&p, shape, seed).unwrap().leaf_values() {
                m.push(v * v);
            }
        }
        assert!((m.mean() - 1.0).abs() < 3.0 * m.stderr());
    }

    #[test]
    fn level_one_covariance() {
        let p = CovarianceProfile::new(vec![0.0, 0.25, 1.0]).unwrap();
        let shape = TreeShape { depth: 2, children: 2 };
        let (mut same, mut split, mut diag) = (Moments::new(), Moments::new(), Moments::new());
        for seed in 0..100_000 {
            let v = sample_tree_field(&p, shape, seed).unwrap().leaf_values();
            same.push(v[0] * v[1]);
            split.push(v[0] * v[2]);
            diag.push(v[3] * v[3]);
        }
        assert!((same.mean() - 0.25).abs() < 3.0 * same.stderr(), "{}", same.mean());
        assert!(split.mean().abs() < 3.0 * split.stderr(), "{}", split.mean());
        assert!((diag.mean() - 1.0).abs() < 3.0 * diag.stderr(), "{}", diag.mean());
    }

    #[test]
    fn deterministic() {
        let p = CovarianceProfile::new(vec![0.0, 0.4, 0.9]).unwrap();
        let shape = TreeShape { depth: 2, children: 3 };
        assert_eq!(
            sample_tree_field(&p, shape, 5).unwrap(),
            sample_tree_field(&p, shape, 5).unwrap()
        );
    }
}
