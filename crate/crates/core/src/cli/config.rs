use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::optimize::OptimizationConfig;
use crate::rpc::{CascadeConfig, RecursionMethod};

/// Full input of one CLI run. Keys are documented in
/// `schema/run-config.schema.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Output directory; not part of the content hash.
    #[serde(default = "default_out", skip_serializing)]
    pub out: PathBuf,
    /// Worker threads; not part of the content hash.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub cascade: CascadeConfig,
    #[serde(default)]
    pub pressure: PressureSection,
    #[serde(default)]
    pub parisi: ParisiSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub bound: BoundSection,
    #[serde(default)]
    pub rpc_sample: RpcSampleSection,
    #[serde(default)]
    pub overlap: OverlapSection,
    #[serde(default)]
    pub cavity: CavitySection,
    #[serde(default)]
    pub gg: GgSection,
}

fn default_replicas() -> usize {
    1000
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Direct,
    Recursive,
    Both,
}

impl Estimator {
    pub fn direct(self) -> bool {
        matches!(self, Estimator::Direct | Estimator::Both)
    }

    pub fn recursive(self) -> bool {
        matches!(self, Estimator::Recursive | Estimator::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PressureSection {
    pub n: Vec<usize>,
    pub estimator: Estimator,
    pub samples_per_level: usize,
}

impl Default for PressureSection {
    fn default() -> Self {
        PressureSection {
            n: vec![1],
            estimator: Estimator::Both,
            samples_per_level: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParisiSection {
    pub xi_free: Vec<f64>,
    /// `q_0..q_k`; must be given for `parisi-eval`.
    pub q: Vec<f64>,
    pub estimator: ParisiEstimator,
    pub recursion: RecursionMethod,
}

impl Default for ParisiSection {
    fn default() -> Self {
        ParisiSection {
            xi_free: Vec::new(),
            q: Vec::new(),
            estimator: ParisiEstimator::Both,
            recursion: RecursionMethod::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParisiEstimator {
    Recursion,
    Rpc,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub k_schedule: Vec<usize>,
    pub restarts: usize,
    pub max_evals: usize,
    pub tolerance: f64,
    pub search_method: Option<RecursionMethod>,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        let d = OptimizationConfig::default();
        OptimizeSection {
            k_schedule: d.k_schedule,
            restarts: d.restarts,
            max_evals: d.max_evals,
            tolerance: d.tolerance,
            search_method: d.search_method,
        }
    }
}

impl OptimizeSection {
    pub fn with_seed(&self, seed: u64) -> OptimizationConfig {
        OptimizationConfig {
            k_schedule: self.k_schedule.clone(),
            restarts: self.restarts,
            max_evals: self.max_evals,
            tolerance: self.tolerance,
            seed,
            search_method: self.search_method,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSection {
    pub n: Vec<usize>,
}

impl Default for BoundSection {
    fn default() -> Self {
        BoundSection { n: vec![4, 8, 12] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpcSampleSection {
    /// Field covariance `v_0..v_r`; defaults to `gamma_l^2`.
    pub profile: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapSection {
    pub n: usize,
    pub pairs_per_replica: usize,
}

impl Default for OverlapSection {
    fn default() -> Self {
        OverlapSection {
            n: 6,
            pairs_per_replica: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavitySection {
    pub n: Vec<usize>,
}

impl Default for CavitySection {
    fn default() -> Self {
        CavitySection { n: vec![4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GgSection {
    pub n_spins: Vec<usize>,
    pub w: [f64; 2],
    /// Replica count `n` of the test function.
    pub n: usize,
    pub p: u32,
    pub f: String,
    pub tuples_per_replica: usize,
}

impl Default for GgSection {
    fn default() -> Self {
        GgSection {
            n_spins: vec![4, 8],
            w: [0.0, 1.0],
            n: 2,
            p: 1,
            f: "r12".into(),
            tuples_per_replica: 64,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Canonical text of every hashed field.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("run configuration always serializes")
    }

    /// SHA-256 of the crate version and the canonical config, in hex.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.update(b"\n");
        h.update(self.canonical().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\nr = 1\nzeta = [0.5]\ngamma = [1.0]\n";

    #[test]
    fn defaults_and_round_trip() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.replicas, 1000);
        assert_eq!(c.cascade, CascadeConfig::default());
        let back = RunConfig::from_toml(&c.canonical()).unwrap();
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn hash_ignores_out_and_threads() {
        let a = RunConfig::from_toml(MINIMAL).unwrap();
        let b = RunConfig::from_toml(&format!("out = \"x\"\nthreads = 3\n{MINIMAL}")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::from_toml(&format!("seed = 2\n{MINIMAL}")).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_models() {
        assert!(RunConfig::from_toml(&format!("sede = 2\n{MINIMAL}")).is_err());
        assert!(RunConfig::from_toml(&format!("{MINIMAL}[cascade]\nwidht = 3\n")).is_err());
        assert!(RunConfig::from_toml("[model]\nr = 1\nzeta = [1.5]\ngamma = [1.0]\n").is_err());
        let c = RunConfig::from_toml(&format!(
            "{MINIMAL}[parisi]\nq = [0.0, 1.0]\nrecursion = {{ kind = \"grid\", nodes = 40, spacing = 0.02 }}\n"
        ))
        .unwrap();
        assert_eq!(c.parisi.recursion, RecursionMethod::Grid { nodes: 40, spacing: 0.02 });
    }
}
