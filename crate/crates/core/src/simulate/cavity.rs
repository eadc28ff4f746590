use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{ModelParams, PressureEstimate};
use crate::rng::{tag, StreamKey};
use crate::rpc::{CascadeConfig, CascadeSample};
use crate::stats::{log_two_cosh, LogSumExp};

use super::gibbs::MAX_GIBBS_SPINS;
use super::hamiltonian::{check_n, level_sds, linear_values, quadratic_energies, TreeCouplings};
use super::pressure::check_replicas;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityEstimate {
    pub estimate: PressureEstimate,
    pub min_replica: f64,
    pub max_replica: f64,
}

/// `log Omega'(2cosh z) - log Omega'(exp y)` for one disorder draw, where
/// `Omega'` is the Gibbs average for `nu_alpha exp H'_N` with the
/// `(N+1)`-scaled Hamiltonian. Both terms share the normalizer, so the
/// difference reduces to two log-partition functions.
fn cavity_replica(params: &ModelParams, n: usize, config: &CascadeConfig, key: StreamKey) -> Result<f64> {
    let cascade = CascadeSample::sample(params.zeta(), config, key.child(tag::CASCADE))?;
    let sds = level_sds(params);
    let m = n + 1;
    let big = TreeCouplings::sample(cascade.shape(), m * m, &sds, key.child(tag::COUPLING));
    let prime = TreeCouplings::sample(cascade.shape(), n * n, &sds, key.child(tag::COUPLING_PRIME));
    let scale_h = 1.0 / (m as f64).sqrt();
    let scale_y = 1.0 / ((n * m) as f64).sqrt();

    let mut g_big = vec![0.0; m * m];
    let mut g_inner = vec![0.0; n * n];
    let mut g_prime = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    let (mut h, mut z, mut y) = (Vec::new(), Vec::new(), Vec::new());
    let (mut with_z, mut with_y) = (LogSumExp::new(), LogSumExp::new());
    for (leaf, lw) in cascade.log_leaf_weights().iter().enumerate() {
        big.leaf(leaf, &mut g_big);
        prime.leaf(leaf, &mut g_prime);
        for i in 0..n {
            g_inner[i * n..(i + 1) * n].copy_from_slice(&g_big[i * m..i * m + n]);
            b[i] = g_big[i * m + n] + g_big[n * m + i];
        }
        quadratic_energies(&g_inner, n, scale_h, &mut h);
        linear_values(&b, scale_h, &mut z);
        quadratic_energies(&g_prime, n, scale_y, &mut y);
        for t in 0..h.len() {
            with_z.add(lw + h[t] + log_two_cosh(z[t]));
            with_y.add(lw + h[t] + y[t]);
        }
    }
    Ok(with_z.value() - with_y.value())
}

/// Monte-Carlo estimate of the cavity functional
/// `A_N = E log Omega'_N(2cosh z_N) - E log Omega'_N(exp y_N)` with
/// `Cov z = 2 N/(N+1) gamma_{a^b}^2 q` and `Cov y = N/(N+1) gamma_{a^b}^2 q^2`.
pub fn cavity_functional(
    params: &ModelParams,
    n: usize,
    config: &CascadeConfig,
    replicas: usize,
    seed: u64,
) -> Result<CavityEstimate> {
    check_n(n, MAX_GIBBS_SPINS)?;
    check_replicas(replicas)?;
    let key = StreamKey::new(seed);
    let samples = (0..replicas)
        .into_par_iter()
        .map(|rep| cavity_replica(params, n, config, key.child(rep as u64)))
        .collect::<Result<Vec<f64>>>()?;
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CavityEstimate {
        estimate: PressureEstimate::from_samples(&samples, seed),
        min_replica: min,
        max_replica: max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::pressure_direct;
    use std::f64::consts::LN_2;

    #[test]
    fn vanishing_coupling() {
        let params = ModelParams::new(vec![0.5], vec![1e-9]).unwrap();
        let c = cavity_functional(&params, 4, &CascadeConfig::new(4, 2), 4, 1).unwrap();
        assert!((c.estimate.mean - LN_2).abs() < 1e-7);
    }

    #[test]
    fn mean_between_extremes() {
        let params = ModelParams::new(vec![0.4], vec![1.0]).unwrap();
        let c = cavity_functional(&params, 3, &CascadeConfig::new(6, 2), 20, 2).unwrap();
        assert!(c.min_replica <= c.estimate.mean && c.estimate.mean <= c.max_replica);
    }

    #[test]
    fn telescoping_small_n() {
        let params = ModelParams::new(vec![0.5], vec![0.8]).unwrap();
        let cfg = CascadeConfig::new(16, 8);
        let n = 3;
        let a = cavity_functional(&params, n, &cfg, 1500, 3).unwrap().estimate;
        let p_n = pressure_direct(&params, n, &cfg, 1500, 4).unwrap();
        let p_n1 = pressure_direct(&params, n + 1, &cfg, 1500, 5).unwrap();
        let tele = (n + 1) as f64 * p_n1.mean - n as f64 * p_n.mean;
        let se = (a.stderr.powi(2)
            + ((n + 1) as f64 * p_n1.stderr).powi(2)
            + (n as f64 * p_n.stderr).powi(2))
        .sqrt();
        let c = params.gamma_max().powi(2);
        assert!((a.mean - tele).abs() <= c / n as f64 + 3.0 * se, "{} {tele} {se}", a.mean);
    }
}
