use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, PressureEstimate, MAX_ENUM_SPINS};
use crate::rng::{tag, StreamKey};
use crate::rpc::CascadeConfig;
use crate::stats::{log_sum_exp, LogSumExp};

use super::hamiltonian::{check_n, level_sds, quadratic_energies, DisorderRealization};

pub(crate) fn check_replicas(replicas: usize) -> Result<()> {
    if replicas < 2 {
        return Err(Error::InsufficientSamples(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    Ok(())
}

/// Per-leaf `log nu_alpha + log sum_sigma exp H_N(sigma, alpha)`.
pub(crate) fn leaf_log_masses(d: &DisorderRealization) -> Vec<f64> {
    let n = d.n();
    let mut g = vec![0.0; n * n];
    let mut energies = Vec::new();
    d.cascade()
        .log_leaf_weights()
        .iter()
        .enumerate()
        .map(|(leaf, lw)| {
            d.leaf_energies(leaf, &mut g, &mut energies);
            lw + LN_2 + log_sum_exp(&energies)
        })
        .collect()
}

/// `(1/N) log sum_alpha nu_alpha sum_sigma exp H_N(sigma, alpha)` for one
/// disorder realization.
pub fn log_partition_per_spin(d: &DisorderRealization) -> f64 {
    log_sum_exp(&leaf_log_masses(d)) / d.n() as f64
}

/// Quenched pressure by exact enumeration over spins and truncated leaves.
pub fn pressure_direct(
    params: &ModelParams,
    n: usize,
    config: &CascadeConfig,
    replicas: usize,
    seed: u64,
) -> Result<PressureEstimate> {
    check_n(n, MAX_ENUM_SPINS)?;
    check_replicas(replicas)?;
    let key = StreamKey::new(seed);
    let samples = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            DisorderRealization::from_key(params, n, config, key.child(rep as u64), seed)
                .map(|d| log_partition_per_spin(&d))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PressureEstimate::from_samples(&samples, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursivePressure {
    pub estimate: PressureEstimate,
    pub samples_per_level: usize,
    /// Delta-method estimate of the downward bias of the outermost
    /// log-of-mean, per spin; the bias is `O(1/m)` in the inner sample count.
    pub plug_in_bias: f64,
}

/// Quenched pressure through the level recursion
/// `Z_{l-1} = (E_{l-1} Z_l^zeta_{l-1})^(1/zeta_{l-1})`, each expectation
/// replaced by a mean over `samples_per_level` fresh coupling draws.
/// Replicates are independent repetitions of the whole nested estimate.
pub fn pressure_recursive(
    params: &ModelParams,
    n: usize,
    samples_per_level: usize,
    replicas: usize,
    seed: u64,
) -> Result<RecursivePressure> {
    check_n(n, MAX_ENUM_SPINS)?;
    check_replicas(replicas)?;
    if samples_per_level < 2 {
        return Err(Error::InsufficientSamples(format!(
            "need at least 2 samples per level, got {samples_per_level}"
        )));
    }
    let key = StreamKey::new(seed).child(tag::RECURSION);
    let sds = level_sds(params);
    let rows: Vec<(f64, f64)> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let mut rng = key.child(rep as u64).rng();
            let mut ctx = Nested {
                zeta: params.zeta(),
                sds: &sds,
                n,
                m: samples_per_level,
                energies: Vec::new(),
                top_relvar: 0.0,
            };
            let g = vec![0.0; n * n];
            let log_z = ctx.level(0, &g, &mut rng);
            let bias = ctx.top_relvar / (2.0 * samples_per_level as f64 * params.zeta()[0] * n as f64);
            (log_z / n as f64, bias)
        })
        .collect();
    let samples: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let bias = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    Ok(RecursivePressure {
        estimate: PressureEstimate::from_samples(&samples, seed),
        samples_per_level,
        plug_in_bias: bias,
    })
}

struct Nested<'a> {
    zeta: &'a [f64],
    sds: &'a [f64],
    n: usize,
    m: usize,
    energies: Vec<f64>,
    top_relvar: f64,
}

impl Nested<'_> {
    fn level<R: Rng>(&mut self, level: usize, partial: &[f64], rng: &mut R) -> f64 {
        let n = self.n;
        if level == self.zeta.len() {
            quadratic_energies(partial, n, 1.0 / (n as f64).sqrt(), &mut self.energies);
            return LN_2 + log_sum_exp(&self.energies);
        }
        let (z, sd) = (self.zeta[level], self.sds[level]);
        let mut acc = LogSumExp::new();
        let mut xs = Vec::with_capacity(if level == 0 { self.m } else { 0 });
        let mut g = vec![0.0; n * n];
        for _ in 0..self.m {
            for (dst, src) in g.iter_mut().zip(partial) {
                let j: f64 = rng.sample(StandardNormal);
                *dst = src + sd * j;
            }
            let x = z * self.level(level + 1, &g, rng);
            acc.add(x);
            if level == 0 {
                xs.push(x);
            }
        }
        let lse = acc.value();
        if level == 0 {
            // relative variance of the weights exp(zeta_0 x_i)
            let s2: f64 = xs.iter().map(|x| (2.0 * (x - lse)).exp()).sum();
            self.top_relvar = (self.m as f64 * s2 - 1.0).max(0.0);
        }
        (lse - (self.m as f64).ln()) / z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_single_spin() {
        let params = ModelParams::new(vec![0.5], vec![1.0]).unwrap();
        let target = LN_2 + 0.25;
        let d = pressure_direct(&params, 1, &CascadeConfig::default(), 6000, 1).unwrap();
        assert!(d.within(target, 3.0), "{d:?}");
        let r = pressure_recursive(&params, 1, 400, 200, 2).unwrap();
        assert!(r.estimate.within(target, 3.0), "{r:?}");
        assert!(r.plug_in_bias > 0.0 && r.plug_in_bias < 0.01);
    }

    #[test]
    fn vanishing_coupling() {
        let params = ModelParams::new(vec![0.3, 0.6], vec![0.5e-8, 1e-8]).unwrap();
        let d = pressure_direct(&params, 5, &CascadeConfig::new(4, 2), 4, 3).unwrap();
        assert!((d.mean - LN_2).abs() < 1e-6);
        let r = pressure_recursive(&params, 5, 4, 4, 3).unwrap();
        assert!((r.estimate.mean - LN_2).abs() < 1e-6);
    }

    #[test]
    fn annealed_limit() {
        let params = ModelParams::new(vec![0.999], vec![0.8]).unwrap();
        let r = pressure_recursive(&params, 1, 2000, 100, 4).unwrap();
        let target = LN_2 + 0.32;
        assert!(
            (r.estimate.mean - target).abs() < 3.0 * r.estimate.stderr + 0.005,
            "{r:?}"
        );
    }

    #[test]
    fn direct_and_recursive_agree() {
        let params = ModelParams::new(vec![0.3, 0.7], vec![0.5, 1.0]).unwrap();
        let d = pressure_direct(&params, 4, &CascadeConfig::new(24, 16), 600, 5).unwrap();
        let r = pressure_recursive(&params, 4, 48, 300, 6).unwrap();
        let se = (d.stderr.powi(2) + r.estimate.stderr.powi(2)).sqrt();
        assert!((d.mean - r.estimate.mean).abs() < 3.0 * se, "{d:?} {r:?}");
    }

    #[test]
    fn reproducible() {
        let params = ModelParams::new(vec![0.5], vec![1.0]).unwrap();
        let a = pressure_direct(&params, 3, &CascadeConfig::new(4, 2), 10, 9).unwrap();
        let b = pressure_direct(&params, 3, &CascadeConfig::new(4, 2), 10, 9).unwrap();
        assert_eq!(a, b);
        let c = pressure_recursive(&params, 3, 8, 10, 9).unwrap();
        let e = pressure_recursive(&params, 3, 8, 10, 9).unwrap();
        assert_eq!(c, e);
    }

    #[test]
    fn errors() {
        let params = ModelParams::new(vec![0.5], vec![1.0]).unwrap();
        assert!(matches!(
            pressure_direct(&params, 30, &CascadeConfig::default(), 4, 0),
            Err(Error::NTooLarge { .. })
        ));
        assert!(matches!(
            pressure_recursive(&params, 2, 1, 4, 0),
            Err(Error::InsufficientSamples(_))
        ));
    }
}
