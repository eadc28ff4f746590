//! Trial points of the variational space and the Parisi functional.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::{tag, StreamKey};
use crate::rpc::{
    collapse_degenerate_levels, log_partition, recursion_value, CascadeConfig, CascadeSample,
    CovarianceProfile, MethodUsed, RecursionMethod, Terminal, TreeGaussianField,
};
use crate::stats::Moments;

/// A point `x = (xi, gamma~, q)` with `k` levels.
///
/// `xi` holds `xi_0..xi_{k-1}` (always containing every `zeta_l`), `q` and
/// `gamma_tilde` hold `k + 1` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPoint {
    params: ModelParams,
    xi: Vec<f64>,
    q: Vec<f64>,
    gamma_tilde: Vec<f64>,
}

/// Merges `xi_free` into `zeta` and attaches `q`.
pub fn build_trial(params: &ModelParams, xi_free: &[f64], q: &[f64]) -> Result<TrialPoint> {
    for &x in xi_free {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::XiOutOfRange(x));
        }
    }
    let mut xi: Vec<f64> = params.zeta().iter().chain(xi_free).copied().collect();
    xi.sort_by(f64::total_cmp);
    if let Some(w) = xi.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateXi(w[0]));
    }
    TrialPoint::new(params, xi, q.to_vec())
}

impl TrialPoint {
    /// Builds a trial point from the full sequence `xi`.
    pub fn new(params: &ModelParams, xi: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let k = xi.len();
        let mut prev = 0.0;
        for &x in &xi {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::XiOutOfRange(x));
            }
            if x <= prev {
                return Err(Error::DuplicateXi(x));
            }
            prev = x;
        }
        for z in params.zeta() {
            if !xi.contains(z) {
                return Err(Error::DepthMismatch(format!("zeta entry {z} missing from xi")));
            }
        }
        if q.len() != k + 1 {
            return Err(Error::DepthMismatch(format!(
                "q needs {} entries for k = {k}, got {}",
                k + 1,
                q.len()
            )));
        }
        if q[0] != 0.0 || q[k] != 1.0 {
            return Err(Error::EndpointViolation(format!(
                "q_0 = {}, q_k = {}",
                q[0], q[k]
            )));
        }
        if let Some(j) = (1..=k).find(|&j| !(q[j] >= q[j - 1])) {
            return Err(Error::NonMonotoneQ(format!(
                "q_{j} = {} < q_{} = {}",
                q[j],
                j - 1,
                q[j - 1]
            )));
        }
        let gamma_tilde = (0..=k)
            .map(|j| {
                let x = if j < k { xi[j] } else { 1.0 };
                let l = (0..=params.depth())
                    .find(|&l| x <= params.zeta_at(l as isize))
                    .expect("zeta_r = 1 bounds every xi");
                params.gamma_at(l)
            })
            .collect();
        Ok(TrialPoint {
            params: params.clone(),
            xi,
            q,
            gamma_tilde,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn k(&self) -> usize {
        self.xi.len()
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// Entries of `xi` that are not in `zeta`.
    pub fn xi_free(&self) -> Vec<f64> {
        self.xi
            .iter()
            .filter(|x| !self.params.zeta().contains(x))
            .copied()
            .collect()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn gamma_tilde(&self) -> &[f64] {
        &self.gamma_tilde
    }

    /// `v_j = 2 gamma~_j^2 q_j`, the covariance profile of `z`.
    pub fn z_profile(&self) -> CovarianceProfile {
        let v = self
            .gamma_tilde
            .iter()
            .zip(&self.q)
            .map(|(g, q)| 2.0 * g * g * q)
            .collect();
        CovarianceProfile::new(v).expect("gamma~ and q are nondecreasing and nonnegative")
    }

    /// `v_j = (gamma~_j q_j)^2`, the covariance profile of `y`.
    pub fn y_profile(&self) -> CovarianceProfile {
        let v = self
            .gamma_tilde
            .iter()
            .zip(&self.q)
            .map(|(g, q)| (g * q).powi(2))
            .collect();
        CovarianceProfile::new(v).expect("gamma~ and q are nondecreasing and nonnegative")
    }

    /// `(1/2) sum_{j<k} xi_j ((gamma~_{j+1} q_{j+1})^2 - (gamma~_j q_j)^2)`.
    pub fn correction(&self) -> f64 {
        let y = self.y_profile();
        let v = y.values();
        0.5 * (0..self.k()).map(|j| self.xi[j] * (v[j + 1] - v[j])).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParisiMethod {
    Recursion,
    Rpc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParisiValue {
    pub value: f64,
    pub log_z0: f64,
    pub correction: f64,
    pub method: ParisiMethod,
    pub stderr: f64,
}

/// `P(x) = log Z_0 - correction` via the backward recursion from
/// `Z_k = 2cosh(sqrt(2) sum_j J_j sqrt(gamma~_j^2 q_j - gamma~_{j-1}^2 q_{j-1}))`.
pub fn parisi_recursion(trial: &TrialPoint, method: RecursionMethod) -> Result<ParisiValue> {
    let z = recursion_value(trial.xi(), &Terminal::LogTwoCosh, &trial.z_profile(), method)
        .map_err(|e| match e {
            Error::DivergentTerminal(m) => Error::NumericOverflow(m),
            e => e,
        })?;
    let correction = trial.correction();
    Ok(ParisiValue {
        value: z.value - correction,
        log_z0: z.value,
        correction,
        method: ParisiMethod::Recursion,
        stderr: if z.method == MethodUsed::MonteCarlo {
            z.stderr
        } else {
            0.0
        },
    })
}

/// `E log sum nu 2cosh z - E log sum nu exp y` over cascades with
/// parameter `xi` and independent fields `z`, `y`.
pub fn parisi_rpc(
    trial: &TrialPoint,
    config: &CascadeConfig,
    replicas: usize,
    seed: u64,
) -> Result<ParisiValue> {
    if replicas < 2 {
        return Err(Error::InsufficientSamples(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    let zc = collapse_degenerate_levels(&trial.z_profile(), trial.xi())?;
    let yc = collapse_degenerate_levels(&trial.y_profile(), trial.xi())?;
    debug_assert_eq!(zc.kept_levels, yc.kept_levels);
    let key = StreamKey::new(seed);
    let rows = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let k = key.child(rep as u64);
            let cascade = CascadeSample::sample(&zc.zeta, config, k.child(tag::CASCADE))?;
            let z = TreeGaussianField::sample(&zc.profile, cascade.shape(), k.child(tag::FIELD))?;
            let y = TreeGaussianField::sample(&yc.profile, cascade.shape(), k.child(tag::FIELD_Y))?;
            Ok((
                log_partition(&cascade, &z, &Terminal::LogTwoCosh),
                log_partition(&cascade, &y, &Terminal::Field(1.0)),
            ))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (mut a, mut b, mut d) = (Moments::new(), Moments::new(), Moments::new());
    for (za, yb) in &rows {
        a.push(*za);
        b.push(*yb);
        d.push(za - yb);
    }
    Ok(ParisiValue {
        value: a.mean() - b.mean(),
        log_z0: a.mean(),
        correction: b.mean(),
        method: ParisiMethod::Rpc,
        stderr: d.stderr(),
    })
}
