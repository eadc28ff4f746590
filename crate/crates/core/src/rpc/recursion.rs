use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;
use crate::rng::{tag, StreamKey};
use crate::stats::{LogSumExp, Moments};

use super::cascade::validate_zeta;
use super::field::CovarianceProfile;
use super::terminal::Terminal;

/// Nested quadrature is abandoned beyond this many terminal evaluations.
pub const MAX_QUADRATURE_POINTS: f64 = 1e7;
pub const DEFAULT_NODES: usize = 32;
pub const DEFAULT_GRID_SPACING: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecursionMethod {
    /// Nested quadrature when affordable, otherwise the grid scheme for
    /// smooth sum-only terminals, otherwise Monte Carlo.
    Auto,
    /// Tensor Gauss-Hermite over every level.
    Quadrature { nodes: usize },
    /// Level-by-level quadrature with the intermediate `X_l` tabulated on a
    /// lattice of the partial field sum. Sum-only smooth terminals only.
    Grid { nodes: usize, spacing: f64 },
    /// Nested Monte Carlo with `samples_per_level` inner draws per level.
    MonteCarlo {
        samples_per_level: usize,
        replicas: usize,
        seed: u64,
    },
}

impl Default for RecursionMethod {
    fn default() -> Self {
        RecursionMethod::Auto
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodUsed {
    Quadrature,
    Grid,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionValue {
    pub value: f64,
    /// Zero for the deterministic methods.
    pub stderr: f64,
    pub method: MethodUsed,
}

/// Result of removing zero-variance levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Collapsed {
    pub profile: CovarianceProfile,
    pub zeta: Vec<f64>,
    /// Original index of each surviving level `1..`.
    pub kept_levels: Vec<usize>,
}

/// Drops every level `l >= 1` with `v_l = v_{l-1}` together with
/// `zeta_{l-1}`. On such a level the increment is identically zero, so
/// `X_{l-1} = X_l` and the recursion is unchanged.
pub fn collapse_degenerate_levels(profile: &CovarianceProfile, zeta: &[f64]) -> Result<Collapsed> {
    profile.check_depth(zeta.len())?;
    let v = profile.values();
    let mut values = vec![v[0]];
    let mut new_zeta = Vec::new();
    let mut kept = Vec::new();
    for l in 1..v.len() {
        if v[l] != v[l - 1] {
            values.push(v[l]);
            new_zeta.push(zeta[l - 1]);
            kept.push(l);
        }
    }
    Ok(Collapsed {
        profile: CovarianceProfile::new(values)?,
        zeta: new_zeta,
        kept_levels: kept,
    })
}

/// `X_0` of the backward recursion `X_l = (1/zeta_l) log E_l exp(zeta_l X_{l+1})`
/// with `X_r` = `terminal` applied to the tree field of the given profile.
/// A nonzero `v_0` enters as a root shift averaged outside the recursion.
pub fn recursion_value(
    zeta: &[f64],
    terminal: &Terminal,
    profile: &CovarianceProfile,
    method: RecursionMethod,
) -> Result<RecursionValue> {
    validate_zeta(zeta)?;
    profile.check_depth(zeta.len())?;
    terminal.check_integrable(zeta, profile)?;
    let c = collapse_degenerate_levels(profile, zeta)?;
    let terminal = if c.kept_levels.len() == zeta.len() {
        terminal.clone()
    } else {
        terminal.reindexed(&c.kept_levels, zeta.len())
    };
    let sds = c.profile.increment_sds();
    let depth = c.zeta.len();
    let root_random = sds[0] > 0.0;

    let method = match method {
        RecursionMethod::Auto => {
            let points = (DEFAULT_NODES as f64).powi(depth as i32 + root_random as i32);
            if points <= MAX_QUADRATURE_POINTS && terminal.is_smooth() {
                RecursionMethod::Quadrature {
                    nodes: DEFAULT_NODES,
                }
            } else if terminal.is_sum_only() && terminal.is_smooth() {
                RecursionMethod::Grid {
                    nodes: DEFAULT_NODES,
                    spacing: DEFAULT_GRID_SPACING,
                }
            } else {
                default_monte_carlo(depth)
            }
        }
        RecursionMethod::Quadrature { nodes } => {
            let points = (nodes as f64).powi(depth as i32 + root_random as i32);
            if points > MAX_QUADRATURE_POINTS {
                default_monte_carlo(depth)
            } else {
                method
            }
        }
        m => m,
    };

    let (value, stderr, used) = match method {
        RecursionMethod::Quadrature { nodes } => {
            require_smooth(&terminal)?;
            let v = nested_quadrature(&c.zeta, &terminal, &sds, &GaussHermite::new(nodes.max(1)));
            (v, 0.0, MethodUsed::Quadrature)
        }
        RecursionMethod::Grid { nodes, spacing } => {
            require_smooth(&terminal)?;
            if !terminal.is_sum_only() {
                return Err(Error::UnsupportedTerminal(format!(
                    "grid recursion needs a terminal of the field sum, got {}",
                    terminal.name()
                )));
            }
            if !(spacing > 0.0) {
                return Err(Error::Config(format!("grid spacing {spacing} must be positive")));
            }
            let gh = GaussHermite::new(nodes.max(1)).pruned(1e-16);
            let v = grid_recursion(&c.zeta, &terminal, &sds, &gh, spacing);
            (v, 0.0, MethodUsed::Grid)
        }
        RecursionMethod::MonteCarlo {
            samples_per_level,
            replicas,
            seed,
        } => {
            if samples_per_level < 1 || replicas < 2 {
                return Err(Error::InsufficientSamples(format!(
                    "need at least 1 sample per level and 2 replicas, got {samples_per_level} and {replicas}"
                )));
            }
            let key = StreamKey::new(seed).child(tag::RECURSION);
            let values: Vec<f64> = (0..replicas)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = key.child(rep as u64).rng();
                    nested_monte_carlo(&c.zeta, &terminal, &sds, samples_per_level, &mut rng)
                })
                .collect();
            let m = Moments::from_slice(&values);
            (m.mean(), m.stderr(), MethodUsed::MonteCarlo)
        }
        RecursionMethod::Auto => unreachable!("auto resolved above"),
    };
    if !value.is_finite() {
        return Err(Error::DivergentTerminal(format!(
            "recursion with terminal {} produced {value}",
            terminal.name()
        )));
    }
    Ok(RecursionValue {
        value,
        stderr,
        method: used,
    })
}

fn default_monte_carlo(depth: usize) -> RecursionMethod {
    let per_level = (2e5f64).powf(1.0 / depth.max(1) as f64).floor() as usize;
    RecursionMethod::MonteCarlo {
        samples_per_level: per_level.clamp(4, 1000),
        replicas: 64,
        seed: 0,
    }
}

fn require_smooth(terminal: &Terminal) -> Result<()> {
    if terminal.is_smooth() {
        Ok(())
    } else {
        Err(Error::UnsupportedTerminal(format!(
            "quadrature needs a smooth terminal, got {}",
            terminal.name()
        )))
    }
}

fn nested_quadrature(zeta: &[f64], terminal: &Terminal, sds: &[f64], gh: &GaussHermite) -> f64 {
    let mut incr = vec![0.0; sds.len()];
    if sds[0] > 0.0 {
        gh.nodes()
            .iter()
            .zip(gh.weights())
            .map(|(&x, &w)| {
                incr[0] = sds[0] * x;
                w * nested_level(0, zeta, terminal, sds, gh, &mut incr)
            })
            .sum()
    } else {
        nested_level(0, zeta, terminal, sds, gh, &mut incr)
    }
}

fn nested_level(
    level: usize,
    zeta: &[f64],
    terminal: &Terminal,
    sds: &[f64],
    gh: &GaussHermite,
    incr: &mut [f64],
) -> f64 {
    if level == zeta.len() {
        return terminal.eval(incr);
    }
    let (z, s) = (zeta[level], sds[level + 1]);
    let mut acc = LogSumExp::new();
    for (&x, &lw) in gh.nodes().iter().zip(gh.log_weights()) {
        incr[level + 1] = s * x;
        acc.add(lw + z * nested_level(level + 1, zeta, terminal, sds, gh, incr));
    }
    acc.value() / z
}

#[inline]
fn lagrange4(values: &[f64], offset: isize, u: f64) -> f64 {
    let i0 = u.floor();
    let t = u - i0;
    let base = (i0 as isize + offset - 1) as usize;
    let f = &values[base..base + 4];
    let (tm1, tm2, tp1) = (t - 1.0, t - 2.0, t + 1.0);
    -t * tm1 * tm2 / 6.0 * f[0] + tp1 * tm1 * tm2 / 2.0 * f[1] - tp1 * t * tm2 / 2.0 * f[2]
        + tp1 * t * tm1 / 6.0 * f[3]
}

fn grid_recursion(zeta: &[f64], terminal: &Terminal, sds: &[f64], gh: &GaussHermite, dh: f64) -> f64 {
    let depth = zeta.len();
    let xmax = gh.max_node();
    // half-widths (in lattice steps) of the tables for X_0 .. X_{depth-1}
    let mut half = Vec::with_capacity(depth + 1);
    half.push((sds[0] * xmax / dh).ceil() as isize + 2);
    for l in 1..=depth {
        let prev = half[l - 1];
        half.push(prev + (sds[l] * xmax / dh).ceil() as isize + 2);
    }

    let mut upper: Option<Vec<f64>> = None;
    for l in (0..depth).rev() {
        let n = half[l];
        let (z, s) = (zeta[l], sds[l + 1]);
        let table: Vec<f64> = (-n..=n)
            .map(|i| {
                let h = i as f64 * dh;
                let mut acc = LogSumExp::new();
                for (&x, &lw) in gh.nodes().iter().zip(gh.log_weights()) {
                    let hx = h + s * x;
                    let inner = match &upper {
                        None => terminal.eval_sum(hx),
                        Some(tab) => lagrange4(tab, half[l + 1], hx / dh),
                    };
                    acc.add(lw + z * inner);
                }
                acc.value() / z
            })
            .collect();
        upper = Some(table);
    }

    let at_root = |h: f64| match &upper {
        None => terminal.eval_sum(h),
        Some(tab) => lagrange4(tab, half[0], h / dh),
    };
    if sds[0] > 0.0 {
        gh.expect(|x| at_root(sds[0] * x))
    } else {
        at_root(0.0)
    }
}

fn nested_monte_carlo<R: Rng>(
    zeta: &[f64],
    terminal: &Terminal,
    sds: &[f64],
    m: usize,
    rng: &mut R,
) -> f64 {
    let mut incr = vec![0.0; sds.len()];
    let j: f64 = rng.sample(StandardNormal);
    incr[0] = sds[0] * j;
    mc_level(0, zeta, terminal, sds, m, rng, &mut incr)
}

fn mc_level<R: Rng>(
    level: usize,
    zeta: &[f64],
    terminal: &Terminal,
    sds: &[f64],
    m: usize,
    rng: &mut R,
    incr: &mut [f64],
) -> f64 {
    if level == zeta.len() {
        return terminal.eval(incr);
    }
    let (z, s) = (zeta[level], sds[level + 1]);
    let mut acc = LogSumExp::new();
    for _ in 0..m {
        let j: f64 = rng.sample(StandardNormal);
        incr[level + 1] = s * j;
        acc.add(z * mc_level(level + 1, zeta, terminal, sds, m, rng, incr));
    }
    (acc.value() - (m as f64).ln()) / z
}

/// Stable form of `(E Z^xi)^(1/xi)` for `Z = exp(values)` under the
/// probability weights `weights`, i.e. `(1/xi) log E exp(xi * values)`.
pub fn smoothing_step(values: &[f64], weights: &[f64], xi: f64) -> f64 {
    let mut acc = LogSumExp::new();
    for (v, w) in values.iter().zip(weights) {
        acc.add(w.ln() + xi * v);
    }
    acc.value() / xi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rpc::terminal::CustomTerminal;

    fn quad() -> RecursionMethod {
        RecursionMethod::Quadrature { nodes: 32 }
    }

    fn grid() -> RecursionMethod {
        RecursionMethod::Grid {
            nodes: 32,
            spacing: DEFAULT_GRID_SPACING,
        }
    }

    #[test]
    fn constant_is_fixed_point() {
        let p = CovarianceProfile::new(vec![0.0, 0.5, 1.3]).unwrap();
        for m in [quad(), grid()] {
            let v = recursion_value(&[0.3, 0.6], &Terminal::Constant(2.5), &p, m).unwrap();
            assert!((v.value - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_mgf_depth_one() {
        let gamma: f64 = 1.3;
        let p = CovarianceProfile::new(vec![0.0, gamma * gamma]).unwrap();
        for z in [0.1, 0.5, 0.9] {
            let oracle = z * gamma * gamma / 2.0;
            for m in [quad(), grid()] {
                let v = recursion_value(&[z], &Terminal::Field(1.0), &p, m).unwrap();
                assert!((v.value - oracle).abs() < 1e-9, "{m:?} {z} {}", v.value);
            }
        }
    }

    #[test]
    fn gaussian_mgf_nested() {
        // X_r = h: X_0 = sum_l zeta_{l-1} (v_l - v_{l-1}) / 2
        let p = CovarianceProfile::new(vec![0.0, 0.4, 1.0, 1.7]).unwrap();
        let zeta = [0.2, 0.5, 0.8];
        let oracle = (0.2 * 0.4 + 0.5 * 0.6 + 0.8 * 0.7) / 2.0;
        for m in [quad(), grid()] {
            let v = recursion_value(&zeta, &Terminal::Field(1.0), &p, m).unwrap();
            assert!((v.value - oracle).abs() < 1e-8, "{m:?} {}", v.value);
        }
    }

    #[test]
    fn root_shift_is_averaged_plainly() {
        let p = CovarianceProfile::new(vec![0.5, 1.5]).unwrap();
        let v = recursion_value(&[0.4], &Terminal::Field(1.0), &p, quad()).unwrap();
        assert!((v.value - 0.4 * 1.0 / 2.0).abs() < 1e-10);
    }

    #[test]
    fn grid_matches_quadrature() {
        let p = CovarianceProfile::new(vec![0.0, 0.3, 0.8, 1.6]).unwrap();
        let zeta = [0.25, 0.55, 0.85];
        for t in [Terminal::LogTwoCosh, Terminal::SoftPlus, Terminal::Quadratic(0.2)] {
            let a = recursion_value(&zeta, &t, &p, quad()).unwrap().value;
            let b = recursion_value(&zeta, &t, &p, grid()).unwrap().value;
            assert!((a - b).abs() < 1e-7, "{t:?} {a} {b}");
        }
    }

    #[test]
    fn quadrature_matches_monte_carlo() {
        let p = CovarianceProfile::new(vec![0.0, 0.5, 1.0]).unwrap();
        let zeta = [0.4, 0.8];
        let q = recursion_value(&zeta, &Terminal::LogTwoCosh, &p, quad()).unwrap();
        let mc = recursion_value(
            &zeta,
            &Terminal::LogTwoCosh,
            &p,
            RecursionMethod::MonteCarlo {
                samples_per_level: 200,
                replicas: 64,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(mc.method, MethodUsed::MonteCarlo);
        assert!(mc.stderr > 0.0);
        assert!((q.value - mc.value).abs() <= 3.0 * mc.stderr, "{} {} {}", q.value, mc.value, mc.stderr);
    }

    #[test]
    fn non_smooth_rejected_by_quadrature() {
        let p = CovarianceProfile::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            recursion_value(&[0.5], &Terminal::Abs, &p, quad()),
            Err(Error::UnsupportedTerminal(_))
        ));
        let auto = recursion_value(&[0.5], &Terminal::Abs, &p, RecursionMethod::Auto).unwrap();
        assert_eq!(auto.method, MethodUsed::MonteCarlo);
    }

    #[test]
    fn divergent_quadratic() {
        let p = CovarianceProfile::new(vec![0.0, 4.0]).unwrap();
        assert!(matches!(
            recursion_value(&[0.5], &Terminal::Quadratic(1.0), &p, quad()),
            Err(Error::DivergentTerminal(_))
        ));
    }

    #[test]
    fn collapse_example() {
        let p = CovarianceProfile::new(vec![0.0, 0.3, 0.3, 1.0]).unwrap();
        let c = collapse_degenerate_levels(&p, &[0.2, 0.5, 0.8]).unwrap();
        assert_eq!(c.profile.values(), &[0.0, 0.3, 1.0]);
        assert_eq!(c.zeta, vec![0.2, 0.8]);
        assert_eq!(c.kept_levels, vec![1, 3]);

        let p2 = CovarianceProfile::new(vec![0.0, 0.3, 1.0]).unwrap();
        let same = collapse_degenerate_levels(&p2, &[0.2, 0.8]).unwrap();
        assert_eq!(same.profile, p2);
        assert_eq!(same.zeta, vec![0.2, 0.8]);
    }

    #[test]
    fn collapse_preserves_value() {
        let p = CovarianceProfile::new(vec![0.0, 0.3, 0.3, 1.0]).unwrap();
        let p2 = CovarianceProfile::new(vec![0.0, 0.3, 1.0]).unwrap();
        for m in [quad(), grid()] {
            let a = recursion_value(&[0.2, 0.5, 0.8], &Terminal::LogTwoCosh, &p, m).unwrap();
            let b = recursion_value(&[0.2, 0.8], &Terminal::LogTwoCosh, &p2, m).unwrap();
            assert!((a.value - b.value).abs() < 1e-12);
        }
        let custom = Terminal::Custom(CustomTerminal::new("lin", true, |x: &[f64]| {
            x[1] + 2.0 * x.last().unwrap()
        }));
        let a = recursion_value(&[0.2, 0.5, 0.8], &custom, &p, quad()).unwrap();
        let b = recursion_value(&[0.2, 0.8], &custom, &p2, quad()).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn smoothing_step_monotone_in_xi() {
        let gh = GaussHermite::new(16);
        let vals: Vec<f64> = gh.nodes().iter().map(|x| (1.3 * x).cosh().ln()).collect();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..20 {
            let s = smoothing_step(&vals, gh.weights(), i as f64 * 0.05);
            assert!(s >= prev - 1e-14);
            prev = s;
        }
    }
}
