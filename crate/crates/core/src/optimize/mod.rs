//! Minimization of the Parisi functional over trial points and the
//! variational gap against finite-N pressure estimates.

mod nelder_mead;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, PressureEstimate};
use crate::parisi::{parisi_recursion, TrialPoint};
use crate::rng::{tag, StreamKey};
use crate::rpc::RecursionMethod;

pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};

/// Floor added to every softmax share so points stay strictly separated.
const SHARE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizationConfig {
    /// Trial depths `k >= r`; empty means `(r, r+1, r+2, r+4)`.
    pub k_schedule: Vec<usize>,
    pub restarts: usize,
    /// Evaluation budget per restart.
    pub max_evals: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Evaluator used inside the search; `None` picks a fast quadrature.
    pub search_method: Option<RecursionMethod>,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        OptimizationConfig {
            k_schedule: Vec::new(),
            restarts: 8,
            max_evals: 2000,
            tolerance: 1e-6,
            seed: 0,
            search_method: None,
        }
    }
}

impl OptimizationConfig {
    pub fn schedule(&self, r: usize) -> Vec<usize> {
        if self.k_schedule.is_empty() {
            vec![r, r + 1, r + 2, r + 4]
        } else {
            self.k_schedule.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizationStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k: usize,
    pub restart: usize,
    pub eval: usize,
    pub xi: Vec<f64>,
    pub q: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_trial: TrialPoint,
    /// `parisi_recursion(best_trial)` with the default evaluator.
    pub best_value: f64,
    /// Best value reached for each `k` of the schedule, nonincreasing.
    pub per_k: Vec<(usize, f64)>,
    pub eval_count: usize,
    pub status: OptimizationStatus,
    pub trace: Vec<TraceEntry>,
}

/// Map from unconstrained reals to trial points with `k` levels and a
/// fixed number of free `xi` in each gap `(zeta_{l-1}, zeta_l)`, `l >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reparam {
    params: ModelParams,
    /// Free points per gap `l = 1..=r`.
    counts: Vec<usize>,
    k: usize,
}

fn softmax_floor(u: &[f64]) -> Vec<f64> {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = u.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    let norm = 1.0 + u.len() as f64 * SHARE_FLOOR;
    e.iter().map(|x| (x / s + SHARE_FLOOR) / norm).collect()
}

fn softmax_floor_inverse(shares: &[f64]) -> Vec<f64> {
    let norm = 1.0 + shares.len() as f64 * SHARE_FLOOR;
    shares
        .iter()
        .map(|s| (s * norm - SHARE_FLOOR).max(1e-300).ln())
        .collect()
}

impl Reparam {
    pub fn new(params: &ModelParams, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != params.depth() {
            return Err(Error::DepthMismatch(format!(
                "{} gap counts for depth {}",
                counts.len(),
                params.depth()
            )));
        }
        let k = params.depth() + counts.iter().sum::<usize>();
        Ok(Reparam {
            params: params.clone(),
            counts,
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).map(|c| c + 1).sum::<usize>() + self.k
    }

    fn gap(&self, l: usize) -> (f64, f64) {
        (
            self.params.zeta_at(l as isize - 1),
            self.params.zeta_at(l as isize),
        )
    }

    pub fn trial(&self, u: &[f64]) -> Result<TrialPoint> {
        let mut xi = self.params.zeta().to_vec();
        let mut pos = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (a, b) = self.gap(i + 1);
            let shares = softmax_floor(&u[pos..pos + c + 1]);
            pos += c + 1;
            let mut acc = 0.0;
            for s in &shares[..c] {
                acc += s;
                xi.push(a + (b - a) * acc);
            }
        }
        xi.sort_by(f64::total_cmp);
        let inc = softmax_floor(&u[pos..pos + self.k]);
        let mut q = Vec::with_capacity(self.k + 1);
        q.push(0.0);
        let mut acc = 0.0;
        for d in &inc[..self.k - 1] {
            acc += d;
            q.push(acc.min(1.0));
        }
        q.push(1.0);
        TrialPoint::new(&self.params, xi, q).map_err(|e| Error::InfeasibleStart(e.to_string()))
    }

    /// Coordinates of `trial`, which must have this layout.
    pub fn coords(&self, trial: &TrialPoint) -> Result<Vec<f64>> {
        if trial.k() != self.k {
            return Err(Error::InfeasibleStart(format!(
                "trial has k = {}, layout expects {}",
                trial.k(),
                self.k
            )));
        }
        let mut u = Vec::with_capacity(self.dim());
        for (i, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (a, b) = self.gap(i + 1);
            let inside: Vec<f64> = trial.xi().iter().copied().filter(|&x| x > a && x < b).collect();
            if inside.len() != c {
                return Err(Error::InfeasibleStart(format!(
                    "gap {} holds {} points, layout expects {c}",
                    i + 1,
                    inside.len()
                )));
            }
            let mut shares = Vec::with_capacity(c + 1);
            let mut prev = a;
            for x in inside.iter().chain(std::iter::once(&b)) {
                shares.push((x - prev) / (b - a));
                prev = *x;
            }
            u.extend(softmax_floor_inverse(&shares));
        }
        let inc: Vec<f64> = trial.q().windows(2).map(|w| w[1] - w[0]).collect();
        u.extend(softmax_floor_inverse(&inc));
        Ok(u)
    }
}

/// All ways to place `free` points into `gaps` gaps.
fn compositions(free: usize, gaps: usize) -> Vec<Vec<usize>> {
    if gaps == 1 {
        return vec![vec![free]];
    }
    (0..=free)
        .rev()
        .flat_map(|first| {
            compositions(free - first, gaps - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn search_method(config: &OptimizationConfig, k: usize) -> RecursionMethod {
    config.search_method.unwrap_or(if 16f64.powi(k as i32) <= 1e5 {
        RecursionMethod::Quadrature { nodes: 16 }
    } else {
        RecursionMethod::Grid {
            nodes: 24,
            spacing: 0.04,
        }
    })
}

/// Inserts new levels that duplicate an existing one, leaving `P` unchanged:
/// each new `xi` halves the widest interval of a gap `l >= 1` and copies the
/// `q` of its left neighbour.
fn refine(trial: &TrialPoint, extra: usize) -> Result<TrialPoint> {
    let params = trial.params();
    let mut xi = trial.xi().to_vec();
    let mut q = trial.q().to_vec();
    for _ in 0..extra {
        let mut best: Option<(f64, usize)> = None;
        // candidate intervals (xi_{m-1}, xi_m) with xi_{-1} clipped at zeta_0 and xi_k = 1
        let bounds: Vec<f64> = xi.iter().copied().chain(std::iter::once(1.0)).collect();
        for m in 1..bounds.len() {
            if bounds[m - 1] < params.zeta()[0] {
                continue;
            }
            let width = bounds[m] - bounds[m - 1];
            if best.is_none_or(|(w, _)| width > w) {
                best = Some((width, m));
            }
        }
        let (_, m) = best.ok_or_else(|| Error::InfeasibleStart("no gap to refine".into()))?;
        let new = 0.5 * (bounds[m - 1] + bounds[m]);
        xi.insert(m, new);
        q.insert(m + 1, q[m]);
    }
    TrialPoint::new(params, xi, q).map_err(|e| Error::InfeasibleStart(e.to_string()))
}

fn gap_counts(trial: &TrialPoint) -> Vec<usize> {
    let params = trial.params();
    (1..=params.depth())
        .map(|l| {
            let (a, b) = (params.zeta_at(l as isize - 1), params.zeta_at(l as isize));
            trial.xi().iter().filter(|&&x| x > a && x < b).count()
        })
        .collect()
}

struct RestartOutcome {
    trial: TrialPoint,
    value: f64,
    evals: usize,
    converged: bool,
    trace: Vec<TraceEntry>,
}

fn run_restart(
    layout: &Reparam,
    start: Vec<f64>,
    method: RecursionMethod,
    config: &OptimizationConfig,
    k: usize,
    restart: usize,
) -> Result<RestartOutcome> {
    let objective = |u: &[f64]| {
        layout
            .trial(u)
            .and_then(|t| parisi_recursion(&t, method))
            .map(|v| v.value)
            .unwrap_or(f64::INFINITY)
    };
    let opts = NelderMeadOptions {
        max_evals: config.max_evals,
        f_tol: config.tolerance * 1e-2,
        x_tol: 1e-6,
        initial_step: 0.7,
    };
    let res = nelder_mead(objective, &start, &opts);
    let trial = layout.trial(&res.x)?;
    let trace = res
        .improvements
        .iter()
        .map(|(eval, u, value)| {
            let t = layout.trial(u)?;
            Ok(TraceEntry {
                k,
                restart,
                eval: *eval,
                xi: t.xi().to_vec(),
                q: t.q().to_vec(),
                value: *value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RestartOutcome {
        trial,
        value: res.value,
        evals: res.evals,
        converged: res.converged,
        trace,
    })
}

/// Multi-start simplex search over trial points for each `k` of the
/// schedule. Restart 0 at each `k > r` starts from the previous best
/// refined without changing its value, so results never get worse along
/// the schedule.
pub fn minimize_parisi(params: &ModelParams, config: &OptimizationConfig) -> Result<OptimizationResult> {
    let r = params.depth();
    let schedule = config.schedule(r);
    if let Some(&bad) = schedule.iter().find(|&&k| k < r) {
        return Err(Error::InfeasibleStart(format!("k = {bad} is below the depth r = {r}")));
    }
    if schedule.is_empty() || config.restarts == 0 {
        return Err(Error::Config("optimization needs a schedule and at least one restart".into()));
    }
    if !(config.tolerance > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let key = StreamKey::new(config.seed).child(tag::OPTIMIZER);

    let mut best: Option<(TrialPoint, f64, bool)> = None;
    let mut per_k = Vec::new();
    let mut trace = Vec::new();
    let mut evals = 0;
    for &k in &schedule {
        let method = search_method(config, k);
        let layouts: Vec<Vec<usize>> = compositions(k - r, r);
        let warm = match &best {
            Some((t, _, _)) if t.k() <= k => Some(refine(t, k - t.k())?),
            _ => None,
        };
        let outcomes = (0..config.restarts)
            .into_par_iter()
            .map(|restart| {
                let (layout, start) = match (&warm, restart) {
                    (Some(w), 0) => {
                        let layout = Reparam::new(params, gap_counts(w))?;
                        let start = layout.coords(w)?;
                        (layout, start)
                    }
                    _ => {
                        let counts = layouts[restart % layouts.len()].clone();
                        let layout = Reparam::new(params, counts)?;
                        let start = if restart == 0 {
                            vec![0.0; layout.dim()]
                        } else {
                            let mut rng = key.child(k as u64).child(restart as u64).rng();
                            (0..layout.dim()).map(|_| rng.random_range(-1.5..1.5)).collect()
                        };
                        (layout, start)
                    }
                };
                run_restart(&layout, start, method, config, k, restart)
            })
            .collect::<Result<Vec<RestartOutcome>>>()?;

        for o in outcomes {
            evals += o.evals;
            trace.extend(o.trace);
            let better = best.as_ref().is_none_or(|(_, v, _)| o.value < *v);
            if better {
                best = Some((o.trial, o.value, o.converged));
            }
        }
        per_k.push((k, best.as_ref().expect("at least one restart").1));
    }

    let (trial, _, converged) = best.expect("schedule is nonempty");
    let best_value = parisi_recursion(&trial, RecursionMethod::Auto)?.value;
    Ok(OptimizationResult {
        best_trial: trial,
        best_value,
        per_k,
        eval_count: evals,
        status: if converged {
            OptimizationStatus::Converged
        } else {
            OptimizationStatus::BudgetExhausted
        },
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: usize,
    pub p_hat: f64,
    pub stderr: f64,
    pub best_value: f64,
    pub gap: f64,
    /// `gap >= -3 stderr`.
    pub bound_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rows: Vec<GapRow>,
    pub all_bounds_hold: bool,
    /// Each gap is at most the previous one plus three combined standard errors.
    pub gap_nonincreasing: bool,
}

/// Gap table `best_value - p_N` for the given pressure estimates.
pub fn bound_report(
    params: &ModelParams,
    estimates: &[(usize, PressureEstimate)],
    opt: &OptimizationResult,
) -> Result<BoundReport> {
    if opt.best_trial.params() != params {
        return Err(Error::MismatchedParams);
    }
    let mut sorted = estimates.to_vec();
    sorted.sort_by_key(|(n, _)| *n);
    let rows: Vec<GapRow> = sorted
        .iter()
        .map(|(n, e)| {
            let gap = opt.best_value - e.mean;
            GapRow {
                n: *n,
                p_hat: e.mean,
                stderr: e.stderr,
                best_value: opt.best_value,
                gap,
                bound_holds: gap >= -3.0 * e.stderr,
            }
        })
        .collect();
    let gap_nonincreasing = rows.windows(2).all(|w| {
        let se = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[1].gap <= w[0].gap + 3.0 * se
    });
    Ok(BoundReport {
        all_bounds_hold: rows.iter().all(|r| r.bound_holds),
        gap_nonincreasing,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parisi::build_trial;
    use crate::quadrature::GaussHermite;
    use std::f64::consts::LN_2;

    fn params(zeta: &[f64], gamma: &[f64]) -> ModelParams {
        ModelParams::new(zeta.to_vec(), gamma.to_vec()).unwrap()
    }

    #[test]
    fn compositions_enumerate() {
        assert_eq!(compositions(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(compositions(0, 3), vec![vec![0, 0, 0]]);
        assert_eq!(compositions(3, 3).len(), 10);
    }

    #[test]
    fn reparam_round_trip_and_feasibility() {
        let p = params(&[0.3, 0.7], &[0.5, 1.0]);
        let layout = Reparam::new(&p, vec![2, 1]).unwrap();
        assert_eq!(layout.k(), 5);
        let mut rng = StreamKey::new(3).rng();
        for _ in 0..200 {
            let u: Vec<f64> = (0..layout.dim()).map(|_| rng.random_range(-20.0..20.0)).collect();
            let t = layout.trial(&u).unwrap();
            assert_eq!(t.k(), 5);
            let back = layout.trial(&layout.coords(&t).unwrap()).unwrap();
            for (a, b) in t.xi().iter().zip(back.xi()) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in t.q().iter().zip(back.q()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn refinement_keeps_value() {
        let p = params(&[0.4], &[1.2]);
        let t = build_trial(&p, &[0.7], &[0.0, 0.3, 1.0]).unwrap();
        let r = refine(&t, 2).unwrap();
        assert_eq!(r.k(), 4);
        let a = parisi_recursion(&t, RecursionMethod::Auto).unwrap().value;
        let b = parisi_recursion(&r, RecursionMethod::Auto).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn vanishing_coupling_minimum_is_log_two() {
        let p = params(&[0.5], &[1e-6]);
        let cfg = OptimizationConfig {
            k_schedule: vec![1, 2],
            restarts: 2,
            max_evals: 200,
            ..Default::default()
        };
        let res = minimize_parisi(&p, &cfg).unwrap();
        assert!((res.best_value - LN_2).abs() < 1e-9);
    }

    #[test]
    fn small_coupling_reaches_one_level_candidate() {
        let (z, g) = (0.5, 0.3);
        let p = params(&[z], &[g]);
        let gh = GaussHermite::new(64);
        let oracle = gh
            .expect(|x| (2.0 * (2f64.sqrt() * g * x).cosh()).powf(z))
            .ln()
            / z
            - z * g * g / 2.0;
        let cfg = OptimizationConfig {
            k_schedule: vec![1, 2, 3],
            restarts: 3,
            max_evals: 400,
            ..Default::default()
        };
        let res = minimize_parisi(&p, &cfg).unwrap();
        assert!(res.best_value <= oracle + 1e-6, "{} {oracle}", res.best_value);
        assert!(res.per_k.windows(2).all(|w| w[1].1 <= w[0].1 + cfg.tolerance));
        assert!(!res.trace.is_empty());
    }

    #[test]
    fn deterministic_trace() {
        let p = params(&[0.3, 0.7], &[0.6, 1.2]);
        let cfg = OptimizationConfig {
            k_schedule: vec![2, 3],
            restarts: 3,
            max_evals: 150,
            seed: 4,
            ..Default::default()
        };
        let a = minimize_parisi(&p, &cfg).unwrap();
        let b = minimize_parisi(&p, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_schedule() {
        let p = params(&[0.3, 0.7], &[0.6, 1.2]);
        let cfg = OptimizationConfig {
            k_schedule: vec![1],
            ..Default::default()
        };
        assert!(matches!(minimize_parisi(&p, &cfg), Err(Error::InfeasibleStart(_))));
    }

    #[test]
    fn report_rows_and_mismatch() {
        let p = params(&[0.5], &[1.0]);
        let cfg = OptimizationConfig {
            k_schedule: vec![1],
            restarts: 1,
            max_evals: 50,
            ..Default::default()
        };
        let res = minimize_parisi(&p, &cfg).unwrap();
        let closed = LN_2 + 0.25;
        let est = PressureEstimate {
            mean: closed,
            stderr: 0.001,
            replicas: 100,
            seed: 0,
        };
        let rep = bound_report(&p, &[(1, est)], &res).unwrap();
        assert!(rep.rows[0].gap >= 0.0);
        assert!(rep.all_bounds_hold);
        let other = params(&[0.4], &[1.0]);
        assert!(matches!(bound_report(&other, &[(1, est)], &res), Err(Error::MismatchedParams)));
    }
}
