use std::f64::consts::LN_2;

use serde::Serialize;

use crate::error::Result;
use crate::model::ModelParams;
use crate::optimize::{minimize_parisi, OptimizationConfig};
use crate::parisi::{build_trial, parisi_recursion, parisi_rpc};
use crate::quadrature::GaussHermite;
use crate::rpc::{
    recursion_value, rpc_representation_estimate, CascadeConfig, CovarianceProfile, RecursionMethod, Terminal,
};
use crate::simulate::{
    cavity_functional, gg_delta, gibbs_overlap_distribution, pressure_direct, pressure_recursive, GgSettings,
    TestFunction,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, body: impl FnOnce() -> Result<(bool, String)>) -> SelfCheck {
    match body() {
        Ok((passed, detail)) => SelfCheck { name, passed, detail },
        Err(e) => SelfCheck {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn params(zeta: &[f64], gamma: &[f64]) -> Result<ModelParams> {
    ModelParams::new(zeta.to_vec(), gamma.to_vec())
}

/// Closed-form and exact-identity examples, each at a few seconds' cost.
pub fn run_selftest() -> Vec<SelfCheck> {
    let closed = LN_2 + 0.25;
    vec![
        check("closed-form pressure, direct", || {
            let e = pressure_direct(&params(&[0.5], &[1.0])?, 1, &CascadeConfig::default(), 4000, 1)?;
            Ok((e.within(closed, 3.0), format!("{:.5} +- {:.5} vs {closed:.6}", e.mean, e.stderr)))
        }),
        check("closed-form pressure, recursive", || {
            let e = pressure_recursive(&params(&[0.5], &[1.0])?, 1, 400, 200, 2)?.estimate;
            Ok((e.within(closed, 3.0), format!("{:.5} +- {:.5} vs {closed:.6}", e.mean, e.stderr)))
        }),
        check("vanishing coupling pressure", || {
            let p = params(&[0.3, 0.6], &[0.5e-8, 1e-8])?;
            let e = pressure_direct(&p, 5, &CascadeConfig::new(4, 2), 4, 3)?;
            Ok(((e.mean - LN_2).abs() < 1e-6, format!("{:.9}", e.mean)))
        }),
        check("Gaussian terminal recursion", || {
            let p = CovarianceProfile::new(vec![0.0, 0.4, 1.0, 1.7])?;
            let oracle = (0.2 * 0.4 + 0.5 * 0.6 + 0.8 * 0.7) / 2.0;
            let v = recursion_value(&[0.2, 0.5, 0.8], &Terminal::Field(1.0), &p, RecursionMethod::Auto)?;
            Ok(((v.value - oracle).abs() < 1e-8, format!("{:.10} vs {oracle:.10}", v.value)))
        }),
        check("degenerate level collapse", || {
            let p = params(&[0.4], &[1.2])?;
            let a = parisi_recursion(&build_trial(&p, &[0.7], &[0.0, 0.3, 1.0])?, RecursionMethod::Auto)?.value;
            let b = parisi_recursion(&build_trial(&p, &[0.55, 0.7], &[0.0, 0.3, 0.3, 1.0])?, RecursionMethod::Auto)?
                .value;
            Ok(((a - b).abs() < 1e-10, format!("|diff| = {:.1e}", (a - b).abs())))
        }),
        check("cascade representation of the recursion", || {
            let p = CovarianceProfile::new(vec![0.0, 1.0])?;
            let exact = recursion_value(&[0.4], &Terminal::LogTwoCosh, &p, RecursionMethod::Auto)?.value;
            let e = rpc_representation_estimate(&[0.4], &Terminal::LogTwoCosh, &p, &CascadeConfig::default(), 400, 7)?;
            Ok((e.within(exact, 3.0), format!("{:.5} +- {:.5} vs {exact:.6}", e.mean, e.stderr)))
        }),
        check("Parisi functional, recursion vs cascade", || {
            let t = build_trial(&params(&[0.3, 0.7], &[0.5, 1.0])?, &[0.5], &[0.0, 0.2, 0.5, 1.0])?;
            let a = parisi_recursion(&t, RecursionMethod::Auto)?.value;
            let b = parisi_rpc(&t, &CascadeConfig::default(), 300, 8)?;
            Ok(((a - b.value).abs() <= 3.0 * b.stderr, format!("{a:.6} vs {:.6} +- {:.6}", b.value, b.stderr)))
        }),
        check("ancestor-level law", || {
            let p = params(&[0.3, 0.7], &[0.5, 1.0])?;
            let d = gibbs_overlap_distribution(&p, 4, &CascadeConfig::default(), 200, 50, 9)?;
            let law = [0.3, 0.4, 0.3];
            let ok = (0..3).all(|l| (d.level_frequency[l] - law[l]).abs() <= 3.0 * d.level_stderr[l]);
            Ok((ok, format!("{:.4?}", d.level_frequency)))
        }),
        check("Ghirlanda-Guerra constant test function", || {
            let settings = GgSettings {
                w: (0.5, 0.5),
                n: 3,
                p: 2,
                f: TestFunction::One,
                tuples_per_replica: 8,
            };
            let g = gg_delta(&params(&[0.5], &[1.0])?, 4, &CascadeConfig::new(8, 4), &settings, 4, 10)?;
            Ok((g.delta < 1e-12, format!("{:.1e}", g.delta)))
        }),
        check("cavity at vanishing coupling", || {
            let c = cavity_functional(&params(&[0.5], &[1e-9])?, 4, &CascadeConfig::new(4, 2), 4, 11)?;
            Ok(((c.estimate.mean - LN_2).abs() < 1e-7, format!("{:.9}", c.estimate.mean)))
        }),
        check("optimizer at vanishing coupling", || {
            let cfg = OptimizationConfig {
                k_schedule: vec![1, 2],
                restarts: 2,
                max_evals: 200,
                ..Default::default()
            };
            let r = minimize_parisi(&params(&[0.5], &[1e-6])?, &cfg)?;
            Ok(((r.best_value - LN_2).abs() < 1e-9, format!("{:.12}", r.best_value)))
        }),
        check("optimizer reaches the one-level candidate", || {
            let (z, g) = (0.5, 0.3);
            let gh = GaussHermite::new(64);
            let oracle = gh.expect(|x| (2.0 * (2f64.sqrt() * g * x).cosh()).powf(z)).ln() / z - z * g * g / 2.0;
            let cfg = OptimizationConfig {
                k_schedule: vec![1, 2],
                restarts: 2,
                max_evals: 300,
                ..Default::default()
            };
            let r = minimize_parisi(&params(&[z], &[g])?, &cfg)?;
            Ok((r.best_value <= oracle + 1e-6, format!("{:.8} vs {oracle:.8}", r.best_value)))
        }),
        check("single-spin bound is deterministic", || {
            let cfg = OptimizationConfig {
                k_schedule: vec![1, 2],
                restarts: 2,
                max_evals: 300,
                ..Default::default()
            };
            let r = minimize_parisi(&params(&[0.5], &[1.0])?, &cfg)?;
            Ok((r.best_value >= closed - 1e-9, format!("gap {:.6}", r.best_value - closed)))
        }),
        check("reproducibility", || {
            let p = params(&[0.5], &[1.0])?;
            let a = pressure_direct(&p, 3, &CascadeConfig::new(4, 2), 10, 12)?;
            let b = pressure_direct(&p, 3, &CascadeConfig::new(4, 2), 10, 12)?;
            Ok((a == b, format!("{:.12}", a.mean)))
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        let failed: Vec<_> = run_selftest().into_iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:?}");
    }
}
