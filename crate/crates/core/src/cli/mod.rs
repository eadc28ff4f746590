//! The `msk` command-line front end.

mod config;
mod selftest;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::error::Error;
use crate::model::{LeafIndex, ModelParams};
use crate::optimize::{bound_report, minimize_parisi};
use crate::parisi::{build_trial, parisi_recursion, parisi_rpc};
use crate::rng::{tag, StreamKey};
use crate::rpc::{CascadeSample, CovarianceProfile, TreeGaussianField};
use crate::simulate::{
    cavity_functional, gg_delta, gibbs_overlap_distribution, pressure_direct, pressure_recursive, GgSettings,
    TestFunction, TEST_FUNCTION_LIBRARY_VERSION,
};

pub use config::{
    BoundSection, CavitySection, Estimator, GgSection, OptimizeSection, OverlapSection, ParisiEstimator,
    ParisiSection, PressureSection, RpcSampleSection, RunConfig,
};
pub use selftest::{run_selftest, SelfCheck};

/// Largest cascade `rpc-sample` will write out leaf by leaf.
const MAX_EXPORT_LEAVES: usize = 1 << 20;

#[derive(Debug, Parser)]
#[command(name = "msk", version, about = "Multi-scale Sherrington-Kirkpatrick model toolkit")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Quenched pressure by enumeration and by the level recursion.
    Pressure,
    /// Parisi functional at the trial point of the `[parisi]` section.
    ParisiEval,
    /// Minimize the Parisi functional.
    Optimize,
    /// Optimize, then compare against finite-N pressures.
    VerifyBound,
    /// Sample one cascade and a tree field on it.
    RpcSample,
    /// Ancestor-level and overlap distribution under the Gibbs measure.
    OverlapDist,
    /// Cavity functional.
    Cavity,
    /// Ghirlanda-Guerra discrepancy.
    GgCheck,
    /// Built-in example suite.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Pressure => "pressure",
            Command::ParisiEval => "parisi-eval",
            Command::Optimize => "optimize",
            Command::VerifyBound => "verify-bound",
            Command::RpcSample => "rpc-sample",
            Command::OverlapDist => "overlap-dist",
            Command::Cavity => "cavity",
            Command::GgCheck => "gg-check",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug)]
enum Failure {
    /// Bad input: exit 2.
    Config(String),
    /// A checked property was violated or artifacts could not be written: exit 1.
    Assertion(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Assertion(m)) => {
            eprintln!("FAILED: {m}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Outcome<()> {
    let threads = cli.threads;
    if cli.command == Command::Selftest {
        return with_pool(threads, || {
            let checks = run_selftest();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                Err(Failure::Assertion(format!("{failed} of {} checks failed", checks.len())))
            } else {
                Ok(())
            }
        });
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config(format!("`{}` needs --config PATH", cli.command.name())))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    cfg.cascade.validate()?;
    let ctx = Context {
        hash: cfg.hash(),
        command: cli.command,
        cfg,
    };
    with_pool(ctx.cfg.threads, || match ctx.command {
        Command::Pressure => pressure(&ctx),
        Command::ParisiEval => parisi_eval(&ctx),
        Command::Optimize => optimize(&ctx),
        Command::VerifyBound => verify_bound(&ctx),
        Command::RpcSample => rpc_sample(&ctx),
        Command::OverlapDist => overlap_dist(&ctx),
        Command::Cavity => cavity(&ctx),
        Command::GgCheck => gg_check(&ctx),
        Command::Selftest => unreachable!("handled above"),
    })
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Outcome<T> + Send) -> Outcome<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::Config(e.to_string()))?;
    pool.install(f)
}

struct Context {
    cfg: RunConfig,
    hash: String,
    command: Command,
}

impl Context {
    fn params(&self) -> &ModelParams {
        &self.cfg.model
    }

    fn artifact(&self, ext: &str) -> PathBuf {
        self.cfg
            .out
            .join(format!("{}-{}.{ext}", self.command.name(), &self.hash[..16]))
    }

    fn summary(&self, result: impl Serialize) -> serde_json::Value {
        json!({
            "command": self.command.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.hash,
            "config": self.cfg,
            "result": result,
        })
    }

    fn write_json(&self, value: &serde_json::Value) -> Outcome<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("summaries are plain data");
        text.push('\n');
        let path = self.artifact("json");
        write_once(&path, text.as_bytes())?;
        Ok(path)
    }

    fn write_csv<R: Serialize>(&self, rows: &[R], suffix: &str) -> Outcome<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| Failure::Assertion(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Assertion(e.to_string()))?;
        let path = self.artifact(&format!("{suffix}csv"));
        write_once(&path, &bytes)?;
        Ok(path)
    }
}

/// Creates `path` with `bytes`. An existing file is accepted only if it
/// already holds exactly these bytes.
fn write_once(path: &Path, bytes: &[u8]) -> Outcome<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::Assertion(format!("{}: {e}", dir.display())))?;
    }
    match fs::read(path) {
        Ok(existing) if existing == bytes => {}
        Ok(_) => {
            return Err(Failure::Assertion(format!(
                "{} exists with different contents",
                path.display()
            )))
        }
        Err(_) => fs::write(path, bytes).map_err(|e| Failure::Assertion(format!("{}: {e}", path.display())))?,
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Serialize)]
struct EstimateRow<'a> {
    config_hash: &'a str,
    n: usize,
    estimator: &'static str,
    estimate: f64,
    stderr: f64,
    replicas: usize,
    seed: u64,
}

fn pressure(ctx: &Context) -> Outcome<()> {
    let cfg = &ctx.cfg;
    let sec = &cfg.pressure;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &n in &sec.n {
        if sec.estimator.direct() {
            let e = pressure_direct(ctx.params(), n, &cfg.cascade, cfg.replicas, cfg.seed)?;
            rows.push(row(ctx, n, "direct", e.mean, e.stderr, e.replicas));
            records.push(json!({"n": n, "estimator": "direct", "estimate": e}));
        }
        if sec.estimator.recursive() {
            let r = pressure_recursive(ctx.params(), n, sec.samples_per_level, cfg.replicas, cfg.seed)?;
            let e = r.estimate;
            rows.push(row(ctx, n, "recursive", e.mean, e.stderr, e.replicas));
            records.push(json!({
                "n": n,
                "estimator": "recursive",
                "estimate": e,
                "samples_per_level": r.samples_per_level,
                "plug_in_bias": r.plug_in_bias,
            }));
        }
    }
    for r in &rows {
        println!("N={:<3} {:<9} {:.6} +- {:.6}", r.n, r.estimator, r.estimate, r.stderr);
    }
    ctx.write_csv(&rows, "")?;
    ctx.write_json(&ctx.summary(records))?;
    Ok(())
}

fn row<'a>(ctx: &'a Context, n: usize, estimator: &'static str, estimate: f64, stderr: f64, replicas: usize) -> EstimateRow<'a> {
    EstimateRow {
        config_hash: &ctx.hash,
        n,
        estimator,
        estimate,
        stderr,
        replicas,
        seed: ctx.cfg.seed,
    }
}

#[derive(Serialize)]
struct ParisiRow<'a> {
    config_hash: &'a str,
    method: &'static str,
    value: f64,
    log_z0: f64,
    correction: f64,
    stderr: f64,
}

fn parisi_eval(ctx: &Context) -> Outcome<()> {
    let cfg = &ctx.cfg;
    let sec = &cfg.parisi;
    if sec.q.is_empty() {
        return Err(Failure::Config("parisi-eval needs [parisi] q".into()));
    }
    let trial = build_trial(ctx.params(), &sec.xi_free, &sec.q)?;
    let mut values = Vec::new();
    if matches!(sec.estimator, ParisiEstimator::Recursion | ParisiEstimator::Both) {
        values.push(("recursion", parisi_recursion(&trial, sec.recursion)?));
    }
    if matches!(sec.estimator, ParisiEstimator::Rpc | ParisiEstimator::Both) {
        values.push(("rpc", parisi_rpc(&trial, &cfg.cascade, cfg.replicas, cfg.seed)?));
    }
    let rows: Vec<ParisiRow> = values
        .iter()
        .map(|(m, v)| {
            println!("{m:<9} P = {:.8} +- {:.2e}", v.value, v.stderr);
            ParisiRow {
                config_hash: &ctx.hash,
                method: m,
                value: v.value,
                log_z0: v.log_z0,
                correction: v.correction,
                stderr: v.stderr,
            }
        })
        .collect();
    ctx.write_csv(&rows, "")?;
    let vals: Vec<_> = values.iter().map(|(_, v)| v).collect();
    ctx.write_json(&ctx.summary(json!({"trial": trial, "values": vals})))?;
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    k: usize,
    restart: usize,
    eval: usize,
    value: f64,
    xi: String,
    q: String,
}

fn optimize(ctx: &Context) -> Outcome<()> {
    let opt = minimize_parisi(ctx.params(), &ctx.cfg.optimize.with_seed(ctx.cfg.seed))?;
    for (k, v) in &opt.per_k {
        println!("k={k:<3} best {v:.8}");
    }
    println!(
        "best_value {:.8} ({:?}, {} evaluations)",
        opt.best_value, opt.status, opt.eval_count
    );
    let trace: Vec<TraceRow> = opt
        .trace
        .iter()
        .map(|t| TraceRow {
            k: t.k,
            restart: t.restart,
            eval: t.eval,
            value: t.value,
            xi: join(&t.xi),
            q: join(&t.q),
        })
        .collect();
    ctx.write_csv(&trace, "trace.")?;
    let summary = json!({
        "best_trial": opt.best_trial,
        "best_value": opt.best_value,
        "per_k": opt.per_k,
        "eval_count": opt.eval_count,
        "status": opt.status,
    });
    ctx.write_json(&ctx.summary(summary))?;
    Ok(())
}

fn verify_bound(ctx: &Context) -> Outcome<()> {
    let cfg = &ctx.cfg;
    let opt = minimize_parisi(ctx.params(), &cfg.optimize.with_seed(cfg.seed))?;
    let estimates = cfg
        .bound
        .n
        .iter()
        .map(|&n| Ok((n, pressure_direct(ctx.params(), n, &cfg.cascade, cfg.replicas, cfg.seed)?)))
        .collect::<Outcome<Vec<_>>>()?;
    let report = bound_report(ctx.params(), &estimates, &opt)?;
    println!("{:>4} {:>12} {:>10} {:>12} {:>12}  bound", "N", "p_N", "stderr", "best", "gap");
    for r in &report.rows {
        println!(
            "{:>4} {:>12.6} {:>10.6} {:>12.6} {:>12.6}  {}",
            r.n,
            r.p_hat,
            r.stderr,
            r.best_value,
            r.gap,
            if r.bound_holds { "ok" } else { "VIOLATED" }
        );
    }
    println!("gap nonincreasing within 3 stderr: {}", report.gap_nonincreasing);
    #[derive(Serialize)]
    struct Row<'a> {
        config_hash: &'a str,
        n: usize,
        p_hat: f64,
        stderr: f64,
        best_value: f64,
        gap: f64,
        bound_holds: bool,
    }
    let rows: Vec<Row> = report
        .rows
        .iter()
        .map(|r| Row {
            config_hash: &ctx.hash,
            n: r.n,
            p_hat: r.p_hat,
            stderr: r.stderr,
            best_value: r.best_value,
            gap: r.gap,
            bound_holds: r.bound_holds,
        })
        .collect();
    ctx.write_csv(&rows, "")?;
    ctx.write_json(&ctx.summary(json!({
        "report": report,
        "best_trial": opt.best_trial,
        "status": opt.status,
    })))?;
    if !report.all_bounds_hold {
        return Err(Failure::Assertion("finite-N upper bound violated".into()));
    }
    Ok(())
}

fn rpc_sample(ctx: &Context) -> Outcome<()> {
    let cfg = &ctx.cfg;
    let params = ctx.params();
    let leaves = cfg.cascade.shape(params.depth()).num_leaves();
    if leaves > MAX_EXPORT_LEAVES {
        return Err(Failure::Config(format!(
            "{leaves} leaves exceed the export limit {MAX_EXPORT_LEAVES}; reduce the cascade width"
        )));
    }
    let key = StreamKey::new(cfg.seed);
    let cascade = CascadeSample::sample(params.zeta(), &cfg.cascade, key.child(tag::CASCADE))?;
    let profile = match &cfg.rpc_sample.profile {
        Some(v) => CovarianceProfile::new(v.clone())?,
        None => CovarianceProfile::new(params.gamma_full().iter().map(|g| g * g).collect())?,
    };
    profile.check_depth(params.depth())?;
    let field = TreeGaussianField::sample(&profile, cascade.shape(), key.child(tag::FIELD))?;

    let c = cfg.cascade.children();
    let mut nodes = Vec::new();
    for level in 1..=params.depth() {
        for (i, lw) in cascade.log_child_weights(level).iter().enumerate() {
            let path = LeafIndex::from_flat(i, level, c).0;
            nodes.push(json!({"path": path, "log_weight": lw}));
        }
    }
    #[derive(Serialize)]
    struct LeafRow {
        leaf_path: String,
        weight: f64,
        field: f64,
    }
    let weights = cascade.leaf_weights();
    let values = field.leaf_values();
    let rows: Vec<LeafRow> = (0..cascade.num_leaves())
        .map(|i| LeafRow {
            leaf_path: LeafIndex::from_flat(i, params.depth(), c)
                .0
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join("."),
            weight: weights[i],
            field: values[i],
        })
        .collect();
    println!(
        "{} leaves, leftover mass bound {:.3e}",
        cascade.num_leaves(),
        cascade.leftover_mass_bound()
    );
    ctx.write_csv(&rows, "")?;
    ctx.write_json(&ctx.summary(json!({
        "zeta": params.zeta(),
        "width": cascade.width(),
        "tail_children": cfg.cascade.tail_children,
        "log_total_mass": cascade.log_total_mass(),
        "leftover_mass_bound": cascade.leftover_mass_bound(),
        "profile": profile.values(),
        "nodes": nodes,
    })))?;
    Ok(())
}

fn overlap_dist(ctx: &Context) -> Outcome<()> {
    let cfg = &ctx.cfg;
    let sec = &cfg.overlap;
    let params = ctx.params();
    let d = gibbs_overlap_distribution(params, sec.n, &cfg.cascade, cfg.replicas, sec.pairs_per_replica, cfg.seed)?;
    let r = params.depth();
    let law: Vec<f64> = (0..=r)
        .map(|l| params.zeta_at(l as isize) - params.zeta_at(l as isize - 1))
        .collect();
    let within: Vec<bool> = (0..=r)
        .map(|l| (d.level_frequency[l] - law[l]).abs() <= 3.0 * d.level_stderr[l])
        .collect();
    for l in 0..=r {
        println!(
            "level {l}: {:.4} +- {:.4} (law {:.4})",
            d.level_frequency[l], d.level_stderr[l], law[l]
        );
    }
    #[derive(Serialize)]
    struct Bin<'a> {
        config_hash: &'a str,
        bin: f64,
        mass: f64,
    }
    let bins: Vec<Bin> = d
        .overlap_histogram
        .iter()
        .map(|&(q, m)| Bin {
            config_hash: &ctx.hash,
            bin: q,
            mass: m,
        })
        .collect();
    ctx.write_csv(&bins, "")?;
    ctx.write_json(&ctx.summary(json!({
        "n": d.n,
        "replicas": d.replicas,
        "pairs_per_replica": d.pairs_per_replica,
        "level_frequency": d.level_frequency,
        "level_stderr": d.level_stderr,
        "level_law": law,
        "within_3_stderr": within,
        "overlap_histogram": d.overlap_histogram,
    })))?;
    Ok(())
}

fn cavity(ctx: &Context) -> Outcome<()> {
    let cfg = &ctx.cfg;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &n in &cfg.cavity.n {
        let c = cavity_functional(ctx.params(), n, &cfg.cascade, cfg.replicas, cfg.seed)?;
        println!("N={n:<3} A_N {:.6} +- {:.6}", c.estimate.mean, c.estimate.stderr);
        rows.push(row(ctx, n, "cavity", c.estimate.mean, c.estimate.stderr, c.estimate.replicas));
        records.push(json!({"n": n, "cavity": c}));
    }
    ctx.write_csv(&rows, "")?;
    ctx.write_json(&ctx.summary(records))?;
    Ok(())
}

fn gg_check(ctx: &Context) -> Outcome<()> {
    let cfg = &ctx.cfg;
    let sec = &cfg.gg;
    let settings = GgSettings {
        w: (sec.w[0], sec.w[1]),
        n: sec.n,
        p: sec.p,
        f: TestFunction::parse(&sec.f)?,
        tuples_per_replica: sec.tuples_per_replica,
    };
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &n in &sec.n_spins {
        let g = gg_delta(ctx.params(), n, &cfg.cascade, &settings, cfg.replicas, cfg.seed)?;
        println!("N={n:<3} Delta {:.6} +- {:.6}", g.delta, g.stderr);
        rows.push(row(ctx, n, "gg_delta", g.delta, g.stderr, cfg.replicas));
        records.push(json!({"n": n, "delta": g}));
    }
    ctx.write_csv(&rows, "")?;
    ctx.write_json(&ctx.summary(json!({
        "test_function_library": TEST_FUNCTION_LIBRARY_VERSION,
        "rows": records,
    })))?;
    Ok(())
}
