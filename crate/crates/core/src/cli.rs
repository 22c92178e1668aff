//! The `bfl` command line: sample, kernel, gap, verify, gibbs-test.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::correlation_kernels::{AccuracyFlag, KernelKind, KernelSpec};
use crate::error::Error;
use crate::field_simulator::{sample_field, FieldGrid, RngStream, GENERATOR};
use crate::fredholm::{count_distribution, discretize, expected_count, gap_from_operator, Interval, IntervalSet};
use crate::path::{classify_path, Ordering, PathClass, PathPoint};
use crate::verification::{
    cell_average, compare, empirical_rho1, empirical_rho2, rho2_edges_from_pilot, BinnedEstimate,
    ComparisonReport, GibbsRun,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "BFL_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bfl", version, about = "Laguerre field simulation, Bessel kernels and Fredholm gaps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the field on an (alpha, t) grid, one CSV per replica.
    Sample(SampleArgs),
    /// Tabulate a correlation kernel on a grid.
    Kernel(KernelArgs),
    /// Fredholm gap probability and count distribution.
    Gap(GapArgs),
    /// Compare sampled one/two-point functions with the finite-N kernel.
    Verify(VerifyArgs),
    /// KS tests of Gibbs resampling invariance.
    GibbsTest(GibbsArgs),
}

/// Flags shared by every subcommand. Config-file keys are the long flag names.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
struct Common {
    /// JSON file with the same keys as the flags; flags win.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Treat accuracy warnings and failed checks as errors (exit 2).
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(skip)]
    #[serde(skip)]
    threads_from_flag: bool,
}

macro_rules! merge_from_file {
    ($flags:expr, $file:expr; $($opt:ident),* ; $($flag:ident),*) => {{
        let mut out = $flags;
        let file = $file;
        $( if out.$opt.is_none() { out.$opt = file.$opt; } )*
        $( out.$flag = out.$flag || file.$flag; )*
        out
    }};
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<u32>>,
    /// Absolute times, comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
struct KernelChoice {
    /// Bessel limit kernel (default).
    #[arg(long, group = "kind")]
    bessel: bool,
    /// Finite-N kernel in hard-edge coordinates; needs --n.
    #[arg(long, group = "kind")]
    gauged: bool,
    /// Finite-N kernel at absolute times; needs --n.
    #[arg(long, group = "kind")]
    raw: bool,
    #[arg(long)]
    n: Option<usize>,
    /// time-like or space-like; inferred from the path when omitted.
    #[arg(long)]
    ordering: Option<String>,
    /// Gauss–Legendre order of the kernel integrals.
    #[arg(long)]
    kernel_order: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
struct KernelArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    choice: KernelChoice,
    /// Path points, e.g. "(0,0) (1,0)".
    #[arg(long)]
    points: Option<String>,
    /// lo:hi:count, shared by x and y.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
struct GapArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    choice: KernelChoice,
    /// Single-point path alpha (ignored with --points).
    #[arg(long)]
    alpha: Option<u32>,
    /// Single-point path time (ignored with --points).
    #[arg(long)]
    time: Option<f64>,
    #[arg(long)]
    points: Option<String>,
    /// LO HI, or K LO HI for path index K; repeatable.
    #[arg(long = "interval", id = "interval", num_args = 2..=3, action = clap::ArgAction::Append, allow_negative_numbers = true)]
    #[serde(skip)]
    interval_flat: Vec<f64>,
    /// Grouped per occurrence after parsing.
    #[arg(skip)]
    #[serde(rename = "interval")]
    interval: Vec<Vec<f64>>,
    /// Gauss–Legendre nodes per interval.
    #[arg(long)]
    order: Option<usize>,
    /// Largest count reported.
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
struct VerifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Directory written by `bfl sample`.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<u32>,
    /// Absolute time on the sampled grid; defaults to the first.
    #[arg(long)]
    time: Option<f64>,
    /// lo:hi:count for the one-point bins.
    #[arg(long)]
    bins: Option<String>,
    /// Also compare the two-point function on pilot-sized bins.
    #[arg(long)]
    rho2: bool,
    /// Upper bound on two-point bins per axis.
    #[arg(long)]
    rho2_bins: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
struct GibbsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    /// a b: resample alphas a+1..b-1.
    #[arg(long, num_args = 2)]
    alpha_window: Option<Vec<u32>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Absolute time.
    #[arg(long)]
    time: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Simulation { .. } | Error::Starvation { .. } => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        };
        Failure { code, message: e.to_string() }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_VALIDATION, message: message.into() }
}

fn io_err(e: std::io::Error) -> Failure {
    invalid(format!("I/O error: {e}"))
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parse argv, run, and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = Cli::command()
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m).map(|c| (c, m)));
    let cli = match parsed {
        Ok((mut c, m)) => {
            if let (Command::Gap(g), Some(("gap", sub))) = (&mut c.command, m.subcommand()) {
                if let Some(occ) = sub.get_occurrences::<f64>("interval") {
                    g.interval = occ.map(|o| o.copied().collect()).collect();
                }
            }
            c
        }
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("bfl: {}", f.message);
            f.code
        }
    }
}

/// Config files may only use keys that name a flag of the subcommand.
fn load_file<T: for<'de> Deserialize<'de> + Serialize + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(p) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(p).map_err(io_err)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", p.display())))?;
    let allowed = serde_json::to_value(T::default()).map_err(|e| invalid(e.to_string()))?;
    let (Some(obj), Some(allowed)) = (value.as_object(), allowed.as_object()) else {
        return Err(invalid(format!("config {} must be a JSON object", p.display())));
    };
    if let Some(key) = obj.keys().find(|k| !allowed.contains_key(*k)) {
        return Err(invalid(format!("config {}: unknown key '{key}'", p.display())));
    }
    serde_json::from_value(value).map_err(|e| invalid(format!("config {}: {e}", p.display())))
}

fn merge_common(flags: Common, file: Common) -> Common {
    let config = flags.config.clone();
    let threads_from_flag = flags.threads.is_some();
    let mut c = merge_from_file!(flags, file; out_dir, threads; force, strict);
    c.config = config;
    c.threads_from_flag = threads_from_flag;
    c
}

fn merge_choice(flags: KernelChoice, file: KernelChoice) -> KernelChoice {
    merge_from_file!(flags, file; n, ordering, kernel_order; bessel, gauged, raw)
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Sample(flags) => {
            let file: SampleArgs = load_file(flags.common.config.as_deref())?;
            let common = merge_common(flags.common.clone(), file.common.clone());
            let mut a = merge_from_file!(flags, file; n, alphas, times, replicas, seed;);
            a.common = common;
            with_threads(&a.common, "sample", |dir, threads| cmd_sample(&a, dir, threads))
        }
        Command::Kernel(flags) => {
            let file: KernelArgs = load_file(flags.common.config.as_deref())?;
            let common = merge_common(flags.common.clone(), file.common.clone());
            let choice = merge_choice(flags.choice.clone(), file.choice.clone());
            let mut a = merge_from_file!(flags, file; points, grid;);
            a.common = common;
            a.choice = choice;
            with_threads(&a.common, "kernel", |dir, threads| cmd_kernel(&a, dir, threads))
        }
        Command::Gap(flags) => {
            let file: GapArgs = load_file(flags.common.config.as_deref())?;
            let common = merge_common(flags.common.clone(), file.common.clone());
            let choice = merge_choice(flags.choice.clone(), file.choice.clone());
            let file_intervals = file.interval.clone();
            let mut a = merge_from_file!(flags, file; alpha, time, points, order, n_max;);
            if a.interval.is_empty() {
                a.interval = file_intervals;
            }
            a.common = common;
            a.choice = choice;
            with_threads(&a.common, "gap", |dir, threads| cmd_gap(&a, dir, threads))
        }
        Command::Verify(flags) => {
            let file: VerifyArgs = load_file(flags.common.config.as_deref())?;
            let common = merge_common(flags.common.clone(), file.common.clone());
            let mut a = merge_from_file!(flags, file; samples, alpha, time, bins, rho2_bins; rho2);
            a.common = common;
            with_threads(&a.common, "verify", |dir, threads| cmd_verify(&a, dir, threads))
        }
        Command::GibbsTest(flags) => {
            let file: GibbsArgs = load_file(flags.common.config.as_deref())?;
            let common = merge_common(flags.common.clone(), file.common.clone());
            let mut a = merge_from_file!(flags, file; n, alpha_window, k, replicas, seed, time, runs;);
            a.common = common;
            with_threads(&a.common, "gibbs-test", |dir, threads| cmd_gibbs(&a, dir, threads))
        }
    }
}

/// Worker count: --threads, then BFL_THREADS, then the config file, then
/// available parallelism.
fn resolve_threads(common: &Common) -> CliResult<usize> {
    let env = std::env::var(THREADS_ENV).ok();
    let parsed_env = match env {
        Some(v) => Some(v.trim().parse::<usize>().map_err(|_| invalid(format!("{THREADS_ENV}={v} is not a count")))?),
        None => None,
    };
    let n = match (common.threads_from_flag, common.threads, parsed_env) {
        (true, Some(t), _) => t,
        (_, _, Some(e)) => e,
        (_, Some(t), None) => t,
        _ => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if n == 0 {
        return Err(invalid("thread count must be positive"));
    }
    Ok(n)
}

fn prepare_out_dir(common: &Common, subcommand: &str) -> CliResult<PathBuf> {
    let dir = common.out_dir.clone().unwrap_or_else(|| PathBuf::from("bfl-out").join(subcommand));
    if dir.exists() {
        let non_empty = fs::read_dir(&dir).map_err(io_err)?.next().is_some();
        if non_empty && !common.force {
            return Err(invalid(format!("{} is not empty; pass --force to overwrite", dir.display())));
        }
    } else {
        fs::create_dir_all(&dir).map_err(io_err)?;
    }
    Ok(dir)
}

fn with_threads<F>(common: &Common, subcommand: &str, f: F) -> CliResult<i32>
where
    F: FnOnce(&Path, usize) -> CliResult<i32> + Send,
{
    let threads = resolve_threads(common)?;
    let dir = prepare_out_dir(common, subcommand)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    pool.install(|| f(&dir, threads))
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| invalid(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err)
}

fn write_manifest(dir: &Path, subcommand: &str, config: &impl Serialize, threads: usize, extra: serde_json::Value) -> CliResult<()> {
    let mut m = json!({
        "command": subcommand,
        "version": VERSION,
        "generator": GENERATOR,
        "threads": threads,
        "config": config,
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (m.as_object_mut(), extra) {
        obj.extend(more);
    }
    write_json(&dir.join("manifest.json"), &m)
}

fn required<T: Clone>(v: &Option<T>, name: &str) -> CliResult<T> {
    v.clone().ok_or_else(|| invalid(format!("--{name} is required")))
}

fn cmd_sample(a: &SampleArgs, dir: &Path, threads: usize) -> CliResult<i32> {
    let n = required(&a.n, "n")?;
    let alphas = required(&a.alphas, "alphas")?;
    let times = required(&a.times, "times")?;
    let replicas = required(&a.replicas, "replicas")?;
    let seed = a.seed.unwrap_or(0);
    let grid = FieldGrid::new(n, alphas, times)?;
    let width = replicas.saturating_sub(1).to_string().len().max(5);
    (0..replicas).into_par_iter().try_for_each(|r| -> CliResult<()> {
        let sample = sample_field(&grid, RngStream::new(seed, r as u64))?;
        let path = dir.join(format!("sample_{r:0width$}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| invalid(e.to_string()))?;
        w.write_record(["alpha", "t", "index", "value"]).map_err(|e| invalid(e.to_string()))?;
        for (ai, &alpha) in grid.alphas.iter().enumerate() {
            for (ti, &t) in grid.times.iter().enumerate() {
                for (i, v) in sample.eigenvalues_at(ai, ti).iter().enumerate() {
                    w.write_record([alpha.to_string(), t.to_string(), (i + 1).to_string(), v.to_string()])
                        .map_err(|e| invalid(e.to_string()))?;
                }
            }
        }
        w.flush().map_err(io_err)
    })?;
    write_manifest(
        dir,
        "sample",
        a,
        threads,
        json!({
            "n": n,
            "grid": grid,
            "seed": seed,
            "stream": { "first": 0, "count": replicas, "rule": "replica r uses stream r" },
            "replicas": replicas,
            "file_pattern": format!("sample_{{r:0{width}}}.csv"),
        }),
    )?;
    Ok(EXIT_OK)
}

fn parse_points(s: &str) -> CliResult<Vec<PathPoint>> {
    let mut out = Vec::new();
    for chunk in s.split(')') {
        let chunk = chunk.trim().trim_start_matches(',').trim();
        if chunk.is_empty() {
            continue;
        }
        let body = chunk
            .strip_prefix('(')
            .ok_or_else(|| invalid(format!("bad point near '{chunk}'; expected (alpha,t)")))?;
        let mut parts = body.split(',').map(str::trim);
        let (Some(al), Some(t), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(invalid(format!("bad point '({body})'")));
        };
        let alpha = al.parse::<u32>().map_err(|_| invalid(format!("bad alpha '{al}'")))?;
        let t = t.parse::<f64>().map_err(|_| invalid(format!("bad time '{t}'")))?;
        out.push(PathPoint::new(alpha, t));
    }
    if out.is_empty() {
        return Err(invalid("no path points given"));
    }
    Ok(out)
}

fn parse_range(s: &str, name: &str) -> CliResult<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || invalid(format!("--{name} expects lo:hi:count, got '{s}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(lo < hi) || count == 0 {
        return Err(bad());
    }
    Ok((lo, hi, count))
}

fn build_kernel(choice: &KernelChoice, path: Vec<PathPoint>) -> CliResult<KernelSpec> {
    let kind = if choice.gauged {
        KernelKind::FiniteGauged
    } else if choice.raw {
        KernelKind::FiniteRaw
    } else {
        KernelKind::BesselLimit
    };
    if [choice.bessel, choice.gauged, choice.raw].iter().filter(|&&b| b).count() > 1 {
        return Err(invalid("choose one of --bessel, --gauged, --raw"));
    }
    let ordering = match choice.ordering.as_deref() {
        Some("time-like") => Ordering::TimeLike,
        Some("space-like") => Ordering::SpaceLike,
        Some(o) => return Err(invalid(format!("unknown ordering '{o}'"))),
        None => match classify_path(&path) {
            PathClass::TimeLike | PathClass::Both => Ordering::TimeLike,
            PathClass::SpaceLike => Ordering::SpaceLike,
            PathClass::Neither => return Err(invalid("path is neither time-like nor space-like")),
        },
    };
    let n = match kind {
        KernelKind::BesselLimit => None,
        _ => Some(required(&choice.n, "n")?),
    };
    let mut spec = KernelSpec::new(kind, ordering, n, path)?;
    if let Some(order) = choice.kernel_order {
        if order < 2 {
            return Err(invalid("--kernel-order must be at least 2"));
        }
        spec = spec.with_quadrature(crate::quadrature::QuadratureRule::new(order));
    }
    Ok(spec)
}

fn flag_name(f: AccuracyFlag) -> &'static str {
    match f {
        AccuracyFlag::Ok => "ok",
        AccuracyFlag::TailWarning => "tail_warning",
    }
}

fn cmd_kernel(a: &KernelArgs, dir: &Path, threads: usize) -> CliResult<i32> {
    let path = parse_points(&required(&a.points, "points")?)?;
    let (lo, hi, count) = parse_range(&required(&a.grid, "grid")?, "grid")?;
    let spec = build_kernel(&a.choice, path.clone())?;
    let xs: Vec<f64> = if count == 1 {
        vec![lo]
    } else {
        (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
    };
    let m = path.len();
    let rows: Vec<CliResult<Vec<(usize, f64, usize, f64, f64, AccuracyFlag)>>> = (0..m * count)
        .into_par_iter()
        .map(|row| {
            let (i, xi) = (row / count, row % count);
            let mut out = Vec::with_capacity(m * count);
            for j in 0..m {
                for &y in &xs {
                    let v = spec.eval(i, xs[xi], j, y)?;
                    out.push((i, xs[xi], j, y, v.value, v.flag));
                }
            }
            Ok(out)
        })
        .collect();
    let mut w = csv::Writer::from_path(dir.join("kernel.csv")).map_err(|e| invalid(e.to_string()))?;
    w.write_record(["i", "x", "j", "y", "value", "flag"]).map_err(|e| invalid(e.to_string()))?;
    let mut warnings = 0usize;
    for r in rows {
        for (i, x, j, y, v, f) in r? {
            if f == AccuracyFlag::TailWarning {
                warnings += 1;
            }
            w.write_record([i.to_string(), x.to_string(), j.to_string(), y.to_string(), v.to_string(), flag_name(f).to_string()])
                .map_err(|e| invalid(e.to_string()))?;
        }
    }
    w.flush().map_err(io_err)?;
    write_manifest(
        dir,
        "kernel",
        a,
        threads,
        json!({ "path": path, "ordering": format!("{:?}", spec.ordering), "kind": spec.kind, "tail_warnings": warnings }),
    )?;
    if warnings > 0 {
        eprintln!("bfl: {warnings} kernel values carry tail warnings");
        if a.common.strict {
            return Ok(EXIT_NUMERICAL);
        }
    }
    Ok(EXIT_OK)
}

/// Refinement tolerance for gap values under --strict.
pub const REFINEMENT_TOL: f64 = 1e-7;

fn cmd_gap(a: &GapArgs, dir: &Path, threads: usize) -> CliResult<i32> {
    let path = match &a.points {
        Some(p) => parse_points(p)?,
        None => vec![PathPoint::new(a.alpha.unwrap_or(0), a.time.unwrap_or(0.0))],
    };
    let spec = build_kernel(&a.choice, path)?;
    if a.interval.is_empty() {
        return Err(invalid("--interval is required"));
    }
    let mut intervals = Vec::with_capacity(a.interval.len());
    for iv in &a.interval {
        let (k, lo, hi) = match iv[..] {
            [lo, hi] => (0.0, lo, hi),
            [k, lo, hi] => (k, lo, hi),
            _ => return Err(invalid("--interval takes LO HI or K LO HI")),
        };
        if !(k >= 0.0 && k.fract() == 0.0) {
            return Err(invalid(format!("path index {k} is not a non-negative integer")));
        }
        intervals.push(Interval { path_index: k as usize, lower: lo, upper: hi });
    }
    let e = IntervalSet::new(intervals)?;
    let order = a.order.unwrap_or(100);
    let n_max = a.n_max.unwrap_or(10);
    let op = discretize(&spec, &e, order)?;
    let gap = gap_from_operator(&op);
    let fine = discretize(&spec, &e, 2 * order)?;
    let refinement_delta = (gap_from_operator(&fine) - gap).abs();
    let counts = count_distribution(&spec, &[e.clone()], &[n_max], order)?;
    let expected = expected_count(&spec, &e, order)?;
    let result = json!({
        "gap": gap,
        "counts": counts.probabilities,
        "expected_count": expected,
        "order": order,
        "refinement_delta": refinement_delta,
        "tail_warnings": op.tail_warnings + fine.tail_warnings,
    });
    write_json(&dir.join("gap.json"), &result)?;
    write_manifest(dir, "gap", a, threads, json!({ "path": spec.path, "kind": spec.kind }))?;
    println!("{}", serde_json::to_string(&result).map_err(|e| invalid(e.to_string()))?);
    let inaccurate = refinement_delta >= REFINEMENT_TOL || op.tail_warnings + fine.tail_warnings > 0;
    if inaccurate {
        eprintln!("bfl: gap refinement delta {refinement_delta:e} or tail warnings present");
        if a.common.strict {
            return Ok(EXIT_NUMERICAL);
        }
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Deserialize)]
struct SampleManifest {
    n: usize,
    grid: FieldGrid,
    replicas: usize,
}

fn read_samples(dir: &Path, alpha: u32, t: f64) -> CliResult<(SampleManifest, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(dir.join("manifest.json")).map_err(io_err)?;
    let manifest: SampleManifest =
        serde_json::from_str(&text).map_err(|e| invalid(format!("sample manifest: {e}")))?;
    let width = manifest.replicas.saturating_sub(1).to_string().len().max(5);
    let mut out = Vec::with_capacity(manifest.replicas);
    for r in 0..manifest.replicas {
        let path = dir.join(format!("sample_{r:0width$}.csv"));
        let mut rd = csv::Reader::from_path(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut pts = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            let bad = || invalid(format!("{}: malformed row", path.display()));
            let al: u32 = rec.get(0).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let tt: f64 = rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let v: f64 = rec.get(3).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if al == alpha && tt == t {
                pts.push(v);
            }
        }
        if pts.len() != manifest.n {
            return Err(invalid(format!("{}: expected {} points at ({alpha}, {t})", path.display(), manifest.n)));
        }
        out.push(pts);
    }
    Ok((manifest, out))
}

fn report_csv(path: &Path, est: &BinnedEstimate, report: &ComparisonReport, pred: &(dyn Fn(&[f64]) -> f64 + Sync)) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| invalid(e.to_string()))?;
    let mut header: Vec<String> = Vec::new();
    for d in 0..est.dims() {
        header.push(format!("lo{d}"));
        header.push(format!("hi{d}"));
    }
    header.extend(["estimate", "std_error", "prediction", "z"].map(String::from));
    w.write_record(&header).map_err(|e| invalid(e.to_string()))?;
    for c in 0..est.len() {
        let (lo, hi) = est.cell(c);
        let mut rec: Vec<String> = Vec::new();
        for d in 0..est.dims() {
            rec.push(lo[d].to_string());
            rec.push(hi[d].to_string());
        }
        rec.push(est.estimate[c].to_string());
        rec.push(est.std_error[c].to_string());
        rec.push(cell_average(&lo, &hi, &pred).to_string());
        rec.push(report.z_scores[c].map_or(String::new(), |z| z.to_string()));
        w.write_record(&rec).map_err(|e| invalid(e.to_string()))?;
    }
    w.flush().map_err(io_err)
}

fn cmd_verify(a: &VerifyArgs, dir: &Path, threads: usize) -> CliResult<i32> {
    let samples_dir = required(&a.samples, "samples")?;
    let alpha = required(&a.alpha, "alpha")?;
    let text = fs::read_to_string(samples_dir.join("manifest.json")).map_err(io_err)?;
    let manifest: SampleManifest =
        serde_json::from_str(&text).map_err(|e| invalid(format!("sample manifest: {e}")))?;
    let t = a.time.unwrap_or(manifest.grid.times[0]);
    let ti = manifest
        .grid
        .time_index(t)
        .ok_or_else(|| invalid(format!("time {t} is not on the sampled grid")))?;
    let t = manifest.grid.times[ti];
    if manifest.grid.alpha_index(alpha).is_none() {
        return Err(invalid(format!("alpha {alpha} is not on the sampled grid")));
    }
    let (manifest, samples) = read_samples(&samples_dir, alpha, t)?;
    let (lo, hi, count) = parse_range(&required(&a.bins, "bins")?, "bins")?;
    let edges: Vec<f64> = (0..=count).map(|i| lo + (hi - lo) * i as f64 / count as f64).collect();
    let kernel = KernelSpec::finite_raw(Ordering::TimeLike, manifest.n, vec![PathPoint::new(alpha, t)])?;
    let k = |x: f64, y: f64| kernel.eval(0, x, 0, y).map_or(f64::NAN, |v| v.value);
    let rho1 = |p: &[f64]| k(p[0], p[0]);
    let est1 = empirical_rho1(&samples, &edges)?;
    let rep1 = compare(&est1, rho1);
    report_csv(&dir.join("rho1.csv"), &est1, &rep1, &rho1)?;
    let mut report = json!({ "alpha": alpha, "t": t, "n": manifest.n, "replicas": samples.len(), "rho1": rep1 });
    let mut pass = rep1.pass;
    if a.rho2 {
        let pilot = (samples.len() / 10).max(1);
        let (pilot_set, main_set) = samples.split_at(pilot);
        let (ex, ey) = rho2_edges_from_pilot(pilot_set, None, lo, hi, a.rho2_bins.unwrap_or(6), main_set.len(), 10.0)?;
        let est2 = empirical_rho2(main_set, None, &ex, &ey)?;
        let rho2 = |p: &[f64]| k(p[0], p[0]) * k(p[1], p[1]) - k(p[0], p[1]) * k(p[1], p[0]);
        let rep2 = compare(&est2, rho2);
        report_csv(&dir.join("rho2.csv"), &est2, &rep2, &rho2)?;
        pass &= rep2.pass;
        report["rho2"] = serde_json::to_value(&rep2).map_err(|e| invalid(e.to_string()))?;
        report["pilot_replicas"] = json!(pilot);
    }
    report["pass"] = json!(pass);
    write_json(&dir.join("report.json"), &report)?;
    write_manifest(dir, "verify", a, threads, json!({ "n": manifest.n, "alpha": alpha, "t": t }))?;
    println!("{}", serde_json::to_string(&report).map_err(|e| invalid(e.to_string()))?);
    if !pass && a.common.strict {
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}

/// KS p-value threshold for a passing Gibbs run.
pub const GIBBS_P_MIN: f64 = 0.01;

fn cmd_gibbs(a: &GibbsArgs, dir: &Path, threads: usize) -> CliResult<i32> {
    let window = a.alpha_window.clone().unwrap_or_else(|| vec![0, 2]);
    let run = GibbsRun {
        n: a.n.unwrap_or(100),
        t: a.time.unwrap_or(1.0),
        a: window[0],
        b: window[1],
        k: a.k.unwrap_or(1),
        replicas: a.replicas.unwrap_or(1000),
        seed: a.seed.unwrap_or(0),
        run: 0,
    };
    let runs = a.runs.unwrap_or(1);
    let mut reports = Vec::with_capacity(runs);
    for r in 0..runs {
        let rep = GibbsRun { run: r as u64, ..run }.execute()?;
        reports.push(rep);
    }
    let passes = reports.iter().filter(|r| r.ks.p_value > GIBBS_P_MIN).count();
    let result = json!({
        "n": run.n, "t": run.t, "alpha_window": [run.a, run.b], "k": run.k,
        "replicas": run.replicas, "seed": run.seed, "runs": reports, "passes": passes,
    });
    write_json(&dir.join("gibbs.json"), &result)?;
    write_manifest(dir, "gibbs-test", a, threads, json!({ "seed": run.seed }))?;
    println!("{}", serde_json::to_string(&result).map_err(|e| invalid(e.to_string()))?);
    if passes < runs && a.common.strict {
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}
