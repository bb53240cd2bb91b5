//! Command-line front end: `test`, `bench`, `compress`, `medheur`.
//!
//! Options may also come from `--config <file>`, a `key = value` file whose
//! keys are flag names without the dashes; explicit flags win.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ctt_core::bench::{
    run_replications, write_bench_csv, BenchRow, ScenarioSpec, TestKind, TestSpec,
};
use ctt_core::kernels::{median_heuristic, KernelArg};
use ctt_core::sample::{read_csv_path, write_csv};
use ctt_core::thinning::kt_compress;
use ctt_core::two_sample::threshold_index;
use ctt_core::{Error, RngStream, Sample};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "ctt", version, about = "Kernel two-sample tests with coreset compression")]
#[command(args_override_self = true)]
struct Cli {
    /// `key = value` file of defaults; explicit flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one two-sample test on two CSV files.
    Test(TestArgs),
    /// Monte Carlo rejection rates and timings on synthetic scenarios.
    Bench(BenchArgs),
    /// Kernel-thinning compression of one CSV file.
    Compress(CompressArgs),
    /// Median-heuristic bandwidth of two CSV files.
    Medheur(MedheurArgs),
}

#[derive(Args, Debug, Clone)]
struct TestParams {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    g: u32,
    #[arg(long, default_value_t = 32)]
    s: usize,
    /// Replicates (first-stage permutations for actt; default 299 there).
    #[arg(long = "B")]
    b: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// `gauss:<lambda>`, `gauss-med` or `sum:<spec>,...`.
    #[arg(long, default_value = "gauss-med")]
    bandwidth: KernelArg,
    #[arg(long, default_value_t = 128)]
    r: usize,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long = "block-size")]
    block_size: Option<usize>,
    #[arg(long)]
    ell: Option<usize>,
    /// Held-out permutations for actt.
    #[arg(long = "B2", default_value_t = 200)]
    b2: usize,
    /// Bisection steps for actt.
    #[arg(long = "B3", default_value_t = 20)]
    b3: usize,
    /// Bandwidths aggregated by actt.
    #[arg(long, default_value_t = 5)]
    levels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[arg(long)]
    test: TestKind,
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Input files start with a header row.
    #[arg(long)]
    header: bool,
    #[command(flatten)]
    params: TestParams,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// `gauss:d=<int>,shift=<real>` or `blobs:eps=<real>`.
    #[arg(long)]
    scenario: String,
    /// Per-sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    n: Vec<usize>,
    /// Tests, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    test: Vec<TestKind>,
    /// Compression levels, comma separated; overrides `--g`.
    #[arg(long = "gs", value_delimiter = ',', num_args = 1..)]
    gs: Vec<u32>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    params: TestParams,
}

#[derive(Args, Debug)]
struct CompressArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    g: u32,
    #[arg(long, default_value = "gauss-med")]
    kernel: KernelArg,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    header: bool,
}

#[derive(Args, Debug)]
struct MedheurArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long, default_value_t = ctt_core::kernels::DEFAULT_MEDIAN_CAP)]
    cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    header: bool,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Output goes to `out`.
pub fn run<W: Write>(argv: &[String], out: &mut W) -> i32 {
    let result = merge_config(argv).and_then(|args| match Cli::try_parse_from(&args) {
        Ok(cli) => dispatch(cli, out),
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                write!(out, "{e}").map_err(Failure::from)
            }
            _ => Err(Failure::Usage(one_line(&e.to_string()))),
        },
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(out, "usage error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(out, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}

/// Collapses a clap message to one line, dropping the usage and help hints.
fn one_line(s: &str) -> String {
    let body = s.split("\nUsage:").next().unwrap_or(s);
    let words: Vec<&str> = body
        .lines()
        .filter(|l| !l.trim_start().starts_with("For more information"))
        .flat_map(str::split_whitespace)
        .collect();
    words.join(" ").trim_start_matches("error: ").to_string()
}

/// Reads `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.starts_with('-') {
            return Err(format!("config line {}: bad key {k:?}", i + 1));
        }
        entries.push((k.to_string(), v.to_string()));
    }
    Ok(entries)
}

/// Inserts config entries as flags right after the subcommand so that later,
/// explicit flags override them.
fn merge_config(argv: &[String]) -> Result<Vec<String>, Failure> {
    let mut path = None;
    let mut i = 0;
    while i < argv.len() {
        if argv[i] == "--config" {
            path = Some(
                argv.get(i + 1)
                    .ok_or_else(|| Failure::Usage("--config needs a file".into()))?
                    .clone(),
            );
        } else if let Some(p) = argv[i].strip_prefix("--config=") {
            path = Some(p.to_string());
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(argv.to_vec());
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::Usage(format!("--config {path}: {e}")))?;
    let entries = parse_config(&text).map_err(|e| Failure::Usage(format!("--config {path}: {e}")))?;
    let verb_pos = argv
        .iter()
        .skip(1)
        .position(|a| ["test", "bench", "compress", "medheur"].contains(&a.as_str()))
        .map(|p| p + 1);
    let Some(verb_pos) = verb_pos else {
        return Ok(argv.to_vec());
    };
    let mut merged = argv[..=verb_pos].to_vec();
    for (k, v) in entries {
        if k == "config" {
            return Err(Failure::Usage("--config cannot be nested".into()));
        }
        if k == "header" {
            match v.as_str() {
                "true" | "1" => merged.push("--header".into()),
                "false" | "0" => {}
                _ => return Err(Failure::Usage(format!("--header: expected true or false, got {v:?}"))),
            }
            continue;
        }
        merged.push(format!("--{k}"));
        merged.push(v);
    }
    merged.extend_from_slice(&argv[verb_pos + 1..]);
    Ok(merged)
}

fn dispatch<W: Write>(cli: Cli, out: &mut W) -> Result<(), Failure> {
    match cli.command {
        Command::Test(a) => cmd_test(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Compress(a) => cmd_compress(a, out),
        Command::Medheur(a) => cmd_medheur(a, out),
    }
}

fn kernel_label(k: &KernelArg) -> String {
    match k {
        KernelArg::Gaussian(b) => format!("gauss:{b}"),
        KernelArg::MedianHeuristic => "gauss-med".into(),
        KernelArg::Sum(terms) => {
            let parts: Vec<String> = terms
                .iter()
                .map(|(t, w)| format!("{w}*{}", kernel_label(t)))
                .collect();
            format!("sum:{}", parts.join(","))
        }
    }
}

fn test_spec(kind: TestKind, p: &TestParams) -> Result<TestSpec, Failure> {
    if kind.uses_block() && p.block_size.is_none() {
        return Err(Failure::Usage(format!("--block-size is required for --test {kind}")));
    }
    if kind.uses_design() && p.ell.is_none() {
        return Err(Failure::Usage(format!("--ell is required for --test {kind}")));
    }
    let mut spec = TestSpec::new(kind);
    spec.alpha = p.alpha;
    spec.g = p.g;
    spec.s = p.s;
    if let Some(b) = p.b {
        spec.b = b;
    }
    spec.delta = p.delta;
    spec.kernel = p.bandwidth.clone();
    spec.r = p.r;
    spec.a = p.a;
    spec.block_size = p.block_size;
    spec.ell = p.ell;
    spec.b2 = p.b2;
    spec.b3 = p.b3;
    spec.agg_levels = p.levels;
    Ok(spec)
}

fn spec_config(spec: &TestSpec) -> String {
    let mut s = format!(
        "test={} alpha={} kernel={} delta={}",
        spec.kind,
        spec.alpha,
        kernel_label(&spec.kernel),
        spec.delta
    );
    let k = spec.kind;
    if k.uses_compression() {
        let _ = write!(s, " g={} s={}", spec.g, spec.s);
    }
    if k.uses_replicates() {
        let _ = write!(s, " B={}", spec.b);
    }
    if k == TestKind::Actt {
        let _ = write!(s, " B2={} B3={} levels={}", spec.b2, spec.b3, spec.agg_levels);
    }
    if k.uses_rank() {
        let _ = write!(s, " r={}", spec.r);
    }
    if k == TestKind::LrCtt {
        match spec.a {
            Some(a) => {
                let _ = write!(s, " a={a}");
            }
            None => s.push_str(" a=default"),
        }
    }
    if let (true, Some(b)) = (k.uses_block(), spec.block_size) {
        let _ = write!(s, " block_size={b}");
    }
    if let (true, Some(l)) = (k.uses_design(), spec.ell) {
        let _ = write!(s, " ell={l}");
    }
    s
}

fn read_sample(path: &Path, header: bool) -> Result<Sample, Failure> {
    read_csv_path(path, header).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_test<W: Write>(a: TestArgs, out: &mut W) -> Result<(), Failure> {
    let spec = test_spec(a.test, &a.params)?;
    writeln!(
        out,
        "# config: verb=test x={} y={} header={} seed={} {}",
        a.x.display(),
        a.y.display(),
        a.header,
        a.params.seed,
        spec_config(&spec)
    )?;
    let x = read_sample(&a.x, a.header)?;
    let y = read_sample(&a.y, a.header)?;
    let report = spec.run(x.view(), y.view(), &RngStream::new(a.params.seed))?;
    let b_alpha = if spec.kind.uses_replicates() {
        threshold_index(spec.alpha, report.permuted.len())?.0
    } else {
        report.threshold_index
    };
    write!(
        out,
        "statistic={:?} rank={} b_alpha={} reject={} elapsed_ns={}",
        report.statistic,
        report.rank,
        b_alpha,
        u8::from(report.reject),
        report.elapsed_ns
    )?;
    if let Some(t) = report.threshold {
        write!(out, " threshold={t:?}")?;
    }
    writeln!(out)?;
    Ok(())
}

fn cmd_bench<W: Write>(a: BenchArgs, out: &mut W) -> Result<(), Failure> {
    if a.n.is_empty() {
        return Err(Failure::Usage("--n needs at least one size".into()));
    }
    if a.test.is_empty() {
        return Err(Failure::Usage("--test needs at least one test".into()));
    }
    if a.reps == 0 {
        return Err(Failure::Usage("--reps must be positive".into()));
    }
    let gs = if a.gs.is_empty() { vec![a.params.g] } else { a.gs.clone() };
    let mut specs = Vec::new();
    for &kind in &a.test {
        for (i, &g) in gs.iter().enumerate() {
            if i > 0 && !kind.uses_compression() {
                break;
            }
            let mut spec = test_spec(kind, &a.params)?;
            spec.g = g;
            specs.push(spec);
        }
    }
    let scenarios = a
        .n
        .iter()
        .map(|&n| ScenarioSpec::parse(&a.scenario, n))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(format!("--scenario/--n: {e}")))?;
    let sizes: Vec<String> = a.n.iter().map(ToString::to_string).collect();
    let tests: Vec<&str> = a.test.iter().map(|k| k.name()).collect();
    let levels: Vec<String> = gs.iter().map(ToString::to_string).collect();
    writeln!(
        out,
        "# config: verb=bench scenario={} n={} test={} g={} reps={} seed={} jobs={} out={} alpha={} s={} B={} r={} kernel={}",
        scenarios[0].label,
        sizes.join(","),
        tests.join(","),
        levels.join(","),
        a.reps,
        a.params.seed,
        a.jobs,
        a.out.display(),
        a.params.alpha,
        a.params.s,
        a.params.b.map_or_else(|| "default".to_string(), |b| b.to_string()),
        a.params.r,
        kernel_label(&a.params.bandwidth)
    )?;
    let mut rows = Vec::new();
    for sc in &scenarios {
        for spec in &specs {
            let summary = run_replications(spec, sc, a.reps, a.params.seed, a.jobs)?;
            let row = BenchRow::new(spec, sc, &summary);
            writeln!(
                out,
                "scenario={} test={} n={} g={} rejections={}/{} rate={:.4} wilson=[{:.4},{:.4}] median_ns={}",
                row.scenario,
                row.test,
                row.n,
                row.g.map_or_else(String::new, |g| g.to_string()),
                row.rejections,
                row.reps,
                row.rate,
                row.wilson_lo,
                row.wilson_hi,
                row.median_ns
            )?;
            rows.push(row);
        }
    }
    let file = File::create(&a.out).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out.display())))?;
    write_bench_csv(BufWriter::new(file), &rows)?;
    Ok(())
}

fn cmd_compress<W: Write>(a: CompressArgs, out: &mut W) -> Result<(), Failure> {
    writeln!(
        out,
        "# config: verb=compress input={} g={} kernel={} delta={} seed={} output={} header={}",
        a.input.display(),
        a.g,
        kernel_label(&a.kernel),
        a.delta,
        a.seed,
        a.output.display(),
        a.header
    )?;
    let s = read_sample(&a.input, a.header)?;
    let rng = RngStream::new(a.seed);
    let k = a.kernel.resolve(s.view(), s.view(), &mut rng.child(1))?;
    let coreset = kt_compress(s.view(), a.g, &k, &k, a.delta, &mut rng.child(0))?;
    let points = coreset.points(s.view());
    let file = File::create(&a.output).map_err(|e| Failure::Runtime(format!("{}: {e}", a.output.display())))?;
    write_csv(BufWriter::new(file), points.view())?;
    writeln!(out, "input_n={} coreset_n={}", s.n(), points.n())?;
    Ok(())
}

fn cmd_medheur<W: Write>(a: MedheurArgs, out: &mut W) -> Result<(), Failure> {
    writeln!(
        out,
        "# config: verb=medheur x={} y={} cap={} seed={} header={}",
        a.x.display(),
        a.y.display(),
        a.cap,
        a.seed,
        a.header
    )?;
    let x = read_sample(&a.x, a.header)?;
    let y = read_sample(&a.y, a.header)?;
    let b = median_heuristic(x.view(), y.view(), a.cap, &mut RngStream::new(a.seed))?;
    writeln!(out, "bandwidth={b:?}")?;
    Ok(())
}
