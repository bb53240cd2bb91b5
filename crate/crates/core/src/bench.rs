//! Synthetic scenarios, a seeded replication harness and the bench CSV.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::features::rff_draw;
use crate::kernels::{KernelArg, KernelSpec};
use crate::mmd::design_deterministic;
use crate::par;
use crate::rng::RngStream;
use crate::sample::{Sample, SampleView};
use crate::two_sample::{
    actt, asymptotic_block_test, asymptotic_incomplete_test, ctt, lr_ctt, rff_test,
    wild_bootstrap_test, ActtConfig, BlockVariance, CttConfig, LrCttConfig, TestReport, WildKind,
};

#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    /// `X ~ N(0, I_d)`, `Y ~ N(shift e_1, I_d)`.
    GaussianShift { d: usize, shift: f64 },
    /// Gaussian mixtures on a 3 x 3 grid with spacing 10; `Y` components have
    /// correlation `(eps - 1) / (eps + 1)`.
    Blobs { epsilon: f64 },
}

impl Generator {
    pub fn dim(&self) -> usize {
        match self {
            Generator::GaussianShift { d, .. } => *d,
            Generator::Blobs { .. } => 2,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Generator::GaussianShift { d, shift } => {
                if d == 0 || !(shift.is_finite() && shift >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gauss scenario needs d >= 1 and shift >= 0 (d = {d}, shift = {shift})"
                    )));
                }
            }
            Generator::Blobs { epsilon } => {
                if !(epsilon.is_finite() && epsilon >= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "blobs scenario needs eps >= 1, got {epsilon}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self, n: usize, rng: &mut RngStream) -> Result<(Sample, Sample)> {
        match *self {
            Generator::GaussianShift { d, shift } => gen_gaussian_shift(n, d, shift, rng),
            Generator::Blobs { epsilon } => gen_blobs(n, epsilon, rng),
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::GaussianShift { d, shift } => write!(f, "gauss:d={d},shift={shift}"),
            Generator::Blobs { epsilon } => write!(f, "blobs:eps={epsilon}"),
        }
    }
}

impl FromStr for Generator {
    type Err = Error;

    /// `gauss:d=<int>,shift=<real>` or `blobs:eps=<real>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("unrecognized scenario {s:?}"));
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params = std::collections::BTreeMap::new();
        for kv in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(bad)?;
            params.insert(k.trim(), v.trim());
        }
        let get = |key: &str| -> Result<Option<f64>> {
            params
                .get(key)
                .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("{key}={v} in {s:?}"))))
                .transpose()
        };
        let allow = |keys: &[&str]| -> Result<()> {
            match params.keys().find(|k| !keys.contains(k)) {
                Some(k) => Err(Error::Parse(format!("unknown scenario parameter {k:?} in {s:?}"))),
                None => Ok(()),
            }
        };
        let g = match name.trim() {
            "gauss" => {
                allow(&["d", "shift"])?;
                let d = get("d")?.unwrap_or(2.0);
                if d.fract() != 0.0 || d < 1.0 {
                    return Err(Error::Parse(format!("dimension must be a positive integer in {s:?}")));
                }
                Generator::GaussianShift {
                    d: d as usize,
                    shift: get("shift")?.unwrap_or(0.0),
                }
            }
            "blobs" => {
                allow(&["eps"])?;
                Generator::Blobs {
                    epsilon: get("eps")?.unwrap_or(1.0),
                }
            }
            _ => return Err(bad()),
        };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub generator: Generator,
    /// Per-sample size.
    pub n: usize,
    pub label: String,
}

impl ScenarioSpec {
    pub fn new(generator: Generator, n: usize) -> Result<Self> {
        generator.validate()?;
        if n < 4 {
            return Err(Error::SampleTooSmall { need: 4, got: n });
        }
        let label = generator.to_string();
        Ok(Self { generator, n, label })
    }

    pub fn parse(spec: &str, n: usize) -> Result<Self> {
        Self::new(spec.parse()?, n)
    }
}

pub fn gen_gaussian_shift(n: usize, d: usize, shift: f64, rng: &mut RngStream) -> Result<(Sample, Sample)> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter("n and d must be positive".into()));
    }
    let x = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let y = (0..n * d)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            if i % d == 0 {
                z + shift
            } else {
                z
            }
        })
        .collect();
    Ok((Sample::new(x, d)?, Sample::new(y, d)?))
}

pub const BLOBS_SPACING: f64 = 10.0;

pub fn blobs_correlation(epsilon: f64) -> f64 {
    (epsilon - 1.0) / (epsilon + 1.0)
}

pub fn gen_blobs(n: usize, epsilon: f64, rng: &mut RngStream) -> Result<(Sample, Sample)> {
    if n == 0 || !(epsilon.is_finite() && epsilon >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "blobs need n >= 1 and eps >= 1 (n = {n}, eps = {epsilon})"
        )));
    }
    let mut draw = |rho: f64| -> Vec<f64> {
        let c = (1.0 - rho * rho).sqrt();
        let mut out = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let comp = rng.random_range(0..9usize);
            let (cx, cy) = ((comp / 3) as f64 * BLOBS_SPACING, (comp % 3) as f64 * BLOBS_SPACING);
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            out.push(cx + z1);
            out.push(cy + rho * z1 + c * z2);
        }
        out
    };
    let x = draw(0.0);
    let y = draw(blobs_correlation(epsilon));
    Ok((Sample::new(x, 2)?, Sample::new(y, 2)?))
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 || k > n {
        return Err(Error::InvalidParameter(format!("need 0 <= k <= n, n >= 1 (k = {k}, n = {n})")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + confidence / 2.0);
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

/// Which test a [`TestSpec`] runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestKind {
    Ctt,
    LrCtt,
    Actt,
    WildBlock,
    WildIncomplete,
    AsympBlockI,
    AsympBlockII,
    AsympIncomplete,
    Rff,
    /// Complete wild-bootstrap test.
    Quadratic,
}

impl TestKind {
    pub const ALL: [TestKind; 10] = [
        TestKind::Ctt,
        TestKind::LrCtt,
        TestKind::Actt,
        TestKind::WildBlock,
        TestKind::WildIncomplete,
        TestKind::AsympBlockI,
        TestKind::AsympBlockII,
        TestKind::AsympIncomplete,
        TestKind::Rff,
        TestKind::Quadratic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Ctt => "ctt",
            TestKind::LrCtt => "lrctt",
            TestKind::Actt => "actt",
            TestKind::WildBlock => "wblock",
            TestKind::WildIncomplete => "wincomplete",
            TestKind::AsympBlockI => "ablock1",
            TestKind::AsympBlockII => "ablock2",
            TestKind::AsympIncomplete => "aincomplete",
            TestKind::Rff => "rff",
            TestKind::Quadratic => "quadratic",
        }
    }

    pub fn uses_compression(self) -> bool {
        matches!(self, TestKind::Ctt | TestKind::LrCtt | TestKind::Actt)
    }

    pub fn uses_replicates(self) -> bool {
        !matches!(
            self,
            TestKind::AsympBlockI | TestKind::AsympBlockII | TestKind::AsympIncomplete
        )
    }

    pub fn uses_rank(self) -> bool {
        matches!(self, TestKind::LrCtt | TestKind::Rff)
    }

    pub fn uses_block(self) -> bool {
        matches!(
            self,
            TestKind::WildBlock | TestKind::AsympBlockI | TestKind::AsympBlockII
        )
    }

    pub fn uses_design(self) -> bool {
        matches!(self, TestKind::WildIncomplete | TestKind::AsympIncomplete)
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown test {s:?}")))
    }
}

/// A test and all of its parameters; the kernel is resolved per call so the
/// median heuristic sees the data.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSpec {
    pub kind: TestKind,
    pub alpha: f64,
    pub g: u32,
    pub s: usize,
    /// Replicates (`B1` for the aggregated test).
    pub b: usize,
    pub delta: f64,
    pub kernel: KernelArg,
    pub r: usize,
    pub a: Option<f64>,
    pub block_size: Option<usize>,
    pub ell: Option<usize>,
    /// Held-out permutations and bisection steps of the aggregated test.
    pub b2: usize,
    pub b3: usize,
    /// Number of bandwidths `2^-i lambda0` aggregated.
    pub agg_levels: usize,
}

impl TestSpec {
    pub fn new(kind: TestKind) -> Self {
        Self {
            kind,
            alpha: 0.05,
            g: 0,
            s: 32,
            b: if kind == TestKind::Actt { 299 } else { 39 },
            delta: 0.5,
            kernel: KernelArg::MedianHeuristic,
            r: 128,
            a: None,
            block_size: None,
            ell: None,
            b2: 200,
            b3: 20,
            agg_levels: 5,
        }
    }

    fn ctt_config(&self, k: KernelSpec) -> CttConfig {
        let mut cfg = CttConfig::new(k);
        cfg.alpha = self.alpha;
        cfg.g = self.g;
        cfg.s = self.s;
        cfg.b = self.b;
        cfg.delta = self.delta;
        cfg
    }

    fn block_size(&self) -> Result<usize> {
        self.block_size
            .ok_or_else(|| Error::InvalidParameter(format!("{} needs a block size", self.kind)))
    }

    fn ell(&self) -> Result<usize> {
        self.ell
            .ok_or_else(|| Error::InvalidParameter(format!("{} needs a design size ell", self.kind)))
    }

    /// Runs the test on `(x, y)`. Child 1 of `rng` resolves the kernel, child 2
    /// drives the test, child 3 draws random features.
    pub fn run(&self, x: SampleView<'_>, y: SampleView<'_>, rng: &RngStream) -> Result<TestReport> {
        let start = Instant::now();
        let kernel = self.kernel.resolve(x, y, &mut rng.child(1))?;
        let test_rng = rng.child(2);
        let bandwidth = || match kernel {
            KernelSpec::Gaussian { bandwidth } => Ok(bandwidth),
            KernelSpec::Sum(_) => Err(Error::Unsupported(format!(
                "{} needs a single Gaussian kernel",
                self.kind
            ))),
        };
        let mut report = match self.kind {
            TestKind::Ctt => ctt(x, y, &self.ctt_config(kernel.clone()), &test_rng)?,
            TestKind::LrCtt => {
                let map = rff_draw(bandwidth()?, self.r, x.d(), &mut rng.child(3))?;
                let mut cfg = LrCttConfig::new(self.ctt_config(kernel.clone()), map);
                cfg.a = self.a;
                lr_ctt(x, y, &cfg, &test_rng)?
            }
            TestKind::Actt => {
                let mut cfg = ActtConfig::bandwidth_ladder(bandwidth()?, self.agg_levels)?;
                cfg.alpha = self.alpha;
                cfg.g = self.g;
                cfg.s = self.s;
                cfg.delta = self.delta;
                cfg.b1 = self.b;
                cfg.b2 = self.b2;
                cfg.b3 = self.b3;
                actt(x, y, &cfg, &test_rng)?.report
            }
            TestKind::WildBlock => wild_bootstrap_test(
                &WildKind::Block {
                    block_size: self.block_size()?,
                },
                x,
                y,
                &kernel,
                self.b,
                self.alpha,
                &test_rng,
            )?,
            TestKind::WildIncomplete => {
                let design = design_deterministic(x.n(), self.ell()?)?;
                wild_bootstrap_test(
                    &WildKind::Incomplete(design),
                    x,
                    y,
                    &kernel,
                    self.b,
                    self.alpha,
                    &test_rng,
                )?
            }
            TestKind::Quadratic => {
                wild_bootstrap_test(&WildKind::Complete, x, y, &kernel, self.b, self.alpha, &test_rng)?
            }
            TestKind::AsympBlockI | TestKind::AsympBlockII => {
                let variant = if self.kind == TestKind::AsympBlockI {
                    BlockVariance::I
                } else {
                    BlockVariance::II
                };
                asymptotic_block_test(x, y, &kernel, self.block_size()?, self.alpha, variant, &test_rng)?
            }
            TestKind::AsympIncomplete => {
                let design = design_deterministic(x.n(), self.ell()?)?;
                asymptotic_incomplete_test(x, y, &kernel, &design, self.alpha)?
            }
            TestKind::Rff => {
                let map = rff_draw(bandwidth()?, self.r, x.d(), &mut rng.child(3))?;
                rff_test(x, y, &map, self.b, self.alpha, &test_rng)?
            }
        };
        report.elapsed_ns = u64::try_from(start.elapsed().as_nanos()).unwrap_or(u64::MAX);
        Ok(report)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RejectionSummary {
    pub reps: usize,
    pub rejections: usize,
    pub rate: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub mean_elapsed_ns: u64,
    pub median_elapsed_ns: u64,
}

impl RejectionSummary {
    /// Builds a summary with a 95% Wilson interval.
    pub fn from_outcomes(rejects: &[bool], elapsed_ns: &[u64]) -> Result<Self> {
        let reps = rejects.len();
        let rejections = rejects.iter().filter(|&&r| r).count();
        let (wilson_lo, wilson_hi) = wilson_interval(rejections, reps, 0.95)?;
        let as_f: Vec<f64> = elapsed_ns.iter().map(|&t| t as f64).collect();
        let mean = if as_f.is_empty() {
            0.0
        } else {
            par::pairwise_sum(&as_f) / as_f.len() as f64
        };
        let mut sorted = elapsed_ns.to_vec();
        sorted.sort_unstable();
        let median = if sorted.is_empty() {
            0
        } else if sorted.len() % 2 == 1 {
            sorted[sorted.len() / 2]
        } else {
            let (a, b) = (sorted[sorted.len() / 2 - 1], sorted[sorted.len() / 2]);
            a / 2 + b / 2 + (a % 2 + b % 2) / 2
        };
        Ok(Self {
            reps,
            rejections,
            rate: rejections as f64 / reps as f64,
            wilson_lo,
            wilson_hi,
            mean_elapsed_ns: mean.round() as u64,
            median_elapsed_ns: median,
        })
    }
}

/// Runs `reps` independent replications. Replication `i` draws its data from
/// `child(i).child(0)` of the seed stream and runs the test on `child(i)`;
/// only the test call is timed.
pub fn run_replications(
    test: &TestSpec,
    scenario: &ScenarioSpec,
    reps: usize,
    seed: u64,
    parallelism: usize,
) -> Result<RejectionSummary> {
    if reps == 0 {
        return Err(Error::InvalidParameter("need at least one replication".into()));
    }
    let root = RngStream::new(seed);
    let outcomes = par::with_threads(parallelism, || {
        par::map_range(reps, |i| -> Result<(bool, u64)> {
            let rep = root.child(i as u64);
            let (x, y) = scenario.generator.generate(scenario.n, &mut rep.child(0))?;
            let report = test.run(x.view(), y.view(), &rep)?;
            Ok((report.reject, report.elapsed_ns))
        })
    });
    let mut rejects = Vec::with_capacity(reps);
    let mut times = Vec::with_capacity(reps);
    for o in outcomes {
        let (r, t) = o?;
        rejects.push(r);
        times.push(t);
    }
    RejectionSummary::from_outcomes(&rejects, &times)
}

/// One row of the bench CSV; parameters a test does not use are empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: String,
    pub test: String,
    pub n: usize,
    pub d: usize,
    pub g: Option<u32>,
    pub s: Option<usize>,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    pub r: Option<usize>,
    pub block_size: Option<usize>,
    pub ell: Option<usize>,
    pub alpha: f64,
    pub reps: usize,
    pub rejections: usize,
    pub rate: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub mean_ns: u64,
    pub median_ns: u64,
}

pub const BENCH_HEADER: [&str; 18] = [
    "scenario",
    "test",
    "n",
    "d",
    "g",
    "s",
    "B",
    "r",
    "block_size",
    "ell",
    "alpha",
    "reps",
    "rejections",
    "rate",
    "wilson_lo",
    "wilson_hi",
    "mean_ns",
    "median_ns",
];

impl BenchRow {
    pub fn new(test: &TestSpec, scenario: &ScenarioSpec, summary: &RejectionSummary) -> Self {
        let k = test.kind;
        Self {
            scenario: scenario.label.clone(),
            test: k.name().to_string(),
            n: scenario.n,
            d: scenario.generator.dim(),
            g: k.uses_compression().then_some(test.g),
            s: k.uses_compression().then_some(test.s),
            b: k.uses_replicates().then_some(test.b),
            r: k.uses_rank().then_some(test.r),
            block_size: if k.uses_block() { test.block_size } else { None },
            ell: if k.uses_design() { test.ell } else { None },
            alpha: test.alpha,
            reps: summary.reps,
            rejections: summary.rejections,
            rate: summary.rate,
            wilson_lo: summary.wilson_lo,
            wilson_hi: summary.wilson_hi,
            mean_ns: summary.mean_elapsed_ns,
            median_ns: summary.median_elapsed_ns,
        }
    }

    pub fn summary(&self) -> RejectionSummary {
        RejectionSummary {
            reps: self.reps,
            rejections: self.rejections,
            rate: self.rate,
            wilson_lo: self.wilson_lo,
            wilson_hi: self.wilson_hi,
            mean_elapsed_ns: self.mean_ns,
            median_elapsed_ns: self.median_ns,
        }
    }
}

/// Writes rows with a header line.
pub fn write_bench_csv<W: Write>(writer: W, rows: &[BenchRow]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(BENCH_HEADER)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_bench_csv<R: Read>(reader: R) -> Result<Vec<BenchRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != BENCH_HEADER {
        return Err(Error::Parse(format!("unexpected bench header {header:?}")));
    }
    rdr.deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn scenario_parsing() {
        let s = ScenarioSpec::parse("gauss:d=10,shift=0.012", 1024).unwrap();
        assert_eq!(s.generator, Generator::GaussianShift { d: 10, shift: 0.012 });
        assert_eq!(s.label, "gauss:d=10,shift=0.012");
        let b = ScenarioSpec::parse("blobs:eps=3", 64).unwrap();
        assert_eq!(b.generator, Generator::Blobs { epsilon: 3.0 });
        assert_eq!(b.generator.dim(), 2);
        for bad in ["gauss:d=0", "blobs:eps=0.5", "gauss:shift=-1", "uniform", "gauss:q=1", "gauss:d=2.5"] {
            assert!(ScenarioSpec::parse(bad, 64).is_err(), "{bad}");
        }
        assert!(ScenarioSpec::parse("gauss", 3).is_err());
    }

    #[test]
    fn gaussian_shift_moments() {
        let mut rng = RngStream::new(1);
        let (x, y) = gen_gaussian_shift(20_000, 3, 0.5, &mut rng).unwrap();
        let first = |s: &Sample, c: usize| (0..s.n()).map(|i| s.row(i)[c]).collect::<Vec<_>>();
        assert!((mean(&first(&y, 0)) - mean(&first(&x, 0)) - 0.5).abs() < 0.05);
        assert!((mean(&first(&y, 1)) - mean(&first(&x, 1))).abs() < 0.05);
    }

    #[test]
    fn gaussian_null_passes_ks() {
        let mut rng = RngStream::new(2);
        let (x, y) = gen_gaussian_shift(5000, 2, 0.0, &mut rng).unwrap();
        let mut a: Vec<f64> = (0..x.n()).map(|i| x.row(i)[0]).collect();
        let mut b: Vec<f64> = (0..y.n()).map(|i| y.row(i)[0]).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut dmax) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            dmax = dmax.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        // two-sample KS critical value at 1%: 1.628 sqrt(2/n)
        assert!(dmax < 1.628 * (2.0 / 5000.0f64).sqrt());
    }

    #[test]
    fn blobs_structure() {
        assert_eq!(blobs_correlation(1.0), 0.0);
        let rho = blobs_correlation(3.0);
        assert_eq!(rho, 0.5);
        // eigenvalues of [[1, rho], [rho, 1]] are 1 +- rho
        assert!(((1.0 + rho) / (1.0 - rho) - 3.0).abs() < 1e-12);

        let mut rng = RngStream::new(3);
        let (x, y) = gen_blobs(9000, 3.0, &mut rng).unwrap();
        let mut counts = [0usize; 9];
        let mut cov = 0.0;
        for i in 0..y.n() {
            let (p, q) = (y.row(i)[0], y.row(i)[1]);
            let (ci, cj) = ((p / 10.0).round(), (q / 10.0).round());
            assert!((0.0..=2.0).contains(&ci) && (0.0..=2.0).contains(&cj));
            counts[(ci * 3.0 + cj) as usize] += 1;
            cov += (p - ci * 10.0) * (q - cj * 10.0);
        }
        assert!(counts.iter().all(|&c| (800..1200).contains(&c)));
        assert!((cov / y.n() as f64 - 0.5).abs() < 0.05);
        let xcov: f64 = (0..x.n())
            .map(|i| {
                let (p, q) = (x.row(i)[0], x.row(i)[1]);
                (p - (p / 10.0).round() * 10.0) * (q - (q / 10.0).round() * 10.0)
            })
            .sum::<f64>()
            / x.n() as f64;
        assert!(xcov.abs() < 0.05);
    }

    #[test]
    fn wilson_boundaries_and_value() {
        let (lo, _) = wilson_interval(0, 50, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        let (_, hi) = wilson_interval(50, 50, 0.95).unwrap();
        assert_eq!(hi, 1.0);
        // independent evaluation of the closed form for k = 20, n = 400
        let (lo, hi) = wilson_interval(20, 400, 0.95).unwrap();
        let z = 1.959963984540054f64;
        let (p, n) = (0.05f64, 400.0f64);
        let c = (p + z * z / (2.0 * n)) / (1.0 + z * z / n);
        let h = z / (1.0 + z * z / n) * ((p * (1.0 - p) + z * z / (4.0 * n)) / n).sqrt();
        assert!((lo - (c - h)).abs() < 1e-12);
        assert!((hi - (c + h)).abs() < 1e-12);
        assert!((lo - 0.032598).abs() < 1e-5 && (hi - 0.075963).abs() < 1e-5);
        assert!(wilson_interval(3, 2, 0.95).is_err());
    }

    #[test]
    fn test_kind_names_round_trip() {
        for k in TestKind::ALL {
            assert_eq!(k.name().parse::<TestKind>().unwrap(), k);
        }
        assert!("foo".parse::<TestKind>().is_err());
    }

    #[test]
    fn replications_ignore_parallelism() {
        let mut spec = TestSpec::new(TestKind::Ctt);
        spec.s = 8;
        spec.g = 1;
        let scenario = ScenarioSpec::parse("gauss:d=2,shift=0.5", 256).unwrap();
        let a = run_replications(&spec, &scenario, 12, 7, 1).unwrap();
        let b = run_replications(&spec, &scenario, 12, 7, 8).unwrap();
        assert_eq!((a.reps, a.rejections), (b.reps, b.rejections));
        assert_eq!(a.rate, b.rate);
        let one = run_replications(&spec, &scenario, 1, 3, 1).unwrap();
        assert!(one.rate == 0.0 || one.rate == 1.0);
    }

    #[test]
    fn every_test_kind_runs() {
        let mut rng = RngStream::new(4);
        let (x, y) = gen_gaussian_shift(64, 2, 1.0, &mut rng).unwrap();
        for kind in TestKind::ALL {
            let mut spec = TestSpec::new(kind);
            spec.s = 8;
            spec.g = 1;
            spec.r = 16;
            spec.block_size = Some(8);
            spec.ell = Some(128);
            spec.b = if kind == TestKind::Actt { 49 } else { 19 };
            spec.b2 = 20;
            spec.b3 = 5;
            let r = spec.run(x.view(), y.view(), &RngStream::new(1)).unwrap();
            assert!(r.statistic.is_finite(), "{kind}");
        }
        let spec = TestSpec::new(TestKind::WildBlock);
        assert!(spec.run(x.view(), y.view(), &RngStream::new(1)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut spec = TestSpec::new(TestKind::Ctt);
        spec.g = 3;
        let scenario = ScenarioSpec::parse("gauss:d=10,shift=0.012", 1024).unwrap();
        let summary = RejectionSummary::from_outcomes(&[true, false, false, true], &[10, 30, 20, 41]).unwrap();
        assert_eq!(summary.median_elapsed_ns, 25);
        assert_eq!(summary.mean_elapsed_ns, 25);
        let mut rows = vec![BenchRow::new(&spec, &scenario, &summary)];
        let mut wb = TestSpec::new(TestKind::AsympBlockII);
        wb.block_size = Some(32);
        rows.push(BenchRow::new(&wb, &scenario, &summary));
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&BENCH_HEADER.join(",")));
        assert!(text.lines().nth(2).unwrap().starts_with("\"gauss:d=10,shift=0.012\",ablock2,1024,10,,,,,32,,"));
        let back = read_bench_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        assert_eq!(back[0].summary(), summary);
    }
}
