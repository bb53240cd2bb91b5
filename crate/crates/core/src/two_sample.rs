//! Two-sample test procedures: CTT, LR-CTT, ACTT and the baseline MMD tests.
//!
//! Every procedure takes its randomness as a `&RngStream` and only derives
//! child streams from it, so a report is a pure function of the inputs and
//! the stream identity. Conventions: child 0 drives compression, child 1
//! indexes permutation / sign replicates (replicate `b` uses `child(1).child(b)`),
//! child 2 drives the rank tie-break and boundary coin, child 3 any other draw.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::features::Featurizer;
use crate::kernels::{KernelSpec, Radial};
use crate::mmd::{
    coreset_sufficient_stats, coreset_sufficient_stats_multi, h_radial, incomplete_h_values,
    PairDesign, SufficientStats,
};
use crate::par;
use crate::rng::RngStream;
use crate::sample::{bin_partition, Coreset, Sample, SampleView};
use crate::thinning::{compress_depth, kt_compress};

const COMPRESSION: u64 = 0;
const REPLICATES: u64 = 1;
const DECISION: u64 = 2;
const AUXILIARY: u64 = 3;

/// Outcome of one test invocation. Statistics are squared MMD values.
#[derive(Clone, Debug, PartialEq)]
pub struct TestReport {
    pub statistic: f64,
    pub permuted: Vec<f64>,
    /// Position of `statistic` in the ascending order of
    /// `permuted ∪ {statistic}`, 1-based, ties broken at random.
    pub rank: usize,
    /// `b_alpha = ceil((1 - alpha)(B + 1))`.
    pub threshold_index: usize,
    pub reject: bool,
    /// `p_alpha = b_alpha - (1 - alpha)(B + 1)`.
    pub boundary_prob: f64,
    pub elapsed_ns: u64,
    /// Explicit rejection threshold, for tests calibrated by a limit law.
    pub threshold: Option<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_replicates(b: usize) -> Result<()> {
    if b == 0 {
        return Err(Error::InvalidParameter("at least one replicate is required".into()));
    }
    Ok(())
}

/// `(b_alpha, p_alpha)` for level `alpha` and `b` replicates.
pub fn threshold_index(alpha: f64, b: usize) -> Result<(usize, f64)> {
    check_alpha(alpha)?;
    check_replicates(b)?;
    let x = (1.0 - alpha) * (b + 1) as f64;
    // absorb rounding so that e.g. 0.95 * 20 lands on 19
    let idx = (x - 1e-9 * x.max(1.0)).ceil().max(1.0);
    let p = (idx - x).clamp(0.0, 1.0 - f64::EPSILON);
    Ok((idx as usize, p))
}

/// Rank of `observed` among `permuted ∪ {observed}`, with a uniformly random
/// order inside the block of exact ties.
pub fn rank_among(observed: f64, permuted: &[f64], rng: &mut RngStream) -> usize {
    let below = permuted.iter().filter(|&&v| v < observed).count();
    let ties = permuted.iter().filter(|&&v| v == observed).count();
    below + 1 + rng.random_range(0..=ties)
}

fn decide(observed: f64, permuted: Vec<f64>, alpha: f64, rng: &RngStream) -> Result<TestReport> {
    let (b_alpha, p_alpha) = threshold_index(alpha, permuted.len())?;
    let mut coin = rng.child(DECISION);
    let rank = rank_among(observed, &permuted, &mut coin);
    let u: f64 = coin.random();
    let reject = rank > b_alpha || (rank == b_alpha && u < p_alpha);
    Ok(TestReport {
        statistic: observed,
        permuted,
        rank,
        threshold_index: b_alpha,
        reject,
        boundary_prob: p_alpha,
        elapsed_ns: 0,
        threshold: None,
    })
}

fn elapsed_since(start: Instant) -> u64 {
    u64::try_from(start.elapsed().as_nanos()).unwrap_or(u64::MAX)
}

fn permutation(n: usize, rng: &RngStream, b: usize) -> Vec<usize> {
    let mut r = rng.child(REPLICATES).child(b as u64);
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut r);
    p
}

fn signs(n: usize, rng: &RngStream, b: usize) -> Vec<f64> {
    let mut r = rng.child(REPLICATES).child(b as u64);
    (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

fn z_quantile(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - alpha))
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

// ---------------------------------------------------------------------------
// Compress Then Test

#[derive(Clone, Debug, PartialEq)]
pub struct CttConfig {
    pub alpha: f64,
    pub g: u32,
    /// Number of coresets (permutation bins) across both samples.
    pub s: usize,
    /// Number of permutation replicates.
    pub b: usize,
    pub delta: f64,
    pub k: KernelSpec,
    pub ksplit: KernelSpec,
}

impl CttConfig {
    /// Defaults: `alpha = 0.05`, `g = 0`, `s = 32`, `B = 39`, `delta = 1/2`,
    /// `ksplit = k`.
    pub fn new(k: KernelSpec) -> Self {
        Self {
            alpha: 0.05,
            g: 0,
            s: 32,
            b: 39,
            delta: 0.5,
            ksplit: k.clone(),
            k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        check_replicates(self.b)?;
        if self.s < 2 {
            return Err(Error::InvalidParameter(format!("need s >= 2, got {}", self.s)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidDelta(self.delta));
        }
        self.k.validate()?;
        self.ksplit.validate()
    }
}

/// `(s_m, s_n, bin size)` for splitting `m + n` points into `s` equal bins.
pub fn bin_layout(m: usize, n: usize, s: usize) -> Result<(usize, usize, usize)> {
    let total = m + n;
    if s == 0 || !total.is_multiple_of(s) {
        return Err(Error::IndivisibleBinning { n: total, bins: s });
    }
    let size = total / s;
    if !m.is_multiple_of(size) || !n.is_multiple_of(size) {
        return Err(Error::IndivisibleBinning { n: total, bins: s });
    }
    Ok((m / size, n / size, size))
}

/// Compressed bins of both samples. Coreset indices refer to `x` for the
/// first `s_m` entries and to `y` for the rest.
struct CompressedBins {
    s_m: usize,
    coresets: Vec<Coreset>,
    points: Vec<Sample>,
}

#[allow(clippy::too_many_arguments)]
fn compress_bins(
    x: SampleView<'_>,
    y: SampleView<'_>,
    s_m: usize,
    s_n: usize,
    g: u32,
    k: &KernelSpec,
    ksplit: &KernelSpec,
    delta: f64,
    rng: &RngStream,
) -> Result<CompressedBins> {
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch {
            expected: x.d(),
            got: y.d(),
        });
    }
    let xb = bin_partition(x, s_m)?;
    let yb = bin_partition(y, s_n)?;
    for b in xb.iter().chain(&yb) {
        if compress_depth(b.n(), g).is_none() {
            return Err(Error::IncompatibleSize { n: b.n(), g });
        }
    }
    let bins: Vec<(SampleView<'_>, usize, usize)> = xb
        .iter()
        .enumerate()
        .map(|(i, b)| (*b, i * b.n(), x.n()))
        .chain(yb.iter().enumerate().map(|(i, b)| (*b, i * b.n(), y.n())))
        .collect();
    let comp = rng.child(COMPRESSION);
    let results = par::map_range(bins.len(), |i| -> Result<(Coreset, Sample)> {
        let (view, offset, parent) = bins[i];
        let local = kt_compress(view, g, k, ksplit, delta, &mut comp.child(i as u64))?;
        let points = local.points(view);
        let global = local.indices().iter().map(|&j| j + offset).collect();
        Ok((Coreset::from_trusted(global, parent), points))
    });
    let mut coresets = Vec::with_capacity(bins.len());
    let mut points = Vec::with_capacity(bins.len());
    for r in results {
        let (c, p) = r?;
        coresets.push(c);
        points.push(p);
    }
    Ok(CompressedBins {
        s_m,
        coresets,
        points,
    })
}

/// Compressed MMD and the statistics needed to permute it.
#[derive(Clone, Debug, PartialEq)]
pub struct CoresetMmd {
    /// MMD (not squared) between the concatenated coresets.
    pub statistic: f64,
    pub coresets: Vec<Coreset>,
    pub stats: SufficientStats,
}

pub fn coreset_mmd(
    x: SampleView<'_>,
    y: SampleView<'_>,
    cfg: &CttConfig,
    rng: &RngStream,
) -> Result<CoresetMmd> {
    cfg.validate()?;
    let (s_m, s_n, _) = bin_layout(x.n(), y.n(), cfg.s)?;
    let bins = compress_bins(x, y, s_m, s_n, cfg.g, &cfg.k, &cfg.ksplit, cfg.delta, rng)?;
    let views: Vec<SampleView<'_>> = bins.points.iter().map(Sample::view).collect();
    let stats = coreset_sufficient_stats(&views, &cfg.k, bins.s_m)?;
    let identity: Vec<usize> = (0..cfg.s).collect();
    let statistic = stats.permuted_unchecked(&identity).max(0.0).sqrt();
    Ok(CoresetMmd {
        statistic,
        coresets: bins.coresets,
        stats,
    })
}

/// Permutation stage of CTT on precomputed sufficient statistics.
pub fn ctt_from_stats(
    stats: &SufficientStats,
    b: usize,
    alpha: f64,
    rng: &RngStream,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    check_replicates(b)?;
    if stats.sizes().windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::InvalidParameter(
            "permuting coresets requires equal coreset sizes".into(),
        ));
    }
    let s = stats.s();
    let identity: Vec<usize> = (0..s).collect();
    let observed = stats.permuted_unchecked(&identity);
    let permuted = par::map_range(b, |i| stats.permuted_unchecked(&permutation(s, rng, i)));
    decide(observed, permuted, alpha, rng)
}

pub fn ctt(x: SampleView<'_>, y: SampleView<'_>, cfg: &CttConfig, rng: &RngStream) -> Result<TestReport> {
    let start = Instant::now();
    let cm = coreset_mmd(x, y, cfg, rng)?;
    let mut report = ctt_from_stats(&cm.stats, cfg.b, cfg.alpha, rng)?;
    report.elapsed_ns = elapsed_since(start);
    Ok(report)
}

// ---------------------------------------------------------------------------
// Low-rank CTT

/// Default halving parameter `a = r / (4^g 2^[r > 4^(g+1)])`.
pub fn default_halving_param(r: usize, g: u32) -> f64 {
    let base = 4f64.powi(g as i32);
    let extra = if (r as f64) > 4.0 * base { 2.0 } else { 1.0 };
    r as f64 / (base * extra)
}

/// Compression bin counts `(s_{m,r}, s_{n,r})`: the common bin size is the
/// largest `4^(g+t) <= 2r/a` dividing both `m` and `n`.
pub fn lr_ctt_bins(m: usize, n: usize, r: usize, a: f64, g: u32) -> Result<(usize, usize)> {
    if r == 0 || !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rank and halving parameter must be positive (r = {r}, a = {a})"
        )));
    }
    let target = 2.0 * r as f64 / a;
    let mut size = 4usize.checked_pow(g).ok_or_else(|| {
        Error::NoFeasibleBinning(format!("compression level {g} is too large"))
    })?;
    let mut best = None;
    while (size as f64) <= target * (1.0 + 1e-12) {
        if m.is_multiple_of(size) && n.is_multiple_of(size) {
            best = Some(size);
        }
        match size.checked_mul(4) {
            Some(next) => size = next,
            None => break,
        }
    }
    match best {
        Some(b) if b > 1 => Ok((m / b, n / b)),
        _ => Err(Error::NoFeasibleBinning(format!(
            "no bin size 4^(g+t) with g = {g} fits under 2r/a = {target} and divides m = {m}, n = {n}"
        ))),
    }
}

#[derive(Clone, Debug)]
pub struct LrCttConfig<F> {
    pub ctt: CttConfig,
    pub map: F,
    /// Halving parameter; `None` selects [`default_halving_param`].
    pub a: Option<f64>,
    /// Total compression bin count; `None` derives it from `a`.
    pub s_r: Option<usize>,
}

impl<F: Featurizer> LrCttConfig<F> {
    pub fn new(ctt: CttConfig, map: F) -> Self {
        Self {
            ctt,
            map,
            a: None,
            s_r: None,
        }
    }

    /// `(s_{m,r}, s_{n,r})` for samples of sizes `m` and `n`.
    pub fn compression_bins(&self, m: usize, n: usize) -> Result<(usize, usize)> {
        match self.s_r {
            Some(s_r) => {
                let (s_mr, s_nr, _) = bin_layout(m, n, s_r)?;
                Ok((s_mr, s_nr))
            }
            None => {
                let r = self.map.rank();
                let a = self.a.unwrap_or_else(|| default_halving_param(r, self.ctt.g));
                lr_ctt_bins(m, n, r, a, self.ctt.g)
            }
        }
    }
}

/// `|(1/s_m) sum_{p < s_m} mu_perm[p] - (1/s_n) sum_{p >= s_m} mu_perm[p]|^2`,
/// summed in label order so equal splits give identical values.
fn lowrank_value(mu: &[f64], r: usize, perm: &[usize], s_m: usize) -> f64 {
    let s = perm.len();
    let s_n = s - s_m;
    let mut first = vec![false; s];
    for &i in &perm[..s_m] {
        first[i] = true;
    }
    let mut diff = vec![0.0; r];
    for (i, &f) in first.iter().enumerate() {
        let w = if f { 1.0 / s_m as f64 } else { -1.0 / s_n as f64 };
        for (d, v) in diff.iter_mut().zip(&mu[i * r..(i + 1) * r]) {
            *d += w * v;
        }
    }
    diff.iter().map(|d| d * d).sum()
}

pub fn lr_ctt<F: Featurizer>(
    x: SampleView<'_>,
    y: SampleView<'_>,
    cfg: &LrCttConfig<F>,
    rng: &RngStream,
) -> Result<TestReport> {
    let start = Instant::now();
    let c = &cfg.ctt;
    c.validate()?;
    if cfg.map.dim() != x.d() {
        return Err(Error::DimensionMismatch {
            expected: cfg.map.dim(),
            got: x.d(),
        });
    }
    let (s_m, s_n, _) = bin_layout(x.n(), y.n(), c.s)?;
    let (s_mr, s_nr) = cfg.compression_bins(x.n(), y.n())?;
    if (s_mr + s_nr) % c.s != 0 || s_mr % s_m != 0 || s_nr % s_n != 0 {
        return Err(Error::GroupingError {
            compression_bins: s_mr + s_nr,
            permutation_bins: c.s,
        });
    }
    let bins = compress_bins(x, y, s_mr, s_nr, c.g, &c.k, &c.ksplit, c.delta, rng)?;
    let per_group = (s_mr + s_nr) / c.s;
    let r = cfg.map.rank();
    let group_means = par::map_range(c.s, |grp| -> Result<Vec<f64>> {
        let mut mean = vec![0.0; r];
        let mut count = 0usize;
        for pts in &bins.points[grp * per_group..(grp + 1) * per_group] {
            let feats = cfg.map.featurize_all(pts.view())?;
            for row in feats.chunks(r) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            count += pts.n();
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        Ok(mean)
    });
    let mut mu = Vec::with_capacity(c.s * r);
    for m in group_means {
        mu.extend(m?);
    }
    let identity: Vec<usize> = (0..c.s).collect();
    let observed = lowrank_value(&mu, r, &identity, s_m);
    let permuted = par::map_range(c.b, |i| lowrank_value(&mu, r, &permutation(c.s, rng, i), s_m));
    let mut report = decide(observed, permuted, c.alpha, rng)?;
    report.elapsed_ns = elapsed_since(start);
    Ok(report)
}

// ---------------------------------------------------------------------------
// Aggregated CTT

#[derive(Clone, Debug, PartialEq)]
pub struct ActtKernel {
    pub k: KernelSpec,
    pub ksplit: KernelSpec,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActtConfig {
    pub kernels: Vec<ActtKernel>,
    pub alpha: f64,
    pub g: u32,
    pub s: usize,
    pub delta: f64,
    pub b1: usize,
    pub b2: usize,
    pub b3: usize,
}

impl ActtConfig {
    /// Gaussian kernels with bandwidths `2^-i lambda0`, `i = 0..count`, equal
    /// weights `1/count`, `ksplit = k`; `B1 = 299`, `B2 = 200`, `B3 = 20`.
    pub fn bandwidth_ladder(lambda0: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::EmptyKernelList);
        }
        let kernels = (0..count)
            .map(|i| {
                let k = KernelSpec::gaussian(lambda0 * 0.5f64.powi(i as i32))?;
                Ok(ActtKernel {
                    ksplit: k.clone(),
                    k,
                    weight: 1.0 / count as f64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kernels,
            alpha: 0.05,
            g: 0,
            s: 32,
            delta: 0.5,
            b1: 299,
            b2: 200,
            b3: 20,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.kernels.is_empty() {
            return Err(Error::EmptyKernelList);
        }
        if self.b1 == 0 || self.b2 == 0 || self.b3 == 0 {
            return Err(Error::InvalidParameter("B1, B2 and B3 must be positive".into()));
        }
        if self.s < 2 {
            return Err(Error::InvalidParameter(format!("need s >= 2, got {}", self.s)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidDelta(self.delta));
        }
        let mut total = 0.0;
        for kk in &self.kernels {
            if !(kk.weight.is_finite() && kk.weight >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "kernel weights must be nonnegative, got {}",
                    kk.weight
                )));
            }
            total += kk.weight;
            kk.k.validate()?;
            kk.ksplit.validate()?;
        }
        if total > 1.0 + 1e-12 || total == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "kernel weights must have a positive sum of at most 1, got {total}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActtReport {
    /// `statistic` is `max_l (M_l - t_l)`; `permuted` holds the same margin
    /// on the held-out permutations; `reject` is the aggregated decision.
    pub report: TestReport,
    /// Selected bisection parameter.
    pub u: f64,
    pub observed: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub kernel_rejects: Vec<bool>,
}

/// Per-kernel order statistics of the first-batch permutations plus the
/// observed value.
struct Quantiles {
    sorted: Vec<Vec<f64>>,
    weights: Vec<f64>,
    alpha: f64,
}

impl Quantiles {
    fn thresholds(&self, u: f64) -> Vec<f64> {
        self.sorted
            .iter()
            .zip(&self.weights)
            .map(|(vals, &w)| {
                let len = vals.len();
                let x = (1.0 - u * w * self.alpha) * len as f64;
                let idx = ((x - 1e-9 * x.max(1.0)).ceil() as usize).clamp(1, len);
                vals[idx - 1]
            })
            .collect()
    }
}

pub fn actt(x: SampleView<'_>, y: SampleView<'_>, cfg: &ActtConfig, rng: &RngStream) -> Result<ActtReport> {
    let start = Instant::now();
    cfg.validate()?;
    let (s_m, s_n, _) = bin_layout(x.n(), y.n(), cfg.s)?;
    let k_all = KernelSpec::sum(cfg.kernels.iter().map(|kk| (kk.k.clone(), 1.0)).collect())?;
    let ksplit_all =
        KernelSpec::sum(cfg.kernels.iter().map(|kk| (kk.ksplit.clone(), 1.0)).collect())?;
    let bins = compress_bins(x, y, s_m, s_n, cfg.g, &k_all, &ksplit_all, cfg.delta, rng)?;
    let views: Vec<SampleView<'_>> = bins.points.iter().map(Sample::view).collect();
    let kernels: Vec<KernelSpec> = cfg.kernels.iter().map(|kk| kk.k.clone()).collect();
    let stats = coreset_sufficient_stats_multi(&views, &kernels, s_m)?;
    let s = cfg.s;
    let identity: Vec<usize> = (0..s).collect();
    let observed: Vec<f64> = stats.iter().map(|st| st.permuted_unchecked(&identity)).collect();
    let total = cfg.b1 + cfg.b2;
    // values[b][l]
    let values = par::map_range(total, |b| {
        let perm = permutation(s, rng, b);
        stats.iter().map(|st| st.permuted_unchecked(&perm)).collect::<Vec<f64>>()
    });
    let sorted = (0..stats.len())
        .map(|l| {
            let mut v: Vec<f64> = values[..cfg.b1].iter().map(|row| row[l]).collect();
            v.push(observed[l]);
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    let weights: Vec<f64> = cfg.kernels.iter().map(|kk| kk.weight).collect();
    let q = Quantiles {
        sorted,
        weights: weights.clone(),
        alpha: cfg.alpha,
    };
    let held_out = &values[cfg.b1..];
    let size_at = |u: f64| {
        let t = q.thresholds(u);
        let hits = held_out
            .iter()
            .filter(|row| row.iter().zip(&t).any(|(v, tl)| v > tl))
            .count();
        hits as f64 / held_out.len() as f64
    };
    let u_max = weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|w| 1.0 / w)
        .fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (0.0, u_max);
    for _ in 0..cfg.b3 {
        let u = 0.5 * (lo + hi);
        if size_at(u) <= cfg.alpha {
            lo = u;
        } else {
            hi = u;
        }
    }
    let thresholds = q.thresholds(lo);
    let kernel_rejects: Vec<bool> = observed.iter().zip(&thresholds).map(|(m, t)| m > t).collect();
    let margin = |row: &[f64]| {
        row.iter()
            .zip(&thresholds)
            .map(|(v, t)| v - t)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let statistic = margin(&observed);
    let permuted: Vec<f64> = held_out.iter().map(|row| margin(row)).collect();
    let mut report = decide(statistic, permuted, cfg.alpha, rng)?;
    report.reject = kernel_rejects.iter().any(|&r| r);
    report.elapsed_ns = elapsed_since(start);
    Ok(ActtReport {
        report,
        u: lo,
        observed,
        thresholds,
        kernel_rejects,
    })
}

// ---------------------------------------------------------------------------
// Baselines

/// Permutation test over the pooled sample for an arbitrary estimator.
pub fn permutation_test<E>(
    statistic: E,
    x: SampleView<'_>,
    y: SampleView<'_>,
    b: usize,
    alpha: f64,
    rng: &RngStream,
) -> Result<TestReport>
where
    E: Fn(SampleView<'_>, SampleView<'_>) -> Result<f64> + Sync,
{
    let start = Instant::now();
    check_alpha(alpha)?;
    check_replicates(b)?;
    let pooled = x.concat(&y)?;
    let (m, total) = (x.n(), pooled.n());
    let observed = statistic(x, y)?;
    let permuted = par::map_range(b, |i| {
        let perm = permutation(total, rng, i);
        let xs = pooled.view().gather(&perm[..m]);
        let ys = pooled.view().gather(&perm[m..]);
        statistic(xs.view(), ys.view())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut report = decide(observed, permuted, alpha, rng)?;
    report.elapsed_ns = elapsed_since(start);
    Ok(report)
}

/// Index set of a wild-bootstrap statistic.
#[derive(Clone, Debug, PartialEq)]
pub enum WildKind {
    Block { block_size: usize },
    Incomplete(PairDesign),
    Complete,
}

fn check_paired(x: SampleView<'_>, y: SampleView<'_>) -> Result<()> {
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch {
            expected: x.d(),
            got: y.d(),
        });
    }
    if x.n() != y.n() {
        return Err(Error::UnequalSizes { m: x.n(), n: y.n() });
    }
    Ok(())
}

/// Off-diagonal `h` values inside each block, `block x block` row-major.
struct BlockH {
    size: usize,
    blocks: Vec<Vec<f64>>,
}

impl BlockH {
    fn new(x: SampleView<'_>, y: SampleView<'_>, k: &Radial, size: usize, min_blocks: usize) -> Result<Self> {
        let n = x.n();
        if size < 2 || !n.is_multiple_of(size) || n / size < min_blocks {
            return Err(Error::IndivisibleBlocking { n, block: size });
        }
        let blocks = par::map_range(n / size, |b| {
            let lo = b * size;
            let mut h = vec![0.0; size * size];
            for i in 0..size {
                for j in (i + 1)..size {
                    let (gi, gj) = (lo + i, lo + j);
                    let v = h_radial(k, x.row(gi), x.row(gj), y.row(gi), y.row(gj));
                    h[i * size + j] = v;
                    h[j * size + i] = v;
                }
            }
            h
        });
        Ok(Self { size, blocks })
    }

    /// Per-block estimates under signs `eps`.
    fn etas(&self, eps: &[f64]) -> Vec<f64> {
        let b = self.size;
        let norm = (b * (b - 1)) as f64;
        self.blocks
            .iter()
            .enumerate()
            .map(|(blk, h)| {
                let e = &eps[blk * b..(blk + 1) * b];
                let mut acc = 0.0;
                for i in 0..b {
                    let row = &h[i * b..(i + 1) * b];
                    let inner: f64 = row.iter().zip(e).map(|(v, ej)| v * ej).sum();
                    acc += e[i] * inner;
                }
                acc / norm
            })
            .collect()
    }

    fn value(&self, eps: &[f64]) -> f64 {
        let etas = self.etas(eps);
        etas.iter().sum::<f64>() / etas.len() as f64
    }
}

/// Complete statistic under each column of `eps` (`n x cols`, row-major),
/// streaming over unordered pairs without storing `h`.
fn complete_values(x: SampleView<'_>, y: SampleView<'_>, k: &Radial, eps: &[f64], cols: usize) -> Vec<f64> {
    const ROWS: usize = 16;
    let n = x.n();
    let chunks = n.div_ceil(ROWS);
    let partial = par::map_range(chunks, |c| {
        let mut acc = vec![0.0; cols];
        let mut row_acc = vec![0.0; cols];
        for i in c * ROWS..((c + 1) * ROWS).min(n) {
            row_acc.iter_mut().for_each(|v| *v = 0.0);
            let (xi, yi) = (x.row(i), y.row(i));
            for j in (i + 1)..n {
                let h = h_radial(k, xi, x.row(j), yi, y.row(j));
                let ej = &eps[j * cols..(j + 1) * cols];
                for (r, e) in row_acc.iter_mut().zip(ej) {
                    *r += h * e;
                }
            }
            let ei = &eps[i * cols..(i + 1) * cols];
            for ((a, r), e) in acc.iter_mut().zip(&row_acc).zip(ei) {
                *a += 2.0 * r * e;
            }
        }
        acc
    });
    let norm = (n * (n - 1)) as f64;
    (0..cols)
        .map(|col| {
            let parts: Vec<f64> = partial.iter().map(|p| p[col]).collect();
            par::pairwise_sum(&parts) / norm
        })
        .collect()
}

/// Wild-bootstrap statistics for each sign vector in `eps` (entries `±1`).
/// Equal to the statistic recomputed after swapping `(x_i, y_i)` wherever
/// `eps_i = -1`.
pub fn wild_statistics(
    kind: &WildKind,
    x: SampleView<'_>,
    y: SampleView<'_>,
    k: &KernelSpec,
    eps: &[Vec<f64>],
) -> Result<Vec<f64>> {
    check_paired(x, y)?;
    let n = x.n();
    if let Some(e) = eps.iter().find(|e| e.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: e.len(),
        });
    }
    let r = k.radial();
    match kind {
        WildKind::Block { block_size } => {
            let bh = BlockH::new(x, y, &r, *block_size, 1)?;
            Ok(par::map_range(eps.len(), |b| bh.value(&eps[b])))
        }
        WildKind::Incomplete(design) => {
            let h = incomplete_h_values(x, y, k, design)?;
            let pairs = design.pairs();
            let ell = pairs.len() as f64;
            Ok(par::map_range(eps.len(), |b| {
                let e = &eps[b];
                pairs
                    .iter()
                    .zip(&h)
                    .map(|(&(i, j), v)| e[i] * e[j] * v)
                    .sum::<f64>()
                    / ell
            }))
        }
        WildKind::Complete => {
            if n < 2 {
                return Err(Error::SampleTooSmall { need: 2, got: n });
            }
            let cols = eps.len();
            let mut mat = vec![0.0; n * cols];
            for (c, e) in eps.iter().enumerate() {
                for (i, v) in e.iter().enumerate() {
                    mat[i * cols + c] = *v;
                }
            }
            Ok(complete_values(x, y, &r, &mat, cols))
        }
    }
}

pub fn wild_bootstrap_test(
    kind: &WildKind,
    x: SampleView<'_>,
    y: SampleView<'_>,
    k: &KernelSpec,
    b: usize,
    alpha: f64,
    rng: &RngStream,
) -> Result<TestReport> {
    let start = Instant::now();
    check_alpha(alpha)?;
    check_replicates(b)?;
    check_paired(x, y)?;
    let n = x.n();
    let mut eps = Vec::with_capacity(b + 1);
    eps.push(vec![1.0; n]);
    eps.extend((0..b).map(|i| signs(n, rng, i)));
    let mut values = wild_statistics(kind, x, y, k, &eps)?;
    let observed = values.remove(0);
    let mut report = decide(observed, values, alpha, rng)?;
    report.elapsed_ns = elapsed_since(start);
    Ok(report)
}

fn limit_report(statistic: f64, threshold: f64, start: Instant) -> TestReport {
    TestReport {
        statistic,
        permuted: Vec::new(),
        rank: 1,
        threshold_index: 1,
        reject: statistic > threshold,
        boundary_prob: 0.0,
        elapsed_ns: elapsed_since(start),
        threshold: Some(threshold),
    }
}

/// Variance estimate for the block test's normal threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockVariance {
    /// Block estimates after one Rademacher flip of the pairs.
    I,
    /// Block estimates as observed.
    II,
}

pub fn asymptotic_block_test(
    x: SampleView<'_>,
    y: SampleView<'_>,
    k: &KernelSpec,
    block_size: usize,
    alpha: f64,
    variant: BlockVariance,
    rng: &RngStream,
) -> Result<TestReport> {
    let start = Instant::now();
    let z = z_quantile(alpha)?;
    check_paired(x, y)?;
    let bh = BlockH::new(x, y, &k.radial(), block_size, 2)?;
    let n = x.n();
    let etas = bh.etas(&vec![1.0; n]);
    let nb = etas.len() as f64;
    let statistic = etas.iter().sum::<f64>() / nb;
    let var = match variant {
        BlockVariance::II => sample_variance(&etas),
        BlockVariance::I => {
            let mut r = rng.child(AUXILIARY);
            let eps: Vec<f64> = (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
            sample_variance(&bh.etas(&eps))
        }
    };
    let threshold = z * (var / nb).sqrt();
    Ok(limit_report(statistic, threshold, start))
}

pub fn asymptotic_incomplete_test(
    x: SampleView<'_>,
    y: SampleView<'_>,
    k: &KernelSpec,
    design: &PairDesign,
    alpha: f64,
) -> Result<TestReport> {
    let start = Instant::now();
    let z = z_quantile(alpha)?;
    check_paired(x, y)?;
    if design.len() < 2 {
        return Err(Error::InvalidDesign("variance needs at least two pairs".into()));
    }
    let h = incomplete_h_values(x, y, k, design)?;
    let ell = h.len() as f64;
    let statistic = h.iter().sum::<f64>() / ell;
    let threshold = z * sample_variance(&h).sqrt() / ell.sqrt();
    Ok(limit_report(statistic, threshold, start))
}

/// Permutation test on the low-rank statistic with cached features.
pub fn rff_test<F: Featurizer + ?Sized>(
    x: SampleView<'_>,
    y: SampleView<'_>,
    map: &F,
    b: usize,
    alpha: f64,
    rng: &RngStream,
) -> Result<TestReport> {
    let start = Instant::now();
    check_alpha(alpha)?;
    check_replicates(b)?;
    let pooled = x.concat(&y)?;
    let feats = map.featurize_all(pooled.view())?;
    let r = map.rank();
    let (m, total) = (x.n(), pooled.n());
    let mut grand = vec![0.0; r];
    for row in feats.chunks(r) {
        grand.iter_mut().zip(row).for_each(|(g, v)| *g += v);
    }
    let value = |idx: &[usize]| {
        let mut first = vec![0.0; r];
        for &i in idx {
            first.iter_mut().zip(&feats[i * r..(i + 1) * r]).for_each(|(f, v)| *f += v);
        }
        let (fm, fn_) = (m as f64, (total - m) as f64);
        first
            .iter()
            .zip(&grand)
            .map(|(a, g)| {
                let d = a / fm - (g - a) / fn_;
                d * d
            })
            .sum::<f64>()
    };
    let identity: Vec<usize> = (0..m).collect();
    let observed = value(&identity);
    let permuted = par::map_range(b, |i| value(&permutation(total, rng, i)[..m]));
    let mut report = decide(observed, permuted, alpha, rng)?;
    report.elapsed_ns = elapsed_since(start);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{rff_draw, FeatureMap, LinearFeatures};
    use crate::mmd::{mmd2_biased, mmd2_block, mmd2_incomplete, mmd2_up, design_deterministic, design_uniform};
    use proptest::prelude::{prop_assert, proptest};
    use rand_distr::StandardNormal;

    fn gauss(b: f64) -> KernelSpec {
        KernelSpec::gaussian(b).unwrap()
    }

    fn normal(n: usize, d: usize, shift: f64, rng: &mut RngStream) -> Sample {
        let data = (0..n * d)
            .map(|i| rng.sample::<f64, _>(StandardNormal) + if i % d == 0 { shift } else { 0.0 })
            .collect();
        Sample::new(data, d).unwrap()
    }

    fn linear_biased(x: SampleView<'_>, y: SampleView<'_>) -> Result<f64> {
        let f = LinearFeatures { dim: x.d() };
        crate::mmd::mmd2_lowrank(x, y, &f)
    }

    #[test]
    fn threshold_index_examples() {
        assert_eq!(threshold_index(0.05, 19).unwrap(), (19, 0.0));
        let (b, p) = threshold_index(0.05, 39).unwrap();
        assert_eq!(b, 38);
        assert!(p.abs() < 1e-12);
        let (b, p) = threshold_index(0.05, 10).unwrap();
        assert_eq!(b, 11);
        assert!((p - 0.55).abs() < 1e-12);
        assert!(threshold_index(0.05, 0).is_err());
        assert!(threshold_index(1.0, 5).is_err());
    }

    proptest! {
        #[test]
        fn rejection_probability_identity(alpha in 0.001f64..0.999, b in 1usize..2000) {
            let (idx, p) = threshold_index(alpha, b).unwrap();
            let bb = (b + 1) as f64;
            prop_assert!(idx >= 1 && idx <= b + 1);
            prop_assert!((0.0..1.0).contains(&p));
            let size = (bb - idx as f64) / bb + p / bb;
            prop_assert!((size - alpha).abs() < 1e-8, "size {} alpha {}", size, alpha);
        }
    }

    #[test]
    fn rank_examples() {
        let mut rng = RngStream::new(1);
        assert_eq!(rank_among(5.0, &[1.0, 2.0, 3.0], &mut rng), 4);
        let mut counts = [0usize; 2];
        for _ in 0..10_000 {
            match rank_among(1.0, &[1.0, 2.0, 3.0], &mut rng) {
                1 => counts[0] += 1,
                2 => counts[1] += 1,
                other => panic!("rank {other}"),
            }
        }
        assert!((counts[0] as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn rank_uniform_under_full_ties() {
        let b = 9;
        let draws = 100_000;
        let mut counts = vec![0usize; b + 1];
        let mut rng = RngStream::new(2);
        let tied = vec![0.25; b];
        for _ in 0..draws {
            counts[rank_among(0.25, &tied, &mut rng) - 1] += 1;
        }
        let p = 1.0 / (b + 1) as f64;
        let sd = (p * (1.0 - p) / draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 / draws as f64 - p).abs() < 3.0 * sd + 1e-9);
        }
    }

    #[test]
    fn bin_layout_cases() {
        assert_eq!(bin_layout(128, 128, 4).unwrap(), (2, 2, 64));
        assert_eq!(bin_layout(100, 300, 4).unwrap(), (1, 3, 100));
        assert!(bin_layout(100, 300, 8).is_ok());
        assert!(bin_layout(10, 20, 4).is_err());
    }

    #[test]
    fn coreset_mmd_sizes() {
        let mut rng = RngStream::new(3);
        let x = normal(128, 2, 0.0, &mut rng);
        let y = normal(128, 2, 0.0, &mut rng);
        let mut cfg = CttConfig::new(gauss(1.0));
        cfg.s = 4;
        cfg.g = 0;
        let cm = coreset_mmd(x.view(), y.view(), &cfg, &RngStream::new(1)).unwrap();
        assert_eq!(cm.coresets.len(), 4);
        assert!(cm.coresets.iter().all(|c| c.len() == 8));
        assert!(cm.coresets[0].indices().iter().all(|&i| i < 64));
        assert!(cm.coresets[1].indices().iter().all(|&i| (64..128).contains(&i)));
        cfg.g = 1;
        let cm = coreset_mmd(x.view(), y.view(), &cfg, &RngStream::new(1)).unwrap();
        assert!(cm.coresets.iter().all(|c| c.len() == 16));
        cfg.s = 8;
        cfg.g = 0;
        assert!(matches!(
            coreset_mmd(x.view(), y.view(), &cfg, &RngStream::new(1)),
            Err(Error::IncompatibleSize { n: 32, g: 0 })
        ));
    }

    #[test]
    fn coreset_mmd_exact_at_maximal_g() {
        let mut rng = RngStream::new(4);
        let x = normal(128, 2, 0.0, &mut rng);
        let y = normal(128, 2, 0.3, &mut rng);
        let k = gauss(1.0);
        let mut cfg = CttConfig::new(k.clone());
        cfg.s = 4;
        cfg.g = 3;
        let cm = coreset_mmd(x.view(), y.view(), &cfg, &RngStream::new(2)).unwrap();
        let full = mmd2_biased(x.view(), y.view(), &k).unwrap().sqrt();
        assert!((cm.statistic - full).abs() < 1e-9);
    }

    #[test]
    fn ctt_boundary_and_determinism() {
        let mut rng = RngStream::new(5);
        let x = normal(128, 2, 0.0, &mut rng);
        let y = normal(128, 2, 0.0, &mut rng);
        let mut cfg = CttConfig::new(gauss(1.0));
        cfg.s = 4;
        cfg.g = 1;
        cfg.b = 19;
        let a = ctt(x.view(), y.view(), &cfg, &RngStream::new(8)).unwrap();
        let mut b = ctt(x.view(), y.view(), &cfg, &RngStream::new(8)).unwrap();
        b.elapsed_ns = a.elapsed_ns;
        assert_eq!(a, b);
        assert_eq!(a.threshold_index, 19);
        assert_eq!(a.boundary_prob, 0.0);
        assert_eq!(a.reject, a.rank == 20);
        assert_eq!(a.permuted.len(), 19);
    }

    #[test]
    fn ctt_detects_a_large_shift() {
        let mut rng = RngStream::new(6);
        let x = normal(256, 2, 0.0, &mut rng);
        let y = normal(256, 2, 2.0, &mut rng);
        let mut cfg = CttConfig::new(gauss(1.0));
        cfg.s = 8;
        cfg.g = 1;
        let r = ctt(x.view(), y.view(), &cfg, &RngStream::new(1)).unwrap();
        assert!(r.reject);
        assert_eq!(r.rank, 40);
    }

    #[test]
    fn lr_bins_examples() {
        assert_eq!(lr_ctt_bins(2048, 2048, 256, 32.0, 1).unwrap(), (128, 128));
        assert!(matches!(
            lr_ctt_bins(2048, 2048, 256, 512.0, 1),
            Err(Error::NoFeasibleBinning(_))
        ));
        assert!(matches!(lr_ctt_bins(64, 64, 2, 2.0, 0), Err(Error::NoFeasibleBinning(_))));
        assert_eq!(default_halving_param(256, 1), 32.0);
        assert_eq!(default_halving_param(128, 2), 4.0);
        assert_eq!(default_halving_param(16, 2), 1.0);
        assert_eq!(default_halving_param(64, 1), 8.0);
        assert_eq!(lr_ctt_bins(512, 512, 128, 4.0, 2).unwrap(), (8, 8));
    }

    fn lr_setup(n: usize, s: usize, g: u32) -> (Sample, Sample, CttConfig) {
        let mut rng = RngStream::new(40 + n as u64);
        let x = normal(n, 2, 0.0, &mut rng);
        let y = normal(n, 2, 0.4, &mut rng);
        let mut cfg = CttConfig::new(gauss(1.0));
        cfg.s = s;
        cfg.g = g;
        (x, y, cfg)
    }

    #[test]
    fn lr_ctt_matches_ctt_on_exact_features() {
        // with maximal g the coresets are the bins, and the linear-kernel
        // CTT on the same permutation streams must agree
        let (x, y, cfg) = lr_setup(64, 8, 2);
        let f = LinearFeatures { dim: 2 };
        let mut lr = LrCttConfig::new(cfg.clone(), f);
        lr.s_r = Some(8);
        for seed in 0..20 {
            let rng = RngStream::new(seed);
            let got = lr_ctt(x.view(), y.view(), &lr, &rng).unwrap();
            let bins: Vec<SampleView> = bin_partition(x.view(), 4)
                .unwrap()
                .into_iter()
                .chain(bin_partition(y.view(), 4).unwrap())
                .collect();
            let mu: Vec<Vec<f64>> = bins.iter().map(|b| f.mean_embedding(*b).unwrap()).collect();
            let mut a = vec![0.0; 64];
            for i in 0..8 {
                for j in 0..8 {
                    a[i * 8 + j] = mu[i].iter().zip(&mu[j]).map(|(p, q)| p * q).sum();
                }
            }
            let stats = SufficientStats::from_matrix(a, vec![8; 8], 4).unwrap();
            let want = ctt_from_stats(&stats, cfg.b, cfg.alpha, &rng).unwrap();
            assert!((got.statistic - want.statistic).abs() < 1e-10);
            for (p, q) in got.permuted.iter().zip(&want.permuted) {
                assert!((p - q).abs() < 1e-10);
            }
            assert_eq!(got.reject, want.reject);
            assert_eq!(got.rank, want.rank);
        }
    }

    #[test]
    fn lr_ctt_constant_map_rejects_at_level() {
        let (x, y, cfg) = lr_setup(64, 4, 1);
        let constant = FeatureMap::from_parts(vec![0.0; 8], vec![0.1; 4], 2).unwrap();
        let mut lr = LrCttConfig::new(cfg, constant);
        lr.s_r = Some(8);
        let reps = 4000;
        let mut rejects = 0;
        for seed in 0..reps {
            let r = lr_ctt(x.view(), y.view(), &lr, &RngStream::new(seed)).unwrap();
            assert!(r.statistic.abs() < 1e-25);
            rejects += r.reject as usize;
        }
        let rate = rejects as f64 / reps as f64;
        assert!((rate - 0.05).abs() < 3.0 * (0.05f64 * 0.95 / reps as f64).sqrt());
    }

    #[test]
    fn lr_ctt_grouping_error() {
        let (x, y, cfg) = lr_setup(64, 8, 0);
        let map = rff_draw(1.0, 8, 2, &mut RngStream::new(0)).unwrap();
        let mut lr = LrCttConfig::new(cfg, map);
        lr.s_r = Some(2);
        assert!(matches!(
            lr_ctt(x.view(), y.view(), &lr, &RngStream::new(0)),
            Err(Error::GroupingError { .. })
        ));
    }

    #[test]
    fn actt_identical_kernels_agree() {
        let mut rng = RngStream::new(7);
        let x = normal(64, 2, 0.0, &mut rng);
        let y = normal(64, 2, 0.8, &mut rng);
        let k = gauss(1.0);
        let kk = ActtKernel {
            k: k.clone(),
            ksplit: k.clone(),
            weight: 1.0 / 3.0,
        };
        let mut cfg = ActtConfig::bandwidth_ladder(1.0, 1).unwrap();
        cfg.kernels = vec![kk.clone(), kk.clone(), kk];
        cfg.s = 8;
        cfg.g = 1;
        cfg.b1 = 99;
        cfg.b2 = 50;
        cfg.b3 = 10;
        for seed in 0..5 {
            let r = actt(x.view(), y.view(), &cfg, &RngStream::new(seed)).unwrap();
            assert!(r.observed.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
            assert!(r.thresholds.windows(2).all(|w| w[0] == w[1]));
            assert!(r.kernel_rejects.windows(2).all(|w| w[0] == w[1]));
            assert_eq!(r.report.reject, r.kernel_rejects[0]);
        }
    }

    #[test]
    fn actt_validation() {
        let mut cfg = ActtConfig::bandwidth_ladder(1.0, 5).unwrap();
        assert!(cfg.validate().is_ok());
        cfg.kernels[0].weight = 0.9;
        assert!(cfg.validate().is_err());
        cfg.kernels.clear();
        assert!(matches!(cfg.validate(), Err(Error::EmptyKernelList)));
    }

    #[test]
    fn permutation_test_cases() {
        let mut rng = RngStream::new(8);
        let x = normal(16, 2, 0.0, &mut rng);
        let y = normal(16, 2, 0.0, &mut rng);
        assert!(permutation_test(linear_biased, x.view(), y.view(), 0, 0.05, &RngStream::new(0)).is_err());
        let reps = 4000;
        let mut rejects = 0;
        for seed in 0..reps {
            let r = permutation_test(|_, _| Ok(1.0), x.view(), y.view(), 19, 0.05, &RngStream::new(seed))
                .unwrap();
            rejects += r.reject as usize;
        }
        let rate = rejects as f64 / reps as f64;
        assert!((rate - 0.05).abs() < 3.0 * (0.05f64 * 0.95 / reps as f64).sqrt());
    }

    #[test]
    fn rff_matches_linear_permutation_test() {
        let mut rng = RngStream::new(9);
        let x = normal(30, 3, 0.0, &mut rng);
        let y = normal(20, 3, 0.3, &mut rng);
        let f = LinearFeatures { dim: 3 };
        for seed in 0..20 {
            let rng = RngStream::new(seed);
            let a = rff_test(x.view(), y.view(), &f, 39, 0.05, &rng).unwrap();
            let b = permutation_test(linear_biased, x.view(), y.view(), 39, 0.05, &rng).unwrap();
            assert!((a.statistic - b.statistic).abs() < 1e-12);
            for (p, q) in a.permuted.iter().zip(&b.permuted) {
                assert!((p - q).abs() < 1e-12);
            }
            assert_eq!(a.reject, b.reject);
        }
    }

    #[test]
    fn rff_constant_map_rejects_at_level() {
        let mut rng = RngStream::new(10);
        let x = normal(20, 2, 0.0, &mut rng);
        let y = normal(20, 2, 1.0, &mut rng);
        let constant = FeatureMap::from_parts(vec![0.0; 4], vec![0.0; 2], 2).unwrap();
        let reps = 4000;
        let mut rejects = 0;
        for seed in 0..reps {
            rejects += rff_test(x.view(), y.view(), &constant, 39, 0.05, &RngStream::new(seed))
                .unwrap()
                .reject as usize;
        }
        let rate = rejects as f64 / reps as f64;
        assert!((rate - 0.05).abs() < 3.0 * (0.05f64 * 0.95 / reps as f64).sqrt());
    }

    fn swapped(x: &Sample, y: &Sample, eps: &[f64]) -> (Sample, Sample) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..x.n() {
            let (a, b) = if eps[i] < 0.0 { (y.row(i), x.row(i)) } else { (x.row(i), y.row(i)) };
            xs.push(a.to_vec());
            ys.push(b.to_vec());
        }
        (Sample::from_rows(&xs).unwrap(), Sample::from_rows(&ys).unwrap())
    }

    #[test]
    fn wild_signs_match_physical_swaps() {
        let mut rng = RngStream::new(11);
        let n = 24;
        let x = normal(n, 2, 0.0, &mut rng);
        let y = normal(n, 2, 0.5, &mut rng);
        let k = gauss(1.0);
        let design = design_uniform(n, 4 * n, &mut rng).unwrap();
        let kinds = [
            WildKind::Block { block_size: 6 },
            WildKind::Incomplete(design.clone()),
            WildKind::Complete,
        ];
        let mut eps: Vec<Vec<f64>> = vec![vec![1.0; n], vec![-1.0; n]];
        eps.extend((0..50).map(|b| signs(n, &rng, b)));
        for kind in &kinds {
            let vals = wild_statistics(kind, x.view(), y.view(), &k, &eps).unwrap();
            for (e, v) in eps.iter().zip(&vals) {
                let (xs, ys) = swapped(&x, &y, e);
                let direct = match kind {
                    WildKind::Block { block_size } => mmd2_block(xs.view(), ys.view(), &k, *block_size).unwrap().value,
                    WildKind::Incomplete(d) => mmd2_incomplete(xs.view(), ys.view(), &k, d).unwrap(),
                    WildKind::Complete => mmd2_up(xs.view(), ys.view(), &k).unwrap(),
                };
                assert!((direct - v).abs() < 1e-10, "{kind:?}: {direct} vs {v}");
            }
            assert!((vals[0] - vals[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn wild_bootstrap_requires_pairs() {
        let mut rng = RngStream::new(12);
        let x = normal(8, 2, 0.0, &mut rng);
        let y = normal(6, 2, 0.0, &mut rng);
        assert!(matches!(
            wild_bootstrap_test(&WildKind::Complete, x.view(), y.view(), &gauss(1.0), 9, 0.05, &rng),
            Err(Error::UnequalSizes { m: 8, n: 6 })
        ));
    }

    #[test]
    fn asymptotic_block_cases() {
        let k = gauss(1.0);
        let same = Sample::new(vec![0.5; 16], 2).unwrap();
        let rng = RngStream::new(0);
        for v in [BlockVariance::I, BlockVariance::II] {
            let r = asymptotic_block_test(same.view(), same.view(), &k, 4, 0.05, v, &rng).unwrap();
            assert_eq!(r.threshold, Some(0.0));
            assert!(!r.reject);
        }
        let mut g = RngStream::new(13);
        let x = normal(16, 2, 0.0, &mut g);
        let y = normal(16, 2, 0.0, &mut g);
        assert!(matches!(
            asymptotic_block_test(x.view(), y.view(), &k, 16, 0.05, BlockVariance::II, &rng),
            Err(Error::IndivisibleBlocking { .. })
        ));
        let r = asymptotic_block_test(x.view(), y.view(), &k, 4, 0.05, BlockVariance::II, &rng).unwrap();
        let etas = mmd2_block(x.view(), y.view(), &k, 4).unwrap().etas;
        let mean = etas.iter().sum::<f64>() / 4.0;
        let var = etas.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((r.statistic - mean).abs() < 1e-12);
        assert!((r.threshold.unwrap() - 1.6448536269514722 * (var / 4.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn asymptotic_incomplete_scale_invariant() {
        let mut g = RngStream::new(14);
        let x = normal(32, 2, 0.0, &mut g);
        let y = normal(32, 2, 0.2, &mut g);
        let design = design_deterministic(32, 128).unwrap();
        let k = gauss(1.0);
        let a = asymptotic_incomplete_test(x.view(), y.view(), &k, &design, 0.05).unwrap();
        let b = asymptotic_incomplete_test(x.view(), y.view(), &k.scaled(7.5), &design, 0.05).unwrap();
        assert!((b.statistic - 7.5 * a.statistic).abs() < 1e-12);
        assert!((b.threshold.unwrap() - 7.5 * a.threshold.unwrap()).abs() < 1e-12);
        assert_eq!(a.reject, b.reject);
        let one = PairDesign::new(32, vec![(0, 1)]).unwrap();
        assert!(asymptotic_incomplete_test(x.view(), y.view(), &k, &one, 0.05).is_err());
        let same = Sample::new(vec![0.5; 8], 2).unwrap();
        let d = design_deterministic(4, 8).unwrap();
        let r = asymptotic_incomplete_test(same.view(), same.view(), &k, &d, 0.05).unwrap();
        assert_eq!(r.threshold, Some(0.0));
    }
}
