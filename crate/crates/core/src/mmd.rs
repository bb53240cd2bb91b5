//! MMD estimators: biased, unbiased, paired (`up`), block, incomplete and
//! low-rank, plus the coreset sufficient statistics that make permuted
//! statistics O(s^2).
//!
//! Gram sums are accumulated in fixed row chunks and combined by pairwise
//! reduction, so results are bit-identical for any thread count.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::Featurizer;
use crate::kernels::{sqdist, KernelSpec, Radial};
use crate::par;
use crate::rng::RngStream;
use crate::sample::SampleView;

const ROW_CHUNK: usize = 32;

fn check_dims(x: SampleView<'_>, y: SampleView<'_>) -> Result<()> {
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch {
            expected: x.d(),
            got: y.d(),
        });
    }
    Ok(())
}

fn check_paired(x: SampleView<'_>, y: SampleView<'_>) -> Result<()> {
    check_dims(x, y)?;
    if x.n() != y.n() {
        return Err(Error::UnequalSizes { m: x.n(), n: y.n() });
    }
    Ok(())
}

/// `sum_{i, j} k(a_i, b_j)`
pub(crate) fn cross_sum(a: SampleView<'_>, b: SampleView<'_>, k: &Radial) -> f64 {
    let chunks = a.n().div_ceil(ROW_CHUNK);
    let partial = par::map_range(chunks, |c| {
        let end = ((c + 1) * ROW_CHUNK).min(a.n());
        let mut acc = 0.0;
        for i in c * ROW_CHUNK..end {
            let ai = a.row(i);
            for j in 0..b.n() {
                acc += k.eval(ai, b.row(j));
            }
        }
        acc
    });
    par::pairwise_sum(&partial)
}

/// `sum_{i != j} k(a_i, a_j)`, using symmetry.
pub(crate) fn offdiag_sum(a: SampleView<'_>, k: &Radial) -> f64 {
    let chunks = a.n().div_ceil(ROW_CHUNK);
    let partial = par::map_range(chunks, |c| {
        let end = ((c + 1) * ROW_CHUNK).min(a.n());
        let mut acc = 0.0;
        for i in c * ROW_CHUNK..end {
            let ai = a.row(i);
            for j in (i + 1)..a.n() {
                acc += k.eval(ai, a.row(j));
            }
        }
        acc
    });
    2.0 * par::pairwise_sum(&partial)
}

/// `h(x, x', y, y') = k(x, x') + k(y, y') - k(x, y') - k(x', y)`
pub fn h_stat(k: &KernelSpec, x: &[f64], xp: &[f64], y: &[f64], yp: &[f64]) -> Result<f64> {
    let d = x.len();
    for v in [xp, y, yp] {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
    }
    Ok(h_radial(&k.radial(), x, xp, y, yp))
}

#[inline]
pub(crate) fn h_radial(k: &Radial, x: &[f64], xp: &[f64], y: &[f64], yp: &[f64]) -> f64 {
    k.eval(x, xp) + k.eval(y, yp) - k.eval(x, yp) - k.eval(xp, y)
}

/// Squared MMD between the empirical measures of `x` and `y` (V-statistic).
pub fn mmd2_biased(x: SampleView<'_>, y: SampleView<'_>, k: &KernelSpec) -> Result<f64> {
    check_dims(x, y)?;
    let r = k.radial();
    let diag = r.eval_sq(0.0);
    let (m, n) = (x.n() as f64, y.n() as f64);
    let xx = offdiag_sum(x, &r) + m * diag;
    let yy = offdiag_sum(y, &r) + n * diag;
    let xy = cross_sum(x, y, &r);
    Ok(xx / (m * m) + yy / (n * n) - 2.0 * xy / (m * n))
}

/// Unbiased U-statistic estimate (within-sample diagonals excluded).
pub fn mmd2_unbiased(x: SampleView<'_>, y: SampleView<'_>, k: &KernelSpec) -> Result<f64> {
    check_dims(x, y)?;
    for s in [x, y] {
        if s.n() < 2 {
            return Err(Error::SampleTooSmall { need: 2, got: s.n() });
        }
    }
    let r = k.radial();
    let (m, n) = (x.n() as f64, y.n() as f64);
    let xx = offdiag_sum(x, &r);
    let yy = offdiag_sum(y, &r);
    let xy = cross_sum(x, y, &r);
    Ok(xx / (m * (m - 1.0)) + yy / (n * (n - 1.0)) - 2.0 * xy / (m * n))
}

/// Paired estimator `1/(n(n-1)) sum_{i != j} h(x_i, x_j, y_i, y_j)`.
pub fn mmd2_up(x: SampleView<'_>, y: SampleView<'_>, k: &KernelSpec) -> Result<f64> {
    check_paired(x, y)?;
    if x.n() < 2 {
        return Err(Error::SampleTooSmall { need: 2, got: x.n() });
    }
    Ok(up_radial(x, y, &k.radial()))
}

fn up_radial(x: SampleView<'_>, y: SampleView<'_>, r: &Radial) -> f64 {
    let n = x.n() as f64;
    let paired: f64 = (0..x.n()).map(|i| r.eval(x.row(i), y.row(i))).sum();
    let cross_off = cross_sum(x, y, r) - paired;
    (offdiag_sum(x, r) + offdiag_sum(y, r) - 2.0 * cross_off) / (n * (n - 1.0))
}

/// Block statistic and its per-block estimates `eta_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockStat {
    pub value: f64,
    pub etas: Vec<f64>,
}

pub fn mmd2_block(
    x: SampleView<'_>,
    y: SampleView<'_>,
    k: &KernelSpec,
    block_size: usize,
) -> Result<BlockStat> {
    check_paired(x, y)?;
    let n = x.n();
    if block_size < 2 || !n.is_multiple_of(block_size) {
        return Err(Error::IndivisibleBlocking { n, block: block_size });
    }
    let r = k.radial();
    let blocks = n / block_size;
    let etas = par::map_range(blocks, |b| {
        let (lo, hi) = (b * block_size, (b + 1) * block_size);
        up_radial(x.rows(lo, hi), y.rows(lo, hi), &r)
    });
    let value = etas.iter().sum::<f64>() / blocks as f64;
    Ok(BlockStat { value, etas })
}

/// Ordered index pairs `(i, j)`, `i != j`, into a paired sample of length `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairDesign {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl PairDesign {
    pub fn new(n: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidDesign("design has no pairs".into()));
        }
        for &(i, j) in &pairs {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidDesign(format!(
                    "pair ({i}, {j}) invalid for sample of {n}"
                )));
            }
        }
        Ok(Self { n, pairs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// Ring design: `(i, (i + k) mod n)` for `k = 1, 2, ...`, `i = 0..n`, stopping
/// after `ell` pairs.
pub fn design_deterministic(n: usize, ell: usize) -> Result<PairDesign> {
    let max = n.saturating_mul(n.saturating_sub(1));
    if ell > max {
        return Err(Error::DesignTooLarge { ell, max });
    }
    if ell == 0 {
        return Err(Error::InvalidDesign("design needs at least one pair".into()));
    }
    let pairs = (1..n)
        .flat_map(|k| (0..n).map(move |i| (i, (i + k) % n)))
        .take(ell)
        .collect();
    PairDesign::new(n, pairs)
}

/// `ell` pairs drawn uniformly with replacement from the ordered pairs `i != j`.
pub fn design_uniform(n: usize, ell: usize, rng: &mut RngStream) -> Result<PairDesign> {
    if n < 2 {
        return Err(Error::SampleTooSmall { need: 2, got: n });
    }
    let pairs = (0..ell)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect();
    PairDesign::new(n, pairs)
}

pub fn mmd2_incomplete(
    x: SampleView<'_>,
    y: SampleView<'_>,
    k: &KernelSpec,
    design: &PairDesign,
) -> Result<f64> {
    Ok(incomplete_h_values(x, y, k, design)?.iter().sum::<f64>() / design.len() as f64)
}

/// `h(x_i, x_j, y_i, y_j)` for every design pair, in design order.
pub(crate) fn incomplete_h_values(
    x: SampleView<'_>,
    y: SampleView<'_>,
    k: &KernelSpec,
    design: &PairDesign,
) -> Result<Vec<f64>> {
    check_paired(x, y)?;
    if design.n() != x.n() {
        return Err(Error::InvalidDesign(format!(
            "design built for n = {}, sample has {}",
            design.n(),
            x.n()
        )));
    }
    let r = k.radial();
    let pairs = design.pairs();
    Ok(par::map_range(pairs.len(), |p| {
        let (i, j) = pairs[p];
        h_radial(&r, x.row(i), x.row(j), y.row(i), y.row(j))
    }))
}

/// `|mean phi(x) - mean phi(y)|^2`
pub fn mmd2_lowrank<F: Featurizer + ?Sized>(
    x: SampleView<'_>,
    y: SampleView<'_>,
    map: &F,
) -> Result<f64> {
    let mx = map.mean_embedding(x)?;
    let my = map.mean_embedding(y)?;
    Ok(mx.iter().zip(&my).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Mean cross-kernel values between `s` coresets; the first `s_m` belong to
/// the first sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SufficientStats {
    a: Vec<f64>,
    s: usize,
    sizes: Vec<usize>,
    s_m: usize,
}

impl SufficientStats {
    pub fn from_matrix(a: Vec<f64>, sizes: Vec<usize>, s_m: usize) -> Result<Self> {
        let s = sizes.len();
        if s < 2 || s_m == 0 || s_m >= s || a.len() != s * s {
            return Err(Error::InvalidParameter(format!(
                "sufficient statistics need s >= 2 and 1 <= s_m < s (s = {s}, s_m = {s_m})"
            )));
        }
        Ok(Self { a, s, sizes, s_m })
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn s_m(&self) -> usize {
        self.s_m
    }

    pub fn s_n(&self) -> usize {
        self.s - self.s_m
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.s + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    /// Depends on `perm` only through which coresets land on the first side,
    /// so permutations with the same split give bit-identical values.
    pub(crate) fn permuted_unchecked(&self, perm: &[usize]) -> f64 {
        let (s, s_m) = (self.s, self.s_m);
        let s_n = s - s_m;
        let mut first = vec![false; s];
        for &i in &perm[..s_m] {
            first[i] = true;
        }
        let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
        for i in 0..s {
            let row = &self.a[i * s..(i + 1) * s];
            for j in 0..s {
                let v = row[j];
                match (first[i], first[j]) {
                    (true, true) => xx += v,
                    (false, false) => yy += v,
                    _ => xy += v,
                }
            }
        }
        let (fm, fn_) = (s_m as f64, s_n as f64);
        // xy counts both orders
        xx / (fm * fm) + yy / (fn_ * fn_) - xy / (fm * fn_)
    }
}

fn validate_groups(groups: &[SampleView<'_>], s_m: usize) -> Result<()> {
    if groups.len() < 2 || s_m == 0 || s_m >= groups.len() {
        return Err(Error::InvalidParameter(format!(
            "need s >= 2 coresets and 1 <= s_m < s (s = {}, s_m = {s_m})",
            groups.len()
        )));
    }
    if let Some(i) = groups.iter().position(|g| g.n() == 0) {
        return Err(Error::EmptyCoreset(i));
    }
    let d = groups[0].d();
    if let Some(g) = groups.iter().find(|g| g.d() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: g.d(),
        });
    }
    Ok(())
}

pub fn coreset_sufficient_stats(
    groups: &[SampleView<'_>],
    k: &KernelSpec,
    s_m: usize,
) -> Result<SufficientStats> {
    let mut all = coreset_sufficient_stats_multi(groups, std::slice::from_ref(k), s_m)?;
    Ok(all.pop().expect("one kernel in, one result out"))
}

/// Sufficient statistics for several kernels at once; squared distances are
/// shared across kernels.
pub fn coreset_sufficient_stats_multi(
    groups: &[SampleView<'_>],
    kernels: &[KernelSpec],
    s_m: usize,
) -> Result<Vec<SufficientStats>> {
    validate_groups(groups, s_m)?;
    if kernels.is_empty() {
        return Err(Error::EmptyKernelList);
    }
    let s = groups.len();
    let radials: Vec<Radial> = kernels.iter().map(KernelSpec::radial).collect();
    let upper: Vec<(usize, usize)> = (0..s).flat_map(|i| (i..s).map(move |j| (i, j))).collect();
    let sums = par::map_range(upper.len(), |p| {
        let (i, j) = upper[p];
        let (gi, gj) = (groups[i], groups[j]);
        let mut acc = vec![0.0; radials.len()];
        for u in 0..gi.n() {
            let xu = gi.row(u);
            let start = if i == j { u + 1 } else { 0 };
            for v in start..gj.n() {
                let r2 = sqdist(xu, gj.row(v));
                for (a, r) in acc.iter_mut().zip(&radials) {
                    *a += r.eval_sq(r2);
                }
            }
        }
        if i == j {
            let n = gi.n() as f64;
            for (a, r) in acc.iter_mut().zip(&radials) {
                *a = (2.0 * *a + n * r.eval_sq(0.0)) / (n * n);
            }
        } else {
            let denom = (gi.n() * gj.n()) as f64;
            acc.iter_mut().for_each(|a| *a /= denom);
        }
        acc
    });
    let sizes: Vec<usize> = groups.iter().map(|g| g.n()).collect();
    (0..radials.len())
        .map(|kk| {
            let mut a = vec![0.0; s * s];
            for (p, &(i, j)) in upper.iter().enumerate() {
                a[i * s + j] = sums[p][kk];
                a[j * s + i] = sums[p][kk];
            }
            SufficientStats::from_matrix(a, sizes.clone(), s_m)
        })
        .collect()
}

/// Biased squared MMD between the concatenated coresets after relabelling
/// coreset `perm[p]` into slot `p`. Requires equal coreset sizes.
pub fn permuted_mmd2_from_stats(stats: &SufficientStats, perm: &[usize]) -> Result<f64> {
    if perm.len() != stats.s {
        return Err(Error::InvalidPermutation(stats.s));
    }
    let mut seen = vec![false; stats.s];
    for &p in perm {
        if p >= stats.s || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidPermutation(stats.s));
        }
    }
    if stats.sizes.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::InvalidParameter(
            "permuted statistics need equal-sized coresets".into(),
        ));
    }
    Ok(stats.permuted_unchecked(perm))
}
