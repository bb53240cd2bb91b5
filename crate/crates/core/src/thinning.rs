//! Kernel thinning: kt-split, kt-swap, symmetrized halving, optimal
//! four-point halving and the recursive Compress.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, Radial};
use crate::par;
use crate::rng::RngStream;
use crate::sample::{Coreset, SampleView};

/// Inputs up to this size get a materialized Gram matrix.
const DENSE_LIMIT: usize = 2048;

/// Kernel values over the points of one sample, cached when small.
struct Gram<'a> {
    view: SampleView<'a>,
    radial: Radial,
    dense: Option<Vec<f64>>,
}

impl<'a> Gram<'a> {
    fn new(view: SampleView<'a>, k: &KernelSpec) -> Self {
        let radial = k.radial();
        let n = view.n();
        let dense = (n <= DENSE_LIMIT).then(|| {
            let mut m = vec![0.0; n * n];
            // upper triangle, then mirror
            par::for_each_chunk_mut(&mut m, n.max(1), |i, row| {
                let xi = view.row(i);
                for (j, v) in row.iter_mut().enumerate().skip(i) {
                    *v = radial.eval(xi, view.row(j));
                }
            });
            for i in 1..n {
                for j in 0..i {
                    m[i * n + j] = m[j * n + i];
                }
            }
            m
        });
        Self {
            view,
            radial,
            dense,
        }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        match &self.dense {
            Some(m) => m[i * self.view.n() + j],
            None => self.radial.eval(self.view.row(i), self.view.row(j)),
        }
    }

    fn diag(&self, i: usize) -> f64 {
        self.get(i, i)
    }
}

/// Running sub-Gaussian scale of the split.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplitState {
    pub sigma: f64,
}

impl SplitState {
    /// Advances the state and returns the swap threshold.
    pub fn update(&mut self, vmax: f64, delta: f64) -> f64 {
        let (a, sigma) = get_swap_params(self.sigma, vmax, delta);
        self.sigma = sigma;
        a
    }
}

/// Returns `(a, sigma')` for the next pair.
pub fn get_swap_params(sigma: f64, vmax: f64, delta: f64) -> (f64, f64) {
    if vmax <= 0.0 {
        return (0.0, sigma);
    }
    let delta = delta.clamp(f64::MIN_POSITIVE, 1.0);
    let v2 = vmax * vmax;
    let a = (vmax * sigma * (2.0 * (2.0 / delta).ln()).sqrt()).max(v2);
    let growth = (1.0 + (v2 - 2.0 * a) * sigma * sigma / (a * a)).max(0.0);
    (a, (sigma * sigma + v2 * growth).sqrt())
}

/// Compression settings.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressConfig {
    pub g: u32,
    pub delta: f64,
    pub k: KernelSpec,
    pub ksplit: KernelSpec,
}

impl CompressConfig {
    pub fn new(g: u32, delta: f64, k: KernelSpec, ksplit: KernelSpec) -> Result<Self> {
        check_delta(delta)?;
        k.validate()?;
        ksplit.validate()?;
        Ok(Self { g, delta, k, ksplit })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidDelta(delta))
    }
}

/// Splits the points into two candidate coresets of `floor(n/2)` points each.
pub fn kt_split(
    ksplit: &KernelSpec,
    s: SampleView<'_>,
    delta: f64,
    rng: &mut RngStream,
) -> Result<(Coreset, Coreset)> {
    let (c1, c2, _) = kt_split_traced(ksplit, s, delta, rng)?;
    Ok((c1, c2))
}

/// As [`kt_split`], also returning each pair's swap probability.
pub fn kt_split_traced(
    ksplit: &KernelSpec,
    s: SampleView<'_>,
    delta: f64,
    rng: &mut RngStream,
) -> Result<(Coreset, Coreset, Vec<f64>)> {
    if s.n() < 2 {
        return Err(Error::SampleTooSmall { need: 2, got: s.n() });
    }
    let gram = Gram::new(s, ksplit);
    Ok(split_on(&gram, delta, rng))
}

fn split_on(gram: &Gram<'_>, delta: f64, rng: &mut RngStream) -> (Coreset, Coreset, Vec<f64>) {
    let n = gram.view.n();
    let half = n / 2;
    let delta_pair = delta / n as f64;
    let mut state = SplitState::default();
    // +1 for points in the first coreset, -1 for the second
    let mut side = vec![0i8; n];
    let mut c1 = Vec::with_capacity(half);
    let mut c2 = Vec::with_capacity(half);
    let mut probs = Vec::with_capacity(half);
    for i in 0..half {
        let (mut x, mut xp) = (2 * i, 2 * i + 1);
        let v2 = gram.diag(x) + gram.diag(xp) - 2.0 * gram.get(x, xp);
        let a = state.update(v2.max(0.0).sqrt(), delta_pair);
        let mut theta = 0.0;
        for (j, &sj) in side.iter().enumerate().take(2 * i) {
            // row access; the Gram matrix is symmetric
            let diff = gram.get(x, j) - gram.get(xp, j);
            theta -= f64::from(sj) * diff;
        }
        let p = if a > 0.0 {
            (0.5 * (1.0 - theta / a).max(0.0)).min(1.0)
        } else {
            0.5
        };
        probs.push(p);
        if rng.random::<f64>() < p {
            std::mem::swap(&mut x, &mut xp);
        }
        side[x] = 1;
        side[xp] = -1;
        c1.push(x);
        c2.push(xp);
    }
    (
        Coreset::from_trusted(c1, n),
        Coreset::from_trusted(c2, n),
        probs,
    )
}

/// Picks the best of the baseline and the two candidates, then refines it by
/// one greedy sweep over its slots.
pub fn kt_swap(k: &KernelSpec, s: SampleView<'_>, candidates: (&Coreset, &Coreset)) -> Result<Coreset> {
    let n = s.n();
    let half = n / 2;
    for c in [candidates.0, candidates.1] {
        if c.parent_len() != n || c.len() != half {
            return Err(Error::InvalidParameter(format!(
                "candidate coreset of {} points over {} does not halve {n} points",
                c.len(),
                c.parent_len()
            )));
        }
    }
    if half == 0 {
        return Err(Error::SampleTooSmall { need: 2, got: n });
    }
    let gram = Gram::new(s, k);
    Ok(swap_on(&gram, candidates.0.indices(), candidates.1.indices()))
}

fn swap_on(gram: &Gram<'_>, c1: &[usize], c2: &[usize]) -> Coreset {
    let n = gram.view.n();
    let half = n / 2;
    let rowmean = par::map_range(n, |i| (0..n).map(|j| gram.get(i, j)).sum::<f64>() / n as f64);
    let objective = |c: &[usize]| {
        let cf = c.len() as f64;
        let mut cc = 0.0;
        let mut rm = 0.0;
        for &i in c {
            rm += rowmean[i];
            for &j in c {
                cc += gram.get(i, j);
            }
        }
        -2.0 * rm / cf + cc / (cf * cf)
    };
    let baseline: Vec<usize> = (0..half).map(|i| 2 * i).collect();
    let mut best = baseline;
    let mut best_val = objective(&best);
    for c in [c1, c2] {
        let v = objective(c);
        if v < best_val {
            best_val = v;
            best = c.to_vec();
        }
    }

    let cf = half as f64;
    let mut inside = vec![false; n];
    for &i in &best {
        inside[i] = true;
    }
    let mut csum = par::map_range(n, |w| best.iter().map(|&j| gram.get(w, j)).sum::<f64>());
    let mut cc: f64 = best.iter().map(|&i| csum[i]).sum();
    for slot in 0..half {
        let p = best[slot];
        let mut choice = p;
        let mut gain = 0.0;
        let mut choice_cc = cc;
        for z in 0..n {
            if inside[z] {
                continue;
            }
            let new_cc =
                cc - 2.0 * csum[p] + gram.diag(p) + 2.0 * (csum[z] - gram.get(p, z)) + gram.diag(z);
            let delta = -2.0 * (rowmean[z] - rowmean[p]) / cf + (new_cc - cc) / (cf * cf);
            if delta < gain {
                gain = delta;
                choice = z;
                choice_cc = new_cc;
            }
        }
        if choice != p {
            for (w, cs) in csum.iter_mut().enumerate() {
                *cs += gram.get(choice, w) - gram.get(p, w);
            }
            inside[p] = false;
            inside[choice] = true;
            best[slot] = choice;
            cc = choice_cc;
        }
    }
    Coreset::from_trusted(best, n)
}

/// Exact halving of four points.
pub fn opt_halve4(k: &KernelSpec, s: SampleView<'_>, rng: &mut RngStream) -> Result<Coreset> {
    if s.n() != 4 {
        return Err(Error::WrongArity(s.n()));
    }
    let r = k.radial();
    let kk = |i: usize, j: usize| r.eval(s.row(i), s.row(j));
    let s12_43 = kk(0, 1) + kk(3, 2);
    let s41_23 = kk(3, 0) + kk(1, 2);
    let s42_13 = kk(3, 1) + kk(0, 2);
    let flip = rng.random::<bool>();
    let (first, second) = if s12_43 < s41_23 {
        if s12_43 < s42_13 {
            ([2, 3], [0, 1])
        } else {
            ([1, 3], [0, 2])
        }
    } else if s41_23 < s42_13 {
        ([0, 3], [1, 2])
    } else {
        ([1, 3], [0, 2])
    };
    let pick = if flip { first } else { second };
    Ok(Coreset::from_trusted(pick.to_vec(), 4))
}

/// Symmetrized kernel-thinning halving.
pub fn kt_halve(
    k: &KernelSpec,
    ksplit: &KernelSpec,
    s: SampleView<'_>,
    delta: f64,
    rng: &mut RngStream,
) -> Result<Coreset> {
    let n = s.n();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::OddInput(n));
    }
    Ok(halve_inner(k, ksplit, s, delta, rng))
}

fn halve_inner(
    k: &KernelSpec,
    ksplit: &KernelSpec,
    s: SampleView<'_>,
    delta: f64,
    rng: &mut RngStream,
) -> Coreset {
    let delta = delta.min(1.0);
    let gram = Gram::new(s, k);
    let (c1, c2, _) = if ksplit == k {
        split_on(&gram, delta, rng)
    } else {
        split_on(&Gram::new(s, ksplit), delta, rng)
    };
    let chosen = swap_on(&gram, c1.indices(), c2.indices());
    if rng.random::<bool>() {
        chosen.complement()
    } else {
        chosen
    }
}

/// `t` such that `n = 4^(g+t)`, if any.
pub fn compress_depth(n: usize, g: u32) -> Option<u32> {
    let base = 4usize.checked_pow(g)?;
    if n < base || !n.is_multiple_of(base) {
        return None;
    }
    let mut q = n / base;
    let mut t = 0;
    while q > 1 {
        if !q.is_multiple_of(4) {
            return None;
        }
        q /= 4;
        t += 1;
    }
    Some(t)
}

/// Recursive compression to `2^g sqrt(n)` points.
pub fn compress(
    s: SampleView<'_>,
    g: u32,
    k: &KernelSpec,
    ksplit: &KernelSpec,
    delta: f64,
    rng: &mut RngStream,
) -> Result<Coreset> {
    if compress_depth(s.n(), g).is_none() {
        return Err(Error::IncompatibleSize { n: s.n(), g });
    }
    let base = 4usize.pow(g);
    let idx = compress_rec(s, 0, s.n(), base, g, k, ksplit, delta, rng);
    Ok(Coreset::from_trusted(idx, s.n()))
}

#[allow(clippy::too_many_arguments)]
fn compress_rec(
    s: SampleView<'_>,
    lo: usize,
    hi: usize,
    base: usize,
    g: u32,
    k: &KernelSpec,
    ksplit: &KernelSpec,
    delta: f64,
    rng: &RngStream,
) -> Vec<usize> {
    let len = hi - lo;
    if len == base {
        return (lo..hi).collect();
    }
    let q = len / 4;
    let parts = par::map_range(4, |i| {
        let child = rng.child(i as u64);
        compress_rec(s, lo + i * q, lo + (i + 1) * q, base, g, k, ksplit, delta, &child)
    });
    let merged: Vec<usize> = parts.into_iter().flatten().collect();
    let pts = s.gather(&merged);
    let mut halve_rng = rng.child(4);
    let local = if g == 0 && merged.len() == 4 {
        opt_halve4(k, pts.view(), &mut halve_rng).expect("four points")
    } else {
        let m = merged.len() as f64;
        halve_inner(k, ksplit, pts.view(), m * m * delta, &mut halve_rng)
    };
    local.indices().iter().map(|&i| merged[i]).collect()
}

/// Kernel thinning compression of `s` to `2^g sqrt(n)` points.
pub fn kt_compress(
    s: SampleView<'_>,
    g: u32,
    k: &KernelSpec,
    ksplit: &KernelSpec,
    delta: f64,
    rng: &mut RngStream,
) -> Result<Coreset> {
    check_delta(delta)?;
    let n = s.n();
    let t = compress_depth(n, g).ok_or(Error::IncompatibleSize { n, g })?;
    if t == 0 {
        return Ok(Coreset::from_trusted((0..n).collect(), n));
    }
    let per_call = delta / (n as f64 * 4f64.powi(g as i32 + 1) * f64::from(t));
    compress(s, g, k, ksplit, per_call, rng)
}

pub fn kt_compress_with(s: SampleView<'_>, cfg: &CompressConfig, rng: &mut RngStream) -> Result<Coreset> {
    kt_compress(s, cfg.g, &cfg.k, &cfg.ksplit, cfg.delta, rng)
}
