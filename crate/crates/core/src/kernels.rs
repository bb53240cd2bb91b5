//! Gaussian kernels, weighted kernel sums and bandwidth selection.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::sample::SampleView;

/// A positive-definite radial kernel.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    /// `exp(-|x - y|^2 / (2 bandwidth^2))`
    Gaussian { bandwidth: f64 },
    /// `sum_i scale_i * k_i(x, y)`
    Sum(Vec<(KernelSpec, f64)>),
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(invalid(format!(
                "Gaussian bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(KernelSpec::Gaussian { bandwidth })
    }

    pub fn sum(terms: Vec<(KernelSpec, f64)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyKernelList);
        }
        for (k, w) in &terms {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(invalid(format!("kernel scale must be finite and >= 0, got {w}")));
            }
            k.validate()?;
        }
        Ok(KernelSpec::Sum(terms))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { bandwidth } => KernelSpec::gaussian(*bandwidth).map(|_| ()),
            KernelSpec::Sum(terms) => KernelSpec::sum(terms.clone()).map(|_| ()),
        }
    }

    /// Unweighted sum of Gaussians with the given bandwidths.
    pub fn gaussian_sum(bandwidths: &[f64]) -> Result<Self> {
        let terms = bandwidths
            .iter()
            .map(|&b| KernelSpec::gaussian(b).map(|k| (k, 1.0)))
            .collect::<Result<Vec<_>>>()?;
        KernelSpec::sum(terms)
    }

    /// Multiplies every scale by `c` (a Gaussian becomes a one-term sum).
    pub fn scaled(&self, c: f64) -> KernelSpec {
        match self {
            KernelSpec::Gaussian { .. } => KernelSpec::Sum(vec![(self.clone(), c)]),
            KernelSpec::Sum(terms) => {
                KernelSpec::Sum(terms.iter().map(|(k, w)| (k.clone(), w * c)).collect())
            }
        }
    }

    /// `k(x, x)`, identical for every `x` since all kernels here are radial.
    pub fn diagonal(&self) -> f64 {
        self.radial().eval_sq(0.0)
    }

    /// Flattened form used by the inner loops.
    pub fn radial(&self) -> Radial {
        let mut terms = Vec::new();
        self.flatten_into(1.0, &mut terms);
        Radial { terms }
    }

    fn flatten_into(&self, scale: f64, out: &mut Vec<(f64, f64)>) {
        match self {
            KernelSpec::Gaussian { bandwidth } => {
                out.push((-0.5 / (bandwidth * bandwidth), scale));
            }
            KernelSpec::Sum(terms) => {
                for (k, w) in terms {
                    k.flatten_into(scale * w, out);
                }
            }
        }
    }

    /// Evaluates the kernel; slices must share a length.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.radial().eval(x, y)
    }
}

/// A kernel flattened to `sum_i scale_i * exp(coef_i * |x - y|^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Radial {
    terms: Vec<(f64, f64)>,
}

impl Radial {
    #[inline]
    pub fn eval_sq(&self, r2: f64) -> f64 {
        match self.terms.as_slice() {
            [(c, w)] => w * (c * r2).exp(),
            terms => terms.iter().map(|(c, w)| w * (c * r2).exp()).sum(),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval_sq(sqdist(x, y))
    }
}

#[inline]
pub fn sqdist(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Checked kernel evaluation.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(spec.eval(x, y))
}

/// Square-root Gaussian kernel (bandwidth / sqrt 2), without normalization.
pub fn sqrt_kernel(spec: &KernelSpec) -> Result<KernelSpec> {
    match spec {
        KernelSpec::Gaussian { bandwidth } => {
            KernelSpec::gaussian(bandwidth / std::f64::consts::SQRT_2)
        }
        KernelSpec::Sum(_) => Err(Error::Unsupported(
            "square-root kernel is only available for a single Gaussian".into(),
        )),
    }
}

pub const DEFAULT_MEDIAN_CAP: usize = 512;

/// Median pairwise Euclidean distance over the pooled subsample of up to
/// `cap` points from each of `x` and `y`. Even counts take the lower median.
pub fn median_heuristic(
    x: SampleView<'_>,
    y: SampleView<'_>,
    cap: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch {
            expected: x.d(),
            got: y.d(),
        });
    }
    if cap < 2 {
        return Err(invalid("median heuristic cap must be at least 2"));
    }
    let mut rows: Vec<&[f64]> = Vec::new();
    for s in [x, y] {
        if s.n() <= cap {
            rows.extend((0..s.n()).map(|i| s.row(i)));
        } else {
            let picked = index::sample(rng, s.n(), cap);
            rows.extend(picked.iter().map(|i| s.row(i)));
        }
    }
    if rows.len() < 2 {
        return Err(Error::SampleTooSmall {
            need: 2,
            got: rows.len(),
        });
    }
    let mut d2 = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            d2.push(sqdist(rows[i], rows[j]));
        }
    }
    let mid = (d2.len() - 1) / 2;
    let (_, median, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    let median = median.sqrt();
    if median <= 0.0 {
        return Err(Error::DegenerateSample);
    }
    Ok(median)
}

/// Kernel choice as written on the command line:
/// `gauss:<lambda>`, `gauss-med`, or `sum:<term>,<term>,...` where each term
/// is one of the first two forms, optionally prefixed by `<scale>*`.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelArg {
    Gaussian(f64),
    MedianHeuristic,
    Sum(Vec<(KernelArg, f64)>),
}

impl KernelArg {
    /// Resolves to a concrete kernel, running the median heuristic on the
    /// pooled data if requested.
    pub fn resolve(
        &self,
        x: SampleView<'_>,
        y: SampleView<'_>,
        rng: &mut RngStream,
    ) -> Result<KernelSpec> {
        match self {
            KernelArg::Gaussian(b) => KernelSpec::gaussian(*b),
            KernelArg::MedianHeuristic => {
                KernelSpec::gaussian(median_heuristic(x, y, DEFAULT_MEDIAN_CAP, rng)?)
            }
            KernelArg::Sum(terms) => {
                let mut median = None;
                let mut out = Vec::with_capacity(terms.len());
                for (t, w) in terms {
                    let k = match t {
                        KernelArg::MedianHeuristic => {
                            let b = match median {
                                Some(b) => b,
                                None => {
                                    let b = median_heuristic(x, y, DEFAULT_MEDIAN_CAP, rng)?;
                                    median = Some(b);
                                    b
                                }
                            };
                            KernelSpec::gaussian(b)?
                        }
                        other => other.resolve(x, y, rng)?,
                    };
                    out.push((k, *w));
                }
                KernelSpec::sum(out)
            }
        }
    }

    fn parse_term(s: &str) -> Result<(KernelArg, f64)> {
        let (scale, body) = match s.split_once('*') {
            Some((w, body)) => (
                w.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad kernel scale {w:?}")))?,
                body.trim(),
            ),
            None => (1.0, s.trim()),
        };
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::Parse(format!("bad kernel scale {scale}")));
        }
        let arg = if body == "gauss-med" {
            KernelArg::MedianHeuristic
        } else if let Some(b) = body.strip_prefix("gauss:") {
            let b: f64 = b
                .parse()
                .map_err(|_| Error::Parse(format!("bad bandwidth {b:?}")))?;
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::Parse(format!("bandwidth must be positive, got {b}")));
            }
            KernelArg::Gaussian(b)
        } else {
            return Err(Error::Parse(format!("unknown kernel {body:?}")));
        };
        Ok((arg, scale))
    }
}

impl FromStr for KernelArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("sum:") {
            let terms = rest
                .split(',')
                .map(KernelArg::parse_term)
                .collect::<Result<Vec<_>>>()?;
            if terms.is_empty() {
                return Err(Error::EmptyKernelList);
            }
            Ok(KernelArg::Sum(terms))
        } else {
            match KernelArg::parse_term(s)? {
                (arg, w) if w == 1.0 => Ok(arg),
                (arg, w) => Ok(KernelArg::Sum(vec![(arg, w)])),
            }
        }
    }
}

impl fmt::Display for KernelArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelArg::Gaussian(b) => write!(f, "gauss:{b}"),
            KernelArg::MedianHeuristic => write!(f, "gauss-med"),
            KernelArg::Sum(terms) => {
                write!(f, "sum:")?;
                for (i, (t, w)) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    if *w != 1.0 {
                        write!(f, "{w}*")?;
                    }
                    write!(f, "{t}")?;
                }
                Ok(())
            }
        }
    }
}
