//! Emergent dimensionality from shell profiles.
//!
//! A `d`-dimensional compact space has shells growing like
//! `D_k ~ A sin^(d-1)(pi k / Lambda)`. Taking logs makes the model linear:
//! `ln D_k = ln A + (d - 1) ln sin(pi k / Lambda)`, so `d` comes from a
//! least-squares line.
//!
//! The period `Lambda` depends on how the profile ends. On a closed space the
//! last shell is the antipode of the root and mirrors `D_0`, so `Lambda = L`.
//! On a tree the shell after the last one is empty, so `Lambda = L + 1`.
//! [`Period::Auto`] fits both and keeps the one with the smaller residual.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{shell_profile, Gebit, GraphError};
use crate::likelihood::{maximize_profile, DepthRange, LikelihoodError, LikelihoodQuery};
use crate::profile::ShellProfile;

/// Smallest gebit accepted by [`empirical_dimension`].
pub const MIN_GEBIT_NODES: usize = 10;
/// Smallest breadth-first depth accepted by [`empirical_dimension`].
pub const MIN_GEBIT_DEPTH: usize = 3;
/// Default number of sampled roots.
pub const DEFAULT_ROOT_SAMPLES: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least 2 usable shells, found {0}")]
    TooFewPoints(usize),
    #[error("shell {k} has non-positive count {value}")]
    NonPositiveShell { k: usize, value: f64 },
    #[error("regressor is constant over the usable shells")]
    DegenerateRegressor,
    #[error("gebit has {0} nodes, need at least {MIN_GEBIT_NODES}")]
    GebitTooSmall(usize),
    #[error("gebit is too shallow: no root reaches depth {MIN_GEBIT_DEPTH}")]
    GebitTooShallow,
    #[error("invalid fit option: {0}")]
    InvalidOption(String),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T> = std::result::Result<T, FitError>;

/// Per-shell weights in the log-domain regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    /// `w_k = D_k`, the inverse variance of `ln D_k` for count data.
    Counts,
    /// Plain ordinary least squares.
    Uniform,
}

/// Choice of the sine period `Lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Period {
    /// Fit both and keep the smaller weighted residual; ties go to `Closed`.
    Auto,
    /// `Lambda = L`; the shell `k = L` drops out of the regression.
    Closed,
    /// `Lambda = L + 1`.
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub weighting: Weighting,
    pub period: Period,
    /// End shells with `D_k` below this floor are trimmed before fitting.
    pub floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::Counts,
            period: Period::Auto,
            floor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionFit {
    pub d: f64,
    pub log_amplitude: f64,
    /// Weighted root-mean-square of the log-domain residuals.
    pub residual: f64,
    pub points_used: usize,
    /// The `Lambda` that was used.
    pub period: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionCurvePoint {
    pub p: f64,
    pub d: f64,
    #[serde(rename = "L")]
    pub depth: usize,
    pub log_prob: f64,
}

fn fit_with_period(shells: &[f64], range: (usize, usize), period: f64, weighting: Weighting) -> Result<DimensionFit> {
    let mut points = Vec::new();
    for k in range.0..=range.1 {
        let s = (std::f64::consts::PI * k as f64 / period).sin();
        // sin(pi) is only approximately zero in floating point
        if k as f64 >= period || s <= 0.0 {
            continue;
        }
        let count = shells[k - 1];
        let w = match weighting {
            Weighting::Counts => count,
            Weighting::Uniform => 1.0,
        };
        points.push((s.ln(), count.ln(), w));
    }
    if points.len() < 2 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    let total_w: f64 = points.iter().map(|p| p.2).sum();
    let mean_x = points.iter().map(|p| p.2 * p.0).sum::<f64>() / total_w;
    let mean_y = points.iter().map(|p| p.2 * p.1).sum::<f64>() / total_w;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y, w) in &points {
        sxx += w * (x - mean_x) * (x - mean_x);
        sxy += w * (x - mean_x) * (y - mean_y);
    }
    if sxx <= 1e-24 * total_w {
        return Err(FitError::DegenerateRegressor);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse: f64 = points
        .iter()
        .map(|&(x, y, w)| {
            let r = y - intercept - slope * x;
            w * r * r
        })
        .sum();
    Ok(DimensionFit {
        d: slope + 1.0,
        log_amplitude: intercept,
        residual: (sse / total_w).sqrt(),
        points_used: points.len(),
        period,
    })
}

/// Fits `D_k ~ A sin^(d-1)(pi k / Lambda)` to real-valued shells `D_1..D_L`.
pub fn fit_shells(shells: &[f64], options: &FitOptions) -> Result<DimensionFit> {
    if !(options.floor.is_finite() && options.floor >= 0.0) {
        return Err(FitError::InvalidOption(format!("floor must be finite and >= 0, got {}", options.floor)));
    }
    let depth = shells.len();
    let keep = |v: &f64| *v >= options.floor;
    let (Some(first), Some(last)) = (shells.iter().position(keep), shells.iter().rposition(keep)) else {
        return Err(FitError::TooFewPoints(0));
    };
    if let Some(pos) = shells[first..=last].iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(FitError::NonPositiveShell {
            k: first + pos + 1,
            value: shells[first + pos],
        });
    }
    let range = (first + 1, last + 1);
    let closed = || fit_with_period(shells, range, depth as f64, options.weighting);
    let open = || fit_with_period(shells, range, depth as f64 + 1.0, options.weighting);
    match options.period {
        Period::Closed => closed(),
        Period::Open => open(),
        Period::Auto => match (closed(), open()) {
            (Ok(c), Ok(o)) => {
                let tie = 1e-12 * (1.0 + c.residual.max(o.residual));
                Ok(if o.residual < c.residual - tie { o } else { c })
            }
            (Ok(c), Err(_)) => Ok(c),
            (Err(_), Ok(o)) => Ok(o),
            // the open period always has at least as many usable points
            (Err(_), Err(e)) => Err(e),
        },
    }
}

pub fn fit_dimension(profile: &ShellProfile, options: &FitOptions) -> Result<DimensionFit> {
    fit_shells(&profile.as_f64(), options)
}

/// Most likely tree shape at `(N, p)` followed by a dimension fit.
pub fn dimension_of_p(n: u64, p: f64, depth_range: DepthRange, options: &FitOptions) -> Result<DimensionCurvePoint> {
    let query = LikelihoodQuery::new(n, p)?;
    let best = maximize_profile(&query, depth_range)?;
    let fit = fit_dimension(&best.profile, options)?;
    Ok(DimensionCurvePoint {
        p,
        d: fit.d,
        depth: best.depth(),
        log_prob: best.log_prob,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootPolicy {
    Fixed(usize),
    /// Median over up to `max_roots` distinct roots drawn with `seed`; every
    /// node is used when the gebit is no larger than that.
    Sampled { max_roots: usize, seed: u64 },
}

impl Default for RootPolicy {
    fn default() -> Self {
        RootPolicy::Sampled {
            max_roots: DEFAULT_ROOT_SAMPLES,
            seed: 0,
        }
    }
}

/// Dimension of an extracted gebit measured from its own breadth-first
/// shells. With sampled roots the fit with the (lower) median `d` is
/// returned; roots whose eccentricity is below 3 are skipped.
pub fn empirical_dimension(gebit: &Gebit, policy: RootPolicy, options: &FitOptions) -> Result<DimensionFit> {
    if gebit.len() < MIN_GEBIT_NODES {
        return Err(FitError::GebitTooSmall(gebit.len()));
    }
    let roots: Vec<usize> = match policy {
        RootPolicy::Fixed(root) => vec![root],
        RootPolicy::Sampled { max_roots, seed } => {
            if max_roots == 0 {
                return Err(FitError::InvalidOption("max_roots must be positive".into()));
            }
            if max_roots >= gebit.len() {
                gebit.nodes().to_vec()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked: Vec<usize> = sample(&mut rng, gebit.len(), max_roots).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|i| gebit.nodes()[i]).collect()
            }
        }
    };
    let mut fits = Vec::with_capacity(roots.len());
    for root in roots {
        let profile = shell_profile(gebit, root)?;
        if profile.depth() < MIN_GEBIT_DEPTH {
            continue;
        }
        if let Ok(fit) = fit_dimension(&profile, options) {
            fits.push(fit);
        }
    }
    if fits.is_empty() {
        return Err(FitError::GebitTooShallow);
    }
    fits.sort_by(|a, b| a.d.total_cmp(&b.d));
    Ok(fits[(fits.len() - 1) / 2])
}
