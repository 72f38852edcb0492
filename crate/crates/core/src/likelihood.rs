//! Log-likelihood of breadth-first spanning-tree shell profiles in a sparse
//! random graph, and its maximization over tree shapes.
//!
//! For link probability `p` (`q = 1 - p`) and shells `D_1..D_L` with
//! `D_0 = 1`, the unnormalized log-probability is
//!
//! ```text
//! D_1 ln p - sum_k ln D_k!
//!   + sum_{i=1}^{L-1} D_{i+1} [ (D_0 + .. + D_{i-1}) ln q + ln(1 - q^{D_i}) ]
//! ```
//!
//! Factorials go through `ln Gamma(D + 1)`, so the same expression accepts
//! real-valued shells; the maximizer relies on that.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

use crate::profile::ShellProfile;

/// Largest `N` accepted by [`brute_force_profile`] unless overridden.
pub const BRUTE_FORCE_CAP: u64 = 14;
/// Upper end of the default depth sweep.
pub const DEFAULT_MAX_DEPTH: usize = 120;

const RELAX_MAX_ITERATIONS: usize = 2_000;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LikelihoodError {
    #[error("link probability must lie in (0, 1), got {0}")]
    InvalidProbability(f64),
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(u64),
    #[error("profile has no shells")]
    EmptyProfile,
    #[error("shell {k} has {value}, but every shell needs at least one node")]
    ShellBelowOne { k: usize, value: f64 },
    #[error("empty depth range [{min}, {max}]")]
    EmptyDepthRange { min: usize, max: usize },
    #[error("depth {depth} is infeasible for N = {n} (at most N - 1)")]
    InfeasibleDepth { depth: usize, n: u64 },
    #[error("oracle cap exceeded: N = {n} > {cap}")]
    OracleCapExceeded { n: u64, cap: u64 },
}

pub type Result<T> = std::result::Result<T, LikelihoodError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodQuery {
    /// Total node count `N`, root included.
    pub n: u64,
    /// Link probability `p`.
    pub p: f64,
}

impl LikelihoodQuery {
    pub fn new(n: u64, p: f64) -> Result<Self> {
        let query = Self { n, p };
        query.validate()?;
        Ok(query)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.p)?;
        if self.n < 2 {
            return Err(LikelihoodError::TooFewNodes(self.n));
        }
        Ok(())
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(LikelihoodError::InvalidProbability(p))
    }
}

/// Real-valued relaxation of a shell profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousProfile {
    shells: Vec<f64>,
}

impl ContinuousProfile {
    pub fn new(shells: Vec<f64>) -> Result<Self> {
        check_shells(&shells)?;
        Ok(Self { shells })
    }

    pub fn shells(&self) -> &[f64] {
        &self.shells
    }

    pub fn depth(&self) -> usize {
        self.shells.len()
    }

    /// `1 + sum(d_k)`.
    pub fn total_n(&self) -> f64 {
        1.0 + self.shells.iter().sum::<f64>()
    }
}

impl From<&ShellProfile> for ContinuousProfile {
    fn from(profile: &ShellProfile) -> Self {
        Self {
            shells: profile.as_f64(),
        }
    }
}

fn check_shells(shells: &[f64]) -> Result<()> {
    if shells.is_empty() {
        return Err(LikelihoodError::EmptyProfile);
    }
    match shells.iter().position(|d| !(*d >= 1.0 && d.is_finite())) {
        Some(pos) => Err(LikelihoodError::ShellBelowOne {
            k: pos + 1,
            value: shells[pos],
        }),
        None => Ok(()),
    }
}

/// Anything that can be scored: integer or relaxed shell profiles.
pub trait Shells {
    fn shell_values(&self) -> Vec<f64>;
}

impl Shells for ShellProfile {
    fn shell_values(&self) -> Vec<f64> {
        self.as_f64()
    }
}

impl Shells for ContinuousProfile {
    fn shell_values(&self) -> Vec<f64> {
        self.shells.clone()
    }
}

/// `ln(1 - q^x)` without cancellation for `q` close to one.
fn ln_one_minus_q_pow(x: f64, ln_q: f64) -> f64 {
    (-(x * ln_q).exp_m1()).ln()
}

fn evaluate(d: &[f64], ln_p: f64, ln_q: f64) -> f64 {
    let mut total = d[0] * ln_p - d.iter().map(|&x| ln_gamma(x + 1.0)).sum::<f64>();
    // prefix = D_0 + D_1 + .. + D_{i-1}
    let mut prefix = 1.0;
    for i in 1..d.len() {
        total += d[i] * (prefix * ln_q + ln_one_minus_q_pow(d[i - 1], ln_q));
        prefix += d[i - 1];
    }
    total
}

/// Log of the tree-shape probability with the normalization dropped.
pub fn log_likelihood<P: Shells + ?Sized>(profile: &P, p: f64) -> Result<f64> {
    check_probability(p)?;
    let d = profile.shell_values();
    check_shells(&d)?;
    Ok(evaluate(&d, p.ln(), (-p).ln_1p()))
}

fn gradient(d: &[f64], ln_p: f64, ln_q: f64) -> Vec<f64> {
    let depth = d.len();
    // tail[m] = d[m] + d[m+1] + .. + d[L-1]
    let mut tail = vec![0.0; depth + 1];
    for m in (0..depth).rev() {
        tail[m] = tail[m + 1] + d[m];
    }
    let mut grad = Vec::with_capacity(depth);
    let mut prefix = 1.0; // D_0 + .. + D_{m-2} (1-based), i.e. sum before the previous shell
    for m in 0..depth {
        let mut g = -digamma(d[m] + 1.0);
        if m == 0 {
            g += ln_p;
        } else {
            // d_m is the exponent of the factor contributed by its parent shell
            g += prefix * ln_q + ln_one_minus_q_pow(d[m - 1], ln_q);
            prefix += d[m - 1];
        }
        if m + 1 < depth {
            // d/dx ln(1 - q^x) = -ln q * q^x / (1 - q^x)
            let e = (d[m] * ln_q).exp_m1();
            g += d[m + 1] * (-ln_q) * (e + 1.0) / (-e);
            // d_m sits inside every later prefix sum
            if m + 2 < depth {
                g += ln_q * tail[m + 2];
            }
        }
        grad.push(g);
    }
    grad
}

/// Analytic partial derivatives of [`log_likelihood`] with respect to each
/// relaxed shell size.
pub fn gradient_log_likelihood(profile: &ContinuousProfile, p: f64) -> Result<Vec<f64>> {
    check_probability(p)?;
    check_shells(&profile.shells)?;
    Ok(gradient(&profile.shells, p.ln(), (-p).ln_1p()))
}

/// Inclusive range of tree depths `L` to examine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min: usize,
    pub max: usize,
}

impl DepthRange {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    /// `[2, min(N - 1, 120)]`, with the lower end pulled down to `N - 1` for
    /// `N = 2` so the range is never empty.
    pub fn default_for(n: u64) -> Self {
        let top = n.saturating_sub(1).max(1) as usize;
        let max = top.min(DEFAULT_MAX_DEPTH);
        Self { min: 2.min(max), max }
    }

    pub fn depths(&self) -> std::ops::RangeInclusive<usize> {
        self.min..=self.max
    }

    fn validate(&self, n: u64) -> Result<()> {
        if self.min == 0 || self.min > self.max {
            return Err(LikelihoodError::EmptyDepthRange {
                min: self.min,
                max: self.max,
            });
        }
        if self.max as u64 > n - 1 {
            return Err(LikelihoodError::InfeasibleDepth { depth: self.max, n });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "enumeration")]
    Enumeration,
    #[serde(rename = "relaxation+refinement")]
    RelaxationRefinement,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Enumeration => "enumeration",
            Method::RelaxationRefinement => "relaxation+refinement",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximizationResult {
    pub n: u64,
    pub p: f64,
    pub profile: ShellProfile,
    pub log_prob: f64,
    pub depth_swept: DepthRange,
    pub method: Method,
}

/// Flat record written to disk: `{N, p, L, D, log_prob, method}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximizationRecord {
    #[serde(rename = "N")]
    pub n: u64,
    pub p: f64,
    #[serde(rename = "L")]
    pub depth: usize,
    #[serde(rename = "D")]
    pub shells: Vec<u64>,
    pub log_prob: f64,
    pub method: Method,
}

impl MaximizationResult {
    pub fn depth(&self) -> usize {
        self.profile.depth()
    }

    pub fn record(&self) -> MaximizationRecord {
        MaximizationRecord {
            n: self.n,
            p: self.p,
            depth: self.profile.depth(),
            shells: self.profile.shells().to_vec(),
            log_prob: self.log_prob,
            method: self.method,
        }
    }
}

/// Per-depth trace of the maximizer, kept for diagnostics and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthOptimum {
    pub depth: usize,
    pub relaxed: Vec<f64>,
    pub relaxed_log_prob: f64,
    pub rounded: Vec<u64>,
    pub rounded_log_prob: f64,
    pub refined: Vec<u64>,
    pub log_prob: f64,
}

/// Integer-profile evaluator with tabulated `ln k!` and `ln(1 - q^k)`.
struct IntegerScorer {
    ln_p: f64,
    ln_q: f64,
    ln_factorial: Vec<f64>,
    ln_gap: Vec<f64>,
}

impl IntegerScorer {
    fn new(n: u64, p: f64) -> Self {
        let ln_q = (-p).ln_1p();
        let size = n as usize + 1;
        Self {
            ln_p: p.ln(),
            ln_q,
            ln_factorial: (0..size).map(|k| ln_gamma(k as f64 + 1.0)).collect(),
            ln_gap: (0..size).map(|k| ln_one_minus_q_pow(k as f64, ln_q)).collect(),
        }
    }

    fn score(&self, d: &[u64]) -> f64 {
        let mut total = d[0] as f64 * self.ln_p;
        let mut prefix = 1.0;
        for (i, &x) in d.iter().enumerate() {
            total -= self.ln_factorial[x as usize];
            if i > 0 {
                let parent = d[i - 1];
                total += x as f64 * (prefix * self.ln_q + self.ln_gap[parent as usize]);
                prefix += parent as f64;
            }
        }
        total
    }
}

/// Trigamma `psi'(x)` for `x > 0`: recurrence up to `x >= 20`, then the
/// asymptotic series.
fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0))));
    acc + inv + 0.5 * inv2 + inv * series
}

/// The Hessian of the log-likelihood is `T + ln q * 11^T` with `T`
/// tridiagonal: shells two or more apart only meet through the prefix sums,
/// which contribute the constant `ln q`. Moves that keep the total fixed never
/// see the rank-one part, so `T` is all the maximizer needs.
struct Curvature {
    diag: Vec<f64>,
    /// `off[m]` couples shells `m` and `m + 1`.
    off: Vec<f64>,
}

fn curvature(d: &[f64], ln_q: f64) -> Curvature {
    let depth = d.len();
    let mut diag = Vec::with_capacity(depth);
    let mut off = Vec::with_capacity(depth.saturating_sub(1));
    for m in 0..depth {
        let mut h = -trigamma(d[m] + 1.0) - ln_q;
        if m + 1 < depth {
            let e = (d[m] * ln_q).exp_m1(); // q^x - 1
            let ratio = (e + 1.0) / -e; // q^x / (1 - q^x)
            h += d[m + 1] * -(ln_q * ln_q) * ratio / -e;
            off.push(-ln_q * ratio - ln_q);
        }
        diag.push(h);
    }
    Curvature { diag, off }
}

/// Solves the symmetric tridiagonal system `(diag, off)` for each right-hand
/// side by elimination without pivoting; `None` on a vanishing pivot.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &mut [Vec<f64>]) -> Option<()> {
    let n = diag.len();
    let mut pivot = diag.to_vec();
    for i in 1..n {
        if pivot[i - 1].abs() < 1e-300 {
            return None;
        }
        let factor = off[i - 1] / pivot[i - 1];
        pivot[i] -= factor * off[i - 1];
        for r in rhs.iter_mut() {
            r[i] -= factor * r[i - 1];
        }
    }
    if pivot[n - 1].abs() < 1e-300 {
        return None;
    }
    for r in rhs.iter_mut() {
        r[n - 1] /= pivot[n - 1];
        for i in (0..n - 1).rev() {
            r[i] = (r[i] - off[i] * r[i + 1]) / pivot[i];
        }
    }
    Some(())
}

/// Ascent direction on the face where the coordinates in `free` move and
/// their sum stays fixed, together with the multiplier level `-nu` of the
/// equality constraint. Newton's step is tried first, shifted towards the
/// gradient while it fails to ascend; the projected gradient is the last
/// resort.
fn face_direction(c: &Curvature, g: &[f64], free: &[usize]) -> (Vec<f64>, f64) {
    let f = free.len();
    let scale = free.iter().map(|&k| c.diag[k].abs()).fold(0.0, f64::max).max(1e-12);
    let off: Vec<f64> = free
        .windows(2)
        .map(|w| if w[1] == w[0] + 1 { c.off[w[0]] } else { 0.0 })
        .collect();
    let mut shift = 0.0;
    for _ in 0..8 {
        let diag: Vec<f64> = free.iter().map(|&k| c.diag[k] - shift).collect();
        // T u = -g and T v = 1; the step is u - nu v with nu fixing the sum
        let mut rhs = vec![free.iter().map(|&k| -g[k]).collect::<Vec<_>>(), vec![1.0; f]];
        if solve_tridiagonal(&diag, &off, &mut rhs).is_some() {
            let (u, v) = (&rhs[0], &rhs[1]);
            let nu = u.iter().sum::<f64>() / v.iter().sum::<f64>();
            let step: Vec<f64> = u.iter().zip(v).map(|(u, v)| u - nu * v).collect();
            let slope: f64 = step.iter().zip(free).map(|(s, &k)| s * g[k]).sum();
            let finite = nu.is_finite() && step.iter().all(|s| s.is_finite());
            // a zero step is fine: the face is already optimal
            if finite && (slope > 0.0 || step.iter().all(|s| s.abs() < 1e-300)) {
                return (step, -nu);
            }
        }
        shift = if shift == 0.0 { 1e-3 * scale } else { shift * 10.0 };
    }
    let mean = free.iter().map(|&k| g[k]).sum::<f64>() / f as f64;
    (free.iter().map(|&k| g[k] - mean).collect(), mean)
}

/// Relaxed optimum at one depth. The ascent runs from a `sin^2` start and,
/// when given, from the relaxed optimum one depth shorter with an empty shell
/// appended; the better of the two local optima wins. Away from the optimal
/// depth the relaxed problem has several local optima, and the warm start
/// keeps the single bump found at shorter depths.
fn relax(query: &LikelihoodQuery, depth: usize, shorter: Option<&[f64]>) -> Vec<f64> {
    let excess_total = (query.n - 1 - depth as u64) as f64;
    if excess_total == 0.0 {
        return vec![1.0; depth];
    }
    let ln_p = query.p.ln();
    let ln_q = (-query.p).ln_1p();
    let shape: Vec<f64> = (1..=depth)
        .map(|k| (std::f64::consts::PI * k as f64 / (depth + 1) as f64).sin().powi(2))
        .collect();
    let norm: f64 = shape.iter().sum();
    let start: Vec<f64> = shape.iter().map(|s| excess_total * s / norm).collect();
    let mut best = ascend(start, excess_total, ln_p, ln_q);
    if let Some(prev) = shorter.filter(|prev| prev.len() + 1 == depth) {
        let prev_excess = excess_total + 1.0;
        let mut start: Vec<f64> = prev.iter().map(|d| (d - 1.0) * excess_total / prev_excess).collect();
        start.push(0.0);
        let warm = ascend(start, excess_total, ln_p, ln_q);
        if warm.1 > best.1 {
            best = warm;
        }
    }
    best.0
}

/// Primal active-set Newton ascent on `{d_k >= 1, sum d_k = N - 1}` in the
/// excess `x = d - 1`. Coordinates that hit zero join the bound set; once the
/// current face is solved, the bound coordinate whose gradient beats the
/// multiplier by the most is released. Returns the shells and their value.
fn ascend(mut x: Vec<f64>, excess_total: f64, ln_p: f64, ln_q: f64) -> (Vec<f64>, f64) {
    let depth = x.len();
    let mut bound: Vec<bool> = x.iter().map(|&v| v == 0.0).collect();
    let to_shells = |x: &[f64]| x.iter().map(|v| 1.0 + v).collect::<Vec<_>>();
    let step_tolerance = 1e-10 * (1.0 + excess_total);

    let mut d = to_shells(&x);
    let mut value = evaluate(&d, ln_p, ln_q);
    for _ in 0..RELAX_MAX_ITERATIONS {
        let g = gradient(&d, ln_p, ln_q);
        let free: Vec<usize> = (0..depth).filter(|&k| !bound[k]).collect();
        let (step, level) = face_direction(&curvature(&d, ln_q), &g, &free);
        let size = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));

        let mut face_solved = size < step_tolerance;
        if !face_solved {
            let (t_max, blocking) = step
                .iter()
                .zip(&free)
                .filter(|(s, _)| **s < 0.0)
                .map(|(s, &k)| (x[k] / -s, Some(k)))
                .fold((1.0, None), |best, cand| if cand.0 < best.0 { cand } else { best });
            let slope: f64 = step.iter().zip(&free).map(|(s, &k)| s * g[k]).sum();
            let mut t = t_max;
            let mut accepted = false;
            while t * size > 1e-3 * step_tolerance {
                let mut y = x.clone();
                for (s, &k) in step.iter().zip(&free) {
                    y[k] = (x[k] + t * s).max(0.0);
                }
                let hit = t == t_max && blocking.is_some();
                if let (true, Some(k)) = (hit, blocking) {
                    y[k] = 0.0;
                }
                let trial_d = to_shells(&y);
                let trial = evaluate(&trial_d, ln_p, ln_q);
                if trial >= value + ARMIJO * t * slope {
                    if let (true, Some(k)) = (hit, blocking) {
                        bound[k] = true;
                    }
                    x = y;
                    d = trial_d;
                    value = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            // no measurable progress left on this face
            face_solved = !accepted;
        }
        if face_solved {
            let release = (0..depth)
                .filter(|&k| bound[k])
                .map(|k| (g[k] - level, k))
                .filter(|(gap, _)| *gap > 1e-9 * (1.0 + level.abs()))
                .max_by(|a, b| a.0.total_cmp(&b.0));
            match release {
                Some((_, k)) => bound[k] = false,
                None => break,
            }
        }
    }
    (d, value)
}

/// Rounds relaxed shells to integers with the same total, handing leftover
/// units to the largest fractional parts (earlier shells win ties). Shells
/// never drop below one.
pub fn round_largest_remainder(shells: &[f64], total: u64) -> Vec<u64> {
    let mut rounded: Vec<u64> = shells.iter().map(|&v| (v.floor() as u64).max(1)).collect();
    let mut order: Vec<usize> = (0..shells.len()).collect();
    let frac = |k: usize| shells[k] - shells[k].floor();
    let current: u64 = rounded.iter().sum();
    if current < total {
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        let mut missing = total - current;
        for &k in order.iter().cycle() {
            if missing == 0 {
                break;
            }
            rounded[k] += 1;
            missing -= 1;
        }
    } else if current > total {
        order.sort_by(|&a, &b| frac(a).total_cmp(&frac(b)).then(a.cmp(&b)));
        let mut surplus = current - total;
        while surplus > 0 {
            let before = surplus;
            for &k in &order {
                if surplus > 0 && rounded[k] > 1 {
                    rounded[k] -= 1;
                    surplus -= 1;
                }
            }
            assert!(surplus < before, "cannot reach total {total} with {} shells", shells.len());
        }
    }
    rounded
}

/// Steepest-ascent hill-climb over single-node transfers between any two
/// shells. Returns the refined profile and its log-likelihood; the value is
/// never below that of `start`.
pub fn hill_climb(start: &[u64], p: f64) -> Result<(Vec<u64>, f64)> {
    check_probability(p)?;
    let as_f64: Vec<f64> = start.iter().map(|&v| v as f64).collect();
    check_shells(&as_f64)?;
    let total: u64 = 1 + start.iter().sum::<u64>();
    let scorer = IntegerScorer::new(total, p);
    let mut current = start.to_vec();
    let mut value = scorer.score(&current);
    loop {
        let tolerance = 1e-13 * (1.0 + value.abs());
        let mut best: Option<(usize, usize, f64)> = None;
        for from in 0..current.len() {
            if current[from] <= 1 {
                continue;
            }
            for to in 0..current.len() {
                if to == from {
                    continue;
                }
                current[from] -= 1;
                current[to] += 1;
                let trial = scorer.score(&current);
                current[from] += 1;
                current[to] -= 1;
                let bar = best.map_or(value + tolerance, |(_, _, v)| v);
                if trial > bar {
                    best = Some((from, to, trial));
                }
            }
        }
        match best {
            Some((from, to, trial)) => {
                current[from] -= 1;
                current[to] += 1;
                value = trial;
            }
            None => break,
        }
    }
    let exact = evaluate(&current.iter().map(|&v| v as f64).collect::<Vec<_>>(), p.ln(), (-p).ln_1p());
    Ok((current, exact))
}

/// Relax, round and refine at a single depth.
pub fn optimize_depth(query: &LikelihoodQuery, depth: usize) -> Result<DepthOptimum> {
    optimize_depth_after(query, depth, None)
}

fn optimize_depth_after(query: &LikelihoodQuery, depth: usize, shorter: Option<&[f64]>) -> Result<DepthOptimum> {
    query.validate()?;
    DepthRange::new(depth, depth).validate(query.n)?;
    let relaxed = relax(query, depth, shorter);
    let relaxed_log_prob = log_likelihood(&ContinuousProfile::new(relaxed.clone())?, query.p)?;
    let rounded = round_largest_remainder(&relaxed, query.n - 1);
    let rounded_log_prob = log_likelihood(&ShellProfile::new(rounded.clone()).expect("shells >= 1"), query.p)?;
    let (refined, log_prob) = hill_climb(&rounded, query.p)?;
    Ok(DepthOptimum {
        depth,
        relaxed,
        relaxed_log_prob,
        rounded,
        rounded_log_prob,
        refined,
        log_prob,
    })
}

/// Most likely tree shape over the given depth range. Ties between depths go
/// to the smaller depth.
pub fn maximize_profile(query: &LikelihoodQuery, depth_range: DepthRange) -> Result<MaximizationResult> {
    query.validate()?;
    depth_range.validate(query.n)?;
    let mut best: Option<DepthOptimum> = None;
    let mut shorter: Option<Vec<f64>> = None;
    for depth in depth_range.depths() {
        let candidate = optimize_depth_after(query, depth, shorter.as_deref())?;
        shorter = Some(candidate.relaxed.clone());
        if best.as_ref().is_none_or(|b| candidate.log_prob > b.log_prob) {
            best = Some(candidate);
        }
    }
    let best = best.expect("depth range is non-empty");
    let profile = ShellProfile::new(best.refined).expect("refined shells stay >= 1");
    let log_prob = log_likelihood(&profile, query.p)?;
    Ok(MaximizationResult {
        n: query.n,
        p: query.p,
        profile,
        log_prob,
        depth_swept: depth_range,
        method: Method::RelaxationRefinement,
    })
}

/// Exhaustive search over every composition of `N - 1` for `N <= 14`.
pub fn brute_force_profile(query: &LikelihoodQuery) -> Result<MaximizationResult> {
    brute_force_profile_capped(query, BRUTE_FORCE_CAP)
}

/// [`brute_force_profile`] with an explicit cap on `N`; the work grows as
/// `2^(N - 2)`.
pub fn brute_force_profile_capped(query: &LikelihoodQuery, cap: u64) -> Result<MaximizationResult> {
    query.validate()?;
    if query.n > cap {
        return Err(LikelihoodError::OracleCapExceeded { n: query.n, cap });
    }
    let parts = query.n - 1;
    let gaps = parts - 1;
    let mut best: Option<(f64, Vec<u64>)> = None;
    for mask in 0u64..(1u64 << gaps) {
        // bit g set => a shell boundary after unit g + 1
        let mut shells = Vec::with_capacity(mask.count_ones() as usize + 1);
        let mut run = 1;
        for g in 0..gaps {
            if mask >> g & 1 == 1 {
                shells.push(run);
                run = 1;
            } else {
                run += 1;
            }
        }
        shells.push(run);
        let profile = ShellProfile::new(shells).expect("composition parts are positive");
        let value = log_likelihood(&profile, query.p)?;
        let better = match &best {
            None => true,
            Some((v, s)) => value > *v || (value == *v && profile.depth() < s.len()),
        };
        if better {
            best = Some((value, profile.shells().to_vec()));
        }
    }
    let (log_prob, shells) = best.expect("at least one composition");
    Ok(MaximizationResult {
        n: query.n,
        p: query.p,
        profile: ShellProfile::new(shells).expect("positive parts"),
        log_prob,
        depth_swept: DepthRange::new(1, parts as usize),
        method: Method::Enumeration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn hessian(d: &[f64], ln_q: f64) -> DMatrix<f64> {
        let c = curvature(d, ln_q);
        let mut h = DMatrix::from_element(d.len(), d.len(), ln_q);
        for m in 0..d.len() {
            h[(m, m)] += c.diag[m];
            if let Some(&o) = c.off.get(m) {
                h[(m, m + 1)] += o;
                h[(m + 1, m)] += o;
            }
        }
        h
    }

    fn profile(shells: &[u64]) -> ShellProfile {
        ShellProfile::new(shells.to_vec()).unwrap()
    }

    #[test]
    fn single_shell() {
        let v = log_likelihood(&profile(&[1]), 0.5).unwrap();
        assert!((v - 0.5_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_unit_shells_by_hand() {
        // ln p + 1 * (D_0 ln q + ln(1 - q^{D_1})) with p = q = 1/2
        let v = log_likelihood(&profile(&[1, 1]), 0.5).unwrap();
        assert!((v - 3.0 * 0.5_f64.ln()).abs() < 1e-14);
        assert!((v + 2.0794415416798357).abs() < 1e-12);
    }

    #[test]
    fn decreases_as_p_vanishes() {
        let prof = profile(&[2, 3, 1]);
        let mut last = f64::INFINITY;
        for e in 1..12 {
            let v = log_likelihood(&prof, 10f64.powi(-e)).unwrap();
            assert!(v.is_finite() && v < last);
            last = v;
        }
    }

    #[test]
    fn integer_and_continuous_paths_agree_exactly() {
        let prof = profile(&[3, 7, 12, 4, 1]);
        let cont = ContinuousProfile::from(&prof);
        assert_eq!(log_likelihood(&prof, 0.03).unwrap(), log_likelihood(&cont, 0.03).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            log_likelihood(&profile(&[1]), 0.0),
            Err(LikelihoodError::InvalidProbability(0.0))
        );
        assert!(log_likelihood(&profile(&[1]), 1.0).is_err());
        assert!(ContinuousProfile::new(vec![1.0, 0.5]).is_err());
        assert!(ContinuousProfile::new(vec![]).is_err());
        assert!(LikelihoodQuery::new(1, 0.5).is_err());
    }

    #[test]
    fn gradient_single_shell_matches_digamma() {
        let cont = ContinuousProfile::new(vec![1.0]).unwrap();
        let g = gradient_log_likelihood(&cont, (-1.0_f64).exp()).unwrap();
        // -1 - psi(2) = -1 - (1 - gamma)
        let euler_gamma = 0.5772156649015329;
        assert!((g[0] - (-2.0 + euler_gamma)).abs() < 1e-12);
    }

    #[test]
    fn trigamma_values() {
        // psi'(1) = pi^2 / 6, psi'(1/2) = pi^2 / 2
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((trigamma(1.0) - pi2 / 6.0).abs() < 1e-13);
        assert!((trigamma(0.5) - pi2 / 2.0).abs() < 1e-12);
        assert!((trigamma(101.0) - (trigamma(100.0) - 1e-4)).abs() < 1e-15);
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let d = [3.5, 12.0, 30.25, 8.0, 1.5];
        for p in [1e-6, 0.02, 0.3] {
            let (ln_p, ln_q) = (f64::ln(p), (-p).ln_1p());
            let h = hessian(&d, ln_q);
            for b in 0..d.len() {
                let step = 1e-5;
                let mut hi = d.to_vec();
                let mut lo = d.to_vec();
                hi[b] += step;
                lo[b] -= step;
                let (gh, gl) = (gradient(&hi, ln_p, ln_q), gradient(&lo, ln_p, ln_q));
                for a in 0..d.len() {
                    let fd = (gh[a] - gl[a]) / (2.0 * step);
                    assert!((fd - h[(a, b)]).abs() < 1e-6 * (1.0 + fd.abs()), "p={p} ({a},{b}) {fd} vs {}", h[(a, b)]);
                }
            }
        }
    }

    #[test]
    fn tridiagonal_solve_matches_dense() {
        let diag = [-4.0, -3.0, 0.5, -2.0];
        let off = [1.0, -0.5, 2.0];
        let mut dense = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&diag));
        for (i, &o) in off.iter().enumerate() {
            dense[(i, i + 1)] = o;
            dense[(i + 1, i)] = o;
        }
        let b = vec![1.0, -2.0, 3.0, 0.25];
        let mut rhs = vec![b.clone()];
        solve_tridiagonal(&diag, &off, &mut rhs).unwrap();
        let expected = dense.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for (x, e) in rhs[0].iter().zip(expected.iter()) {
            assert!((x - e).abs() < 1e-12, "{x} vs {e}");
        }
        assert!(solve_tridiagonal(&[0.0, 1.0], &[1.0], &mut [vec![1.0, 1.0]]).is_none());
    }

    #[test]
    fn rounding_preserves_the_total() {
        assert_eq!(round_largest_remainder(&[1.5, 2.5, 3.0], 7), vec![2, 2, 3]);
        assert_eq!(round_largest_remainder(&[1.2, 1.7, 1.1], 4), vec![1, 2, 1]);
        assert_eq!(round_largest_remainder(&[1.0, 1.0], 2), vec![1, 1]);
        // relaxed values a hair below an integer
        assert_eq!(round_largest_remainder(&[2.9999999999, 3.0000000001], 6), vec![3, 3]);
    }

    #[test]
    fn smallest_cases() {
        let q = LikelihoodQuery::new(2, 0.3).unwrap();
        let r = maximize_profile(&q, DepthRange::default_for(2)).unwrap();
        assert_eq!(r.profile.shells(), &[1]);
        assert_eq!(brute_force_profile(&q).unwrap().profile.shells(), &[1]);

        let q = LikelihoodQuery::new(3, 0.1).unwrap();
        let r = maximize_profile(&q, DepthRange::new(1, 2)).unwrap();
        assert_eq!(r.profile.shells(), &[1, 1]);
        assert_eq!(brute_force_profile(&q).unwrap().profile.shells(), &[1, 1]);
        let expected = 2.0 * 0.1_f64.ln() + 0.9_f64.ln();
        assert!((r.log_prob - expected).abs() < 1e-12);
    }

    #[test]
    fn depth_range_errors() {
        let q = LikelihoodQuery::new(5, 0.2).unwrap();
        assert_eq!(
            maximize_profile(&q, DepthRange::new(3, 2)),
            Err(LikelihoodError::EmptyDepthRange { min: 3, max: 2 })
        );
        assert_eq!(
            maximize_profile(&q, DepthRange::new(0, 2)),
            Err(LikelihoodError::EmptyDepthRange { min: 0, max: 2 })
        );
        assert_eq!(
            maximize_profile(&q, DepthRange::new(1, 5)),
            Err(LikelihoodError::InfeasibleDepth { depth: 5, n: 5 })
        );
    }

    #[test]
    fn default_depth_range() {
        assert_eq!(DepthRange::default_for(2), DepthRange::new(1, 1));
        assert_eq!(DepthRange::default_for(3), DepthRange::new(2, 2));
        assert_eq!(DepthRange::default_for(50), DepthRange::new(2, 49));
        assert_eq!(DepthRange::default_for(5000), DepthRange::new(2, 120));
    }

    #[test]
    fn oracle_cap() {
        let q = LikelihoodQuery::new(15, 0.2).unwrap();
        assert_eq!(
            brute_force_profile(&q),
            Err(LikelihoodError::OracleCapExceeded { n: 15, cap: 14 })
        );
    }

    #[test]
    fn max_depth_is_a_path() {
        let q = LikelihoodQuery::new(6, 0.4).unwrap();
        let opt = optimize_depth(&q, 5).unwrap();
        assert_eq!(opt.refined, vec![1; 5]);
    }
}
