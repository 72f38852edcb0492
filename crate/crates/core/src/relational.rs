//! Antisymmetric relational matrices and the stochastic iterator
//! `B -> B - alpha (B + B^-1) + w`.
//!
//! Every value handed out by this module is exactly antisymmetric: results are
//! rebuilt from their strict upper triangle, so `B[(j, i)] == -B[(i, j)]` holds
//! bit for bit and the diagonal is zero.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest tolerated `|B + B^T|` entry when importing an external matrix.
pub const ANTISYMMETRY_TOL: f64 = 1e-12;

/// Default singular-value floor, relative to the largest singular value.
pub const DEFAULT_SIGMA_FLOOR_RATIO: f64 = 1e-8;

const SVD_MAX_ITERATIONS: usize = 10_000;
const START_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelationalError {
    #[error("odd dimension {0}: antisymmetric matrices of odd size are singular")]
    OddDimension(usize),
    #[error("degenerate size {0}: at least two nodes are required")]
    DegenerateSize(usize),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not antisymmetric: max |B + B^T| = {0:e}")]
    NotAntisymmetric(f64),
    #[error("shape mismatch: {left} nodes vs {right} nodes")]
    ShapeMismatch { left: usize, right: usize },
    #[error("uninvertible zero matrix")]
    ZeroMatrix,
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("singular value decomposition did not converge")]
    SvdFailed,
    #[error("numerical blow-up at step {step}: {detail}")]
    NumericalBlowUp { step: usize, detail: String },
    #[error("could not draw a nonsingular start matrix in {0} attempts")]
    SingularStart(usize),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, RelationalError>;

fn invalid(name: &'static str, reason: impl Into<String>) -> RelationalError {
    RelationalError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

fn check_node_count(n: usize) -> Result<()> {
    if n < 2 {
        Err(RelationalError::DegenerateSize(n))
    } else if n % 2 == 1 {
        Err(RelationalError::OddDimension(n))
    } else {
        Ok(())
    }
}

/// Rebuilds `m` from its strict upper triangle so that the result is exactly
/// antisymmetric. The lower triangle is averaged in first, which makes this
/// the orthogonal projection `(m - m^T) / 2`.
fn antisymmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = 0.0;
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] - m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = -v;
        }
    }
}

/// Square, even-sized, antisymmetric matrix of link strengths `B_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationalMatrix {
    entries: DMatrix<f64>,
}

impl RelationalMatrix {
    /// All-zero matrix on `n` nodes.
    pub fn zeros(n: usize) -> Result<Self> {
        check_node_count(n)?;
        Ok(Self {
            entries: DMatrix::zeros(n, n),
        })
    }

    /// Builds a matrix from its strict upper triangle: `upper(i, j)` is called
    /// once for every `i < j`.
    pub fn from_upper(n: usize, mut upper: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_node_count(n)?;
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = upper(i, j);
                entries[(i, j)] = v;
                entries[(j, i)] = -v;
            }
        }
        Ok(Self { entries })
    }

    /// Imports a dense matrix, rejecting it unless it is antisymmetric to
    /// within [`ANTISYMMETRY_TOL`]. The residual asymmetry is projected out.
    pub fn from_dmatrix(mut entries: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(RelationalError::NotSquare { rows, cols });
        }
        check_node_count(rows)?;
        let defect = antisymmetry_defect(&entries);
        if defect.is_nan() || defect >= ANTISYMMETRY_TOL {
            return Err(RelationalError::NotAntisymmetric(defect));
        }
        antisymmetrize(&mut entries);
        Ok(Self { entries })
    }

    /// Row-major convenience constructor, mostly for tests and small examples.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(RelationalError::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        Self::from_dmatrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    fn from_raw(mut entries: DMatrix<f64>) -> Self {
        antisymmetrize(&mut entries);
        Self { entries }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// `(i, j, B_ij)` for every `i < j`, row-major.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j, self.entries[(i, j)])))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.amax()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    /// `max |B + B^T|`; zero for every matrix produced by this module.
    pub fn antisymmetry_defect(&self) -> f64 {
        antisymmetry_defect(&self.entries)
    }

    /// Number of unordered pairs with `|B_ij| >= threshold`.
    pub fn links_above(&self, threshold: f64) -> usize {
        self.upper_entries()
            .filter(|&(_, _, v)| v.abs() >= threshold)
            .count()
    }
}

fn antisymmetry_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] + m[(j, i)]).abs();
            if d.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(d);
        }
    }
    worst
}

/// Parameters of the additive noise `w_ij`: a Gaussian background plus rare
/// large links whose magnitude is uniform in `[rare_lo, rare_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub background_sigma: f64,
    pub rare_prob: f64,
    pub rare_lo: f64,
    pub rare_hi: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            background_sigma: 0.01,
            rare_prob: 1e-3,
            rare_lo: 1.0,
            rare_hi: 2.0,
        }
    }
}

impl NoiseSpec {
    /// Both components switched off: every draw is the zero matrix.
    pub fn off() -> Self {
        Self {
            background_sigma: 0.0,
            rare_prob: 0.0,
            rare_lo: 1.0,
            rare_hi: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.background_sigma.is_finite() && self.background_sigma >= 0.0) {
            return Err(invalid("background_sigma", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.rare_prob) {
            return Err(invalid("rare_prob", "must lie in [0, 1]"));
        }
        if self.rare_prob > 0.0 {
            if !(self.rare_lo.is_finite() && self.rare_lo > 0.0) {
                return Err(invalid("rare_lo", "must be finite and > 0"));
            }
            if !(self.rare_hi.is_finite() && self.rare_hi >= self.rare_lo) {
                return Err(invalid("rare_hi", "must be finite and >= rare_lo"));
            }
        }
        Ok(())
    }
}

/// One realization of the antisymmetric noise term.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMatrix {
    entries: DMatrix<f64>,
}

impl NoiseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            entries: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j, self.entries[(i, j)])))
    }
}

/// Draws `w` for every unordered pair in row-major order. With probability
/// `rare_prob` the pair gets a rare link of random sign, otherwise a
/// `N(0, background_sigma^2)` sample.
pub fn draw_noise<R: Rng + ?Sized>(n: usize, spec: &NoiseSpec, rng: &mut R) -> Result<NoiseMatrix> {
    check_node_count(n)?;
    spec.validate()?;
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let rare = spec.rare_prob > 0.0 && rng.random::<f64>() < spec.rare_prob;
            let v = if rare {
                let magnitude = if spec.rare_hi > spec.rare_lo {
                    rng.random_range(spec.rare_lo..=spec.rare_hi)
                } else {
                    spec.rare_lo
                };
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            } else if spec.background_sigma > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                spec.background_sigma * z
            } else {
                0.0
            };
            entries[(i, j)] = v;
            entries[(j, i)] = -v;
        }
    }
    Ok(NoiseMatrix { entries })
}

/// Small random start standing in for `B = 0`, which has no inverse.
///
/// Upper-triangle entries are i.i.d. uniform on `[-1, 1]`, rescaled so the
/// largest magnitude equals `start_scale`. Draws whose smallest singular value
/// is indistinguishable from zero are rejected and redrawn.
pub fn init_matrix(n: usize, start_scale: f64, seed: u64) -> Result<RelationalMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_matrix_with_rng(n, start_scale, &mut rng)
}

pub fn init_matrix_with_rng<R: Rng + ?Sized>(
    n: usize,
    start_scale: f64,
    rng: &mut R,
) -> Result<RelationalMatrix> {
    check_node_count(n)?;
    if !(start_scale.is_finite() && start_scale > 0.0) {
        return Err(invalid("start_scale", "must be finite and > 0"));
    }
    for _ in 0..START_ATTEMPTS {
        let raw = RelationalMatrix::from_upper(n, |_, _| rng.random_range(-1.0..=1.0))?;
        let peak = raw.max_abs();
        if peak == 0.0 {
            continue;
        }
        let factor = start_scale / peak;
        let scaled = RelationalMatrix::from_raw(raw.entries * factor);
        let sv = singular_values(&scaled)?;
        let (hi, lo) = (sv[0], sv[sv.len() - 1]);
        if lo > hi * f64::EPSILON * n as f64 {
            return Ok(scaled);
        }
    }
    Err(RelationalError::SingularStart(START_ATTEMPTS))
}

fn svd(m: &DMatrix<f64>, vectors: bool) -> Result<nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(RelationalError::NonFinite);
    }
    m.clone()
        .try_svd(vectors, vectors, f64::EPSILON, SVD_MAX_ITERATIONS)
        .ok_or(RelationalError::SvdFailed)
}

/// Singular values in descending order. For antisymmetric input they come in
/// equal pairs.
pub fn singular_values(b: &RelationalMatrix) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = svd(&b.entries, false)?.singular_values.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Inverse of `b` with every singular value floored at
/// `sigma_floor_ratio * sigma_max` first. Identical to the exact inverse when
/// the condition number is below `1 / sigma_floor_ratio`.
pub fn safe_inverse(b: &RelationalMatrix, sigma_floor_ratio: f64) -> Result<RelationalMatrix> {
    if !(sigma_floor_ratio > 0.0 && sigma_floor_ratio < 1.0) {
        return Err(invalid("sigma_floor_ratio", "must lie in (0, 1)"));
    }
    let decomposition = svd(&b.entries, true)?;
    let sigma = &decomposition.singular_values;
    let sigma_max = sigma.max();
    if sigma_max == 0.0 {
        return Err(RelationalError::ZeroMatrix);
    }
    let floor = sigma_floor_ratio * sigma_max;
    let inv_sigma = DVector::from_iterator(sigma.len(), sigma.iter().map(|&s| 1.0 / s.max(floor)));
    let (Some(u), Some(v_t)) = (decomposition.u, decomposition.v_t) else {
        return Err(RelationalError::SvdFailed);
    };
    // B = U S V^T  =>  B^-1 = V S^-1 U^T
    let mut v = v_t.transpose();
    for (mut column, &scale) in v.column_iter_mut().zip(inv_sigma.iter()) {
        column *= scale;
    }
    Ok(RelationalMatrix::from_raw(v * u.transpose()))
}

/// One application of `B -> B - alpha (B + B^-1) + w`.
pub fn iterate_step(
    b: &RelationalMatrix,
    alpha: f64,
    w: &NoiseMatrix,
    sigma_floor_ratio: f64,
) -> Result<RelationalMatrix> {
    if b.n() != w.n() {
        return Err(RelationalError::ShapeMismatch {
            left: b.n(),
            right: w.n(),
        });
    }
    let inverse = safe_inverse(b, sigma_floor_ratio)?;
    let next = &b.entries - (&b.entries + &inverse.entries) * alpha + &w.entries;
    let next = RelationalMatrix::from_raw(next);
    if !next.is_finite() {
        return Err(RelationalError::NonFinite);
    }
    Ok(next)
}

/// What [`run_iterator`] keeps along the way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordPolicy {
    /// Record every `every` steps; `0` records only the start and the end.
    pub every: usize,
    /// Store full matrices in addition to summaries.
    pub keep_matrices: bool,
    /// `|B_ij|` threshold used for the link count in summaries.
    pub link_threshold: f64,
}

impl Default for RecordPolicy {
    fn default() -> Self {
        Self {
            every: 10,
            keep_matrices: false,
            link_threshold: 0.5,
        }
    }
}

impl RecordPolicy {
    pub fn records(&self, step: usize, last: usize) -> bool {
        step == 0 || step == last || (self.every > 0 && step.is_multiple_of(self.every))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IteratorConfig {
    pub nodes: usize,
    pub alpha: f64,
    pub steps: usize,
    pub start_scale: f64,
    pub sigma_floor_ratio: f64,
    pub seed: u64,
    pub record: RecordPolicy,
}

impl Default for IteratorConfig {
    fn default() -> Self {
        Self {
            nodes: 100,
            alpha: 0.1,
            steps: 100,
            start_scale: 1e-6,
            sigma_floor_ratio: DEFAULT_SIGMA_FLOOR_RATIO,
            seed: 0,
            record: RecordPolicy::default(),
        }
    }
}

impl IteratorConfig {
    pub fn validate(&self) -> Result<()> {
        check_node_count(self.nodes)?;
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(invalid("alpha", "must be finite and > 0"));
        }
        if !(self.start_scale.is_finite() && self.start_scale > 0.0) {
            return Err(invalid("start_scale", "must be finite and > 0"));
        }
        if !(self.sigma_floor_ratio > 0.0 && self.sigma_floor_ratio < 1.0) {
            return Err(invalid("sigma_floor_ratio", "must lie in (0, 1)"));
        }
        if !(self.record.link_threshold >= 0.0) {
            return Err(invalid("link_threshold", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub frobenius: f64,
    pub max_abs: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub links: usize,
}

impl MatrixSummary {
    pub fn of(b: &RelationalMatrix, link_threshold: f64) -> Result<Self> {
        let sv = singular_values(b)?;
        Ok(Self {
            frobenius: b.frobenius_norm(),
            max_abs: b.max_abs(),
            sigma_max: sv[0],
            sigma_min: sv[sv.len() - 1],
            links: b.links_above(link_threshold),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub summary: MatrixSummary,
    pub matrix: Option<RelationalMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationHistory {
    pub snapshots: Vec<Snapshot>,
    pub final_matrix: RelationalMatrix,
}

/// Stateful driver: owns the current matrix and the generator. The start
/// matrix is drawn from the same stream as the noise, so a seed pins the
/// whole trajectory.
#[derive(Debug, Clone)]
pub struct RelationalIterator {
    current: RelationalMatrix,
    rng: ChaCha8Rng,
    alpha: f64,
    sigma_floor_ratio: f64,
    noise: NoiseSpec,
    step: usize,
}

impl RelationalIterator {
    pub fn new(config: &IteratorConfig, noise: &NoiseSpec) -> Result<Self> {
        config.validate()?;
        noise.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let current = init_matrix_with_rng(config.nodes, config.start_scale, &mut rng)?;
        Ok(Self::from_state(current, rng, config, noise))
    }

    /// Starts from a caller-supplied matrix instead of the random start.
    pub fn with_start(start: RelationalMatrix, config: &IteratorConfig, noise: &NoiseSpec) -> Result<Self> {
        noise.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self::from_state(start, rng, config, noise))
    }

    fn from_state(current: RelationalMatrix, rng: ChaCha8Rng, config: &IteratorConfig, noise: &NoiseSpec) -> Self {
        Self {
            current,
            rng,
            alpha: config.alpha,
            sigma_floor_ratio: config.sigma_floor_ratio,
            noise: *noise,
            step: 0,
        }
    }

    pub fn matrix(&self) -> &RelationalMatrix {
        &self.current
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Advances one step. Non-finite results and failed decompositions are
    /// reported as a blow-up carrying the index of the step that failed.
    pub fn advance(&mut self) -> Result<&RelationalMatrix> {
        let target = self.step + 1;
        let blow_up = |e: RelationalError| match e {
            RelationalError::NonFinite | RelationalError::SvdFailed | RelationalError::ZeroMatrix => {
                RelationalError::NumericalBlowUp {
                    step: target,
                    detail: e.to_string(),
                }
            }
            other => other,
        };
        let w = draw_noise(self.current.n(), &self.noise, &mut self.rng)?;
        let next = iterate_step(&self.current, self.alpha, &w, self.sigma_floor_ratio).map_err(blow_up)?;
        self.current = next;
        self.step = target;
        Ok(&self.current)
    }
}

/// Runs `config.steps` iterations from [`init_matrix`] and records snapshots
/// according to `config.record`.
pub fn run_iterator(config: &IteratorConfig, noise: &NoiseSpec) -> Result<IterationHistory> {
    let mut driver = RelationalIterator::new(config, noise)?;
    let policy = config.record;
    let mut snapshots = Vec::new();
    let mut record = |step: usize, b: &RelationalMatrix| -> Result<()> {
        let summary = MatrixSummary::of(b, policy.link_threshold).map_err(|e| RelationalError::NumericalBlowUp {
            step,
            detail: e.to_string(),
        })?;
        snapshots.push(Snapshot {
            step,
            summary,
            matrix: policy.keep_matrices.then(|| b.clone()),
        });
        Ok(())
    };
    record(0, driver.matrix())?;
    for step in 1..=config.steps {
        driver.advance()?;
        if policy.records(step, config.steps) {
            record(step, driver.matrix())?;
        }
    }
    Ok(IterationHistory {
        snapshots,
        final_matrix: driver.current,
    })
}
