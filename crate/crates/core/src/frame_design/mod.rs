//! Low-coherence unit-norm frames for non-orthogonal pilots.
//!
//! A frame is a `J x L` complex matrix with `J <= L` whose columns are used as
//! the pilot sequences of `L` users over `J` pilot symbols. The designer
//! starts from a column-normalized Gaussian frame and sweeps the columns,
//! replacing each one by the solution of a small convex program that pushes it
//! away from all other columns while staying inside a Euclidean ball around
//! its current value. The result can then be made (close to) tight with
//! alternating polar projections.

mod qcqp;

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;

use crate::linalg::{complex_normal, complex_normal_matrix};
use crate::{seed, CMatrix, Error, RMatrix, Result};

/// Column norms must be within this distance of one.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// A `J x L` complex frame with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    entries: CMatrix,
    column_norms: Vec<f64>,
}

impl FrameMatrix {
    /// Wraps `entries`, checking the unit-norm and `J <= L` invariants.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let (j, l) = entries.shape();
        if j == 0 || l == 0 {
            return Err(Error::domain("frame must be non-empty"));
        }
        if j > l {
            return Err(Error::domain("frame needs at least as many columns as rows"));
        }
        let column_norms: Vec<f64> = entries.column_iter().map(|c| c.norm()).collect();
        if let Some(pos) = column_norms
            .iter()
            .position(|n| !n.is_finite() || (n - 1.0).abs() > UNIT_NORM_TOL)
        {
            return Err(Error::domain(alloc::format!(
                "column {pos} has norm {}, expected 1",
                column_norms[pos]
            )));
        }
        Ok(Self {
            entries,
            column_norms,
        })
    }

    /// Scales every column of `entries` to unit norm.
    pub fn normalized(mut entries: CMatrix) -> Result<Self> {
        for (idx, mut col) in entries.column_iter_mut().enumerate() {
            let n = col.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::domain(alloc::format!("column {idx} cannot be normalized")));
            }
            col /= Complex64::new(n, 0.0);
        }
        Self::new(entries)
    }

    /// Column-normalized i.i.d. complex Gaussian frame.
    pub fn random_gaussian<R: Rng + ?Sized>(j: usize, l: usize, rng: &mut R) -> Result<Self> {
        Self::normalized(complex_normal_matrix(j, l, 1.0, rng))
    }

    /// `J` distinct rows of the `L x L` DFT matrix picked at random,
    /// columns scaled to unit norm.
    pub fn truncated_dft<R: Rng + ?Sized>(j: usize, l: usize, rng: &mut R) -> Result<Self> {
        if j > l {
            return Err(Error::domain("cannot pick more DFT rows than the DFT size"));
        }
        let rows = rand::seq::index::sample(rng, l, j).into_vec();
        let scale = 1.0 / (j as f64).sqrt();
        let entries = CMatrix::from_fn(j, l, |r, c| {
            let phase = -2.0 * PI * (rows[r] * c % l) as f64 / l as f64;
            Complex64::from_polar(scale, phase)
        });
        Self::normalized(entries)
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    /// Pilot length `J`.
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of frame vectors `L`.
    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }
}

fn normalized_correlation(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut dot = Complex64::new(0.0, 0.0);
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x.conj() * y;
        na += x.norm_sqr();
        nb += y.norm_sqr();
    }
    dot.norm() / (na * nb).sqrt()
}

/// Largest normalized correlation between `candidate` and every column of
/// `frame` other than `skip`.
fn worst_correlation(frame: &CMatrix, skip: usize, candidate: &[Complex64]) -> f64 {
    (0..frame.ncols())
        .filter(|&c| c != skip)
        .map(|c| normalized_correlation(candidate, frame.column(c).as_slice()))
        .fold(0.0, f64::max)
}

/// Mutual coherence: the largest normalized inner product between two
/// distinct columns.
pub fn mutual_coherence(frame: &FrameMatrix) -> Result<f64> {
    coherence_of(frame.entries())
}

/// [`mutual_coherence`] for an arbitrary (not necessarily normalized) matrix.
pub fn coherence_of(m: &CMatrix) -> Result<f64> {
    let l = m.ncols();
    if l < 2 {
        return Err(Error::domain("coherence needs at least two columns"));
    }
    let mut mu: f64 = 0.0;
    for a in 0..l {
        for b in (a + 1)..l {
            mu = mu.max(normalized_correlation(
                m.column(a).as_slice(),
                m.column(b).as_slice(),
            ));
        }
    }
    Ok(mu.min(1.0))
}

/// Welch lower bound on the coherence of `L` unit vectors in `J` dimensions,
/// valid for `J < L <= J^2`.
pub fn welch_bound(j: usize, l: usize) -> Result<f64> {
    if j == 0 || l <= j {
        return Err(Error::domain(alloc::format!(
            "Welch bound needs an overcomplete frame (J={j}, L={l})"
        )));
    }
    if l > j * j {
        return Err(Error::domain(alloc::format!(
            "Welch bound is only stated for L <= J^2 (J={j}, L={l})"
        )));
    }
    let (j, l) = (j as f64, l as f64);
    Ok(((l - j) / (j * (l - 1.0))).sqrt())
}

/// Lower and upper frame bounds: extreme eigenvalues of `F F^H`.
pub fn frame_bounds(frame: &FrameMatrix) -> (f64, f64) {
    bounds_of(frame.entries())
}

pub(crate) fn bounds_of(m: &CMatrix) -> (f64, f64) {
    let gram = m * m.adjoint();
    let eig = gram.symmetric_eigen();
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

/// Relative eigen-spread `(beta - alpha) / alpha` of the frame operator.
pub fn tightness_spread(frame: &FrameMatrix) -> f64 {
    let (a, b) = frame_bounds(frame);
    (b - a) / a
}

/// Configuration of the sequential decorrelation designer.
#[derive(Debug, Clone, PartialEq)]
pub struct CsidcoConfig {
    /// Full sweeps over all columns.
    pub outer_iterations: usize,
    /// Duality-gap target of the barrier solver.
    pub solver_tolerance: f64,
    /// Newton-step budget of a single column subproblem.
    pub solver_max_steps: usize,
    /// Tightening rounds applied by [`design_pilots`].
    pub tighten_rounds: usize,
    /// Gram cap used by [`design_pilots`], relative to the decorrelated
    /// frame's coherence.
    pub tighten_cap_ratio: f64,
    /// How the inner problem bounds each correlation.
    pub bound: CorrelationBound,
    pub seed: u64,
}

/// Correlation bound used by the designer's column updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrelationBound {
    /// Separate linear bounds on real and imaginary parts (the four
    /// stacked blocks of [`QcqpSubproblem`]).
    Split,
    /// One cone `|c_j| <= t` per correlation.
    #[default]
    Modulus,
}

impl Default for CsidcoConfig {
    fn default() -> Self {
        Self {
            outer_iterations: 20,
            solver_tolerance: 1e-4,
            solver_max_steps: 2000,
            tighten_rounds: 1000,
            tighten_cap_ratio: 0.97,
            bound: CorrelationBound::Modulus,
            seed: 0,
        }
    }
}

impl CsidcoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.solver_tolerance > 0.0) {
            return Err(Error::domain("solver_tolerance must be positive"));
        }
        if !(self.tighten_cap_ratio > 0.0 && self.tighten_cap_ratio <= 1.0) {
            return Err(Error::domain("tighten_cap_ratio must be in (0, 1]"));
        }
        if self.solver_max_steps == 0 {
            return Err(Error::domain("solver_max_steps must be at least 1"));
        }
        Ok(())
    }
}

/// Quadratically constrained quadratic program that updates one column.
///
/// The variable is `x = [Re f; Im f; t_R; t_I]` of length `2J + 2`:
///
/// ```text
/// min  x' Phi x
/// s.t. A_R1 x <= 0,  A_R2 x <= 0,  A_I1 x <= 0,  A_I2 x <= 0,
///      x' Xi x - 2 b' x + 1 - T <= 0
/// ```
///
/// The linear blocks bound the real and imaginary parts of the correlations
/// with the other `L - 1` columns by the slacks; the quadratic constraint
/// keeps `f` within `|f - f_cur|^2 <= T` of the current column, where
/// `T = 1 - (worst squared correlation of f_cur)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QcqpSubproblem {
    pub column: usize,
    pub phi: RMatrix,
    pub a_r1: RMatrix,
    pub a_r2: RMatrix,
    pub a_i1: RMatrix,
    pub a_i2: RMatrix,
    pub xi: RMatrix,
    pub b: DVector<f64>,
    pub radius: f64,
}

impl QcqpSubproblem {
    /// Pilot length `J`.
    pub fn pilot_len(&self) -> usize {
        (self.b.len() - 2) / 2
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.phi * x))
    }

    /// Left-hand side of the ball constraint (feasible when `<= 0`).
    pub fn ball_value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.xi * x)) - 2.0 * self.b.dot(x) + 1.0 - self.radius
    }

    /// All four linear blocks stacked (row order R1, R2, I1, I2).
    pub fn stacked_linear(&self) -> RMatrix {
        let rows = self.a_r1.nrows();
        let n = self.dim();
        let mut g = RMatrix::zeros(4 * rows, n);
        for (blk, a) in [&self.a_r1, &self.a_r2, &self.a_i1, &self.a_i2].into_iter().enumerate() {
            g.view_mut((blk * rows, 0), (rows, n)).copy_from(a);
        }
        g
    }

    /// Largest violation over the linear blocks and the ball (`<= 0` means feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let lin = (self.stacked_linear() * x).max();
        lin.max(self.ball_value(x))
    }

    /// Ball centre with the slacks set to the exact worst real/imaginary
    /// correlations. Always feasible.
    pub fn reference_point(&self) -> DVector<f64> {
        let n = self.dim();
        let mut x = self.b.clone();
        let j = self.pilot_len();
        let re = (self.a_r1.columns(0, 2 * j) * x.rows(0, 2 * j)).abs().max();
        let im = (self.a_i1.columns(0, 2 * j) * x.rows(0, 2 * j)).abs().max();
        x[n - 2] = re;
        x[n - 1] = im;
        x
    }

    /// Complex column encoded in the first `2J` entries of `x`.
    pub fn decode(&self, x: &DVector<f64>) -> Vec<Complex64> {
        let j = self.pilot_len();
        (0..j).map(|r| Complex64::new(x[r], x[j + r])).collect()
    }
}

/// Builds the column-`column` subproblem for the current frame.
pub fn build_subproblem(frame: &FrameMatrix, column: usize) -> Result<QcqpSubproblem> {
    let f = frame.entries();
    let (j, l) = f.shape();
    if column >= l {
        return Err(Error::domain(alloc::format!("column {column} out of range (L={l})")));
    }
    if l < 2 {
        return Err(Error::domain("subproblem needs at least two columns"));
    }
    let current = f.column(column);
    let worst = worst_correlation(f, column, current.as_slice());
    let radius = 1.0 - worst * worst;
    if radius <= 1e-12 {
        return Err(Error::DegenerateColumn { column, radius });
    }

    let n = 2 * j + 2;
    let others: Vec<usize> = (0..l).filter(|&c| c != column).collect();
    let mut a_r1 = RMatrix::zeros(l - 1, n);
    let mut a_r2 = RMatrix::zeros(l - 1, n);
    let mut a_i1 = RMatrix::zeros(l - 1, n);
    let mut a_i2 = RMatrix::zeros(l - 1, n);
    for (row, &c) in others.iter().enumerate() {
        for r in 0..j {
            let v = f[(r, c)];
            a_r1[(row, r)] = v.re;
            a_r1[(row, j + r)] = v.im;
            a_r2[(row, r)] = -v.re;
            a_r2[(row, j + r)] = -v.im;
            a_i1[(row, r)] = -v.im;
            a_i1[(row, j + r)] = v.re;
            a_i2[(row, r)] = v.im;
            a_i2[(row, j + r)] = -v.re;
        }
        a_r1[(row, n - 2)] = -1.0;
        a_r2[(row, n - 2)] = -1.0;
        a_i1[(row, n - 1)] = -1.0;
        a_i2[(row, n - 1)] = -1.0;
    }

    let mut phi = RMatrix::zeros(n, n);
    phi[(n - 2, n - 2)] = 1.0;
    phi[(n - 1, n - 1)] = 1.0;
    let mut xi = RMatrix::zeros(n, n);
    for d in 0..2 * j {
        xi[(d, d)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    for r in 0..j {
        b[r] = current[r].re;
        b[j + r] = current[r].im;
    }

    Ok(QcqpSubproblem {
        column,
        phi,
        a_r1,
        a_r2,
        a_i1,
        a_i2,
        xi,
        b,
        radius,
    })
}

/// Solves a column subproblem with a log-barrier interior-point method.
///
/// The returned point is strictly feasible and its objective is never worse
/// than that of [`QcqpSubproblem::reference_point`].
pub fn solve_subproblem(p: &QcqpSubproblem, cfg: &CsidcoConfig) -> Result<DVector<f64>> {
    cfg.validate()?;
    let reference = p.reference_point();
    let x = qcqp::split_solve(p, cfg.solver_tolerance, cfg.solver_max_steps)?;
    if p.objective(&x) <= p.objective(&reference) {
        Ok(x)
    } else {
        Ok(reference)
    }
}

/// Column update used by the designer: [`solve_subproblem`] for
/// [`CorrelationBound::Split`], the cone form otherwise. Either way the
/// result is never worse than the reference point in `t^2`.
pub fn solve_column(p: &QcqpSubproblem, cfg: &CsidcoConfig) -> Result<DVector<f64>> {
    match cfg.bound {
        CorrelationBound::Split => solve_subproblem(p, cfg),
        CorrelationBound::Modulus => {
            cfg.validate()?;
            qcqp::modulus_solve(p, cfg.solver_tolerance, cfg.solver_max_steps)
        }
    }
}

/// Output of [`csidco_design`].
#[derive(Debug, Clone)]
pub struct CsidcoDesign {
    pub frame: FrameMatrix,
    /// Coherence of the starting frame followed by the coherence after each sweep.
    pub coherence_trace: Vec<f64>,
    /// Columns replaced by a fresh random vector because they were degenerate.
    pub rerandomized: usize,
}

impl CsidcoDesign {
    pub fn initial_coherence(&self) -> f64 {
        self.coherence_trace[0]
    }

    pub fn final_coherence(&self) -> f64 {
        *self.coherence_trace.last().unwrap()
    }
}

fn check_dims(j: usize, l: usize) -> Result<()> {
    welch_bound(j, l).map(|_| ())
}

/// Sequential column decorrelation starting from a seeded Gaussian frame.
///
/// A column is replaced only if its worst correlation with the rest of the
/// frame does not increase, so the coherence trace is non-increasing.
pub fn csidco_design(j: usize, l: usize, cfg: &CsidcoConfig) -> Result<CsidcoDesign> {
    check_dims(j, l)?;
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed);
    let start = FrameMatrix::random_gaussian(j, l, &mut rng)?;
    refine_with(start, cfg, &mut rng)
}

/// Runs the column sweeps of [`csidco_design`] from a given frame.
pub fn csidco_refine(start: FrameMatrix, cfg: &CsidcoConfig) -> Result<CsidcoDesign> {
    check_dims(start.rows(), start.cols())?;
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(cfg.seed, &[start.cols() as u64]));
    refine_with(start, cfg, &mut rng)
}

fn refine_with<R: Rng + ?Sized>(start: FrameMatrix, cfg: &CsidcoConfig, rng: &mut R) -> Result<CsidcoDesign> {
    let (j, l) = (start.rows(), start.cols());
    let mut f = start.into_entries();
    let mut trace = Vec::with_capacity(cfg.outer_iterations + 1);
    trace.push(coherence_of(&f)?);
    let mut rerandomized = 0;

    for _ in 0..cfg.outer_iterations {
        for col in 0..l {
            let frame = FrameMatrix {
                column_norms: alloc::vec![1.0; l],
                entries: f,
            };
            let sub = build_subproblem(&frame, col);
            f = frame.entries;
            let sub = match sub {
                Ok(s) => s,
                Err(Error::DegenerateColumn { .. }) => {
                    let fresh: Vec<Complex64> = (0..j).map(|_| complex_normal(rng, 1.0)).collect();
                    let norm = fresh.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                    for (r, v) in fresh.into_iter().enumerate() {
                        f[(r, col)] = v / norm;
                    }
                    rerandomized += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let x = solve_column(&sub, cfg)?;
            let mut candidate = sub.decode(&x);
            let norm = candidate.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                continue;
            }
            candidate.iter_mut().for_each(|v| *v /= norm);
            let old = worst_correlation(&f, col, f.column(col).as_slice());
            let new = worst_correlation(&f, col, &candidate);
            if new <= old {
                for (r, v) in candidate.into_iter().enumerate() {
                    f[(r, col)] = v;
                }
            }
        }
        trace.push(coherence_of(&f)?);
    }

    Ok(CsidcoDesign {
        frame: FrameMatrix::new(f)?,
        coherence_trace: trace,
        rerandomized,
    })
}

/// Alternating projection onto tight frames and unit-norm columns, with the
/// off-diagonal Gram entries capped at the input's coherence so tightening
/// does not undo decorrelation. See [`tighten_capped`].
pub fn tighten(frame: &FrameMatrix, rounds: usize) -> Result<FrameMatrix> {
    let cap = if frame.cols() > 1 { mutual_coherence(frame)? } else { 1.0 };
    tighten_capped(frame, rounds, cap)
}

/// Each round projects the Gram matrix `G = F^H F` onto the set with unit
/// diagonal and `|G_ij| <= cap`, then onto the Gram matrices of tight frames
/// (`(L/J) V_J V_J^H` from the top `J` eigenvectors, i.e. the polar factor
/// `sqrt(L/J) U V^H` of the frame). The new frame is rotated back onto the
/// previous one so a frame that is already tight and below the cap is a
/// fixed point. Columns are renormalized at the end.
pub fn tighten_capped(frame: &FrameMatrix, rounds: usize, cap: f64) -> Result<FrameMatrix> {
    if rounds == 0 {
        return Ok(frame.clone());
    }
    if !(cap > 0.0) {
        return Err(Error::domain("coherence cap must be positive"));
    }
    let (j, l) = frame.entries().shape();
    let scale = (l as f64 / j as f64).sqrt();
    let mut f = frame.entries().clone();
    for _ in 0..rounds {
        let mut g = gram(&f);
        for c in 0..l {
            for r in 0..l {
                if r == c {
                    g[(r, c)] = Complex64::new(1.0, 0.0);
                } else {
                    let a = g[(r, c)].norm();
                    if a > cap {
                        g[(r, c)] *= cap / a;
                    }
                }
            }
        }
        let eig = g.symmetric_eigen();
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = eig.eigenvalues[order[0]];
        if !(eig.eigenvalues[order[j - 1]] > 1e-10 * top) {
            return Err(Error::Singular("frame is not full row rank"));
        }
        let tight = CMatrix::from_fn(j, l, |r, c| eig.eigenvectors[(c, order[r])].conj() * scale);

        // Procrustes alignment: the unitary Q minimizing |Q T - F|.
        let svd = (&f * tight.adjoint()).svd(true, true);
        let q = svd.u.as_ref().expect("requested U") * svd.v_t.as_ref().expect("requested V^H");
        f = q * tight;
    }
    FrameMatrix::normalized(f)
}

/// Full pilot design: sequential decorrelation followed by capped
/// tightening at `tighten_cap_ratio` times the decorrelated coherence.
/// The tightened frame is kept only if its coherence is no worse.
pub fn design_pilots(j: usize, l: usize, cfg: &CsidcoConfig) -> Result<CsidcoDesign> {
    let mut design = csidco_design(j, l, cfg)?;
    let cap = cfg.tighten_cap_ratio * design.final_coherence();
    let tight = tighten_capped(&design.frame, cfg.tighten_rounds, cap)?;
    if mutual_coherence(&tight)? <= design.final_coherence() {
        design.frame = tight;
    }
    Ok(design)
}

/// Gram matrix `F^H F` of a frame (used by the pilot-only estimators).
pub fn gram(m: &CMatrix) -> CMatrix {
    m.adjoint() * m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn coherence_of_identity_and_duplicates() {
        let eye = FrameMatrix::new(CMatrix::identity(2, 2)).unwrap();
        assert_eq!(mutual_coherence(&eye).unwrap(), 0.0);
        let dup = FrameMatrix::new(CMatrix::from_column_slice(2, 2, &[c(1., 0.), c(0., 0.), c(1., 0.), c(0., 0.)])).unwrap();
        assert_relative_eq!(mutual_coherence(&dup).unwrap(), 1.0);
        let single = FrameMatrix::new(CMatrix::from_column_slice(1, 1, &[c(1., 0.)])).unwrap();
        assert!(mutual_coherence(&single).is_err());
    }

    #[test]
    fn gaussian_frame_sits_above_welch() {
        let mut rng = seed::rng(5);
        let f = FrameMatrix::random_gaussian(14, 100, &mut rng).unwrap();
        let mu = mutual_coherence(&f).unwrap();
        assert!(mu > welch_bound(14, 100).unwrap());
        assert!(mu <= 1.0);
    }

    #[test]
    fn welch_values_and_domain() {
        assert_relative_eq!(welch_bound(14, 100).unwrap(), (86.0f64 / 1386.0).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(welch_bound(14, 100).unwrap(), 0.249096, epsilon = 1e-6);
        assert_relative_eq!(welch_bound(2, 4).unwrap(), (1.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert!(welch_bound(5, 5).is_err());
        assert!(welch_bound(3, 10).is_err());
        assert!(welch_bound(3, 9).is_ok());
    }

    #[test]
    fn frame_bounds_examples() {
        let eye = FrameMatrix::new(CMatrix::identity(3, 3)).unwrap();
        let (a, b) = frame_bounds(&eye);
        assert_relative_eq!(a, 1.0, epsilon = 1e-12);
        assert_relative_eq!(b, 1.0, epsilon = 1e-12);

        let s = core::f64::consts::FRAC_1_SQRT_2;
        let tight = FrameMatrix::new(CMatrix::from_column_slice(
            2,
            4,
            &[c(1., 0.), c(0., 0.), c(0., 0.), c(1., 0.), c(s, 0.), c(s, 0.), c(s, 0.), c(-s, 0.)],
        ))
        .unwrap();
        let (a, b) = frame_bounds(&tight);
        assert_relative_eq!(a, 2.0, epsilon = 1e-12);
        assert_relative_eq!(b, 2.0, epsilon = 1e-12);

        let mut rng = seed::rng(9);
        let g = FrameMatrix::random_gaussian(14, 100, &mut rng).unwrap();
        let (a, b) = frame_bounds(&g);
        assert!(a < b);
    }

    #[test]
    fn frame_rejects_bad_inputs() {
        assert!(FrameMatrix::new(CMatrix::identity(3, 2)).is_err());
        assert!(FrameMatrix::new(CMatrix::from_element(2, 3, c(1.0, 0.0))).is_err());
        assert!(FrameMatrix::normalized(CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn subproblem_radius_matches_hand_evaluation() {
        // Columns e1, (e1 + e2)/sqrt(2), e2 rotated slightly.
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let th: f64 = 0.3;
        let f = FrameMatrix::normalized(CMatrix::from_column_slice(
            2,
            3,
            &[c(1., 0.), c(0., 0.), c(s, 0.), c(0., s), c(th.sin(), 0.), c(th.cos(), 0.)],
        ))
        .unwrap();
        let p = build_subproblem(&f, 0).unwrap();
        // |<e1, (1, j)/sqrt2>|^2 = 1/2 ; |<e1, (sin, cos)>|^2 = sin^2(0.3)
        let worst = 0.5f64.max(th.sin().powi(2));
        assert_relative_eq!(p.radius, 1.0 - worst, epsilon = 1e-14);
        assert_eq!(p.a_r1.shape(), (2, 6));
        // A_R1 row for column 1 = [Re f1', Im f1', -1, 0]
        let row: Vec<f64> = p.a_r1.row(0).iter().copied().collect();
        assert_eq!(row, alloc::vec![s, 0.0, 0.0, s, -1.0, 0.0]);
        let row: Vec<f64> = p.a_i1.row(0).iter().copied().collect();
        assert_eq!(row, alloc::vec![-0.0, -s, s, 0.0, 0.0, -1.0]);
        assert_eq!(p.b.as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.phi[(4, 4)], 1.0);
        assert_eq!(p.phi[(0, 0)], 0.0);
        assert_eq!(p.xi[(3, 3)], 1.0);
        assert_eq!(p.xi[(5, 5)], 0.0);
    }

    #[test]
    fn duplicated_column_is_degenerate() {
        let f = FrameMatrix::normalized(CMatrix::from_column_slice(
            2,
            3,
            &[c(1., 0.), c(1., 0.), c(0., 1.), c(0., 1.), c(1., 0.), c(0., 0.)],
        ))
        .unwrap();
        assert!(matches!(build_subproblem(&f, 0), Err(Error::DegenerateColumn { column: 0, .. })));
    }

    #[test]
    fn reference_point_is_feasible() {
        let mut rng = seed::rng(1);
        let f = FrameMatrix::random_gaussian(4, 9, &mut rng).unwrap();
        for col in 0..9 {
            let p = build_subproblem(&f, col).unwrap();
            let x = p.reference_point();
            assert!((p.stacked_linear() * &x).max() <= 1e-15);
            assert!(p.ball_value(&x) <= 0.0);
        }
    }

    #[test]
    fn solver_improves_on_reference() {
        let mut rng = seed::rng(2);
        let f = FrameMatrix::random_gaussian(6, 20, &mut rng).unwrap();
        let cfg = CsidcoConfig::default();
        for col in [0, 7, 19] {
            let p = build_subproblem(&f, col).unwrap();
            let x = solve_subproblem(&p, &cfg).unwrap();
            assert!(p.max_violation(&x) <= cfg.solver_tolerance);
            assert!(p.objective(&x) <= p.objective(&p.reference_point()));
        }
    }

    /// Objective with the slacks at their smallest feasible values for `f`.
    fn slack_objective(p: &QcqpSubproblem, f: &[f64]) -> f64 {
        let j = p.pilot_len();
        let dot = |a: &RMatrix, row: usize| (0..2 * j).map(|d| a[(row, d)] * f[d]).sum::<f64>();
        let rows = p.a_r1.nrows();
        let re = (0..rows).map(|r| dot(&p.a_r1, r).abs()).fold(0.0, f64::max);
        let im = (0..rows).map(|r| dot(&p.a_i1, r).abs()).fold(0.0, f64::max);
        re * re + im * im
    }

    /// Best objective over a grid of the 4-dimensional ball: step 0.05
    /// everywhere, then step 0.01 around the best coarse points.
    fn grid_minimum(p: &QcqpSubproblem) -> f64 {
        let c: Vec<f64> = p.b.rows(0, 4).iter().copied().collect();
        let r = p.radius.sqrt();
        let inside = |f: &[f64]| f.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() <= p.radius;
        let scan = |centre: &[f64], half: f64, step: f64, out: &mut Vec<(f64, [f64; 4])>| {
            let n = (half / step).round() as i64;
            for i0 in -n..=n {
                for i1 in -n..=n {
                    for i2 in -n..=n {
                        for i3 in -n..=n {
                            let f = [
                                centre[0] + i0 as f64 * step,
                                centre[1] + i1 as f64 * step,
                                centre[2] + i2 as f64 * step,
                                centre[3] + i3 as f64 * step,
                            ];
                            if inside(&f) {
                                out.push((slack_objective(p, &f), f));
                            }
                        }
                    }
                }
            }
        };
        let mut coarse = Vec::new();
        scan(&c, r, 0.05, &mut coarse);
        coarse.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best = coarse[0].0;
        for (_, f) in coarse.iter().take(10) {
            let mut fine = Vec::new();
            scan(f, 0.05, 0.01, &mut fine);
            best = fine.iter().map(|v| v.0).fold(best, f64::min);
        }
        best
    }

    #[test]
    fn split_solver_matches_grid_search() {
        let f = FrameMatrix::random_gaussian(2, 3, &mut seed::rng(17)).unwrap();
        let cfg = CsidcoConfig {
            solver_tolerance: 1e-9,
            ..Default::default()
        };
        for col in 0..3 {
            let p = build_subproblem(&f, col).unwrap();
            let x = solve_subproblem(&p, &cfg).unwrap();
            let grid = grid_minimum(&p);
            let got = p.objective(&x);
            assert!(got <= grid + 1e-4, "column {col}: solver {got}, grid {grid}");
            // The grid cannot beat the solver by more than its resolution allows.
            assert!(grid - got <= 1e-2, "column {col}: solver {got}, grid {grid}");
            assert!((slack_objective(&p, x.rows(0, 4).as_slice()) - got).abs() <= 1e-6);
        }
    }

    #[test]
    fn orthogonal_start_keeps_zero_objective() {
        // Reference objective is already 0: the solver may not do worse.
        let f = FrameMatrix::new(CMatrix::identity(2, 2)).unwrap();
        let p = build_subproblem(&f, 0).unwrap();
        let x = solve_subproblem(&p, &CsidcoConfig::default()).unwrap();
        assert!(p.objective(&x) <= 0.0);
    }

    #[test]
    fn zero_outer_iterations_returns_start() {
        let cfg = CsidcoConfig {
            outer_iterations: 0,
            seed: 42,
            ..Default::default()
        };
        let d = csidco_design(4, 10, &cfg).unwrap();
        let start = FrameMatrix::random_gaussian(4, 10, &mut seed::rng(42)).unwrap();
        assert_eq!(d.frame, start);
        assert_eq!(d.coherence_trace.len(), 1);
    }

    #[test]
    fn small_design_reaches_welch() {
        let cfg = CsidcoConfig {
            seed: 3,
            ..Default::default()
        };
        let d = csidco_design(2, 4, &cfg).unwrap();
        let wb = welch_bound(2, 4).unwrap();
        let mu = d.final_coherence();
        assert!(mu <= 1.05 * wb, "mu={mu} welch={wb}");
        assert!(d.coherence_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn tighten_fixed_point_and_identity() {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let tight = FrameMatrix::new(CMatrix::from_column_slice(
            2,
            4,
            &[c(1., 0.), c(0., 0.), c(0., 0.), c(1., 0.), c(s, 0.), c(s, 0.), c(s, 0.), c(-s, 0.)],
        ))
        .unwrap();
        let t = tighten(&tight, 5).unwrap();
        assert!((t.entries() - tight.entries()).norm() < 1e-9);
        let mut rng = seed::rng(4);
        let g = FrameMatrix::random_gaussian(3, 7, &mut rng).unwrap();
        assert_eq!(tighten(&g, 0).unwrap(), g);
    }

    #[test]
    fn tighten_random_frame() {
        let mut rng = seed::rng(8);
        let g = FrameMatrix::random_gaussian(14, 100, &mut rng).unwrap();
        let t = tighten(&g, 50).unwrap();
        assert!(tightness_spread(&t) < 0.05, "{}", tightness_spread(&t));
        assert!(tightness_spread(&t) < tightness_spread(&g));
    }

    #[test]
    fn tighten_rejects_rank_deficient() {
        let f = FrameMatrix::normalized(CMatrix::from_element(2, 4, c(1.0, 0.0))).unwrap();
        assert!(matches!(tighten(&f, 1), Err(Error::Singular(_))));
    }
}
