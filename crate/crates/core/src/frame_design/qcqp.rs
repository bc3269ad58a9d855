//! Log-barrier interior-point methods for the column subproblem.
//!
//! Two inner problems share one damped-Newton engine:
//!
//! * the split form, with linear bounds on the real and imaginary parts of
//!   each correlation (the four stacked blocks of [`QcqpSubproblem`]);
//! * the modulus form, with one second-order cone `|c_j| <= t` per
//!   correlation, which bounds the complex magnitude directly.
//!
//! Both keep the quadratic ball constraint of the subproblem.

use alloc::vec::Vec;

use nalgebra::DVector;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::QcqpSubproblem;
use crate::{Error, RMatrix, Result};

const BARRIER_GROWTH: f64 = 50.0;
const CENTERING_TOL: f64 = 1e-6;
const ARMIJO: f64 = 0.25;
const SHRINK: f64 = 0.5;

trait Barrier {
    /// Number of barrier terms (the duality-gap bound is `terms / s`).
    fn terms(&self) -> usize;
    fn strictly_feasible(&self, x: &DVector<f64>) -> bool;
    /// `s * objective - sum(log(-g_i))`, only called on strictly feasible points.
    fn value(&self, s: f64, x: &DVector<f64>) -> f64;
    fn gradient_hessian(&self, s: f64, x: &DVector<f64>) -> (DVector<f64>, RMatrix);
}

fn newton_barrier<B: Barrier>(b: &B, mut x: DVector<f64>, tol: f64, max_steps: usize, tag: usize) -> Result<DVector<f64>> {
    debug_assert!(b.strictly_feasible(&x));
    let terms = b.terms() as f64;
    let mut s = 1.0;
    let mut steps = 0usize;
    loop {
        loop {
            if steps >= max_steps {
                return Err(Error::NonConvergence {
                    steps,
                    last_iterate: x.iter().copied().collect::<Vec<_>>(),
                });
            }
            steps += 1;
            let (mut grad, hess) = b.gradient_hessian(s, &x);
            let chol = hess
                .cholesky()
                .ok_or(Error::Singular("barrier Hessian is not positive definite"))?;
            grad.neg_mut();
            let dx = chol.solve(&grad);
            let decrement = dx.dot(&grad);
            if !decrement.is_finite() {
                return Err(Error::NonFinite {
                    iteration: steps,
                    edge: tag,
                });
            }
            if decrement / 2.0 <= CENTERING_TOL {
                break;
            }
            let f0 = b.value(s, &x);
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-20 {
                let cand = &x + &dx * alpha;
                if cand == x {
                    break;
                }
                if b.strictly_feasible(&cand) {
                    let f1 = b.value(s, &cand);
                    if f1 < f0 && f1 <= f0 - ARMIJO * alpha * decrement {
                        x = cand;
                        moved = true;
                        break;
                    }
                }
                alpha *= SHRINK;
            }
            if !moved {
                // Nothing left to gain at working precision.
                break;
            }
        }
        if terms / s < tol {
            return Ok(x);
        }
        s *= BARRIER_GROWTH;
    }
}

struct Split<'a> {
    p: &'a QcqpSubproblem,
    g: RMatrix,
}

impl Split<'_> {
    fn residuals(&self, x: &DVector<f64>) -> (DVector<f64>, f64) {
        (&self.g * x, self.p.ball_value(x))
    }
}

impl Barrier for Split<'_> {
    fn terms(&self) -> usize {
        self.g.nrows() + 1
    }

    fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        let (lin, ball) = self.residuals(x);
        lin.iter().all(|&r| r < 0.0) && ball < 0.0
    }

    fn value(&self, s: f64, x: &DVector<f64>) -> f64 {
        let (lin, ball) = self.residuals(x);
        s * self.p.objective(x) - lin.iter().map(|r| (-r).ln()).sum::<f64>() - (-ball).ln()
    }

    fn gradient_hessian(&self, s: f64, x: &DVector<f64>) -> (DVector<f64>, RMatrix) {
        let p = self.p;
        let (lin, ball) = self.residuals(x);
        let n = p.dim();
        let grad_q = (&p.xi * x - &p.b) * 2.0;
        let inv: DVector<f64> = lin.map(|r| -1.0 / r);
        let grad = &p.phi * x * (2.0 * s) + self.g.transpose() * &inv + &grad_q * (-1.0 / ball);

        let weighted = RMatrix::from_fn(self.g.nrows(), n, |i, j| self.g[(i, j)] * inv[i]);
        let mut hess = weighted.transpose() * &weighted;
        hess += &p.phi * (2.0 * s);
        hess += &p.xi * (-2.0 / ball);
        hess += &grad_q * grad_q.transpose() * (1.0 / (ball * ball));
        (grad, hess)
    }
}

/// Starting point: ball centre with slacks a little above the worst
/// real/imaginary correlations.
fn split_start(p: &QcqpSubproblem) -> DVector<f64> {
    let mut x = p.reference_point();
    let n = p.dim();
    let margin = 1e-3 + 0.1 * p.radius;
    x[n - 2] += margin;
    x[n - 1] += margin;
    x
}

pub(super) fn split_solve(p: &QcqpSubproblem, tol: f64, max_steps: usize) -> Result<DVector<f64>> {
    let b = Split {
        p,
        g: p.stacked_linear(),
    };
    newton_barrier(&b, split_start(p), tol, max_steps, p.column)
}

/// Modulus form over `y = [Re f; Im f; t]`, minimizing `t^2` subject to
/// `|c_j|^2 < t^2` for every other column and the ball.
struct Modulus<'a> {
    p: &'a QcqpSubproblem,
    /// Rows `[Re c; Im c]` as linear maps of `[Re f; Im f]`, stacked `2(L-1) x 2J`.
    corr: RMatrix,
}

impl Modulus<'_> {
    fn ball(&self, y: &DVector<f64>) -> f64 {
        let j2 = y.len() - 1;
        (y.rows(0, j2) - self.p.b.rows(0, j2)).norm_squared() - self.p.radius
    }

    /// Correlations `[Re c_j, Im c_j]` and the cone slacks `t^2 - |c_j|^2`.
    fn cone_slacks(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let j2 = y.len() - 1;
        let u = &self.corr * y.rows(0, j2);
        let t = y[j2];
        let slack = DVector::from_fn(u.len() / 2, |j, _| t * t - u[2 * j] * u[2 * j] - u[2 * j + 1] * u[2 * j + 1]);
        (u, slack)
    }
}

impl Barrier for Modulus<'_> {
    fn terms(&self) -> usize {
        // Each second-order cone barrier has parameter 2.
        self.corr.nrows() + 1
    }

    fn strictly_feasible(&self, y: &DVector<f64>) -> bool {
        let (_, slack) = self.cone_slacks(y);
        y[y.len() - 1] > 0.0 && slack.iter().all(|&v| v > 0.0) && self.ball(y) < 0.0
    }

    fn value(&self, s: f64, y: &DVector<f64>) -> f64 {
        let (_, slack) = self.cone_slacks(y);
        let t = y[y.len() - 1];
        s * t * t - slack.iter().map(|v| v.ln()).sum::<f64>() - (-self.ball(y)).ln()
    }

    fn gradient_hessian(&self, s: f64, y: &DVector<f64>) -> (DVector<f64>, RMatrix) {
        let n = y.len();
        let j2 = n - 1;
        let t = y[j2];
        let (u, slack) = self.cone_slacks(y);
        let mut grad = DVector::zeros(n);
        let mut hess = RMatrix::zeros(n, n);
        grad[j2] = 2.0 * s * t;
        hess[(j2, j2)] = 2.0 * s;

        // For sl = t^2 - |B f|^2: d sl = (-2 B'u, 2t), d2 sl = diag(-2 B'B, 2).
        // Stack d sl / sl as rows of `d` so the rank-one terms become d' d.
        let cones = slack.len();
        let mut d = RMatrix::zeros(cones, n);
        let mut w = DVector::zeros(2 * cones);
        let mut wu = DVector::zeros(2 * cones);
        for (j, &sl) in slack.iter().enumerate() {
            w[2 * j] = 2.0 / sl;
            w[2 * j + 1] = 2.0 / sl;
            wu[2 * j] = -2.0 * u[2 * j] / sl;
            wu[2 * j + 1] = -2.0 * u[2 * j + 1] / sl;
            d[(j, j2)] = 2.0 * t / sl;
            grad[j2] -= 2.0 * t / sl;
            hess[(j2, j2)] -= 2.0 / sl;
        }
        let head = self.corr.tr_mul(&wu);
        d.view_mut((0, 0), (cones, j2))
            .copy_from(&RMatrix::from_fn(cones, j2, |r, c| {
                wu[2 * r] * self.corr[(2 * r, c)] + wu[2 * r + 1] * self.corr[(2 * r + 1, c)]
            }));
        for c in 0..j2 {
            grad[c] -= head[c];
        }
        hess += d.tr_mul(&d);
        let weighted = RMatrix::from_fn(2 * cones, j2, |r, c| self.corr[(r, c)] * w[r]);
        let mut block = hess.view_mut((0, 0), (j2, j2));
        block += self.corr.tr_mul(&weighted);

        let q = self.ball(y);
        let mut gq = DVector::zeros(n);
        for c in 0..j2 {
            gq[c] = 2.0 * (y[c] - self.p.b[c]);
        }
        grad.axpy(-1.0 / q, &gq, 1.0);
        hess.ger(1.0 / (q * q), &gq, &gq, 1.0);
        for c in 0..j2 {
            hess[(c, c)] -= 2.0 / q;
        }
        (grad, hess)
    }
}

/// Solves the modulus form and maps the result back to the subproblem layout
/// with both slacks equal to `t / sqrt(2)`, so `x' Phi x = t^2`.
pub(super) fn modulus_solve(p: &QcqpSubproblem, tol: f64, max_steps: usize) -> Result<DVector<f64>> {
    let j2 = 2 * p.pilot_len();
    let others = p.a_r1.nrows();
    let mut corr = RMatrix::zeros(2 * others, j2);
    for j in 0..others {
        corr.row_mut(2 * j).copy_from(&p.a_r1.view((j, 0), (1, j2)));
        corr.row_mut(2 * j + 1).copy_from(&p.a_i1.view((j, 0), (1, j2)));
    }
    let b = Modulus { p, corr };

    let mut y = DVector::zeros(j2 + 1);
    y.rows_mut(0, j2).copy_from(&p.b.rows(0, j2));
    let (u, _) = b.cone_slacks(&y);
    let worst = (0..others)
        .map(|j| (u[2 * j] * u[2 * j] + u[2 * j + 1] * u[2 * j + 1]).sqrt())
        .fold(0.0, f64::max);
    y[j2] = worst + 1e-3 + 0.1 * p.radius;

    let y = newton_barrier(&b, y, tol, max_steps, p.column)?;
    let mut x = DVector::zeros(j2 + 2);
    x.rows_mut(0, j2).copy_from(&y.rows(0, j2));
    let t = y[j2] * core::f64::consts::FRAC_1_SQRT_2;
    x[j2] = t;
    x[j2 + 1] = t;
    Ok(x)
}
