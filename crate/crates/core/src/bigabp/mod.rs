//! Activity-aware bilinear Gaussian belief propagation.
//!
//! [`run_belief_consensus`] iterates soft interference cancellation, leave-one-out
//! extrinsic beliefs over antennas (for symbols) and over time (for channels),
//! the Bernoulli-Gaussian channel denoiser and the scaled QPSK denoiser, with
//! damping on the soft replicas. [`hard_decision`] combines all beliefs without
//! leave-one-out and decides symbols, channels and activity.
//!
//! Tensor layouts (row-major flat vectors):
//!
//! * symbol replicas `x_hat`, `psi_x`: `[n][m][k]`
//! * channel replicas `h_hat`, `psi_h`, residuals: `[k][n][m]`
//! * sparsity factors `tau`: `[k][m]`
//! * symbol extrinsics: `[n][m][k - K_p]`
//! * channel extrinsics: `[k][m][n]` (one contiguous length-`N` vector per `(k, m)`)

pub mod denoise;

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::signal::qpsk_gray;
use crate::{CMatrix, Error, RMatrix, Result};

pub use denoise::{bg_stats, denoise_h, denoise_x, normalization_constant, BgStats};

/// Floor on message variances and on extrinsic precisions.
pub const VAR_FLOOR: f64 = 1e-12;
/// Floor on the variance used in the activity log-likelihood ratio.
pub const LLR_FLOOR: f64 = 1e-15;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Iteration knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knobs {
    pub t_max: usize,
    /// Weight of the fresh message in the damped update.
    pub eta: f64,
}

impl Default for Knobs {
    fn default() -> Self {
        Self { t_max: 32, eta: 0.5 }
    }
}

impl Knobs {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::domain("t_max must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::domain("eta must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Per-edge beliefs of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub k_pilot: usize,
    pub x_hat: Vec<Complex64>,
    pub psi_x: Vec<f64>,
    pub h_hat: Vec<Complex64>,
    pub psi_h: Vec<f64>,
    pub tau: Vec<f64>,
    pub iteration: usize,
    /// Mean of `psi_x` over data edges after each iteration.
    pub mse_trace_x: Vec<f64>,
    /// Mean of `psi_h` over all edges after each iteration.
    pub mse_trace_h: Vec<f64>,
    /// Number of sparsity factors whose exponent was clipped.
    pub saturations: usize,
    /// Number of extrinsic precisions that hit the floor.
    pub clamps: usize,
}

impl BeliefState {
    /// Algorithm initialization: pilots pinned with zero variance, data symbols
    /// zero-mean with unit variance, every time slot starts from the same channel guess.
    pub fn new(pilots: &CMatrix, k_total: usize, h0: &CMatrix, psi0: &RMatrix) -> Result<Self> {
        let (n, m) = h0.shape();
        let kp = pilots.ncols();
        if pilots.nrows() != m {
            return Err(Error::Dimension {
                what: "pilot rows vs users",
                expected: m,
                got: pilots.nrows(),
            });
        }
        if psi0.shape() != (n, m) {
            return Err(Error::Dimension {
                what: "initial channel variance shape",
                expected: n * m,
                got: psi0.len(),
            });
        }
        if kp > k_total {
            return Err(Error::domain("more pilot columns than frame columns"));
        }
        let mut x_hat = vec![ZERO; n * m * k_total];
        let mut psi_x = vec![1.0; n * m * k_total];
        for a in 0..n {
            for u in 0..m {
                for k in 0..kp {
                    let e = (a * m + u) * k_total + k;
                    x_hat[e] = pilots[(u, k)];
                    psi_x[e] = 0.0;
                }
            }
        }
        let mut h_hat = Vec::with_capacity(n * m * k_total);
        let mut psi_h = Vec::with_capacity(n * m * k_total);
        for _ in 0..k_total {
            for a in 0..n {
                for u in 0..m {
                    h_hat.push(h0[(a, u)]);
                    psi_h.push(psi0[(a, u)].max(0.0));
                }
            }
        }
        Ok(Self {
            n,
            m,
            k: k_total,
            k_pilot: kp,
            x_hat,
            psi_x,
            h_hat,
            psi_h,
            tau: vec![1.0; k_total * m],
            iteration: 0,
            mse_trace_x: Vec::new(),
            mse_trace_h: Vec::new(),
            saturations: 0,
            clamps: 0,
        })
    }

    pub fn k_data(&self) -> usize {
        self.k - self.k_pilot
    }

    #[inline]
    pub fn xi(&self, n: usize, m: usize, k: usize) -> usize {
        (n * self.m + m) * self.k + k
    }

    #[inline]
    pub fn hi(&self, k: usize, n: usize, m: usize) -> usize {
        (k * self.n + n) * self.m + m
    }

    fn check_y(&self, y: &CMatrix) -> Result<()> {
        if y.shape() != (self.n, self.k) {
            return Err(Error::Dimension {
                what: "received block shape",
                expected: self.n * self.k,
                got: y.len(),
            });
        }
        Ok(())
    }

    fn record_traces(&mut self) {
        let kd = self.k_data();
        let mut sx = 0.0;
        for a in 0..self.n {
            for u in 0..self.m {
                let base = self.xi(a, u, self.k_pilot);
                sx += self.psi_x[base..base + kd].iter().sum::<f64>();
            }
        }
        let cnt = (self.n * self.m * kd).max(1) as f64;
        self.mse_trace_x.push(sx / cnt);
        let sh: f64 = self.psi_h.iter().sum();
        self.mse_trace_h.push(sh / self.psi_h.len().max(1) as f64);
    }
}

/// Outcome of soft interference cancellation, laid out `[k][n][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub y_tilde: Vec<Complex64>,
    pub v_y: Vec<f64>,
    pub v_x: Vec<f64>,
    pub v_h: Vec<f64>,
}

impl Residuals {
    #[inline]
    pub fn idx(&self, m: usize, n: usize, k: usize) -> usize {
        (k * self.n + n) * self.m + m
    }
}

/// Cancels every other user's soft replica from `y`. `v_x` adds the target's
/// channel uncertainty, `v_h` its symbol uncertainty scaled by `gamma`.
pub fn soft_ic(y: &CMatrix, state: &BeliefState, gamma: &RMatrix, n0: f64) -> Result<Residuals> {
    state.check_y(y)?;
    let (n, m, k) = (state.n, state.m, state.k);
    if gamma.shape() != (n, m) {
        return Err(Error::Dimension {
            what: "gamma shape",
            expected: n * m,
            got: gamma.len(),
        });
    }
    let len = n * m * k;
    let mut y_tilde = vec![ZERO; len];
    let mut v_y = vec![0.0; len];
    let mut v_x = vec![0.0; len];
    let mut v_h = vec![0.0; len];
    let mut own = vec![ZERO; m];
    let mut own_var = vec![0.0; m];
    for kk in 0..k {
        for a in 0..n {
            let mut total = ZERO;
            let mut total_var = 0.0;
            for u in 0..m {
                let h = state.h_hat[state.hi(kk, a, u)];
                let ph = state.psi_h[state.hi(kk, a, u)];
                let x = state.x_hat[state.xi(a, u, kk)];
                let px = state.psi_x[state.xi(a, u, kk)];
                own[u] = h * x;
                own_var[u] = h.norm_sqr() * px + (x.norm_sqr() + px) * ph;
                total += own[u];
                total_var += own_var[u];
            }
            let yv = y[(a, kk)];
            for u in 0..m {
                let e = (kk * n + a) * m + u;
                y_tilde[e] = yv - (total - own[u]);
                let vy = (total_var - own_var[u]).max(0.0) + n0;
                v_y[e] = vy;
                v_x[e] = vy + state.psi_h[e];
                v_h[e] = vy + gamma[(a, u)] * state.psi_x[state.xi(a, u, kk)];
            }
        }
    }
    Ok(Residuals {
        n,
        m,
        k,
        y_tilde,
        v_y,
        v_x,
        v_h,
    })
}

/// Symbol extrinsics, `[n][m][k - K_p]`, data columns only.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrinsicX {
    pub r_hat: Vec<Complex64>,
    pub psi_r: Vec<f64>,
    pub clamps: usize,
}

/// Channel extrinsics, `[k][m][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrinsicH {
    pub mu_h: Vec<Complex64>,
    pub sigma_h: Vec<f64>,
    pub clamps: usize,
}

/// Turns a precision and a weighted sum into (mean, variance), flooring the precision.
#[inline]
fn moment(prec: f64, weighted: Complex64, clamps: &mut usize) -> (Complex64, f64) {
    let p = if prec > VAR_FLOOR {
        prec
    } else {
        *clamps += 1;
        VAR_FLOOR
    };
    let v = 1.0 / p;
    (weighted * v, v)
}

/// Leave-one-out combination over receive antennas.
pub fn extrinsic_x(res: &Residuals, state: &BeliefState) -> ExtrinsicX {
    let (n, m, k, kp) = (state.n, state.m, state.k, state.k_pilot);
    let kd = k - kp;
    let mut r_hat = vec![ZERO; n * m * kd];
    let mut psi_r = vec![0.0; n * m * kd];
    let mut clamps = 0;
    let mut pa = vec![0.0; n];
    let mut wa = vec![ZERO; n];
    for u in 0..m {
        for kk in kp..k {
            let mut prec = 0.0;
            let mut w = ZERO;
            for a in 0..n {
                let e = res.idx(u, a, kk);
                let h = state.h_hat[e];
                pa[a] = h.norm_sqr() / res.v_x[e];
                wa[a] = h.conj() * res.y_tilde[e] / res.v_x[e];
                prec += pa[a];
                w += wa[a];
            }
            for a in 0..n {
                let (mean, var) = moment(prec - pa[a], w - wa[a], &mut clamps);
                let o = (a * m + u) * kd + (kk - kp);
                r_hat[o] = mean;
                psi_r[o] = var;
            }
        }
    }
    ExtrinsicX { r_hat, psi_r, clamps }
}

/// Leave-one-out combination over time slots.
pub fn extrinsic_h(res: &Residuals, state: &BeliefState) -> ExtrinsicH {
    let (n, m, k) = (state.n, state.m, state.k);
    let mut mu_h = vec![ZERO; n * m * k];
    let mut sigma_h = vec![0.0; n * m * k];
    let mut clamps = 0;
    let mut pk = vec![0.0; k];
    let mut wk = vec![ZERO; k];
    for a in 0..n {
        for u in 0..m {
            let mut prec = 0.0;
            let mut w = ZERO;
            let xb = state.xi(a, u, 0);
            for kk in 0..k {
                let e = res.idx(u, a, kk);
                let x = state.x_hat[xb + kk];
                pk[kk] = x.norm_sqr() / res.v_h[e];
                wk[kk] = x.conj() * res.y_tilde[e] / res.v_h[e];
                prec += pk[kk];
                w += wk[kk];
            }
            for kk in 0..k {
                let (mean, var) = moment(prec - pk[kk], w - wk[kk], &mut clamps);
                let o = (kk * m + u) * n + a;
                mu_h[o] = mean;
                sigma_h[o] = var;
            }
        }
    }
    ExtrinsicH { mu_h, sigma_h, clamps }
}

/// Full-consensus statistics: the same sums as the extrinsics without the
/// held-out term.
#[derive(Debug, Clone, PartialEq)]
pub struct Consensus {
    /// `M x K_d` symbol observation means.
    pub r_hat: CMatrix,
    pub psi_r: RMatrix,
    /// `N x M` channel observation means.
    pub mu_h: CMatrix,
    pub sigma_h: RMatrix,
}

pub fn consensus(res: &Residuals, state: &BeliefState) -> Consensus {
    let (n, m, k, kp) = (state.n, state.m, state.k, state.k_pilot);
    let mut clamps = 0;
    let mut r_hat = CMatrix::zeros(m, k - kp);
    let mut psi_r = RMatrix::zeros(m, k - kp);
    for u in 0..m {
        for kk in kp..k {
            let mut prec = 0.0;
            let mut w = ZERO;
            for a in 0..n {
                let e = res.idx(u, a, kk);
                let h = state.h_hat[e];
                prec += h.norm_sqr() / res.v_x[e];
                w += h.conj() * res.y_tilde[e] / res.v_x[e];
            }
            let (mean, var) = moment(prec, w, &mut clamps);
            r_hat[(u, kk - kp)] = mean;
            psi_r[(u, kk - kp)] = var;
        }
    }
    let mut mu_h = CMatrix::zeros(n, m);
    let mut sigma_h = RMatrix::zeros(n, m);
    for a in 0..n {
        for u in 0..m {
            let mut prec = 0.0;
            let mut w = ZERO;
            for kk in 0..k {
                let e = res.idx(u, a, kk);
                let x = state.x_hat[state.xi(a, u, kk)];
                prec += x.norm_sqr() / res.v_h[e];
                w += x.conj() * res.y_tilde[e] / res.v_h[e];
            }
            let (mean, var) = moment(prec, w, &mut clamps);
            mu_h[(a, u)] = mean;
            sigma_h[(a, u)] = var;
        }
    }
    Consensus {
        r_hat,
        psi_r,
        mu_h,
        sigma_h,
    }
}

/// Belief scaling schedule `t / t_max`, with `t` counted from 1.
#[inline]
pub fn scaling(t: usize, t_max: usize) -> f64 {
    t as f64 / t_max as f64
}

#[inline]
fn damp_c(fresh: Complex64, old: Complex64, eta: f64) -> Complex64 {
    old + (fresh - old) * eta
}

#[inline]
fn damp(fresh: f64, old: f64, eta: f64) -> f64 {
    old + eta * (fresh - old)
}

fn non_finite(iteration: usize, edge: usize) -> Error {
    Error::NonFinite { iteration, edge }
}

/// Channel half-sweep: Bernoulli-Gaussian denoising of every `(k, m)` vector
/// followed by damping of the channel replicas. Stores the fresh sparsity factors.
pub fn update_channels(ext: &ExtrinsicH, state: &mut BeliefState, gamma: &RMatrix, lambda: f64, eta: f64) -> Result<()> {
    let (n, m, k) = (state.n, state.m, state.k);
    let mut mean = vec![ZERO; n];
    let mut var = vec![0.0; n];
    let iteration = state.iteration;
    for kk in 0..k {
        for u in 0..m {
            let o = (kk * m + u) * n;
            let g = gamma.column(u);
            let st = denoise_h(
                &ext.mu_h[o..o + n],
                &ext.sigma_h[o..o + n],
                g.as_slice(),
                lambda,
                &mut mean,
                &mut var,
            );
            if st.saturated {
                state.saturations += 1;
            }
            state.tau[kk * m + u] = st.tau;
            for a in 0..n {
                let e = state.hi(kk, a, u);
                let h = damp_c(mean[a], state.h_hat[e], eta);
                let p = damp(var[a], state.psi_h[e], eta).max(VAR_FLOOR);
                if !(h.re.is_finite() && h.im.is_finite() && p.is_finite()) {
                    return Err(non_finite(iteration, e));
                }
                state.h_hat[e] = h;
                state.psi_h[e] = p;
            }
        }
    }
    Ok(())
}

/// Symbol half-sweep: scaled QPSK denoising with the current sparsity
/// factors, then damping. Pilot columns are left untouched.
pub fn update_symbols(ext: &ExtrinsicX, state: &mut BeliefState, gamma_t: f64, eta: f64) -> Result<()> {
    let (n, m, k, kp) = (state.n, state.m, state.k, state.k_pilot);
    let kd = k - kp;
    let iteration = state.iteration;
    for a in 0..n {
        for u in 0..m {
            for kk in kp..k {
                let o = (a * m + u) * kd + (kk - kp);
                let tau = state.tau[kk * m + u];
                let (xb, vb) = denoise_x(ext.r_hat[o], ext.psi_r[o], tau, gamma_t);
                let e = state.xi(a, u, kk);
                let x = damp_c(xb, state.x_hat[e], eta);
                let v = damp(vb, state.psi_x[e], eta);
                if !(x.re.is_finite() && x.im.is_finite() && v.is_finite()) {
                    return Err(non_finite(iteration, e));
                }
                state.x_hat[e] = x;
                state.psi_x[e] = v;
            }
        }
    }
    Ok(())
}

/// One full sweep at iteration `t` (1-based).
pub fn sweep(y: &CMatrix, state: &mut BeliefState, gamma: &RMatrix, lambda: f64, n0: f64, t: usize, knobs: &Knobs) -> Result<()> {
    let res = soft_ic(y, state, gamma, n0)?;
    let ex = extrinsic_x(&res, state);
    let eh = extrinsic_h(&res, state);
    state.clamps += ex.clamps + eh.clamps;
    state.iteration = t;
    update_channels(&eh, state, gamma, lambda, knobs.eta)?;
    update_symbols(&ex, state, scaling(t, knobs.t_max), knobs.eta)?;
    state.record_traces();
    Ok(())
}

/// Belief consensus with a per-iteration observer (called after each sweep).
#[allow(clippy::too_many_arguments)]
pub fn run_belief_consensus_observed(
    y: &CMatrix,
    pilots: &CMatrix,
    h0: &CMatrix,
    psi0: &RMatrix,
    gamma: &RMatrix,
    lambda: f64,
    n0: f64,
    knobs: &Knobs,
    observer: &mut dyn FnMut(&BeliefState),
) -> Result<BeliefState> {
    knobs.validate()?;
    if !(lambda > 0.0 && lambda <= 1.0) || !(n0 > 0.0) {
        return Err(Error::domain("need 0 < lambda <= 1 and N0 > 0"));
    }
    let mut state = BeliefState::new(pilots, y.ncols(), h0, psi0)?;
    for t in 1..=knobs.t_max {
        sweep(y, &mut state, gamma, lambda, n0, t, knobs)?;
        observer(&state);
    }
    Ok(state)
}

/// Belief consensus from a pilot-only initial estimate.
pub fn run_belief_consensus(
    y: &CMatrix,
    pilots: &CMatrix,
    init: &crate::init_ce::InitialEstimate,
    gamma: &RMatrix,
    lambda: f64,
    n0: f64,
    knobs: &Knobs,
) -> Result<BeliefState> {
    run_belief_consensus_observed(y, pilots, &init.h_hat, &init.psi_h, gamma, lambda, n0, knobs, &mut |_| {})
}

/// Final decisions of the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// `M x K_d`; rows of users declared inactive are zero.
    pub x_hard: CMatrix,
    /// `M x K_d` soft symbols before slicing.
    pub x_soft: CMatrix,
    pub h_final: CMatrix,
    pub active_hat: Vec<bool>,
    pub llr: Vec<f64>,
    pub tau: Vec<f64>,
    pub mse_trace_x: Vec<f64>,
    pub mse_trace_h: Vec<f64>,
}

/// Activity log-likelihood ratio of an observation `h` of a channel column:
/// `CN(0, gamma + psi)` against `CN(0, psi)`, summed over antennas.
pub fn llr(h: &[Complex64], psi: &[f64], gamma: &[f64]) -> f64 {
    let mut p_act = 0.0;
    let mut p_inact = 0.0;
    for i in 0..h.len() {
        let ps = psi[i].max(LLR_FLOOR);
        let s = gamma[i] + ps;
        let e = h[i].norm_sqr();
        p_act += -e / s - (core::f64::consts::PI * s).ln();
        p_inact += -e / ps - (core::f64::consts::PI * ps).ln();
    }
    p_act - p_inact
}

/// Hard decision from full-consensus beliefs. Activity is decided on the
/// combined channel observation and its variance.
pub fn hard_decision(y: &CMatrix, state: &BeliefState, gamma: &RMatrix, lambda: f64, n0: f64) -> Result<DetectionResult> {
    let res = soft_ic(y, state, gamma, n0)?;
    let c = consensus(&res, state);
    let (n, m) = (state.n, state.m);
    let kd = state.k_data();
    let qpsk = qpsk_gray();

    let mut h_final = CMatrix::zeros(n, m);
    let mut llrs = vec![0.0; m];
    let mut taus = vec![1.0; m];
    let mut active_hat = vec![false; m];
    let mut mean = vec![ZERO; n];
    let mut var = vec![0.0; n];
    for u in 0..m {
        let mu: Vec<Complex64> = c.mu_h.column(u).iter().copied().collect();
        let sig: Vec<f64> = c.sigma_h.column(u).iter().copied().collect();
        let g = gamma.column(u);
        let st = denoise_h(&mu, &sig, g.as_slice(), lambda, &mut mean, &mut var);
        taus[u] = st.tau;
        for a in 0..n {
            h_final[(a, u)] = mean[a];
        }
        llrs[u] = llr(&mu, &sig, g.as_slice());
        active_hat[u] = llrs[u] > 0.0;
    }

    let mut x_soft = CMatrix::zeros(m, kd);
    let mut x_hard = CMatrix::zeros(m, kd);
    for u in 0..m {
        for j in 0..kd {
            let (xb, _) = denoise_x(c.r_hat[(u, j)], c.psi_r[(u, j)], 1.0, 1.0);
            x_soft[(u, j)] = xb;
            if active_hat[u] {
                x_hard[(u, j)] = qpsk.slice(xb);
            }
        }
    }
    if llrs.iter().any(|v| !v.is_finite()) {
        return Err(non_finite(state.iteration, 0));
    }
    Ok(DetectionResult {
        x_hard,
        x_soft,
        h_final,
        active_hat,
        llr: llrs,
        tau: taus,
        mse_trace_x: state.mse_trace_x.clone(),
        mse_trace_h: state.mse_trace_h.clone(),
    })
}

/// Symbol-only message passing over a fixed channel estimate, restricted to
/// the users in `active`. `y_data` holds data columns only. Returns `M x K_d`
/// hard decisions with zero rows for users outside `active`.
pub fn gabp_detect(y_data: &CMatrix, h_hat: &CMatrix, psi_h: &RMatrix, active: &[bool], n0: f64, knobs: &Knobs) -> Result<CMatrix> {
    knobs.validate()?;
    let (n, kd) = y_data.shape();
    let m = h_hat.ncols();
    if h_hat.nrows() != n || psi_h.shape() != h_hat.shape() || active.len() != m {
        return Err(Error::domain("gabp_detect inputs have inconsistent shapes"));
    }
    if !(n0 > 0.0) {
        return Err(Error::domain("N0 must be positive"));
    }
    let act: Vec<usize> = (0..m).filter(|&u| active[u]).collect();
    let mut out = CMatrix::zeros(m, kd);
    if act.is_empty() || kd == 0 {
        return Ok(out);
    }
    let ha = h_hat.select_columns(act.iter());
    let pa = psi_h.select_columns(act.iter());
    let ma = act.len();
    let mut state = BeliefState::new(&CMatrix::zeros(ma, 0), kd, &ha, &pa)?;
    let gamma = RMatrix::zeros(n, ma);
    for t in 1..=knobs.t_max {
        let res = soft_ic(y_data, &state, &gamma, n0)?;
        let ex = extrinsic_x(&res, &state);
        state.iteration = t;
        update_symbols(&ex, &mut state, scaling(t, knobs.t_max), knobs.eta)?;
    }
    let res = soft_ic(y_data, &state, &gamma, n0)?;
    let c = consensus(&res, &state);
    let qpsk = qpsk_gray();
    for (i, &u) in act.iter().enumerate() {
        for j in 0..kd {
            out[(u, j)] = qpsk.slice(c.r_hat[(i, j)]);
        }
    }
    Ok(out)
}

/// [`gabp_detect`] with the true channel, zero channel uncertainty and the true active set.
pub fn genie_gabp_detect(y_data: &CMatrix, h_true: &CMatrix, active_true: &[bool], n0: f64, knobs: &Knobs) -> Result<CMatrix> {
    let zeros = RMatrix::zeros(h_true.nrows(), h_true.ncols());
    gabp_detect(y_data, h_true, &zeros, active_true, n0, knobs)
}
