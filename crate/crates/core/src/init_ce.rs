//! Pilot-only channel estimators.
//!
//! All estimators take the pilot block `X_p` as an `M x K_p` matrix (row `m`
//! is user `m`'s pilot) and the received pilot part `Y_p` as `N x K_p`, so
//! `Y_p = H X_p + W_p`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::bigabp::denoise;
use crate::linalg::{pseudo_inverse, solve};
use crate::{CMatrix, Error, RMatrix, Result};

/// Channel estimate with per-entry error variances.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialEstimate {
    /// `N x M`.
    pub h_hat: CMatrix,
    /// `N x M`, non-negative.
    pub psi_h: RMatrix,
    pub lambda_hat: f64,
    /// Per-user sparsity factors of the last iteration.
    pub tau: Vec<f64>,
    /// Per-user activity log-likelihood ratio of the last denoiser input.
    pub llr: Vec<f64>,
    pub iterations: usize,
}

impl InitialEstimate {
    /// Users whose activity log-likelihood ratio is positive.
    pub fn active_hat(&self) -> Vec<bool> {
        self.llr.iter().map(|&l| l > 0.0).collect()
    }
}

/// Knobs of [`mmv_amp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpConfig {
    pub max_iterations: usize,
    /// Weight of the fresh estimate in the damped update.
    pub damping: f64,
    /// Stop once the relative change of the estimate drops below this.
    pub tolerance: f64,
    /// Divergence guard: residual energy above `blowup` times the initial one.
    pub blowup: f64,
    /// Include the Onsager correction in the residual.
    pub onsager: bool,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            damping: 0.8,
            tolerance: 1e-6,
            blowup: 1e6,
            onsager: true,
        }
    }
}

const VAR_FLOOR: f64 = 1e-12;

fn check_pilot_dims(y_pilot: &CMatrix, pilots: &CMatrix) -> Result<()> {
    if y_pilot.ncols() != pilots.ncols() {
        return Err(Error::Dimension {
            what: "pilot length",
            expected: pilots.ncols(),
            got: y_pilot.ncols(),
        });
    }
    if pilots.ncols() == 0 {
        return Err(Error::domain("pilot block is empty"));
    }
    Ok(())
}

/// Approximate message passing on the multiple-measurement-vector model
/// `Y_p^T = X_p^T H^T + W_p^T`, where row `m` of `H^T` (user `m`'s channel to
/// all APs) is either zero or `CN(0, diag(gamma_m))`.
///
/// Per iteration:
///
/// ```text
/// R     = H^ + D^-1 X_p^* Z          (matched filter, D = diag |x_m|^2)
/// s2_mn = N0 / d_m + sum_{j != m} |G_mj|^2 V_jn / d_m^2
/// H^, V = Bernoulli-Gaussian posterior of R given s2, gamma, lambda
/// Z     = Y_p^T - X_p^T H^ + Z c,   c_n = (1/K_p) sum_m V_mn / s2_mn
/// ```
///
/// with `G = X_p^* X_p^T` the pilot Gram matrix and damping on `H^`, `V` and `Z`.
pub fn mmv_amp(
    y_pilot: &CMatrix,
    pilots: &CMatrix,
    gamma: &RMatrix,
    lambda: f64,
    n0: f64,
    cfg: &AmpConfig,
) -> Result<InitialEstimate> {
    check_pilot_dims(y_pilot, pilots)?;
    let (n, kp) = y_pilot.shape();
    let m = pilots.nrows();
    if gamma.shape() != (n, m) {
        return Err(Error::Dimension {
            what: "gamma shape",
            expected: n * m,
            got: gamma.len(),
        });
    }
    if !(lambda > 0.0 && lambda <= 1.0) || !(n0 > 0.0) {
        return Err(Error::domain("need 0 < lambda <= 1 and N0 > 0"));
    }

    // Work in the transposed layout: estimates are M x N, residual K_p x N.
    let a = pilots.transpose(); // K_p x M
    let a_h = a.adjoint(); // M x K_p
    let d: Vec<f64> = (0..m).map(|u| a.column(u).norm_squared()).collect();
    if let Some(u) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::domain(alloc::format!("pilot of user {u} is zero")));
    }
    let g2 = (&a_h * &a).map(|v| v.norm_sqr());
    let y_t = y_pilot.transpose();

    let mut est = CMatrix::zeros(m, n);
    let mut var = RMatrix::from_fn(m, n, |u, ap| lambda * gamma[(ap, u)]);
    let mut z = y_t.clone();
    let z0 = z.norm_squared().max(f64::MIN_POSITIVE);
    let mut tau = vec![1.0; m];
    let mut llr = vec![0.0; m];
    let mut s2 = RMatrix::zeros(m, n);
    let mut mean = vec![Complex64::new(0.0, 0.0); n];
    let mut post = vec![0.0; n];
    let mut iterations = 0;

    for it in 0..cfg.max_iterations {
        iterations = it + 1;
        let mut r = &a_h * &z;
        for (u, du) in d.iter().enumerate() {
            r.row_mut(u).scale_mut(1.0 / du);
        }
        r += &est;
        let interf = &g2 * &var;
        for u in 0..m {
            for ap in 0..n {
                let own = g2[(u, u)] * var[(u, ap)];
                s2[(u, ap)] = ((n0 * d[u] + interf[(u, ap)] - own) / (d[u] * d[u])).max(VAR_FLOOR);
            }
        }

        let mut new_est = CMatrix::zeros(m, n);
        let mut new_var = RMatrix::zeros(m, n);
        for u in 0..m {
            let mu: Vec<Complex64> = r.row(u).iter().copied().collect();
            let sig: Vec<f64> = s2.row(u).iter().copied().collect();
            let gam: Vec<f64> = gamma.column(u).iter().copied().collect();
            let st = denoise::denoise_h(&mu, &sig, &gam, lambda, &mut mean, &mut post);
            tau[u] = st.tau;
            llr[u] = st.pi - st.logdet;
            for ap in 0..n {
                new_est[(u, ap)] = mean[ap];
                new_var[(u, ap)] = post[ap];
            }
        }

        let mut new_z = &y_t - &a * &new_est;
        if cfg.onsager {
            for ap in 0..n {
                let c: f64 = (0..m).map(|u| new_var[(u, ap)] / s2[(u, ap)]).sum::<f64>() / kp as f64;
                new_z.column_mut(ap).axpy(Complex64::new(c, 0.0), &z.column(ap), Complex64::new(1.0, 0.0));
            }
        }

        let eta = cfg.damping;
        let blend = |fresh: &CMatrix, old: &CMatrix| fresh * Complex64::new(eta, 0.0) + old * Complex64::new(1.0 - eta, 0.0);
        let next_est = blend(&new_est, &est);
        let change = (&next_est - &est).norm_squared() / next_est.norm_squared().max(f64::MIN_POSITIVE);
        est = next_est;
        var = &new_var * eta + &var * (1.0 - eta);
        z = blend(&new_z, &z);

        if !z.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite {
                iteration: iterations,
                edge: 0,
            });
        }
        if z.norm_squared() > cfg.blowup * z0 {
            return Err(Error::Divergence {
                iteration: iterations,
                what: "AMP residual energy",
            });
        }
        if change < cfg.tolerance {
            break;
        }
    }

    Ok(InitialEstimate {
        h_hat: est.transpose(),
        psi_h: var.transpose(),
        lambda_hat: lambda,
        tau,
        llr,
        iterations,
    })
}

/// Minimum-norm least squares `H^ = Y_p (X_p^H X_p)^-1 X_p^H`, i.e. `Y_p` times
/// the left pseudo-inverse of the tall `M x K_p` pilot block.
pub fn mns_estimate(y_pilot: &CMatrix, pilots: &CMatrix) -> Result<CMatrix> {
    check_pilot_dims(y_pilot, pilots)?;
    let (pinv, rank) = pseudo_inverse(pilots, 1e-10)?;
    if rank < pilots.ncols() {
        return Err(Error::Singular("pilot Gram matrix"));
    }
    Ok(y_pilot * pinv)
}

/// Per-AP linear MMSE with the true activity and transmitted symbols:
/// `h^_n,A = y_n X_A^H (D_n X_A X_A^H + N0 I)^-1 D_n`, `D_n = diag(gamma_n,A)`.
///
/// `x` is the full `M x K` transmit matrix; inactive columns of the result are zero.
pub fn mmse_genie(y: &CMatrix, x: &CMatrix, active: &[bool], gamma: &RMatrix, n0: f64) -> Result<CMatrix> {
    let (n, k) = y.shape();
    let m = x.nrows();
    if x.ncols() != k || active.len() != m || gamma.shape() != (n, m) {
        return Err(Error::domain("mmse_genie inputs have inconsistent shapes"));
    }
    let act: Vec<usize> = (0..m).filter(|&u| active[u]).collect();
    let mut h = CMatrix::zeros(n, m);
    if act.is_empty() {
        return Ok(h);
    }
    let xa = x.select_rows(act.iter());
    let gram = &xa * xa.adjoint();
    let proj = y * xa.adjoint(); // N x |A|
    for ap in 0..n {
        let dvec: Vec<f64> = act.iter().map(|&u| gamma[(ap, u)]).collect();
        let mut lhs = gram.clone();
        for (i, &dv) in dvec.iter().enumerate() {
            lhs.row_mut(i).scale_mut(dv);
            lhs[(i, i)] += n0;
        }
        // Row vector equation h = p * lhs^-1 * D  <=>  lhs^T h^T = ... ; solve on the transpose.
        let rhs = proj.row(ap).transpose();
        let sol = solve(lhs.transpose(), &CMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
        for (i, &u) in act.iter().enumerate() {
            h[(ap, u)] = sol[(i, 0)] * dvec[i];
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::complex_normal_matrix;
    use crate::seed;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Scaled unitary `M x M` pilot block (unit power per symbol).
    fn orthogonal_pilots(m: usize, s: u64) -> CMatrix {
        let g = complex_normal_matrix(m, m, 1.0, &mut seed::rng(s));
        let q = g.qr().q();
        q * c((m as f64).sqrt(), 0.0)
    }

    #[test]
    fn amp_orthogonal_noiseless_is_exact() {
        let (n, m) = (3, 4);
        let xp = orthogonal_pilots(m, 1);
        let h = complex_normal_matrix(n, m, 1.0, &mut seed::rng(2));
        let gamma = RMatrix::from_element(n, m, 1.0);
        let y = &h * &xp;
        let cfg = AmpConfig {
            max_iterations: 1,
            damping: 1.0,
            ..Default::default()
        };
        let est = mmv_amp(&y, &xp, &gamma, 1.0, 1e-12, &cfg).unwrap();
        assert!((&est.h_hat - &h).norm() / h.norm() < 1e-6);
        assert!(est.psi_h.max() < 1e-6);
    }

    #[test]
    fn amp_orthogonal_gaussian_variance() {
        let (n, m) = (2, 5);
        let xp = orthogonal_pilots(m, 3);
        let gamma = RMatrix::from_fn(n, m, |a, u| 0.5 + (a + 2 * u) as f64 * 0.3);
        let n0 = 0.7;
        let y = complex_normal_matrix(n, m, 1.0, &mut seed::rng(4));
        let cfg = AmpConfig {
            max_iterations: 1,
            damping: 1.0,
            ..Default::default()
        };
        let est = mmv_amp(&y, &xp, &gamma, 1.0, n0, &cfg).unwrap();
        for a in 0..n {
            for u in 0..m {
                // Pilot energy K_p = M scales the effective noise to N0 / M.
                let s = n0 / m as f64;
                let g = gamma[(a, u)];
                assert_relative_eq!(est.psi_h[(a, u)], g * s / (g + s), max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn amp_zero_input() {
        let xp = orthogonal_pilots(4, 5).columns(0, 3).into_owned();
        let gamma = RMatrix::from_element(2, 4, 1.0);
        let est = mmv_amp(&CMatrix::zeros(2, 3), &xp, &gamma, 0.5, 1.0, &AmpConfig::default()).unwrap();
        assert_eq!(est.h_hat, CMatrix::zeros(2, 4));
        assert!(est.psi_h.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn amp_rejects_bad_shapes() {
        let xp = orthogonal_pilots(3, 6);
        assert!(mmv_amp(&CMatrix::zeros(2, 2), &xp, &RMatrix::zeros(2, 3), 0.5, 1.0, &AmpConfig::default()).is_err());
        assert!(mmv_amp(&CMatrix::zeros(2, 3), &xp, &RMatrix::zeros(3, 3), 0.5, 1.0, &AmpConfig::default()).is_err());
    }

    #[test]
    fn mns_exact_on_square_pilots() {
        let xp = orthogonal_pilots(4, 7);
        let h = complex_normal_matrix(3, 4, 1.0, &mut seed::rng(8));
        let est = mns_estimate(&(&h * &xp), &xp).unwrap();
        assert!((est - h).norm() < 1e-10);
    }

    #[test]
    fn mns_matches_pseudo_inverse_oracle() {
        // M = 3 users, K_p = 2 pilots. Oracle: (X^H X)^-1 X^H via explicit 2x2 inverse.
        let xp = CMatrix::from_row_slice(3, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.5, -0.5), c(1.0, 0.0), c(0.0, 0.0), c(-1.0, 2.0)]);
        let y = CMatrix::from_row_slice(1, 2, &[c(0.3, 0.1), c(-0.2, 0.4)]);
        let g = xp.adjoint() * &xp;
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
        let inv = CMatrix::from_row_slice(2, 2, &[g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]]) / det;
        let oracle = &y * inv * xp.adjoint();
        let est = mns_estimate(&y, &xp).unwrap();
        assert!((est - oracle).norm() < 1e-12);
        // Min-norm: reproduces the observation.
        assert!((mns_estimate(&y, &xp).unwrap() * &xp - &y).norm() < 1e-12);
    }

    #[test]
    fn mns_singular() {
        let xp = CMatrix::from_element(3, 2, c(1.0, 0.0));
        assert!(matches!(mns_estimate(&CMatrix::zeros(1, 2), &xp), Err(Error::Singular(_))));
    }

    #[test]
    fn genie_scalar_formula() {
        let x = CMatrix::from_element(1, 1, c(0.6, -0.8));
        let y = CMatrix::from_element(1, 1, c(0.2, 0.9));
        let (g, n0) = (1.7, 0.3);
        let h = mmse_genie(&y, &x, &[true], &RMatrix::from_element(1, 1, g), n0).unwrap();
        let want = x[(0, 0)].conj() * y[(0, 0)] * g / (g * x[(0, 0)].norm_sqr() + n0);
        assert!((h[(0, 0)] - want).norm() < 1e-14);
    }

    #[test]
    fn genie_noiseless_and_zero_prior() {
        let (n, m, k) = (4, 3, 10);
        let x = complex_normal_matrix(m, k, 1.0, &mut seed::rng(9));
        let mut h = complex_normal_matrix(n, m, 1.0, &mut seed::rng(10));
        h.column_mut(1).fill(c(0.0, 0.0));
        let active = [true, false, true];
        let y = &h * &x;
        let mut gamma = RMatrix::from_element(n, m, 1.0);
        let est = mmse_genie(&y, &x, &active, &gamma, 1e-12).unwrap();
        assert!((&est - &h).norm() / h.norm() < 1e-6);
        gamma.column_mut(2).fill(0.0);
        let est = mmse_genie(&y, &x, &active, &gamma, 1e-3).unwrap();
        assert!(est.column(2).iter().all(|v| v.norm() == 0.0));
    }
}
