//! Scalar and vector denoisers: Bernoulli-Gaussian channel prior and QPSK.

use core::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Clip for the exponent inside the sparsity factor.
pub const EXP_CLIP: f64 = 700.0;

/// Posterior moments of a Bernoulli-Gaussian vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgStats {
    /// `mu^H (Sigma^-1 - (Sigma + Gamma)^-1) mu`.
    pub pi: f64,
    /// `log |Sigma^-1 Gamma + I|`.
    pub logdet: f64,
    /// Sparsity factor, `>= 1`.
    pub tau: f64,
    /// True when the exponent had to be clipped.
    pub saturated: bool,
}

/// Sparsity statistics of an observation `mu = h + e`, `e ~ CN(0, diag(sigma))`,
/// with `h = 0` w.p. `1 - lambda` and `h ~ CN(0, diag(gamma))` otherwise.
pub fn bg_stats<I>(terms: I, lambda: f64) -> BgStats
where
    I: IntoIterator<Item = (Complex64, f64, f64)>,
{
    let mut pi = 0.0;
    let mut logdet = 0.0;
    for (mu, sigma, gamma) in terms {
        pi += mu.norm_sqr() * gamma / (sigma * (sigma + gamma));
        logdet += (gamma / sigma).ln_1p();
    }
    let arg = logdet - pi;
    let saturated = arg.abs() > EXP_CLIP;
    let tau = 1.0 + (1.0 - lambda) / lambda * arg.clamp(-EXP_CLIP, EXP_CLIP).exp();
    BgStats {
        pi,
        logdet,
        tau,
        saturated,
    }
}

/// Posterior mean and variance of one entry given the shared sparsity factor.
#[inline]
pub fn bg_entry(mu: Complex64, sigma: f64, gamma: f64, tau: f64) -> (Complex64, f64) {
    let w = gamma / (sigma + gamma);
    let mean = mu * (w / tau);
    let var = (tau - 1.0) * mean.norm_sqr() + sigma * w / tau;
    (mean, var)
}

/// Bernoulli-Gaussian vector denoiser, writing means and variances in place.
/// Returns the sparsity statistics.
pub fn denoise_h(
    mu: &[Complex64],
    sigma: &[f64],
    gamma: &[f64],
    lambda: f64,
    mean: &mut [Complex64],
    var: &mut [f64],
) -> BgStats {
    let st = bg_stats(
        mu.iter().zip(sigma).zip(gamma).map(|((&m, &s), &g)| (m, s, g)),
        lambda,
    );
    for i in 0..mu.len() {
        let (m, v) = bg_entry(mu[i], sigma[i], gamma[i], st.tau);
        mean[i] = m;
        var[i] = v;
    }
    st
}

/// Normalizing constant of `p(mu | h) p(h)` integrated over `h`:
/// `lambda exp(-mu^H (Sigma + Gamma)^-1 mu) tau / (pi^N |Gamma + Sigma|)`.
pub fn normalization_constant(mu: &[Complex64], sigma: &[f64], gamma: &[f64], lambda: f64) -> f64 {
    let st = bg_stats(
        mu.iter().zip(sigma).zip(gamma).map(|((&m, &s), &g)| (m, s, g)),
        lambda,
    );
    let mut quad = 0.0;
    let mut log_det = 0.0;
    for i in 0..mu.len() {
        quad += mu[i].norm_sqr() / (sigma[i] + gamma[i]);
        log_det += (PI * (sigma[i] + gamma[i])).ln();
    }
    lambda * st.tau * (-quad - log_det).exp()
}

/// QPSK soft symbol: `tau^-1 (tanh(sqrt2 g Re r / psi) + j tanh(sqrt2 g Im r / psi)) / sqrt2`
/// and variance `tau^-1 (1 - |x|^2)`.
#[inline]
pub fn denoise_x(r: Complex64, psi_r: f64, tau: f64, gamma_t: f64) -> (Complex64, f64) {
    let g = SQRT_2 * gamma_t / psi_r;
    let x = Complex64::new((g * r.re).tanh(), (g * r.im).tanh()) * (FRAC_1_SQRT_2 / tau);
    let v = (1.0 - x.norm_sqr()) / tau;
    (x, v.max(0.0))
}
