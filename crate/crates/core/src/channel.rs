//! Cell-free geometry, large-scale fading and Bernoulli-Gaussian channels.

use alloc::vec::Vec;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::linalg::complex_normal;
use crate::{seed, CMatrix, Error, RMatrix, Result};

/// Boltzmann constant in J/K.
pub const BOLTZMANN: f64 = 1.380649e-23;
pub const AP_HEIGHT_M: f64 = 10.0;
pub const USER_HEIGHT_M: f64 = 1.65;
/// Standard deviation of the log-normal shadowing term in dB.
pub const SHADOWING_STD_DB: f64 = 4.0;

/// AP and user positions on a square area.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub ap_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    pub ap_height_m: f64,
    pub user_height_m: f64,
    pub area_side_m: f64,
}

impl Topology {
    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn m_users(&self) -> usize {
        self.user_positions.len()
    }

    /// 3-D distance between AP `n` and user `m`.
    pub fn distance(&self, n: usize, m: usize) -> f64 {
        let a = self.ap_positions[n];
        let u = self.user_positions[m];
        let dz = self.ap_height_m - self.user_height_m;
        ((a[0] - u[0]).powi(2) + (a[1] - u[1]).powi(2) + dz * dz).sqrt()
    }
}

/// Places `n_aps` APs on a cell-centred square mesh and drops `m_users`
/// users uniformly at random.
///
/// When `n_aps` is not a perfect square the mesh has `ceil(sqrt(N))` points
/// per side and the surplus points are dropped in row-major order.
pub fn build_topology(n_aps: usize, m_users: usize, area_side_m: f64, seed: u64) -> Result<Topology> {
    if n_aps == 0 || m_users == 0 {
        return Err(Error::domain("need at least one AP and one user"));
    }
    if !(area_side_m > 0.0) || !area_side_m.is_finite() {
        return Err(Error::domain("area side must be positive"));
    }
    let side = (n_aps as f64).sqrt().ceil() as usize;
    let side = if side * side < n_aps { side + 1 } else { side };
    let spacing = area_side_m / side as f64;
    let ap_positions = (0..n_aps)
        .map(|i| {
            let (row, col) = (i / side, i % side);
            [spacing * (col as f64 + 0.5), spacing * (row as f64 + 0.5)]
        })
        .collect();

    let mut rng = seed::rng(seed);
    let user_positions = (0..m_users)
        .map(|_| [rng.random::<f64>() * area_side_m, rng.random::<f64>() * area_side_m])
        .collect();

    Ok(Topology {
        ap_positions,
        user_positions,
        ap_height_m: AP_HEIGHT_M,
        user_height_m: USER_HEIGHT_M,
        area_side_m,
    })
}

/// Pathloss in dB at 3-D distance `d_m` with shadowing `shadow_db`.
pub fn pathloss_db(d_m: f64, shadow_db: f64) -> f64 {
    30.5 + 36.7 * d_m.log10() + shadow_db
}

/// Large-scale fading between every AP and user.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    /// Linear channel variances `gamma_nm = 10^(-beta_nm / 10)`, `N x M`.
    pub gamma: RMatrix,
    /// Pathloss in dB, `N x M`.
    pub beta_db: RMatrix,
}

impl LargeScale {
    pub fn from_beta_db(beta_db: RMatrix) -> Self {
        let gamma = beta_db.map(|b| 10f64.powf(-b / 10.0));
        Self { gamma, beta_db }
    }

    /// Variances seen after a transmit amplitude of `sqrt(power_w)` and
    /// normalization by the noise power.
    pub fn scaled_gamma(&self, power_w: f64, n0: f64) -> RMatrix {
        &self.gamma * (power_w / n0)
    }
}

/// Urban-microcell pathloss with i.i.d. `N(0, 4^2)` dB shadowing per link.
pub fn pathloss(t: &Topology, shadowing_seed: u64) -> LargeScale {
    pathloss_with_shadowing(t, SHADOWING_STD_DB, shadowing_seed)
}

/// [`pathloss`] with an explicit shadowing standard deviation (0 disables it).
pub fn pathloss_with_shadowing(t: &Topology, shadow_std_db: f64, shadowing_seed: u64) -> LargeScale {
    let (n, m) = (t.n_aps(), t.m_users());
    let mut rng = seed::rng(shadowing_seed);
    let normal = Normal::new(0.0, shadow_std_db.max(0.0)).expect("finite std");
    // Column-major draw order: user by user.
    let mut beta = RMatrix::zeros(n, m);
    for mm in 0..m {
        for nn in 0..n {
            let shadow = if shadow_std_db > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            beta[(nn, mm)] = pathloss_db(t.distance(nn, mm), shadow);
        }
    }
    LargeScale::from_beta_db(beta)
}

/// One frame's channel and activity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `N x M`; column `m` is zero iff user `m` is inactive.
    pub h: CMatrix,
    pub active: Vec<bool>,
    pub lambda: f64,
    pub noise_power_n0: f64,
}

impl ChannelRealization {
    pub fn active_indices(&self) -> Vec<usize> {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i).collect()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Draws activity (each user independently with probability `lambda`) and
/// `CN(0, gamma_nm)` channels for the active users.
///
/// Every user's channel is drawn whether active or not, so a user's
/// coefficients do not depend on the activity of the others.
pub fn sample_channel(ls: &LargeScale, lambda: f64, n0: f64, seed: u64) -> Result<ChannelRealization> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::domain("activity factor must lie in (0, 1]"));
    }
    if !(n0 > 0.0) || !n0.is_finite() {
        return Err(Error::domain("noise power must be positive"));
    }
    let (n, m) = ls.gamma.shape();
    let mut rng = seed::rng(seed);
    let active: Vec<bool> = (0..m).map(|_| rng.random::<f64>() < lambda).collect();
    let mut h = CMatrix::zeros(n, m);
    for mm in 0..m {
        for nn in 0..n {
            let v = complex_normal(&mut rng, ls.gamma[(nn, mm)]);
            h[(nn, mm)] = if active[mm] { v } else { Complex64::new(0.0, 0.0) };
        }
    }
    Ok(ChannelRealization {
        h,
        active,
        lambda,
        noise_power_n0: n0,
    })
}

/// Thermal noise floor `10 log10(1000 k T) + NF + 10 log10(W)` in dBm.
pub fn noise_floor_dbm(bandwidth_hz: f64, nf_db: f64, temperature_k: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::domain("bandwidth must be positive"));
    }
    if !(temperature_k > 0.0) {
        return Err(Error::domain("temperature must be positive"));
    }
    Ok(10.0 * (1000.0 * BOLTZMANN * temperature_k).log10() + nf_db + 10.0 * bandwidth_hz.log10())
}

/// `10^((dbm - 30) / 10)` watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}
