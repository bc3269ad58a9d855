//! Linear zero-forcing data detection on a given channel estimate.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::linalg::{pseudo_inverse, solve};
use crate::signal::qpsk_gray;
use crate::{CMatrix, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearKind {
    #[default]
    ZeroForcing,
}

/// Linear detector. A positive `regularization` adds `rho I` to the Gram
/// matrix before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinearDetector {
    pub kind: LinearKind,
    pub regularization: f64,
}

/// Sliced symbols plus a flag set when there were more active users than
/// antennas and the minimum-norm pseudo-inverse was used.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfOutput {
    /// `M x K_d`, zero rows for inactive users.
    pub x_hard: CMatrix,
    pub overloaded: bool,
}

const RANK_TOL: f64 = 1e-10;

impl LinearDetector {
    pub fn detect(&self, y_data: &CMatrix, h_hat: &CMatrix, active: &[bool]) -> Result<ZfOutput> {
        if !self.regularization.is_finite() || self.regularization < 0.0 {
            return Err(Error::domain("regularization must be finite and non-negative"));
        }
        let (n, kd) = y_data.shape();
        let m = h_hat.ncols();
        if h_hat.nrows() != n || active.len() != m {
            return Err(Error::domain("zf inputs have inconsistent shapes"));
        }
        let act: Vec<usize> = (0..m).filter(|&u| active[u]).collect();
        let mut x_hard = CMatrix::zeros(m, kd);
        if act.is_empty() {
            return Ok(ZfOutput { x_hard, overloaded: false });
        }
        let ha = h_hat.select_columns(act.iter());
        let overloaded = act.len() > n;
        let soft = if self.regularization > 0.0 {
            let mut g = ha.adjoint() * &ha;
            for i in 0..act.len() {
                g[(i, i)] += Complex64::new(self.regularization, 0.0);
            }
            solve(g, &(ha.adjoint() * y_data))?
        } else {
            let (pinv, rank) = pseudo_inverse(&ha, RANK_TOL)?;
            if !overloaded && rank < act.len() {
                return Err(Error::Singular("active channel columns"));
            }
            pinv * y_data
        };
        let q = qpsk_gray();
        for (i, &u) in act.iter().enumerate() {
            for k in 0..kd {
                x_hard[(u, k)] = q.slice(soft[(i, k)]);
            }
        }
        Ok(ZfOutput { x_hard, overloaded })
    }
}

/// Zero-forcing `X^_d = (H^_A)^+ Y_d` with nearest-point slicing.
pub fn zf_detect(y_data: &CMatrix, h_hat: &CMatrix, active: &[bool]) -> Result<ZfOutput> {
    LinearDetector::default().detect(y_data, h_hat, active)
}
