//! Figures of merit: BER with lost bits, block errors and effective
//! throughput, channel NMSE, activity errors and state-evolution tracking.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::signal::Constellation;
use crate::{CMatrix, Error, Result};

/// Bit-error count split into errors among detected users and bits lost to
/// missed users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerOutcome {
    pub ber: f64,
    /// Bit errors among correctly detected active users.
    pub detected_errors: usize,
    /// All bits of missed active users.
    pub lost_bits: usize,
    /// Active users times bits per user.
    pub total_bits: usize,
    /// Set when there was no active user (the BER is then reported as 0).
    pub empty: bool,
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}

/// BER over the bits of the truly active users. A missed user loses every bit.
pub fn ber_with_lost_bits(bits_true: &[Vec<bool>], bits_hat: &[Vec<bool>], active_true: &[bool], active_hat: &[bool]) -> Result<BerOutcome> {
    let m = active_true.len();
    check_len("estimated activity", m, active_hat.len())?;
    check_len("true bit rows", m, bits_true.len())?;
    check_len("estimated bit rows", m, bits_hat.len())?;
    let mut detected_errors = 0;
    let mut lost_bits = 0;
    let mut total_bits = 0;
    for u in (0..m).filter(|&u| active_true[u]) {
        let b = &bits_true[u];
        total_bits += b.len();
        if !active_hat[u] {
            lost_bits += b.len();
            continue;
        }
        check_len("estimated bits per user", b.len(), bits_hat[u].len())?;
        detected_errors += b.iter().zip(&bits_hat[u]).filter(|(a, c)| a != c).count();
    }
    let empty = total_bits == 0;
    let ber = if empty {
        0.0
    } else {
        (detected_errors + lost_bits) as f64 / total_bits as f64
    };
    Ok(BerOutcome {
        ber,
        detected_errors,
        lost_bits,
        total_bits,
        empty,
    })
}

/// Demaps every row of an `M x K_d` symbol block.
pub fn demap_rows(x: &CMatrix, c: &Constellation) -> Vec<Vec<bool>> {
    (0..x.nrows())
        .map(|u| {
            let row: Vec<_> = x.row(u).iter().copied().collect();
            c.demodulate(&row)
        })
        .collect()
}

/// `||H - H^||_F^2 / ||H||_F^2`; `None` when `H` is all zero.
pub fn nmse(h_true: &CMatrix, h_hat: &CMatrix) -> Result<Option<f64>> {
    if h_true.shape() != h_hat.shape() {
        return Err(Error::domain("nmse operands differ in shape"));
    }
    let den = h_true.norm_squared();
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some((h_true - h_hat).norm_squared() / den))
}

/// Fraction of active user-frames with any bit error or a missed detection.
pub fn block_error_rate(bits_true: &[Vec<bool>], bits_hat: &[Vec<bool>], active_true: &[bool], active_hat: &[bool]) -> Result<Option<f64>> {
    let m = active_true.len();
    check_len("estimated activity", m, active_hat.len())?;
    check_len("true bit rows", m, bits_true.len())?;
    check_len("estimated bit rows", m, bits_hat.len())?;
    let act: Vec<usize> = (0..m).filter(|&u| active_true[u]).collect();
    if act.is_empty() {
        return Ok(None);
    }
    let errs = act.iter().filter(|&&u| !active_hat[u] || bits_true[u] != bits_hat[u]).count();
    Ok(Some(errs as f64 / act.len() as f64))
}

/// Delivered bits per user frame, `(1 - P_e) K_d b`.
pub fn effective_throughput(p_e: f64, k_d: usize, bits_per_symbol: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_e) {
        return Err(Error::domain("block error rate must lie in [0, 1]"));
    }
    Ok((1.0 - p_e) * (k_d * bits_per_symbol) as f64)
}

/// `(missed detections, false alarms)`.
pub fn detection_errors(active_true: &[bool], active_hat: &[bool]) -> Result<(usize, usize)> {
    check_len("estimated activity", active_true.len(), active_hat.len())?;
    let md = active_true.iter().zip(active_hat).filter(|(t, h)| **t && !**h).count();
    let fa = active_true.iter().zip(active_hat).filter(|(t, h)| !**t && **h).count();
    Ok((md, fa))
}

/// Floor applied to predicted values before taking ratios.
pub const SE_FLOOR: f64 = 1e-12;

/// Per-iteration `empirical / predicted` ratios and the largest ratio over
/// the final half of the iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct SeReport {
    pub ratios: Vec<f64>,
    pub final_half_max: f64,
}

impl SeReport {
    pub fn final_ratio(&self) -> f64 {
        self.ratios.last().copied().unwrap_or(f64::NAN)
    }
}

pub fn se_tracking_report(predicted: &[f64], empirical: &[f64]) -> Result<SeReport> {
    check_len("trace length", predicted.len(), empirical.len())?;
    let ratios: Vec<f64> = predicted.iter().zip(empirical).map(|(p, e)| e / p.max(SE_FLOOR)).collect();
    let start = ratios.len() / 2;
    let final_half_max = ratios[start..].iter().copied().fold(f64::NAN, f64::max);
    Ok(SeReport { ratios, final_half_max })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = alloc::vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // Ties share their mean rank.
        let mean = (i + j) as f64 / 2.0;
        for &t in &idx[i..=j] {
            r[t] = mean;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` for fewer than two points or a constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Metrics of one receiver on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub ber: f64,
    /// NaN when the frame has no active user.
    pub nmse: f64,
    pub md_count: usize,
    pub fa_count: usize,
    pub block_error_rate: f64,
    pub effective_throughput_bits: f64,
    pub iterations_run: usize,
    pub predicted_mse_x: Vec<f64>,
    pub predicted_mse_h: Vec<f64>,
}
