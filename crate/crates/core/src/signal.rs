//! Gray-coded QPSK, transmit frame assembly and the linear uplink model.

use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;

use crate::channel::{dbm_to_watts, ChannelRealization};
use crate::frame_design::FrameMatrix;
use crate::linalg::complex_normal_matrix;
use crate::{seed, CMatrix, Error, Result};

/// A unit-energy constellation with a bit labelling.
///
/// `points[q]` carries label `q`: bit `i` of the symbol is bit `i` of `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub points: Vec<Complex64>,
    pub bits_per_symbol: usize,
}

/// Gray-coded QPSK: bit 0 picks the sign of the real part and bit 1 the sign
/// of the imaginary part (0 is positive), so `(0, 0)` maps to `(1 + j)/sqrt(2)`.
pub fn qpsk_gray() -> Constellation {
    let a = FRAC_1_SQRT_2;
    Constellation {
        points: alloc::vec![
            Complex64::new(a, a),
            Complex64::new(-a, a),
            Complex64::new(a, -a),
            Complex64::new(-a, -a),
        ],
        bits_per_symbol: 2,
    }
}

impl Constellation {
    pub fn map(&self, bits: &[bool]) -> Complex64 {
        let q = bits
            .iter()
            .take(self.bits_per_symbol)
            .enumerate()
            .fold(0usize, |acc, (i, &b)| acc | (usize::from(b) << i));
        self.points[q]
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn slice_index(&self, x: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (q, p) in self.points.iter().enumerate() {
            let d = (x - p).norm_sqr();
            if d < best_d {
                best = q;
                best_d = d;
            }
        }
        best
    }

    pub fn slice(&self, x: Complex64) -> Complex64 {
        self.points[self.slice_index(x)]
    }

    /// Bits of the nearest point, appended to `out`.
    pub fn demap_into(&self, x: Complex64, out: &mut Vec<bool>) {
        let q = self.slice_index(x);
        out.extend((0..self.bits_per_symbol).map(|i| (q >> i) & 1 == 1));
    }

    pub fn modulate(&self, bits: &[bool]) -> Result<Vec<Complex64>> {
        if !bits.len().is_multiple_of(self.bits_per_symbol) {
            return Err(Error::domain("bit count is not a multiple of bits per symbol"));
        }
        Ok(bits.chunks(self.bits_per_symbol).map(|c| self.map(c)).collect())
    }

    pub fn demodulate(&self, symbols: &[Complex64]) -> Vec<bool> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol);
        for &s in symbols {
            self.demap_into(s, &mut out);
        }
        out
    }
}

/// Transmitted pilot and data blocks of all users for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TxFrame {
    /// `M x K_p`.
    pub x_pilot: CMatrix,
    /// `M x K_d`.
    pub x_data: CMatrix,
    /// Per user, `K_d * b` bits (also kept for inactive users, who send nothing).
    pub data_bits: Vec<Vec<bool>>,
    pub tx_power_dbm: f64,
}

impl TxFrame {
    pub fn k_pilot(&self) -> usize {
        self.x_pilot.ncols()
    }

    pub fn k_data(&self) -> usize {
        self.x_data.ncols()
    }

    /// `[X_p, X_d]`, `M x K`.
    pub fn x(&self) -> CMatrix {
        let (m, kp, kd) = (self.x_pilot.nrows(), self.k_pilot(), self.k_data());
        let mut x = CMatrix::zeros(m, kp + kd);
        x.columns_mut(0, kp).copy_from(&self.x_pilot);
        x.columns_mut(kp, kd).copy_from(&self.x_data);
        x
    }
}

/// Unit per-symbol-power pilot block: row `m` is `sqrt(K_p)` times frame
/// column `m`, shape `M x K_p`.
pub fn pilot_block(pilots: &FrameMatrix) -> CMatrix {
    let s = Complex64::new((pilots.rows() as f64).sqrt(), 0.0);
    pilots.entries().transpose() * s
}

/// Builds the transmit frame: pilot rows from the frame columns, Gray-QPSK
/// data from `bits`, inactive rows zeroed, amplitude
/// `sqrt(10^((power_dbm - 30)/10))` on everything.
pub fn assemble_tx(pilots: &FrameMatrix, bits: &[Vec<bool>], active: &[bool], power_dbm: f64) -> Result<TxFrame> {
    let m = pilots.cols();
    if active.len() != m {
        return Err(Error::Dimension {
            what: "activity vector",
            expected: m,
            got: active.len(),
        });
    }
    if bits.len() != m {
        return Err(Error::Dimension {
            what: "bit rows",
            expected: m,
            got: bits.len(),
        });
    }
    let c = qpsk_gray();
    let per_user = bits[0].len();
    if !per_user.is_multiple_of(c.bits_per_symbol) || bits.iter().any(|b| b.len() != per_user) {
        return Err(Error::domain("every user needs the same even number of data bits"));
    }
    let kd = per_user / c.bits_per_symbol;
    let amp = Complex64::new(dbm_to_watts(power_dbm).sqrt(), 0.0);

    let mut x_pilot = pilot_block(pilots) * amp;
    let mut x_data = CMatrix::zeros(m, kd);
    for (u, row_bits) in bits.iter().enumerate() {
        if !active[u] {
            x_pilot.row_mut(u).fill(Complex64::new(0.0, 0.0));
            continue;
        }
        for (k, chunk) in row_bits.chunks(c.bits_per_symbol).enumerate() {
            x_data[(u, k)] = c.map(chunk) * amp;
        }
    }
    Ok(TxFrame {
        x_pilot,
        x_data,
        data_bits: bits.to_vec(),
        tx_power_dbm: power_dbm,
    })
}

/// Uniform random bits, `rows` vectors of `len` bits.
pub fn random_bits<R: Rng + ?Sized>(rows: usize, len: usize, rng: &mut R) -> Vec<Vec<bool>> {
    (0..rows).map(|_| (0..len).map(|_| rng.random::<bool>()).collect()).collect()
}

/// Received block and its noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct RxFrame {
    /// `N x K`.
    pub y: CMatrix,
    pub n0: f64,
}

/// `Y = H X + W` with `W` i.i.d. `CN(0, N0)` drawn from `seed`.
pub fn transmit(tx: &TxFrame, ch: &ChannelRealization, seed: u64) -> Result<RxFrame> {
    let n = ch.h.nrows();
    let k = tx.k_pilot() + tx.k_data();
    let w = complex_normal_matrix(n, k, ch.noise_power_n0, &mut seed::rng(seed));
    transmit_with(tx, ch, &w)
}

/// `Y = H X + W` for a given noise matrix.
pub fn transmit_with(tx: &TxFrame, ch: &ChannelRealization, w: &CMatrix) -> Result<RxFrame> {
    let x = tx.x();
    if ch.h.ncols() != x.nrows() {
        return Err(Error::Dimension {
            what: "channel columns vs users",
            expected: x.nrows(),
            got: ch.h.ncols(),
        });
    }
    if w.shape() != (ch.h.nrows(), x.ncols()) {
        return Err(Error::Dimension {
            what: "noise block columns",
            expected: x.ncols(),
            got: w.ncols(),
        });
    }
    Ok(RxFrame {
        y: &ch.h * x + w,
        n0: ch.noise_power_n0,
    })
}
