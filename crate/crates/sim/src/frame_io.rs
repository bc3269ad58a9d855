//! Binary pilot-frame files and their JSON sidecar.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "GFRM"
//! 4       4     format version (u32, currently 1)
//! 8       4     J, pilot length (u32)
//! 12      4     L, number of columns (u32)
//! 16      16JL  entries, column-major, each as re f64 then im f64
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use gfree_core::frame_design::{self, FrameMatrix};
use gfree_core::{CMatrix, Complex64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MAGIC: &[u8; 4] = b"GFRM";
pub const VERSION: u32 = 1;
const HEADER: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum FrameFileError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a frame file (bad magic)")]
    BadMagic,
    #[error("unsupported frame file version {0} (supported: {VERSION})")]
    Version(u32),
    #[error("frame file truncated or padded: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
    #[error("invalid frame: {0}")]
    Invalid(#[from] gfree_core::Error),
}

pub fn encode_frame(f: &FrameMatrix) -> Vec<u8> {
    let (j, l) = (f.rows(), f.cols());
    let mut out = Vec::with_capacity(HEADER + 16 * j * l);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(j as u32).to_le_bytes());
    out.extend_from_slice(&(l as u32).to_le_bytes());
    for v in f.entries().iter() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn decode_frame(bytes: &[u8]) -> Result<FrameMatrix, FrameFileError> {
    if bytes.len() < HEADER {
        return Err(FrameFileError::Length {
            expected: HEADER,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(FrameFileError::BadMagic);
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(FrameFileError::Version(version));
    }
    let (j, l) = (u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize);
    let expected = HEADER + 16 * j * l;
    if bytes.len() != expected {
        return Err(FrameFileError::Length {
            expected,
            found: bytes.len(),
        });
    }
    let entries = CMatrix::from_iterator(
        j,
        l,
        (0..j * l).map(|i| {
            let at = HEADER + 16 * i;
            Complex64::new(f64_at(bytes, at), f64_at(bytes, at + 8))
        }),
    );
    Ok(FrameMatrix::new(entries)?)
}

fn io_err(path: &Path, source: std::io::Error) -> FrameFileError {
    FrameFileError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_frame(path: &Path, f: &FrameMatrix) -> Result<(), FrameFileError> {
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&encode_frame(f)).map_err(|e| io_err(path, e))
}

pub fn load_frame(path: &Path) -> Result<FrameMatrix, FrameFileError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_frame(&bytes)
}

/// Hex SHA-256 of the encoded frame, used as its content hash.
pub fn frame_hash(f: &FrameMatrix) -> String {
    hex_digest(&encode_frame(f))
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Summary written next to a designed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub j: usize,
    pub l: usize,
    pub coherence: f64,
    pub welch_bound: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Sidecar {
    pub fn of(f: &FrameMatrix) -> Result<Self, gfree_core::Error> {
        let (alpha, beta) = frame_design::frame_bounds(f);
        Ok(Self {
            j: f.rows(),
            l: f.cols(),
            coherence: frame_design::mutual_coherence(f)?,
            welch_bound: frame_design::welch_bound(f.rows(), f.cols())?,
            alpha,
            beta,
        })
    }
}

/// `<path>.json` next to the frame file.
pub fn sidecar_path(frame_path: &Path) -> std::path::PathBuf {
    let mut s = frame_path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
