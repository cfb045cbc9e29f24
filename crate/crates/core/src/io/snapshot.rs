//! Binary field snapshots.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `DNLS` |
//! | 4 | format version (u32, currently 1) |
//! | 4 | dimension d (u32) |
//! | 24 d | per axis: a (f64), b (f64), M (u64) |
//! | 4 | basis code (u32: 0 sine, 1 Fourier) |
//! | 8 | time (f64) |
//! | 8 | beta at save time (f64) |
//! | 16 n | row-major node values, (re, im) f64 pairs |

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{Axis, Basis, ComplexField, Grid};

pub const MAGIC: &[u8; 4] = b"DNLS";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub field: ComplexField,
    pub beta: f64,
}

pub fn encode(field: &ComplexField, beta: f64) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(40 + 24 * grid.dim() + 16 * field.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for ax in grid.axes() {
        out.extend_from_slice(&ax.a().to_le_bytes());
        out.extend_from_slice(&ax.b().to_le_bytes());
        out.extend_from_slice(&(ax.m() as u64).to_le_bytes());
    }
    out.extend_from_slice(&grid.basis().code().to_le_bytes());
    out.extend_from_slice(&field.time().to_le_bytes());
    out.extend_from_slice(&beta.to_le_bytes());
    for z in field.values() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(fail(
                self.path,
                format!(
                    "truncated header reading {what}: need {end} bytes, file has {}",
                    self.bytes.len()
                ),
            ));
        }
        let mut buf = [0u8; N];
        buf.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.take::<8>(what).map(u64::from_le_bytes)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }
}

fn fail(path: &Path, message: String) -> Error {
    Error::Snapshot {
        path: PathBuf::from(path),
        message,
    }
}

/// Decode snapshot bytes. With `expected`, the stored grid must match it.
pub fn decode(bytes: &[u8], path: &Path, expected: Option<&Grid>) -> Result<Snapshot> {
    let mut r = Reader { bytes, pos: 0, path };
    let magic = r.take::<4>("magic")?;
    if &magic != MAGIC {
        return Err(fail(path, format!("bad magic {magic:?}, expected \"DNLS\"")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(fail(path, format!("unknown format version {version} (supported: {VERSION})")));
    }
    let d = r.u32("dimension")?;
    if !(1..=2).contains(&d) {
        return Err(fail(path, format!("unsupported dimension {d}")));
    }
    let mut axes = Vec::new();
    for _ in 0..d {
        let a = r.f64("axis a")?;
        let b = r.f64("axis b")?;
        let m = r.u64("axis M")?;
        axes.push(Axis::new(a, b, m as usize).map_err(|e| fail(path, e.to_string()))?);
    }
    let code = r.u32("basis code")?;
    let basis = Basis::from_code(code).ok_or_else(|| fail(path, format!("unknown basis code {code}")))?;
    let time = r.f64("time")?;
    let beta = r.f64("beta")?;

    let grid = match expected {
        Some(g) => {
            if g.basis() != basis {
                return Err(fail(
                    path,
                    format!("basis mismatch: file has {}, grid expects {}", basis.name(), g.basis().name()),
                ));
            }
            if g.axes() != axes.as_slice() {
                return Err(fail(path, format!("grid mismatch: file has {axes:?}, expected {:?}", g.axes())));
            }
            g.clone()
        }
        None => Grid::new(axes, basis)?,
    };
    let n = grid.node_count();
    let expected_len = r.pos + 16 * n;
    if bytes.len() != expected_len {
        return Err(fail(
            path,
            format!(
                "payload size mismatch: expected {expected_len} bytes in total, file has {}",
                bytes.len()
            ),
        ));
    }
    let values = bytes[r.pos..]
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    let field = ComplexField::from_values(&grid, values, time)?;
    Ok(Snapshot { field, beta })
}

pub fn write_snapshot(field: &ComplexField, beta: f64, path: &Path) -> Result<()> {
    fs::write(path, encode(field, beta))?;
    Ok(())
}

pub fn read_snapshot(path: &Path, expected: Option<&Grid>) -> Result<Snapshot> {
    let bytes = fs::read(path)?;
    decode(&bytes, path, expected)
}
