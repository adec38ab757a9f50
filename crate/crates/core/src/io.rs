//! Flat binary and CSV exchange formats.
//!
//! Binary layout: 16-byte header (`b"CSHB"`, then little-endian `u32`
//! `nt`, `nz`, `kind`) followed by row-major little-endian complex128
//! values (`re`, `im` as `f64`). The `t` window is not stored.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quantize::{GridFunction, GridOperator, GridSpec};
use crate::C64;

pub const MAGIC: &[u8; 4] = b"CSHB";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum Kind {
    Function = 0,
    DenseOperator = 1,
    ModalOperator = 2,
}

impl TryFrom<u32> for Kind {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        match v {
            0 => Ok(Self::Function),
            1 => Ok(Self::DenseOperator),
            2 => Ok(Self::ModalOperator),
            _ => Err(Error::Format(format!("unknown kind {v}"))),
        }
    }
}

fn header(nt: usize, nz: usize, kind: Kind) -> Vec<u8> {
    let mut out = Vec::with_capacity(16);
    out.extend_from_slice(MAGIC);
    for v in [nt as u32, nz as u32, kind as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn push_values(out: &mut Vec<u8>, values: impl IntoIterator<Item = C64>) {
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
}

/// Parsed header and payload.
pub struct Decoded {
    pub nt: usize,
    pub nz: usize,
    pub kind: Kind,
    pub values: Vec<C64>,
}

pub fn decode(bytes: &[u8]) -> Result<Decoded> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing CSHB header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (nt, nz) = (word(4) as usize, word(8) as usize);
    let kind = Kind::try_from(word(12))?;
    let payload = &bytes[16..];
    if payload.len() % 16 != 0 {
        return Err(Error::Format("payload is not a whole number of complex128 values".into()));
    }
    let values: Vec<C64> = payload
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let expected = match kind {
        Kind::Function => nt * nz,
        Kind::DenseOperator => (nt * nz) * (nt * nz),
        Kind::ModalOperator => nz * nt * nt,
    };
    if values.len() != expected {
        return Err(Error::Format(format!("expected {expected} values, found {}", values.len())));
    }
    Ok(Decoded { nt, nz, kind, values })
}

pub fn encode_function(u: &GridFunction) -> Vec<u8> {
    let mut out = header(u.grid.nt, u.grid.nz, Kind::Function);
    push_values(&mut out, u.values.iter().copied());
    out
}

pub fn encode_operator(a: &GridOperator) -> Vec<u8> {
    let g = a.grid();
    match a {
        GridOperator::Dense { matrix, .. } => {
            let mut out = header(g.nt, g.nz, Kind::DenseOperator);
            let n = matrix.nrows();
            push_values(&mut out, (0..n).flat_map(|i| (0..n).map(move |j| matrix[(i, j)])));
            out
        }
        GridOperator::Modal { blocks, .. } => {
            let mut out = header(g.nt, g.nz, Kind::ModalOperator);
            for b in blocks {
                let n = b.nrows();
                push_values(&mut out, (0..n).flat_map(|i| (0..n).map(move |j| b[(i, j)])));
            }
            out
        }
    }
}

fn window_grid(d: &Decoded, t0: f64, t1: f64) -> Result<GridSpec> {
    GridSpec::new(t0, t1, d.nt, d.nz)
}

/// Decodes a function, attaching the window `[t0, t1)`.
pub fn decode_function(bytes: &[u8], t0: f64, t1: f64) -> Result<GridFunction> {
    let d = decode(bytes)?;
    if d.kind != Kind::Function {
        return Err(Error::Format("expected a grid function".into()));
    }
    GridFunction::from_values(window_grid(&d, t0, t1)?, d.values)
}

pub fn decode_operator(bytes: &[u8], t0: f64, t1: f64) -> Result<GridOperator> {
    let d = decode(bytes)?;
    let grid = window_grid(&d, t0, t1)?;
    match d.kind {
        Kind::Function => Err(Error::Format("expected an operator".into())),
        Kind::DenseOperator => {
            let n = grid.len();
            GridOperator::from_dense(grid, DMatrix::from_row_slice(n, n, &d.values))
        }
        Kind::ModalOperator => {
            let nt = grid.nt;
            let blocks = d.values.chunks_exact(nt * nt).map(|c| DMatrix::from_row_slice(nt, nt, c)).collect();
            Ok(GridOperator::Modal { grid, blocks })
        }
    }
}

/// Shortest round-trip form, with an exponent for very small or large
/// magnitudes (the JSON float format); non-finite values become `NaN`/`inf`.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
    } else {
        x.to_string()
    }
}

/// `t,z,re,im` rows with a header line.
pub fn function_to_csv(u: &GridFunction) -> String {
    let g = u.grid;
    let mut s = String::from("t,z,re,im\n");
    for n in 0..g.nt {
        for p in 0..g.nz {
            let v = u.values[g.index(n, p)];
            s.push_str(&format!("{},{},{},{}\n", fmt_float(g.t(n)), fmt_float(g.z(p)), fmt_float(v.re), fmt_float(v.im)));
        }
    }
    s
}

/// Reads `t,z,re,im` rows in grid order; positions are taken from `grid`.
pub fn function_from_csv(text: &str, grid: GridSpec) -> Result<GridFunction> {
    let mut values = Vec::with_capacity(grid.len());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with('t')) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Format(format!("line {}: expected 4 columns", i + 1)));
        }
        let num = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| Error::Format(format!("line {}: bad number {s:?}", i + 1)))
        };
        values.push(C64::new(num(cols[2])?, num(cols[3])?));
    }
    GridFunction::from_values(grid, values)
}

/// `row,col,re,im` for nonzero entries of the dense matrix.
pub fn operator_to_csv(a: &GridOperator) -> String {
    let m = a.to_dense();
    let mut s = String::from("row,col,re,im\n");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != C64::new(0.0, 0.0) {
                s.push_str(&format!("{i},{j},{},{}\n", fmt_float(v.re), fmt_float(v.im)));
            }
        }
    }
    s
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
