//! Mellin quantization on a truncated log-radial grid.
//!
//! With `t = log x` the Haar measure `dx/x` becomes `dt`, the Mellin
//! transform becomes the Fourier transform in `t`, and `xD_x` becomes `D_t`.
//! The grid is periodic in `t` on `[t0, t1)` and in `z` on `[0, 2pi)`;
//! mode `e^{i sigma_m t + i k_q z}` is an eigenfunction of `op(sigma)` and
//! `op(zeta)` with eigenvalues `sigma_m`, `k_q`.
//!
//! At the Nyquist bin the symbol is averaged over `+-sigma_N` (resp. `+-k_N`),
//! which keeps real symbols Hermitian.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::symbol::FormalSymbol;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t0: f64,
    pub t1: f64,
    pub nt: usize,
    pub nz: usize,
}

impl GridSpec {
    pub fn new(t0: f64, t1: f64, nt: usize, nz: usize) -> Result<Self> {
        let g = Self { t0, t1, nt, nz };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t1.is_finite() && self.t0 < self.t1) {
            return Err(Error::InvalidGrid(format!("need t0 < t1, got [{}, {}]", self.t0, self.t1)));
        }
        for (name, n) in [("nt", self.nt), ("nz", self.nz)] {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!("{name} = {n} must be a power of two >= 8")));
            }
        }
        Ok(())
    }

    /// Number of grid points `nt * nz`.
    pub fn len(&self) -> usize {
        self.nt * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn dt(&self) -> f64 {
        self.width() / self.nt as f64
    }

    pub fn dz(&self) -> f64 {
        TAU / self.nz as f64
    }

    pub fn t(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt()
    }

    pub fn z(&self, p: usize) -> f64 {
        p as f64 * self.dz()
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..self.nt).map(|n| self.t(n)).collect()
    }

    /// Signed frequency index of FFT bin `m` out of `n`.
    pub fn signed_index(m: usize, n: usize) -> i64 {
        if m < n / 2 {
            m as i64
        } else {
            m as i64 - n as i64
        }
    }

    pub fn sigma(&self, m: usize) -> f64 {
        TAU * Self::signed_index(m, self.nt) as f64 / self.width()
    }

    pub fn k(&self, q: usize) -> f64 {
        Self::signed_index(q, self.nz) as f64
    }

    /// Largest resolved `|sigma|`.
    pub fn sigma_max(&self) -> f64 {
        PI * self.nt as f64 / self.width()
    }

    pub fn index(&self, n: usize, p: usize) -> usize {
        n * self.nz + p
    }

    /// Same window and `nz`, `nt` doubled.
    pub fn refined(&self) -> Self {
        Self { nt: 2 * self.nt, ..*self }
    }
}

/// Values on the `(t, z)` grid, row-major with `z` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: GridSpec,
    pub values: Vec<C64>,
}

impl GridFunction {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_values(grid: GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("{} values for a grid of {}", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numerical("non-finite grid value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> C64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for n in 0..grid.nt {
            for p in 0..grid.nz {
                values.push(f(grid.t(n), grid.z(p)));
            }
        }
        Self { grid, values }
    }

    /// Grid mode `e^{i sigma_m t + i k_q z}`.
    pub fn mode(grid: GridSpec, m: usize, q: usize) -> Self {
        let (s, k) = (grid.sigma(m), grid.k(q));
        Self::from_fn(grid, |t, z| C64::from_polar(1.0, s * t + k * z))
    }

    /// `L^2_b` inner product `int u conj(v) dt dz` by the rectangle rule.
    pub fn inner(&self, other: &Self) -> C64 {
        let w = self.grid.dt() * self.grid.dz();
        self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum::<C64>() * w
    }

    pub fn norm(&self) -> f64 {
        (self.grid.dt() * self.grid.dz() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64, f64, C64) -> C64) -> Self {
        let mut out = self.clone();
        for n in 0..self.grid.nt {
            for p in 0..self.grid.nz {
                let i = self.grid.index(n, p);
                out.values[i] = f(self.grid.t(n), self.grid.z(p), self.values[i]);
            }
        }
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect() }
    }

    /// Multiplies by `e^{beta t}`.
    pub fn weight(&self, beta: f64) -> Self {
        self.map(|t, _, v| v * (beta * t).exp())
    }

    /// Restriction to the t-rows flagged in `rows` (other rows zeroed).
    pub fn restrict_rows(&self, rows: &[bool]) -> Self {
        self.map_rows(|n, v| if rows[n] { v } else { C64::new(0.0, 0.0) })
    }

    fn map_rows(&self, f: impl Fn(usize, C64) -> C64) -> Self {
        let mut out = self.clone();
        for n in 0..self.grid.nt {
            for p in 0..self.grid.nz {
                let i = self.grid.index(n, p);
                out.values[i] = f(n, self.values[i]);
            }
        }
        out
    }
}

/// Cached FFT plans for one grid.
#[derive(Clone)]
pub(crate) struct Fft2 {
    grid: GridSpec,
    ft: Arc<dyn Fft<f64>>,
    it: Arc<dyn Fft<f64>>,
    fz: Arc<dyn Fft<f64>>,
    iz: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            ft: planner.plan_fft_forward(grid.nt),
            it: planner.plan_fft_inverse(grid.nt),
            fz: planner.plan_fft_forward(grid.nz),
            iz: planner.plan_fft_inverse(grid.nz),
        }
    }

    pub(crate) fn along_z(&self, data: &mut [C64], inverse: bool) {
        let plan = if inverse { &self.iz } else { &self.fz };
        for row in data.chunks_exact_mut(self.grid.nz) {
            plan.process(row);
        }
    }

    pub(crate) fn along_t(&self, data: &mut [C64], inverse: bool) {
        let (nt, nz) = (self.grid.nt, self.grid.nz);
        let plan = if inverse { &self.it } else { &self.ft };
        let mut col = vec![C64::new(0.0, 0.0); nt];
        for p in 0..nz {
            for n in 0..nt {
                col[n] = data[n * nz + p];
            }
            plan.process(&mut col);
            for n in 0..nt {
                data[n * nz + p] = col[n];
            }
        }
    }

    /// Unnormalized 2-D transform.
    pub(crate) fn transform(&self, data: &mut [C64], inverse: bool) {
        self.along_z(data, inverse);
        self.along_t(data, inverse);
    }

    pub(crate) fn t_only(&self, v: &mut [C64], inverse: bool) {
        if inverse {
            self.it.process(v)
        } else {
            self.ft.process(v)
        }
    }
}

/// Unitary discrete Mellin transform: DFT in `t` and `z`, scaled so that
/// `sum |u_hat|^2 = ||u||^2_{L^2_b}`. Output layout `[m][q]`.
pub fn mellin_forward(u: &GridFunction) -> Vec<C64> {
    let g = u.grid;
    let mut data = u.values.clone();
    Fft2::new(g).transform(&mut data, false);
    let c = (g.dt() * g.dz() / g.len() as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= c);
    data
}

/// Inverse of [`mellin_forward`].
pub fn mellin_inverse(grid: GridSpec, hat: &[C64]) -> Result<GridFunction> {
    if hat.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!("{} coefficients for a grid of {}", hat.len(), grid.len())));
    }
    let mut data = hat.to_vec();
    Fft2::new(grid).transform(&mut data, true);
    let c = 1.0 / (grid.dt() * grid.dz() * grid.len() as f64).sqrt();
    data.iter_mut().for_each(|v| *v *= c);
    Ok(GridFunction { grid, values: data })
}

/// `s^j` at lattice bin `m` of `n`, averaged over `+-s` at the Nyquist bin.
fn lattice_pow(s: f64, j: u32, m: usize, n: usize) -> f64 {
    if m == n / 2 && j % 2 == 1 {
        0.0
    } else {
        s.powi(j as i32)
    }
}

/// Samples of a symbol on the frequency lattice.
///
/// Layout: `[n][m][q]` when `z_independent`, otherwise `[n][p][m][q]`;
/// `n, p` index output positions and `m, q` frequencies.
#[derive(Clone, Debug)]
pub struct SymbolTable {
    pub grid: GridSpec,
    pub z_independent: bool,
    pub data: Vec<C64>,
}

impl SymbolTable {
    fn row_len(&self) -> usize {
        self.grid.len()
    }

    /// Samples `f(t, z, sigma, k, tau = e^t)`, averaging over the sign of
    /// the frequency at Nyquist bins.
    pub fn from_fn<F>(grid: GridSpec, z_independent: bool, f: F) -> Self
    where
        F: Fn(f64, f64, f64, f64, f64) -> C64 + Sync,
    {
        let (nt, nz) = (grid.nt, grid.nz);
        let positions = if z_independent { nt } else { nt * nz };
        let mut data = vec![C64::new(0.0, 0.0); positions * nt * nz];
        data.par_chunks_mut(nt * nz).enumerate().for_each(|(row, out)| {
            let (n, p) = if z_independent { (row, 0) } else { (row / nz, row % nz) };
            let (t, z) = (grid.t(n), grid.z(p));
            let tau = t.exp();
            for m in 0..nt {
                let sig = grid.sigma(m);
                let sigs: &[f64] = if m == nt / 2 { &[sig, -sig] } else { &[sig] };
                for q in 0..nz {
                    let k = grid.k(q);
                    let ks: &[f64] = if q == nz / 2 { &[k, -k] } else { &[k] };
                    let mut acc = C64::new(0.0, 0.0);
                    for &s in sigs {
                        for &kk in ks {
                            acc += f(t, z, s, kk, tau);
                        }
                    }
                    out[m * nz + q] = acc / (sigs.len() * ks.len()) as f64;
                }
            }
        });
        Self { grid, z_independent, data }
    }

    /// Samples a formal symbol at `x = tau = e^t`.
    pub fn sample(a: &FormalSymbol, grid: GridSpec) -> Self {
        let (nt, nz) = (grid.nt, grid.nz);
        let z_independent = a.is_z_independent();
        let positions = if z_independent { nt } else { nt * nz };
        let terms: Vec<_> = a.terms().map(|(e, c)| (e, c.clone())).collect();
        let mut data = vec![C64::new(0.0, 0.0); positions * nt * nz];
        data.par_chunks_mut(nt * nz).enumerate().for_each(|(row, out)| {
            let (n, p) = if z_independent { (row, 0) } else { (row / nz, row % nz) };
            let (t, z) = (grid.t(n), grid.z(p));
            let x = t.exp();
            let local: Vec<(u32, u32, C64)> = terms
                .iter()
                .map(|&((al, j, k), ref c)| (al, j, c.eval_unchecked(x, z) * x.powi(k as i32)))
                .collect();
            for m in 0..nt {
                let s = grid.sigma(m);
                for q in 0..nz {
                    let kq = grid.k(q);
                    out[m * nz + q] = local
                        .iter()
                        .map(|&(al, j, c)| c * lattice_pow(s, j, m, nt) * lattice_pow(kq, al, q, nz))
                        .sum();
                }
            }
        });
        Self { grid, z_independent, data }
    }

    pub fn at(&self, n: usize, p: usize, m: usize, q: usize) -> C64 {
        let g = self.grid;
        let row = if self.z_independent { n } else { n * g.nz + p };
        self.data[row * self.row_len() + m * g.nz + q]
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { data: self.data.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    fn zip(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch("symbol tables on different grids".into()));
        }
        if self.z_independent == other.z_independent {
            let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
            return Ok(Self { data, ..self.clone() });
        }
        let (a, b) = (self.expand_z(), other.expand_z());
        a.zip(&b, f)
    }

    /// Same samples in the `z`-dependent layout.
    pub fn expand_z(&self) -> Self {
        if !self.z_independent {
            return self.clone();
        }
        let g = self.grid;
        let mut data = Vec::with_capacity(g.len() * g.len());
        for n in 0..g.nt {
            let row = &self.data[n * g.len()..(n + 1) * g.len()];
            for _ in 0..g.nz {
                data.extend_from_slice(row);
            }
        }
        Self { grid: g, z_independent: false, data }
    }
}

/// Operator on grid functions.
///
/// `Modal` stores one `nt x nt` block per angular Fourier bin `q`
/// (operators commuting with rotations in `z`); `Dense` is the full
/// `(nt nz) x (nt nz)` matrix in the row-major grid ordering.
#[derive(Clone, Debug, PartialEq)]
pub enum GridOperator {
    Dense { grid: GridSpec, matrix: DMatrix<C64> },
    Modal { grid: GridSpec, blocks: Vec<DMatrix<C64>> },
}

impl GridOperator {
    pub fn grid(&self) -> GridSpec {
        match self {
            Self::Dense { grid, .. } | Self::Modal { grid, .. } => *grid,
        }
    }

    pub fn identity(grid: GridSpec) -> Self {
        Self::Modal { grid, blocks: vec![DMatrix::identity(grid.nt, grid.nt); grid.nz] }
    }

    /// Multiplication by `f(t)`.
    pub fn diag_t(grid: GridSpec, f: impl Fn(f64) -> C64) -> Self {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(grid.nt, grid.ts().into_iter().map(f)));
        Self::Modal { grid, blocks: vec![d; grid.nz] }
    }

    /// Multiplication by `f(t, z)`.
    pub fn diag(grid: GridSpec, f: impl Fn(f64, f64) -> C64) -> Self {
        let u = GridFunction::from_fn(grid, f);
        let matrix = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(u.values));
        Self::Dense { grid, matrix }
    }

    pub fn from_dense(grid: GridSpec, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != grid.len() || matrix.ncols() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} matrix for a grid of {}",
                matrix.nrows(),
                matrix.ncols(),
                grid.len()
            )));
        }
        Ok(Self::Dense { grid, matrix })
    }

    pub fn is_modal(&self) -> bool {
        matches!(self, Self::Modal { .. })
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match self {
            Self::Dense { matrix, .. } => matrix.clone(),
            Self::Modal { grid, blocks } => {
                let (nt, nz) = (grid.nt, grid.nz);
                let fft = FftPlanner::new().plan_fft_inverse(nz);
                let mut out = DMatrix::zeros(nt * nz, nt * nz);
                let mut c = vec![C64::new(0.0, 0.0); nz];
                for n in 0..nt {
                    for n2 in 0..nt {
                        for q in 0..nz {
                            c[q] = blocks[q][(n, n2)];
                        }
                        fft.process(&mut c);
                        for p in 0..nz {
                            for p2 in 0..nz {
                                out[(n * nz + p, n2 * nz + p2)] = c[(p + nz - p2) % nz] / nz as f64;
                            }
                        }
                    }
                }
                out
            }
        }
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        let g = self.grid();
        if u.grid != g {
            return Err(Error::ShapeMismatch("function and operator on different grids".into()));
        }
        match self {
            Self::Dense { matrix, .. } => {
                let v = matrix * nalgebra::DVector::from_column_slice(&u.values);
                Ok(GridFunction { grid: g, values: v.as_slice().to_vec() })
            }
            Self::Modal { blocks, .. } => {
                let fft = Fft2::new(g);
                let mut data = u.values.clone();
                fft.along_z(&mut data, false);
                let mut out = vec![C64::new(0.0, 0.0); g.len()];
                for (q, b) in blocks.iter().enumerate() {
                    let col = nalgebra::DVector::from_iterator(g.nt, (0..g.nt).map(|n| data[n * g.nz + q]));
                    let r = b * col;
                    for n in 0..g.nt {
                        out[n * g.nz + q] = r[n];
                    }
                }
                fft.along_z(&mut out, true);
                out.iter_mut().for_each(|v| *v /= g.nz as f64);
                Ok(GridFunction { grid: g, values: out })
            }
        }
    }

    /// Operator product `self * other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let g = self.grid();
        if other.grid() != g {
            return Err(Error::ShapeMismatch("operators on different grids".into()));
        }
        Ok(match (self, other) {
            (Self::Modal { blocks: a, .. }, Self::Modal { blocks: b, .. }) => Self::Modal {
                grid: g,
                blocks: a.par_iter().zip(b.par_iter()).map(|(x, y)| linalg::matmul(x, y)).collect(),
            },
            _ => Self::Dense { grid: g, matrix: linalg::matmul(&self.to_dense(), &other.to_dense()) },
        })
    }

    fn zip(&self, other: &Self, f: impl Fn(&DMatrix<C64>, &DMatrix<C64>) -> DMatrix<C64>) -> Result<Self> {
        let g = self.grid();
        if other.grid() != g {
            return Err(Error::ShapeMismatch("operators on different grids".into()));
        }
        Ok(match (self, other) {
            (Self::Modal { blocks: a, .. }, Self::Modal { blocks: b, .. }) => {
                Self::Modal { grid: g, blocks: a.iter().zip(b).map(|(x, y)| f(x, y)).collect() }
            }
            _ => Self::Dense { grid: g, matrix: f(&self.to_dense(), &other.to_dense()) },
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map_blocks(|b| b * c)
    }

    pub fn map_blocks(&self, f: impl Fn(&DMatrix<C64>) -> DMatrix<C64> + Sync) -> Self {
        match self {
            Self::Dense { grid, matrix } => Self::Dense { grid: *grid, matrix: f(matrix) },
            Self::Modal { grid, blocks } => Self::Modal { grid: *grid, blocks: blocks.par_iter().map(&f).collect() },
        }
    }

    /// Conjugate transpose; the grid `L^2_b` weight is uniform.
    pub fn adjoint(&self) -> Self {
        match self {
            Self::Dense { grid, matrix } => Self::Dense { grid: *grid, matrix: matrix.adjoint() },
            // the adjoint of the block at bin q acts on the same bin
            Self::Modal { grid, blocks } => Self::Modal { grid: *grid, blocks: blocks.iter().map(|b| b.adjoint()).collect() },
        }
    }

    /// `diag(f(t)) * self * diag(g(t))`.
    pub fn sandwich_t(&self, f: impl Fn(f64) -> f64 + Sync, g: impl Fn(f64) -> f64 + Sync) -> Self {
        let grid = self.grid();
        let ts = grid.ts();
        let fl: Vec<f64> = ts.iter().map(|&t| f(t)).collect();
        let gr: Vec<f64> = ts.iter().map(|&t| g(t)).collect();
        match self {
            Self::Modal { blocks, .. } => Self::Modal {
                grid,
                blocks: blocks
                    .par_iter()
                    .map(|b| DMatrix::from_fn(grid.nt, grid.nt, |i, j| b[(i, j)] * fl[i] * gr[j]))
                    .collect(),
            },
            Self::Dense { matrix, .. } => {
                let nz = grid.nz;
                let n = grid.len();
                Self::Dense { grid, matrix: DMatrix::from_fn(n, n, |i, j| matrix[(i, j)] * fl[i / nz] * gr[j / nz]) }
            }
        }
    }

    /// Inverse, block by block for modal operators.
    pub fn inverse(&self) -> Result<Self> {
        let inv = linalg::inverse;
        match self {
            Self::Dense { grid, matrix } => Ok(Self::Dense {
                grid: *grid,
                matrix: inv(matrix).ok_or_else(|| Error::Numerical("singular operator".into()))?,
            }),
            Self::Modal { grid, blocks } => {
                let inverted: Option<Vec<_>> = blocks.par_iter().map(inv).collect();
                Ok(Self::Modal {
                    grid: *grid,
                    blocks: inverted.ok_or_else(|| Error::Numerical("singular operator".into()))?,
                })
            }
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        match self {
            Self::Dense { matrix, .. } => matrix.iter().map(|v| v.norm()).fold(0.0, f64::max),
            Self::Modal { blocks, .. } => blocks.iter().flat_map(|b| b.iter()).map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    /// `l^2` operator norm (equal to the `L^2_b` norm on the grid).
    pub fn norm(&self) -> f64 {
        match self {
            Self::Dense { matrix, .. } => linalg::spectral_norm(matrix),
            Self::Modal { blocks, .. } => blocks.par_iter().map(linalg::spectral_norm).reduce(|| 0.0, f64::max),
        }
    }
}

/// Left quantization of sampled symbols:
/// `(op(a) u)(t_n, z_p) = (1/N) sum_{m,q} a(t_n, z_p, sigma_m, k_q) u_hat(m,q) e^{i sigma_m t_n + i k_q z_p}`.
pub fn op_quantize(a: &SymbolTable) -> GridOperator {
    let g = a.grid;
    let (nt, nz) = (g.nt, g.nz);
    let fft = Fft2::new(g);
    if a.z_independent {
        let blocks = (0..nz)
            .into_par_iter()
            .map(|q| {
                let mut b = DMatrix::zeros(nt, nt);
                let mut row = vec![C64::new(0.0, 0.0); nt];
                for n in 0..nt {
                    for (m, r) in row.iter_mut().enumerate() {
                        let phase = C64::from_polar(1.0, TAU * ((m * n) % nt) as f64 / nt as f64);
                        *r = a.at(n, 0, m, q) * phase;
                    }
                    fft.t_only(&mut row, false);
                    for n2 in 0..nt {
                        b[(n, n2)] = row[n2] / nt as f64;
                    }
                }
                b
            })
            .collect();
        return GridOperator::Modal { grid: g, blocks };
    }
    let nn = g.len();
    let rows: Vec<Vec<C64>> = (0..nn)
        .into_par_iter()
        .map(|row| {
            let (n, p) = (row / nz, row % nz);
            let mut b = vec![C64::new(0.0, 0.0); nn];
            for m in 0..nt {
                for q in 0..nz {
                    let ph = ((m * n) % nt) as f64 / nt as f64 + ((q * p) % nz) as f64 / nz as f64;
                    b[m * nz + q] = a.at(n, p, m, q) * C64::from_polar(1.0, TAU * ph);
                }
            }
            fft.transform(&mut b, false);
            b.iter_mut().for_each(|v| *v /= nn as f64);
            b
        })
        .collect();
    let matrix = DMatrix::from_fn(nn, nn, |i, j| rows[i][j]);
    GridOperator::Dense { grid: g, matrix }
}

/// `op(a)` for a formal symbol sampled at `tau = x = e^t`.
pub fn op_symbol(a: &FormalSymbol, grid: GridSpec) -> GridOperator {
    op_quantize(&SymbolTable::sample(a, grid))
}

/// Matrix-free `op(a) u` using the polynomial structure of `a`.
pub fn apply_symbol(a: &FormalSymbol, u: &GridFunction) -> GridFunction {
    let g = u.grid;
    let (nt, nz) = (g.nt, g.nz);
    let fft = Fft2::new(g);
    let mut hat = u.values.clone();
    fft.transform(&mut hat, false);
    let mut out = vec![C64::new(0.0, 0.0); g.len()];
    let mut groups: std::collections::BTreeMap<(u32, u32), Vec<(u32, &crate::coeffring::CoeffElement)>> =
        Default::default();
    for ((al, j, k), c) in a.terms() {
        groups.entry((al, j)).or_default().push((k, c));
    }
    for ((al, j), cs) in groups {
        let mut v = hat.clone();
        for m in 0..nt {
            let sm = lattice_pow(g.sigma(m), j, m, nt);
            for q in 0..nz {
                v[m * nz + q] *= sm * lattice_pow(g.k(q), al, q, nz);
            }
        }
        fft.transform(&mut v, true);
        for n in 0..nt {
            let t = g.t(n);
            let x = t.exp();
            for p in 0..nz {
                let z = g.z(p);
                let c: C64 = cs.iter().map(|(k, c)| c.eval_unchecked(x, z) * x.powi(*k as i32)).sum();
                out[n * nz + p] += c * v[n * nz + p] / g.len() as f64;
            }
        }
    }
    GridFunction { grid: g, values: out }
}

/// Discrete adjoint in `L^2_b`.
pub fn numeric_adjoint(a: &GridOperator) -> GridOperator {
    a.adjoint()
}

/// `x^{-beta} A x^{beta}` as `diag(e^{-beta t}) A diag(e^{beta t})`.
pub fn conjugate_weight_numeric(a: &GridOperator, beta: f64) -> GridOperator {
    a.sandwich_t(|t| (-beta * t).exp(), |t| (beta * t).exp())
}

/// Smooth transition `0 -> 1` on `[0, 1]` built from `e^{-1/s}`.
pub fn smooth_step(s: f64) -> f64 {
    smooth_step_with(s, 1.0)
}

/// [`smooth_step`] built from `e^{-a/s}`; `a = 2` has the fastest Fourier
/// decay on the grids used here.
pub fn smooth_step_with(s: f64, a: f64) -> f64 {
    let psi = |s: f64| if s > 0.0 { (-a / s).exp() } else { 0.0 };
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let (a, b) = (psi(s), psi(1.0 - s));
        a / (a + b)
    }
}

/// Even bump `phi` with `phi = 1` on `|t| <= inner` and `phi = 0` on `|t| >= outer`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub inner: f64,
    pub outer: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        Self { inner: 1.0, outer: 2.0 }
    }
}

impl CutoffSpec {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner) {
            return Err(Error::InvalidArgument(format!("cut-off needs 0 < inner < outer, got {inner}, {outer}")));
        }
        Ok(Self { inner, outer })
    }

    pub fn eval(&self, t: f64) -> f64 {
        smooth_step((self.outer - t.abs()) / (self.outer - self.inner))
    }
}

/// Uniform lattice `sigma_m = m dsigma`, `m = -n/2 .. n/2 - 1`, stored in FFT order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaLattice {
    pub n: usize,
    pub dsigma: f64,
}

impl Default for SigmaLattice {
    fn default() -> Self {
        Self { n: 1 << 16, dsigma: 1.0 / 64.0 }
    }
}

impl SigmaLattice {
    pub fn sigma(&self, m: usize) -> f64 {
        GridSpec::signed_index(m, self.n) as f64 * self.dsigma
    }

    pub fn sigmas(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.sigma(m)).collect()
    }

    /// Dual step `dt = 2 pi / (n dsigma)`.
    pub fn dt(&self) -> f64 {
        TAU / (self.n as f64 * self.dsigma)
    }

    /// Half-width of the dual `t` window.
    pub fn t_half_width(&self) -> f64 {
        0.5 * self.n as f64 * self.dt()
    }

    pub fn sample(&self, f: impl Fn(f64) -> C64) -> Vec<C64> {
        self.sigmas().into_iter().map(f).collect()
    }
}

/// Kernel cut-off
/// `[H(phi)a](sigma + i gamma) = int e^{-i t (sigma + i gamma)} phi(t) a_check(t) dt`,
/// `a_check(t) = (1/2pi) int e^{i t s} a(s) ds`, evaluated on the lattice by FFT.
pub fn kernel_cutoff(a_line: &[C64], lattice: SigmaLattice, phi: &CutoffSpec, gamma: f64) -> Result<Vec<C64>> {
    if a_line.len() != lattice.n || !lattice.n.is_power_of_two() {
        return Err(Error::ShapeMismatch(format!("{} samples for a lattice of {}", a_line.len(), lattice.n)));
    }
    let half = lattice.t_half_width();
    if phi.outer >= half {
        return Err(Error::CutoffSupport { support: phi.outer, half_width: half });
    }
    let n = lattice.n;
    let mut planner = FftPlanner::new();
    let mut v = a_line.to_vec();
    planner.plan_fft_inverse(n).process(&mut v);
    // v[j] = sum_m a_m e^{i t_j sigma_m}; a_check(t_j) = dsigma/(2pi) v[j]
    let dt = lattice.dt();
    for (j, val) in v.iter_mut().enumerate() {
        let t = GridSpec::signed_index(j, n) as f64 * dt;
        *val *= phi.eval(t) * (gamma * t).exp() * lattice.dsigma / TAU * dt;
    }
    planner.plan_fft_forward(n).process(&mut v);
    Ok(v)
}

/// Log-log slope of `|a - H(phi)a|` at the dyadic points `sigma = 2^j` in `[lo, hi]`.
pub fn cutoff_decay_slope(a_line: &[C64], h_line: &[C64], lattice: SigmaLattice, lo: f64, hi: f64) -> Result<(f64, Vec<(f64, f64)>)> {
    if a_line.len() != lattice.n || h_line.len() != lattice.n {
        return Err(Error::ShapeMismatch("samples do not match the lattice".into()));
    }
    let mut pts = Vec::new();
    let mut s = lo;
    while s <= hi * (1.0 + 1e-12) {
        let m = (s / lattice.dsigma).round() as usize;
        if m >= lattice.n / 2 {
            return Err(Error::InvalidArgument(format!("sigma = {s} is beyond the lattice")));
        }
        pts.push((s, (a_line[m] - h_line[m]).norm()));
        s *= 2.0;
    }
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("need at least two dyadic points".into()));
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(s, r)| (s.ln(), r.max(f64::MIN_POSITIVE).ln())).collect();
    Ok((linalg::linear_fit(&logs).0, pts))
}

/// Kernel-decay statistics of a grid operator near the conic end.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    /// Fitted exponent `p` in `|K| ~ (x + x')^p` over the outer bins.
    pub slope: f64,
    /// `slope < -8`: faster than every tested polynomial rate.
    pub residual_like: bool,
    /// `(x + x', max |K|)` per logarithmic bin.
    pub bins: Vec<(f64, f64)>,
}

pub const RESIDUAL_POLY_ORDER: f64 = 8.0;

/// Fits the decay of `max |A(t, t')|` in `e^t + e^{t'}`.
pub fn residual_decay_report(a: &GridOperator) -> DecayReport {
    let g = a.grid();
    let nt = g.nt;
    let mut kernel = vec![0.0f64; nt * nt];
    match a {
        GridOperator::Modal { blocks, .. } => {
            for b in blocks {
                for i in 0..nt {
                    for j in 0..nt {
                        kernel[i * nt + j] = kernel[i * nt + j].max(b[(i, j)].norm());
                    }
                }
            }
        }
        GridOperator::Dense { matrix, .. } => {
            let nz = g.nz;
            for i in 0..g.len() {
                for j in 0..g.len() {
                    let (a, b) = (i / nz, j / nz);
                    kernel[a * nt + b] = kernel[a * nt + b].max(matrix[(i, j)].norm());
                }
            }
        }
    }
    let r_of = |i: usize, j: usize| g.t(i).exp() + g.t(j).exp();
    let (lo, hi) = (r_of(0, 0).ln(), r_of(nt - 1, nt - 1).ln());
    let nbins = 24;
    let mut best = vec![0.0f64; nbins];
    for i in 0..nt {
        for j in 0..nt {
            let s = (r_of(i, j).ln() - lo) / (hi - lo);
            let b = ((s * nbins as f64) as usize).min(nbins - 1);
            best[b] = best[b].max(kernel[i * nt + j]);
        }
    }
    let bins: Vec<(f64, f64)> = (0..nbins)
        .map(|b| ((lo + (b as f64 + 0.5) * (hi - lo) / nbins as f64).exp(), best[b]))
        .collect();
    let outer: Vec<(f64, f64)> = bins[nbins / 2..]
        .iter()
        .map(|&(r, k)| (r.ln(), k.max(1e-300).ln()))
        .collect();
    let slope = linalg::linear_fit(&outer).0;
    DecayReport { slope, residual_like: slope < -RESIDUAL_POLY_ORDER, bins }
}

pub const TAPER_SHARPNESS: f64 = 2.0;

/// Bump in `t` equal to one on the central `frac / 2` of the window and
/// vanishing outside the central `frac`.
pub fn taper(grid: GridSpec, frac: f64) -> Vec<f64> {
    let mid = 0.5 * (grid.t0 + grid.t1);
    let half = 0.5 * frac * grid.width();
    grid.ts()
        .into_iter()
        .map(|t| smooth_step_with((half - (t - mid).abs()) / (0.5 * half), TAPER_SHARPNESS))
        .collect()
}

/// Rows whose `t` lies in the central `frac` of the window.
pub fn interior_rows(grid: GridSpec, frac: f64) -> Vec<bool> {
    let mid = 0.5 * (grid.t0 + grid.t1);
    let half = 0.5 * frac * grid.width();
    grid.ts().into_iter().map(|t| (t - mid).abs() <= half).collect()
}

/// Tapered trigonometric polynomial `taper(t) sum c e^{i(s t + k z)}` with
/// `s = 2 pi m / (t1 - t0)`; `coeffs` holds `(m, k, c)`.
pub fn band_limited(grid: GridSpec, coeffs: &[(i64, i64, C64)], frac: f64) -> GridFunction {
    let w = taper(grid, frac);
    let base = TAU / grid.width();
    let mut u = GridFunction::from_fn(grid, |t, z| {
        coeffs.iter().map(|&(m, k, c)| c * C64::from_polar(1.0, base * m as f64 * t + k as f64 * z)).sum()
    });
    for n in 0..grid.nt {
        for p in 0..grid.nz {
            u.values[grid.index(n, p)] *= w[n];
        }
    }
    u
}

/// Relative error `||a - b|| / ||b||` restricted to `rows`.
pub fn rel_err_rows(a: &GridFunction, b: &GridFunction, rows: &[bool]) -> f64 {
    let d = a.sub(b).restrict_rows(rows).norm();
    let r = b.restrict_rows(rows).norm();
    if r == 0.0 {
        d
    } else {
        d / r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aniso::AnisotropyVector;

    fn grid() -> GridSpec {
        GridSpec::new(-3.0, 2.0, 64, 8).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1.0, 0.0, 64, 8).is_err());
        assert!(GridSpec::new(0.0, 1.0, 60, 8).is_err());
        assert!(GridSpec::new(0.0, 1.0, 64, 4).is_err());
    }

    #[test]
    fn mellin_mode_is_delta_and_parseval() {
        let g = grid();
        let u = GridFunction::mode(g, 5, 3);
        let h = mellin_forward(&u);
        let big: Vec<usize> = (0..h.len()).filter(|&i| h[i].norm() > 1e-9).collect();
        assert_eq!(big, vec![5 * g.nz + 3]);
        let e: f64 = h.iter().map(|v| v.norm_sqr()).sum();
        assert!((e - u.norm().powi(2)).abs() < 1e-12 * e);
        let back = mellin_inverse(g, &h).unwrap();
        assert!(back.sub(&u).max_abs() < 1e-12);
        assert_eq!(mellin_forward(&GridFunction::zeros(g)).iter().map(|v| v.norm()).sum::<f64>(), 0.0);
    }

    #[test]
    fn basic_quantizations() {
        let g = GridSpec::new(-3.0, 2.0, 256, 8).unwrap();
        let l = AnisotropyVector::new(2, 2, 1).unwrap();
        let id = op_symbol(&FormalSymbol::one(l), g);
        assert!(id.sub(&GridOperator::identity(g)).unwrap().max_abs() < 1e-12);
        let tau = op_symbol(&FormalSymbol::tau(l), g);
        let d = GridOperator::diag_t(g, |t| C64::new(t.exp(), 0.0));
        assert!(tau.sub(&d).unwrap().max_abs() < 1e-10);
        let sig = op_symbol(&FormalSymbol::sigma(l), g);
        let u = band_limited(g, &[(1, 0, C64::new(1.0, 0.0)), (-2, 1, C64::new(0.0, 0.5))], 0.8);
        let v = sig.apply(&u).unwrap();
        // -i d/dt by a centered difference of an independent fine evaluation
        let h = 1e-5;
        let du = GridFunction::from_fn(g, |t, z| {
            let f = |t: f64| {
                let mid = 0.5 * (g.t0 + g.t1);
                let half = 0.4 * g.width();
                let phi = smooth_step_with((half - (t - mid).abs()) / (0.5 * half), 2.0);
                let base = TAU / g.width();
                phi * (C64::from_polar(1.0, base * t) + C64::new(0.0, 0.5) * C64::from_polar(1.0, -2.0 * base * t + z))
            };
            (f(t + h) - f(t - h)) / (2.0 * h) * C64::new(0.0, -1.0)
        });
        assert!(v.sub(&du).max_abs() < 1e-7 * du.max_abs());
    }

    #[test]
    fn modal_dense_agree() {
        let g = grid();
        let l = AnisotropyVector::new(2, 2, 1).unwrap();
        let a = crate::expr::parse_symbol_expr("sigma^2 + zeta^2 + tau^4 + x^-1*sigma", l).unwrap();
        let op = op_symbol(&a, g);
        assert!(op.is_modal());
        let dense = GridOperator::Dense { grid: g, matrix: op.to_dense() };
        let u = band_limited(g, &[(2, 1, C64::new(1.0, 0.0)), (0, -3, C64::new(0.3, 0.0))], 0.8);
        let (a1, a2) = (op.apply(&u).unwrap(), dense.apply(&u).unwrap());
        assert!(a1.sub(&a2).max_abs() < 1e-10 * a1.max_abs());
        let a3 = apply_symbol(&a, &u);
        assert!(a1.sub(&a3).max_abs() < 1e-10 * a1.max_abs());
        // the generic dense path must match too
        let table = SymbolTable::sample(&a, g).expand_z();
        let d2 = op_quantize(&table);
        assert!(d2.sub(&dense).unwrap().max_abs() < 1e-9 * dense.max_abs());
    }

    #[test]
    fn z_dependent_symbol_matches_matrix_free() {
        let g = GridSpec::new(-2.0, 2.0, 32, 8).unwrap();
        let l = AnisotropyVector::new(2, 2, 1).unwrap();
        let a = crate::expr::parse_symbol_expr("exp(i*z)*zeta*sigma + x^-1*exp(-2*i*z)*tau^2 + zeta^2", l).unwrap();
        let op = op_symbol(&a, g);
        assert!(!op.is_modal());
        let u = band_limited(g, &[(1, 1, C64::new(1.0, 0.2)), (-1, 0, C64::new(0.5, 0.0))], 0.8);
        let a1 = op.apply(&u).unwrap();
        let a2 = apply_symbol(&a, &u);
        assert!(a1.sub(&a2).max_abs() < 1e-10 * a1.max_abs());
    }

    #[test]
    fn conjugation_of_diagonal_is_trivial() {
        let g = grid();
        let d = GridOperator::diag_t(g, |t| C64::new(t.exp(), 0.0));
        let c = conjugate_weight_numeric(&d, 1.7);
        assert!(c.sub(&d).unwrap().max_abs() < 1e-12 * d.max_abs());
        let i = GridOperator::identity(g);
        assert_eq!(conjugate_weight_numeric(&i, 0.0), i);
        assert_eq!(numeric_adjoint(&i), i);
    }

    #[test]
    fn cutoff_of_constant_is_constant() {
        let lat = SigmaLattice { n: 1 << 12, dsigma: 1.0 / 16.0 };
        let a = lat.sample(|_| C64::new(1.0, 0.0));
        let h = kernel_cutoff(&a, lat, &CutoffSpec::default(), 0.0).unwrap();
        assert!(h.iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-10));
        let tiny = SigmaLattice { n: 64, dsigma: 4.0 };
        let a = tiny.sample(|_| C64::new(1.0, 0.0));
        assert!(matches!(kernel_cutoff(&a, tiny, &CutoffSpec::default(), 0.0), Err(Error::CutoffSupport { .. })));
    }

    #[test]
    fn decay_report_classifies() {
        let g = GridSpec::new(-2.0, 3.0, 64, 8).unwrap();
        let id = GridOperator::identity(g);
        assert!(!residual_decay_report(&id).residual_like);
        let ts = g.ts();
        let v: Vec<C64> = ts.iter().map(|t| C64::new((-((t - 0.5) / 0.5).powi(2)).exp(), 0.0)).collect();
        let block = DMatrix::from_fn(g.nt, g.nt, |i, j| v[i] * v[j]);
        let r1 = GridOperator::Modal { grid: g, blocks: vec![block; g.nz] };
        assert!(residual_decay_report(&r1).residual_like);
    }

    #[test]
    fn smooth_step_shape() {
        assert_eq!(smooth_step(0.0), 0.0);
        assert_eq!(smooth_step(1.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        let phi = CutoffSpec::default();
        assert_eq!(phi.eval(0.7), 1.0);
        assert_eq!(phi.eval(-2.5), 0.0);
    }
}
