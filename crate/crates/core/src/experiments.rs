//! Model operators on the cone over `S^1` and the numerical studies built on them.
//!
//! With `d = 2`, `Delta_g + x^{2n} = x^{-2}(sigma^2 + zeta^2 + tau^{2+2n})`
//! after quantization, and `(Delta_g)^m + x^{2n} = x^{-2m} A` with `A` of
//! order `2m(m+n)` for `l = (m+n, m+n, m)`.

use nalgebra::DMatrix;
use num::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aniso::AnisotropyVector;
use crate::error::{Error, Result};
use crate::linalg;
use crate::quantize::{op_symbol, GridOperator, GridSpec};
use crate::sobolev::{OrderReduction, ReductionKind};
use crate::symbol::FormalSymbol;
use crate::C64;

/// Dimension of the model cone.
pub const D: i64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    Harmonic,
    Anharmonic { m: u32, n: u32 },
    /// Geometric operator `x^{-weight} op(symbol)`.
    Custom { symbol: FormalSymbol, weight: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOperatorSpec {
    pub kind: ModelKind,
    pub grid: GridSpec,
}

/// A calculus symbol `A`, its quantization, and the power `w` in the
/// geometric operator `x^{-w} op(A)`.
#[derive(Clone, Debug)]
pub struct ModelOperator {
    pub symbol: FormalSymbol,
    pub op: GridOperator,
    pub weight: u32,
}

impl ModelOperator {
    /// `x^{-w} op(A)`.
    pub fn geometric(&self) -> GridOperator {
        let w = self.weight as f64;
        self.op.sandwich_t(|t| (-w * t).exp(), |_| 1.0)
    }
}

/// `sigma^2 - i(d-2) sigma + zeta^2 + tau^4` with `l = (2,2,1)`.
pub fn harmonic_symbol() -> FormalSymbol {
    let l = AnisotropyVector::new(2, 2, 1).unwrap();
    let s = FormalSymbol::sigma(l);
    let lin = s.scale(&crate::coeffring::CRat::from_int(-(D - 2)).mul_i());
    &(&(&s.pow(2) + &lin) + &FormalSymbol::zeta(l).pow(2)) + &FormalSymbol::tau(l).pow(4)
}

pub fn make_harmonic(grid: GridSpec) -> ModelOperator {
    let symbol = harmonic_symbol();
    let op = op_symbol(&symbol, grid);
    ModelOperator { symbol, op, weight: 2 }
}

/// Symbol of `x^{2m} ((Delta_g)^m + x^{2n})`.
///
/// `Delta_g = x^{-2} B`, `B = op(sigma^2 + zeta^2)`, and moving each `x^{-2}`
/// to the left conjugates `B` by a weight: `x^{2j} B x^{-2j} = op(b(sigma + 2ij))`.
/// So `x^{2m} Delta_g^m = B_{(m-1)} # ... # B_{(1)} # B_{(0)}`.
pub fn anharmonic_symbol(m: u32, n: u32) -> Result<FormalSymbol> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("anharmonic oscillator needs m, n >= 1, got ({m}, {n})")));
    }
    let l = AnisotropyVector::new(m + n, m + n, m)?;
    let b = &FormalSymbol::sigma(l).pow(2) + &FormalSymbol::zeta(l).pow(2);
    let mut acc = FormalSymbol::one(l);
    for j in 0..m {
        let shifted = b.conjugate_weight(&num::BigRational::from_integer((-2 * j as i64).into()));
        acc = shifted.sharp(&acc)?;
    }
    Ok(&acc + &FormalSymbol::tau(l).pow(2 * (m + n)))
}

pub fn make_anharmonic(m: u32, n: u32, grid: GridSpec) -> Result<ModelOperator> {
    let symbol = anharmonic_symbol(m, n)?;
    let op = op_symbol(&symbol, grid);
    Ok(ModelOperator { symbol, op, weight: 2 * m })
}

impl ModelOperatorSpec {
    pub fn symbol_and_weight(&self) -> Result<(FormalSymbol, u32)> {
        Ok(match &self.kind {
            ModelKind::Harmonic => (harmonic_symbol(), 2),
            ModelKind::Anharmonic { m, n } => (anharmonic_symbol(*m, *n)?, 2 * m),
            ModelKind::Custom { symbol, weight } => (symbol.clone(), *weight),
        })
    }

    pub fn build(&self) -> Result<ModelOperator> {
        let (symbol, weight) = self.symbol_and_weight()?;
        let op = op_symbol(&symbol, self.grid);
        Ok(ModelOperator { symbol, op, weight })
    }
}

/// Fit of the ground state's decay on the outer quarter of the window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    /// `c` in `|u| ~ e^{-c x}`; positive means exponential decay.
    pub exp_rate: f64,
    /// `g` in `|u| ~ e^{-g x^2}`.
    pub gauss_rate: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    /// Angular frequency of each eigenvalue.
    pub modes: Vec<i64>,
    pub decay: DecayFit,
    pub nt: usize,
    pub nz: usize,
    pub window: (f64, f64),
}

type RadialTerms = Vec<(u32, Vec<(u32, u32, crate::coeffring::CoeffElement)>)>;

/// Terms of `A` grouped by the power `j` of `D_t`, as `(alpha, k, coefficient)`.
fn radial_terms(a: &FormalSymbol) -> Result<RadialTerms> {
    if !a.is_z_independent() {
        return Err(Error::InvalidArgument("spectrum needs a rotation-invariant symbol".into()));
    }
    let mut by_j: std::collections::BTreeMap<u32, Vec<(u32, u32, crate::coeffring::CoeffElement)>> = Default::default();
    for ((al, j, tk), c) in a.terms() {
        if j % 2 == 1 {
            return Err(Error::InvalidArgument("spectrum needs a symbol even in sigma".into()));
        }
        by_j.entry(j).or_default().push((al, tk, c.clone()));
    }
    Ok(by_j.into_iter().collect())
}

/// Symmetric matrix of `x^{1-w} op(A) x^{-1}` on the even subspace of the
/// grid reflected about `t0`, at angular frequency `k`, together with the
/// physical `t` of each basis vector.
fn even_block(a: &FormalSymbol, weight: u32, grid: GridSpec, k: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let nt = grid.nt;
    let big = 2 * nt;
    let width = grid.width();
    let dt = width / nt as f64;
    // doubled periodic grid on [t0 - width, t1): index i <-> t0 - width + i dt,
    // reflection about t0 is i -> (2 nt - i) mod 2 nt
    let t_of = |i: usize| grid.t0 - width + i as f64 * dt;
    let phys = |i: usize| {
        let t = t_of(i);
        if t >= grid.t0 {
            t
        } else {
            2.0 * grid.t0 - t
        }
    };
    let xs: Vec<f64> = (0..big).map(|i| phys(i).exp()).collect();
    let coeffs = radial_terms(a)?;
    let mut full = DMatrix::<f64>::zeros(big, big);
    for (j, cs) in &coeffs {
        // D_t^j on the doubled grid, a circulant: column c_d = (1/N) sum_m s_m^j e^{i s_m d dt}
        let mut kern = vec![0.0; big];
        for (d, kv) in kern.iter_mut().enumerate() {
            let mut acc = 0.0;
            for m in 0..big {
                let s = std::f64::consts::TAU * GridSpec::signed_index(m, big) as f64 / (2.0 * width);
                acc += s.powi(*j as i32) * (std::f64::consts::TAU * (m * d) as f64 / big as f64).cos();
            }
            *kv = acc / big as f64;
        }
        for r in 0..big {
            let x = xs[r];
            let c: f64 = cs
                .iter()
                .map(|(al, tk, ce)| ce.eval_unchecked(x, 0.0).re * x.powi(*tk as i32) * k.powi(*al as i32))
                .sum();
            if c == 0.0 {
                continue;
            }
            for col in 0..big {
                full[(r, col)] += c * kern[(r + big - col) % big];
            }
        }
    }
    let w = weight as f64;
    let s = DMatrix::from_fn(big, big, |r, c| xs[r].powf(1.0 - w) * full[(r, c)] / xs[c]);
    let s = (&s + s.transpose()) * 0.5;
    // orthonormal even basis: indices nt..=2nt (2nt == 0), pairs {i, 2nt - i}
    let idx: Vec<usize> = (nt..=big).map(|i| i % big).collect();
    let refl = |i: usize| (big - i) % big;
    let fixed = |i: usize| refl(i) == i;
    let dim = idx.len();
    let mut out = DMatrix::<f64>::zeros(dim, dim);
    for (a_, &i) in idx.iter().enumerate() {
        for (b_, &j) in idx.iter().enumerate() {
            let (fi, fj) = (fixed(i), fixed(j));
            let v = match (fi, fj) {
                (true, true) => s[(i, j)],
                (true, false) => (s[(i, j)] + s[(i, refl(j))]) / 2f64.sqrt(),
                (false, true) => (s[(i, j)] + s[(refl(i), j)]) / 2f64.sqrt(),
                (false, false) => s[(i, j)] + s[(i, refl(j))],
            };
            out[(a_, b_)] = v;
        }
    }
    let ts = idx.iter().map(|&i| phys(i)).collect();
    Ok((out, ts))
}

/// Lowest `count` eigenvalues of the geometric operator `x^{-w} op(A)`.
///
/// The radial problem is solved per angular frequency on the window
/// reflected about `t0` (even extension: `d_t u = 0` at the inner end,
/// which the regular solutions satisfy up to `O(e^{2|k| t0})`), and
/// symmetrized by the similarity `v = x u`.
pub fn spectrum(spec: &ModelOperatorSpec, count: usize) -> Result<SpectrumReport> {
    let (a, weight) = spec.symbol_and_weight()?;
    let g = spec.grid;
    let qs: Vec<usize> = (0..g.nz).collect();
    let blocks: Vec<Result<(i64, Vec<f64>, DMatrix<f64>, Vec<f64>)>> = qs
        .par_iter()
        .map(|&q| {
            let k = g.k(q);
            // both signs at the Nyquist bin give the same even-in-zeta block only for even powers;
            // use |k| which matches the averaging rule for even symbols
            let (m, ts) = even_block(&a, weight, g, k.abs())?;
            let (vals, vecs) = linalg::symmetric_eigen(&m);
            Ok((k as i64, vals, vecs, ts))
        })
        .collect();
    let mut all: Vec<(f64, i64, usize)> = Vec::new();
    let mut store = Vec::new();
    for (bi, b) in blocks.into_iter().enumerate() {
        let (k, vals, vecs, ts) = b?;
        for v in vals.iter().take(count) {
            all.push((*v, k, bi));
        }
        store.push((vals, vecs, ts));
    }
    if all.iter().any(|(v, _, _)| !v.is_finite()) {
        return Err(Error::Numerical("eigenvalue solver did not converge".into()));
    }
    all.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    all.truncate(count);
    let ground = all.first().ok_or_else(|| Error::Numerical("empty spectrum".into()))?;
    let (_, vecs, ts) = &store[ground.2];
    let decay = fit_decay(&vecs.column(0).iter().copied().collect::<Vec<_>>(), ts, g);
    Ok(SpectrumReport {
        eigenvalues: all.iter().map(|e| e.0).collect(),
        modes: all.iter().map(|e| e.1).collect(),
        decay,
        nt: g.nt,
        nz: g.nz,
        window: (g.t0, g.t1),
    })
}

/// Ground state `u = v / x` fitted on the outer quarter of the window.
fn fit_decay(v: &[f64], ts: &[f64], g: GridSpec) -> DecayFit {
    let u: Vec<(f64, f64)> = v.iter().zip(ts).map(|(v, t)| (t.exp(), (v / t.exp()).abs())).collect();
    let peak = u.iter().map(|p| p.1).fold(0.0, f64::max);
    let cut = g.t1 - 0.25 * g.width();
    let pts: Vec<(f64, f64)> = u
        .iter()
        .zip(ts)
        .filter(|((_, a), t)| **t >= cut && *a > 1e-12 * peak)
        .map(|(p, _)| *p)
        .collect();
    let lin: Vec<(f64, f64)> = pts.iter().map(|&(x, a)| (x, a.ln())).collect();
    let quad: Vec<(f64, f64)> = pts.iter().map(|&(x, a)| (x * x, a.ln())).collect();
    DecayFit { exp_rate: -linalg::linear_fit(&lin).0, gauss_rate: -linalg::linear_fit(&quad).0, points: pts.len() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MappingRow {
    pub s: f64,
    pub alpha: f64,
    pub s_shift: f64,
    pub alpha_shift: f64,
    pub nt: usize,
    pub norm: f64,
}

/// Operator norms of the geometric operator
/// `x^{alpha} H^{s} -> x^{alpha - alpha_shift} H^{s - s_shift}` across `nts`,
/// measured with the `x`-dependent order reduction.
///
/// The weight is moved into the symbol first: `x^{-alpha} op(A) x^{alpha} =
/// op(A(sigma - i alpha))` holds exactly, while multiplying by `e^{alpha t}`
/// on a periodic window would put a jump at the seam.
pub fn mapping_shift_study(
    spec: &ModelOperatorSpec,
    s_list: &[f64],
    alpha_list: &[f64],
    shifts: &[(f64, f64)],
    nts: &[usize],
) -> Result<Vec<MappingRow>> {
    let (symbol, weight) = spec.symbol_and_weight()?;
    let l = symbol.anisotropy();
    let w = weight as f64;
    let mut rows = Vec::new();
    for &nt in nts {
        let grid = GridSpec::new(spec.grid.t0, spec.grid.t1, nt, spec.grid.nz)?;
        let mut sources = Vec::with_capacity(s_list.len());
        for &s in s_list {
            sources.push(OrderReduction::new(s, l, ReductionKind::Calculus).inverse_operator(grid)?);
        }
        for &alpha in alpha_list {
            let beta = BigRational::from_float(alpha)
                .ok_or_else(|| Error::InvalidArgument(format!("weight {alpha} is not finite")))?;
            let op = op_symbol(&symbol.conjugate_weight(&beta), grid);
            for &(s_shift, alpha_shift) in shifts {
                // e^{(alpha_shift - w) t} op(A_alpha): the identity when the weight shift is w
                let d = alpha_shift - w;
                let mid = if d == 0.0 { op.clone() } else { op.sandwich_t(move |t| (d * t).exp(), |_| 1.0) };
                for (&s, src) in s_list.iter().zip(&sources) {
                    let dst = OrderReduction::new(s - s_shift, l, ReductionKind::Calculus).operator(grid);
                    let norm = dst.compose(&mid)?.compose(src)?.norm();
                    rows.push(MappingRow { s, alpha, s_shift, alpha_shift, nt, norm });
                }
            }
        }
    }
    Ok(rows)
}

/// The shifts `(s, alpha) -> (s - mu, alpha - w)` of the geometric operator.
pub fn natural_shift(spec: &ModelOperatorSpec) -> Result<(f64, f64)> {
    let (symbol, weight) = spec.symbol_and_weight()?;
    Ok((symbol.try_order()? as f64, weight as f64))
}

/// `exp(beta t)`-conjugate `x^{-beta} A x^{beta}` of a dense matrix on an explicit `t` list.
pub fn conjugate_dense(a: &DMatrix<C64>, ts: &[f64], beta: f64) -> DMatrix<C64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * (-beta * ts[i]).exp() * (beta * ts[j]).exp())
}

/// Even-subspace matrix used by [`spectrum`], exposed for similarity studies.
pub fn radial_block(spec: &ModelOperatorSpec, k: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (a, weight) = spec.symbol_and_weight()?;
    even_block(&a, weight, spec.grid, k.abs())
}
