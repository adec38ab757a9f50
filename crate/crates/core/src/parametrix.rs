//! Full ellipticity and operator-level Neumann parametrices.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aniso::{aniso_bracket, hemisphere_sample, CovarPoint};
use crate::error::{Error, Result};
use crate::linalg;
use crate::quantize::{interior_rows, op_quantize, smooth_step, GridOperator, GridSpec, SymbolTable};
use crate::sobolev::{OrderReduction, ReductionKind, SobolevParams};
use crate::symbol::FormalSymbol;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub zeta: f64,
    pub sigma: f64,
    pub tau: f64,
    /// Radial position; `None` is the limit `x -> oo`.
    pub x: Option<f64>,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub fully_elliptic: bool,
    pub min_modulus: f64,
    pub witness: Witness,
    pub samples_used: usize,
    pub order: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityOptions {
    /// Hemisphere resolution.
    pub n: usize,
    pub tol: f64,
    /// Smallest radius `R`; `u = 1/x` runs over `{0}` and a log grid in `[1e-6, 1/R]`.
    pub r_min: f64,
    pub u_samples: usize,
}

impl Default for EllipticityOptions {
    fn default() -> Self {
        Self { n: 24, tol: 1e-8, r_min: 1.0, u_samples: 25 }
    }
}

/// Minimum of `|sym_e(a)|` over hemisphere points, `z` samples and `u = 1/x` samples.
pub fn check_full_ellipticity(a: &FormalSymbol, opts: &EllipticityOptions) -> Result<EllipticityReport> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {}", opts.tol)));
    }
    if !(opts.r_min > 0.0) {
        return Err(Error::InvalidArgument(format!("R must be > 0, got {}", opts.r_min)));
    }
    let e = a.sym_e()?;
    let l = a.anisotropy();
    let pts = hemisphere_sample(l, opts.n.max(2));
    let zs: Vec<f64> = if e.symbol.is_z_independent() {
        vec![0.0]
    } else {
        let modes = e.symbol.terms().map(|(_, c)| c.max_abs_mode()).max().unwrap_or(0) as usize;
        let nzs = (4 * modes + 1).max(16);
        (0..nzs).map(|i| std::f64::consts::TAU * i as f64 / nzs as f64).collect()
    };
    let mut xs: Vec<Option<f64>> = vec![None];
    let u_hi = 1.0 / opts.r_min;
    let u_lo = 1e-6f64.min(u_hi);
    let k = opts.u_samples.max(2);
    for i in 0..k {
        let u = u_lo * (u_hi / u_lo).powf(i as f64 / (k - 1) as f64);
        xs.push(Some(1.0 / u));
    }
    let mut best = (f64::INFINITY, Witness { zeta: 0.0, sigma: 0.0, tau: 0.0, x: None, z: 0.0 });
    let mut used = 0usize;
    for &x in &xs {
        for &z in &zs {
            for p in &pts {
                let v = match x {
                    None => e.symbol.eval_at_infinity(z, p.zeta, p.sigma, p.tau()),
                    Some(x) => e.eval(x, z, p.zeta, p.sigma, p.tau()),
                }
                .norm();
                used += 1;
                if v < best.0 {
                    best = (v, Witness { zeta: p.zeta, sigma: p.sigma, tau: p.tau(), x, z });
                }
            }
        }
    }
    Ok(EllipticityReport {
        fully_elliptic: best.0 > opts.tol,
        min_modulus: best.0,
        witness: best.1,
        samples_used: used,
        order: e.mu,
    })
}

/// Excision `chi`: `0` for `<y>_l <= 1`, `1` for `<y>_l >= 2`.
pub fn excision(bracket: f64) -> f64 {
    smooth_step(bracket - 1.0)
}

/// Fraction of the window at each end used to close `log x` up periodically.
pub const COLLAR: f64 = 0.15;

/// Smooth periodic stand-in for `log x` on the window: equal to `t` away from
/// collars of width `COLLAR * (t1 - t0)` at both ends, and bending back from
/// `t1 - d` to `t0 + d` across the seam so that `x` has no jump there.
pub fn periodized_log_radius(grid: GridSpec, t: f64) -> f64 {
    let w = grid.width();
    let d = COLLAR * w;
    let tt = if t < grid.t0 + d { t + w } else { t };
    tt - w * smooth_step((tt - (grid.t1 - d)) / (2.0 * d))
}

/// `op(a)` with `x = tau = exp(periodized_log_radius(t))`.
pub fn op_symbol_periodized(a: &FormalSymbol, grid: GridSpec) -> GridOperator {
    op_quantize(&SymbolTable::from_fn(grid, a.is_z_independent(), |t, z, sigma, k, _| {
        let x = periodized_log_radius(grid, t).exp();
        a.eval_unchecked(x, z, k, C64::new(sigma, 0.0), x)
    }))
}

/// Principal inverse `b0 = chi / sym_e(a)`, sampled at `tau = x = exp(periodized_log_radius(t))`.
pub fn principal_inverse_table(a: &FormalSymbol, grid: GridSpec) -> Result<SymbolTable> {
    let e = a.sym_e()?;
    let l = a.anisotropy();
    let singular = std::sync::atomic::AtomicBool::new(false);
    let table = SymbolTable::from_fn(grid, e.symbol.is_z_independent(), |t, z, sigma, k, _| {
        let x = periodized_log_radius(grid, t).exp();
        let chi = excision(aniso_bracket(&CovarPoint::new(k, sigma, x).unwrap(), l));
        if chi == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let v = e.eval(x, z, k, sigma, x);
        if v.norm() == 0.0 || !v.re.is_finite() {
            singular.store(true, std::sync::atomic::Ordering::Relaxed);
            return C64::new(0.0, 0.0);
        }
        chi / v
    });
    if singular.into_inner() {
        return Err(Error::SingularPrincipalInverse);
    }
    Ok(table)
}

/// Interior test-space restriction `M_out T M_in F_low` used for remainder norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorSpec {
    /// Central fraction of the window kept on input and output.
    pub frac: f64,
    /// Fraction of the resolved band kept on input.
    pub band: f64,
}

impl Default for InteriorSpec {
    fn default() -> Self {
        Self { frac: 0.5, band: 0.25 }
    }
}

fn interior_projectors(grid: GridSpec, spec: InteriorSpec) -> (GridOperator, GridOperator) {
    let rows = interior_rows(grid, spec.frac);
    let mask = GridOperator::diag_t(grid, |t| {
        let n = ((t - grid.t0) / grid.dt()).round() as usize;
        C64::new(if rows[n.min(grid.nt - 1)] { 1.0 } else { 0.0 }, 0.0)
    });
    let smax = spec.band * grid.sigma_max();
    let kmax = spec.band * (grid.nz / 2) as f64;
    let low = op_quantize(&SymbolTable::from_fn(grid, true, |_, _, s, k, _| {
        C64::new(if s.abs() <= smax && k.abs() <= kmax { 1.0 } else { 0.0 }, 0.0)
    }));
    (mask, low)
}

/// `|| M_out T M_in F_low ||`.
pub fn interior_norm(t: &GridOperator, spec: InteriorSpec) -> Result<f64> {
    let (mask, low) = interior_projectors(t.grid(), spec);
    Ok(mask.compose(t)?.compose(&mask)?.compose(&low)?.norm())
}

pub struct ParametrixBundle {
    pub b0: GridOperator,
    /// `P_N` for the largest requested `N`.
    pub p_last: GridOperator,
    pub n_max: usize,
    /// Interior `|| A P_N - I ||`, `N = 1..=n_max`.
    pub right_remainders: Vec<f64>,
    /// Interior `|| P_N A - I ||`.
    pub left_remainders: Vec<f64>,
    pub ellipticity: EllipticityReport,
}

/// Neumann parametrix `P_N = B0 sum_{k<N} (I - A B0)^k`, `B0 = op(chi / sym_e(a))`.
///
/// `A P_N - I = -(I - A B0)^N` and `P_N A - I = -(I - B0 A)^N`, so the
/// remainders are tracked as powers.
pub fn build_parametrix(
    a: &FormalSymbol,
    grid: GridSpec,
    n_max: usize,
    interior: InteriorSpec,
    opts: &EllipticityOptions,
) -> Result<ParametrixBundle> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("Neumann order must be >= 1".into()));
    }
    let ell = check_full_ellipticity(a, opts)?;
    if !ell.fully_elliptic {
        return Err(Error::NotFullyElliptic { min_modulus: ell.min_modulus });
    }
    let b0 = op_quantize(&principal_inverse_table(a, grid)?);
    let op_a = op_symbol_periodized(a, grid);
    let id = GridOperator::identity(grid);
    let r_right = id.sub(&op_a.compose(&b0)?)?;
    let r_left = id.sub(&b0.compose(&op_a)?)?;
    let mut pow_r = r_right.clone();
    let mut pow_l = r_left.clone();
    let mut sum = id.clone();
    let mut rights = Vec::with_capacity(n_max);
    let mut lefts = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        rights.push(interior_norm(&pow_r, interior)?);
        lefts.push(interior_norm(&pow_l, interior)?);
        if n < n_max {
            sum = sum.add(&pow_r)?;
            pow_r = pow_r.compose(&r_right)?;
            pow_l = pow_l.compose(&r_left)?;
        }
    }
    let p_last = b0.compose(&sum)?;
    Ok(ParametrixBundle { b0, p_last, n_max, right_remainders: rights, left_remainders: lefts, ellipticity: ell })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FredholmReport {
    pub dim_ker: usize,
    pub dim_coker: usize,
    /// Smallest singular values, ascending.
    pub smallest: Vec<f64>,
    pub median: f64,
    pub threshold: f64,
}

pub const FREDHOLM_REL_THRESHOLD: f64 = 1e-8;

/// Kernel/cokernel estimate from singular values of square blocks.
pub fn fredholm_probe_blocks(blocks: &[DMatrix<C64>]) -> FredholmReport {
    let mut sv: Vec<f64> = blocks.par_iter().flat_map(linalg::singular_values).collect();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    sv.sort_by(|a, b| a.total_cmp(b));
    let median = if sv.is_empty() { 0.0 } else { sv[sv.len() / 2] };
    let threshold = FREDHOLM_REL_THRESHOLD * median;
    let small = sv.iter().filter(|&&s| s <= threshold).count();
    // a rank-r map from C^cols to C^rows has kernel cols - r and cokernel rows - r
    let rank = sv.len() - small;
    FredholmReport {
        dim_ker: cols - rank,
        dim_coker: rows - rank,
        smallest: sv.iter().take(8).copied().collect(),
        median,
        threshold,
    }
}

/// Fredholm probe of `A` on `x^alpha H^s`: singular values of
/// `R_s x^{-alpha} A x^{alpha} R_s^{-1}` (a similarity, so kernel dimensions are unchanged).
pub fn fredholm_probe(a: &GridOperator, p: SobolevParams, l: crate::aniso::AnisotropyVector) -> Result<FredholmReport> {
    let g = a.grid();
    let r = OrderReduction::new(p.s, l, ReductionKind::default());
    let scaled = r
        .operator(g)
        .compose(&a.sandwich_t(|t| (-p.alpha * t).exp(), |t| (p.alpha * t).exp()))?
        .compose(&r.inverse_operator(g)?)?;
    Ok(match &scaled {
        GridOperator::Dense { matrix, .. } => fredholm_probe_blocks(std::slice::from_ref(matrix)),
        GridOperator::Modal { blocks, .. } => fredholm_probe_blocks(blocks),
    })
}
