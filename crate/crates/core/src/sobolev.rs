//! Weighted anisotropic Sobolev norms on the grid.
//!
//! `||u||_{s,alpha} = || op(r_s) (x^{-alpha} u) ||_{L^2_b}` with an order
//! reduction `r_s`:
//!
//! * [`ReductionKind::BSobolev`]: the Fourier multiplier
//!   `<(zeta, sigma, lambda0)>^s_{(l1,l2,l1)}` (no `x` growth);
//! * [`ReductionKind::Calculus`]: the left-quantized symbol
//!   `<(zeta, sigma, tau)>^s_l` at `tau = x`, which also measures growth at
//!   the conic end.

use serde::{Deserialize, Serialize};

use crate::aniso::{aniso_bracket, japanese_bracket, AnisotropyVector, CovarPoint};
use crate::error::{Error, Result};
use crate::quantize::{mellin_forward, op_quantize, GridFunction, GridOperator, GridSpec, SymbolTable};
use crate::C64;

pub const DEFAULT_LAMBDA0: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevParams {
    pub s: f64,
    pub alpha: f64,
}

impl SobolevParams {
    pub fn new(s: f64, alpha: f64) -> Self {
        Self { s, alpha }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReductionKind {
    BSobolev { lambda0: f64 },
    Calculus,
    /// Isotropic `<(zeta, sigma, lambda0)>^s`, the reference scale for inclusions.
    Isotropic { lambda0: f64 },
}

impl Default for ReductionKind {
    fn default() -> Self {
        Self::BSobolev { lambda0: DEFAULT_LAMBDA0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderReduction {
    pub s: f64,
    pub l: AnisotropyVector,
    pub kind: ReductionKind,
}

impl OrderReduction {
    pub fn new(s: f64, l: AnisotropyVector, kind: ReductionKind) -> Self {
        Self { s, l, kind }
    }

    /// The anisotropy used by the bracket: `(l1, l2, l1)` for the `b` scale.
    fn bracket_weights(&self) -> AnisotropyVector {
        match self.kind {
            ReductionKind::BSobolev { .. } => AnisotropyVector::new(self.l.l1(), self.l.l2(), self.l.l1()).unwrap(),
            ReductionKind::Calculus => self.l,
            ReductionKind::Isotropic { .. } => AnisotropyVector::isotropic(),
        }
    }

    /// Symbol value at `(zeta, sigma)` and radial variable `x`.
    pub fn symbol(&self, zeta: f64, sigma: f64, x: f64) -> f64 {
        let w = self.bracket_weights();
        let third = match self.kind {
            ReductionKind::BSobolev { lambda0 } | ReductionKind::Isotropic { lambda0 } => lambda0,
            ReductionKind::Calculus => x,
        };
        let p = CovarPoint::new(zeta, sigma, third.abs()).unwrap();
        let b = match self.kind {
            ReductionKind::Isotropic { .. } => japanese_bracket(&p),
            _ => aniso_bracket(&p, w),
        };
        b.powf(self.s)
    }

    pub fn is_multiplier(&self) -> bool {
        !matches!(self.kind, ReductionKind::Calculus)
    }

    fn table(&self, grid: GridSpec, power: f64) -> SymbolTable {
        SymbolTable::from_fn(grid, true, |_, _, sigma, k, tau| {
            C64::new(self.symbol(k, sigma, tau).powf(power), 0.0)
        })
    }

    pub fn operator(&self, grid: GridSpec) -> GridOperator {
        op_quantize(&self.table(grid, 1.0))
    }

    /// Exact inverse: the reciprocal multiplier, or a block LU inverse for
    /// the `x`-dependent reduction.
    pub fn inverse_operator(&self, grid: GridSpec) -> Result<GridOperator> {
        if self.is_multiplier() {
            Ok(op_quantize(&self.table(grid, -1.0)))
        } else {
            self.operator(grid).inverse()
        }
    }

    /// `||op(r) v||`; Fourier-side for multipliers.
    pub fn apply_norm(&self, v: &GridFunction) -> Result<f64> {
        if self.is_multiplier() {
            let g = v.grid;
            let hat = mellin_forward(v);
            let mut acc = 0.0;
            for m in 0..g.nt {
                for q in 0..g.nz {
                    let r = nyquist_avg(g, m, q, |k, s| self.symbol(k, s, 1.0));
                    acc += (r * hat[m * g.nz + q].norm()).powi(2);
                }
            }
            Ok(acc.sqrt())
        } else {
            Ok(self.operator(v.grid).apply(v)?.norm())
        }
    }
}

fn nyquist_avg(g: GridSpec, m: usize, q: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    let s = g.sigma(m);
    let k = g.k(q);
    let ss: &[f64] = if m == g.nt / 2 { &[s, -s] } else { &[s] };
    let ks: &[f64] = if q == g.nz / 2 { &[k, -k] } else { &[k] };
    let mut acc = 0.0;
    for &a in ss {
        for &b in ks {
            acc += f(b, a);
        }
    }
    acc / (ss.len() * ks.len()) as f64
}

/// `||u||_{s, alpha}` with the default `b`-Sobolev reduction (`lambda0 = 10`).
pub fn sobolev_norm(u: &GridFunction, p: SobolevParams, l: AnisotropyVector) -> f64 {
    sobolev_norm_with(u, p, l, ReductionKind::default()).expect("multiplier norms cannot fail")
}

pub fn sobolev_norm_with(u: &GridFunction, p: SobolevParams, l: AnisotropyVector, kind: ReductionKind) -> Result<f64> {
    let v = u.weight(-p.alpha);
    OrderReduction::new(p.s, l, kind).apply_norm(&v)
}

/// Two-sided pointwise constants of `<y>_{(l1,l2,l1)}` against `<y>`:
/// `c <y>^{1/L} <= <y>_l <= C <y>^L`, `L = l1 + l2`, with `y = (zeta, sigma, lambda0)`.
pub fn bracket_constants(l: AnisotropyVector, lambda0: f64, grid: Option<GridSpec>) -> (f64, f64) {
    let w = AnisotropyVector::new(l.l1(), l.l2(), l.l1()).unwrap();
    let big_l = (l.l1() + l.l2()) as f64;
    let mut pts = Vec::new();
    for i in -24..=48 {
        let r = 10f64.powf(i as f64 / 8.0);
        for a in 0..16 {
            let th = a as f64 * std::f64::consts::PI / 16.0;
            pts.push((r * th.cos(), r * th.sin()));
        }
    }
    if let Some(g) = grid {
        for m in 0..g.nt {
            for q in 0..g.nz {
                pts.push((g.k(q), g.sigma(m)));
            }
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (zeta, sigma) in pts {
        let p = CovarPoint::new(zeta, sigma, lambda0.abs()).unwrap();
        let (a, b) = (aniso_bracket(&p, w), japanese_bracket(&p));
        lo = lo.min(a / b.powf(1.0 / big_l));
        hi = hi.max(a / b.powf(big_l));
    }
    (0.9 * lo, 1.1 * hi)
}

/// Outcome of the inclusion check
/// `H^{s L}_b -> H^{s;l}_b -> H^{s/L}_b` (`s >= 0`; reversed for `s < 0`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub s: f64,
    pub l: [u32; 2],
    /// Pointwise sandwich constants `(c, C)`.
    pub constants: (f64, f64),
    /// Largest observed `||u||_{weaker} / ||u||_{stronger}` for the two inclusions.
    pub empirical: (f64, f64),
    /// Bounds implied by the pointwise constants.
    pub bounds: (f64, f64),
    pub trials: usize,
    pub holds: bool,
}

/// Checks the inclusion chain on the given functions.
pub fn embedding_check(l: AnisotropyVector, s: f64, lambda0: f64, functions: &[GridFunction]) -> Result<EmbeddingReport> {
    let big_l = (l.l1() + l.l2()) as f64;
    let grid = functions.first().map(|u| u.grid);
    let (c, cc) = bracket_constants(l, lambda0, grid);
    let aniso = ReductionKind::BSobolev { lambda0 };
    let iso = ReductionKind::Isotropic { lambda0 };
    let mut e1: f64 = 0.0;
    let mut e2: f64 = 0.0;
    for u in functions {
        let p = |s| SobolevParams::new(s, 0.0);
        let n_mid = sobolev_norm_with(u, p(s), l, aniso)?;
        let n_low = sobolev_norm_with(u, p(s / big_l), l, iso)?;
        let n_high = sobolev_norm_with(u, p(s * big_l), l, iso)?;
        if s >= 0.0 {
            e1 = e1.max(n_mid / n_high);
            e2 = e2.max(n_low / n_mid);
        } else {
            e1 = e1.max(n_mid / n_low);
            e2 = e2.max(n_high / n_mid);
        }
    }
    // s >= 0: <y>_l^s <= C^s <y>^{sL},  <y>^{s/L} <= c^{-s} <y>_l^s
    // s <  0: <y>_l^s <= c^s <y>^{s/L},  <y>^{sL} <= C^{-s} <y>_l^s
    let bounds = if s >= 0.0 { (cc.powf(s), c.powf(-s)) } else { (c.powf(s), cc.powf(-s)) };
    let holds = e1 <= bounds.0 * (1.0 + 1e-12) && e2 <= bounds.1 * (1.0 + 1e-12);
    Ok(EmbeddingReport {
        s,
        l: [l.l1(), l.l2()],
        constants: (c, cc),
        empirical: (e1, e2),
        bounds,
        trials: functions.len(),
        holds,
    })
}

/// Norm of `A : x^alpha H^{s} -> x^{alpha + gamma} H^{s - mu}`:
/// `|| R_{s-mu} x^{-(alpha+gamma)} A x^{alpha} R_s^{-1} ||`.
pub fn mapping_bound(
    a: &GridOperator,
    mu: f64,
    gamma: f64,
    p: SobolevParams,
    l: AnisotropyVector,
    kind: ReductionKind,
) -> Result<f64> {
    Ok(mapping_operator(a, mu, gamma, p, l, kind)?.norm())
}

pub fn mapping_operator(
    a: &GridOperator,
    mu: f64,
    gamma: f64,
    p: SobolevParams,
    l: AnisotropyVector,
    kind: ReductionKind,
) -> Result<GridOperator> {
    let g = a.grid();
    let src = OrderReduction::new(p.s, l, kind).inverse_operator(g)?;
    let dst = OrderReduction::new(p.s - mu, l, kind).operator(g);
    let (al, out) = (p.alpha, p.alpha + gamma);
    let mid = a.sandwich_t(|t| (-out * t).exp(), |t| (al * t).exp());
    dst.compose(&mid)?.compose(&src)
}

/// Singular values of the inclusion `H^{s} -> H^{s'}` (`s > s'`), a finite
/// stand-in for compactness: they decay towards the high frequencies.
pub fn embedding_singular_values(grid: GridSpec, s: f64, s_prime: f64, l: AnisotropyVector) -> Result<Vec<f64>> {
    if s <= s_prime {
        return Err(Error::InvalidArgument(format!("need s > s', got {s} <= {s_prime}")));
    }
    let kind = ReductionKind::default();
    let mut out = Vec::with_capacity(grid.len());
    for m in 0..grid.nt {
        for q in 0..grid.nz {
            let r = |s| nyquist_avg(grid, m, q, |k, sg| OrderReduction::new(s, l, kind).symbol(k, sg, 1.0));
            out.push(r(s_prime) / r(s));
        }
    }
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l21() -> AnisotropyVector {
        AnisotropyVector::new(2, 1, 2).unwrap()
    }

    fn grid() -> GridSpec {
        GridSpec::new(-2.0, 2.0, 32, 8).unwrap()
    }

    #[test]
    fn zero_order_is_l2() {
        let g = grid();
        let u = GridFunction::from_fn(g, |t, z| C64::new((-t * t).exp() * (1.0 + z.cos()), t.sin()));
        let n = sobolev_norm(&u, SobolevParams::new(0.0, 0.0), l21());
        assert!((n - u.norm()).abs() < 1e-12 * n);
        assert_eq!(sobolev_norm(&GridFunction::zeros(g), SobolevParams::new(3.0, 1.0), l21()), 0.0);
    }

    #[test]
    fn mode_ratio_is_bracket_power() {
        let g = grid();
        let (m, q) = (5, 3);
        let u = GridFunction::mode(g, m, q);
        let n2 = sobolev_norm(&u, SobolevParams::new(2.0, 0.0), l21());
        let n0 = sobolev_norm(&u, SobolevParams::new(0.0, 0.0), l21());
        let p = CovarPoint::new(g.k(q), g.sigma(m), DEFAULT_LAMBDA0).unwrap();
        let expect = aniso_bracket(&p, AnisotropyVector::new(2, 1, 2).unwrap()).powi(2);
        assert!((n2 / n0 - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn multiplier_inverse_is_exact() {
        let g = grid();
        let r = OrderReduction::new(1.5, l21(), ReductionKind::default());
        let prod = r.operator(g).compose(&r.inverse_operator(g).unwrap()).unwrap();
        assert!(prod.sub(&GridOperator::identity(g)).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn identity_maps_with_norm_one() {
        let g = grid();
        let id = GridOperator::identity(g);
        for kind in [ReductionKind::default(), ReductionKind::Calculus] {
            let n = mapping_bound(&id, 0.0, 0.0, SobolevParams::new(1.0, 0.5), l21(), kind).unwrap();
            assert!((n - 1.0).abs() < 1e-8, "{kind:?}: {n}");
        }
    }

    #[test]
    fn compactness_proxy_decays() {
        let sv = embedding_singular_values(grid(), 2.0, 1.0, l21()).unwrap();
        assert!(sv.last().unwrap() < &(0.2 * sv[0]));
        assert!(embedding_singular_values(grid(), 1.0, 1.0, l21()).is_err());
    }
}
