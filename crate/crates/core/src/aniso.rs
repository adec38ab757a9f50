//! Anisotropic homogeneity bookkeeping on the covariable space `(zeta, sigma, tau)`.
//!
//! The weights `l = (l1, l2, l3)` assign scaling degree `l1` to `zeta`, `l2`
//! to `sigma` and `l3` to `tau`; the anisotropic norm `|.|_l` is homogeneous
//! of degree one under `(zeta, sigma, tau) -> (r^l1 zeta, r^l2 sigma, r^l3 tau)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anisotropy weights `(l1, l2, l3)`. Serialized as the JSON array `[l1,l2,l3]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 3]", into = "[u32; 3]")]
pub struct AnisotropyVector {
    l1: u32,
    l2: u32,
    l3: u32,
}

impl AnisotropyVector {
    pub fn new(l1: u32, l2: u32, l3: u32) -> Result<Self> {
        if l1 == 0 || l2 == 0 || l3 == 0 {
            return Err(Error::InvalidAnisotropy([l1, l2, l3]));
        }
        Ok(Self { l1, l2, l3 })
    }

    /// Anisotropy admissible for the calculus on a whole manifold, which
    /// weights `zeta` and `sigma` alike.
    pub fn global(l1: u32, l3: u32) -> Result<Self> {
        Self::new(l1, l1, l3)
    }

    /// Enforces `l1 == l2`.
    pub fn require_global(self) -> Result<Self> {
        if self.l1 != self.l2 {
            return Err(Error::NotGlobalAnisotropy(self.as_array()));
        }
        Ok(self)
    }

    pub fn isotropic() -> Self {
        Self { l1: 1, l2: 1, l3: 1 }
    }

    pub fn l1(self) -> u32 {
        self.l1
    }
    pub fn l2(self) -> u32 {
        self.l2
    }
    pub fn l3(self) -> u32 {
        self.l3
    }

    pub fn as_array(self) -> [u32; 3] {
        [self.l1, self.l2, self.l3]
    }

    /// `l1 + l2 + l3`.
    pub fn total(self) -> u32 {
        self.l1 + self.l2 + self.l3
    }

    /// Anisotropic order `l1 alpha + l2 j + l3 k` of the monomial `zeta^alpha sigma^j tau^k`.
    pub fn weight(self, alpha: u32, j: u32, k: u32) -> u64 {
        self.l1 as u64 * alpha as u64 + self.l2 as u64 * j as u64 + self.l3 as u64 * k as u64
    }

    fn exponents(self) -> ([u32; 3], u32) {
        let (a, b, c) = (self.l1, self.l2, self.l3);
        ([2 * b * c, 2 * a * c, 2 * a * b], 2 * a * b * c)
    }
}

impl TryFrom<[u32; 3]> for AnisotropyVector {
    type Error = Error;
    fn try_from(v: [u32; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<AnisotropyVector> for [u32; 3] {
    fn from(l: AnisotropyVector) -> Self {
        l.as_array()
    }
}

impl std::fmt::Display for AnisotropyVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{},{}]", self.l1, self.l2, self.l3)
    }
}

/// A point `(zeta, sigma, tau)` with `tau >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CovarPoint {
    pub zeta: f64,
    pub sigma: f64,
    tau: f64,
}

impl CovarPoint {
    pub fn new(zeta: f64, sigma: f64, tau: f64) -> Result<Self> {
        if !(tau >= 0.0) {
            return Err(Error::NegativeTau(tau));
        }
        Ok(Self { zeta, sigma, tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `(r^l1 zeta, r^l2 sigma, r^l3 tau)`.
    pub fn dilate(&self, rho: f64, l: AnisotropyVector) -> Self {
        Self {
            zeta: rho.powi(l.l1 as i32) * self.zeta,
            sigma: rho.powi(l.l2 as i32) * self.sigma,
            tau: rho.powi(l.l3 as i32) * self.tau,
        }
    }
}

impl std::ops::Add for CovarPoint {
    type Output = CovarPoint;
    fn add(self, rhs: CovarPoint) -> CovarPoint {
        CovarPoint {
            zeta: self.zeta + rhs.zeta,
            sigma: self.sigma + rhs.sigma,
            tau: self.tau + rhs.tau,
        }
    }
}

/// `(offset + sum_j |y_j|^{e_j})^{1/root}` without intermediate overflow.
fn power_sum_root(offset: f64, y: [f64; 3], exps: [u32; 3], root: u32) -> f64 {
    if exps.iter().all(|&e| e <= 64) {
        let sum: f64 = offset
            + y.iter()
                .zip(exps)
                .map(|(v, e)| v.abs().powi(e as i32))
                .sum::<f64>();
        if sum == 0.0 {
            return 0.0;
        }
        if sum.is_finite() && sum >= f64::MIN_POSITIVE {
            return sum.powf(1.0 / root as f64);
        }
    }
    // log-sum-exp fallback for large weights
    let mut logs: Vec<f64> = y
        .iter()
        .zip(exps)
        .filter(|(v, _)| **v != 0.0)
        .map(|(v, e)| e as f64 * v.abs().ln())
        .collect();
    if offset > 0.0 {
        logs.push(offset.ln());
    }
    if logs.is_empty() {
        return 0.0;
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    (lse / root as f64).exp()
}

/// Anisotropic norm `(|zeta|^{2 l2 l3} + |sigma|^{2 l1 l3} + |tau|^{2 l1 l2})^{1/(2 l1 l2 l3)}`.
pub fn aniso_abs(p: &CovarPoint, l: AnisotropyVector) -> f64 {
    let (exps, root) = l.exponents();
    power_sum_root(0.0, [p.zeta, p.sigma, p.tau], exps, root)
}

/// Anisotropic Japanese bracket; equals one at the origin and is `>= 1` everywhere.
pub fn aniso_bracket(p: &CovarPoint, l: AnisotropyVector) -> f64 {
    let (exps, root) = l.exponents();
    power_sum_root(1.0, [p.zeta, p.sigma, p.tau], exps, root)
}

/// Standard bracket `(1 + zeta^2 + sigma^2 + tau^2)^{1/2}`.
pub fn japanese_bracket(p: &CovarPoint) -> f64 {
    (1.0 + p.zeta * p.zeta + p.sigma * p.sigma + p.tau * p.tau).sqrt()
}

/// Points on the closed anisotropic hemisphere
/// `|zeta|^{2 l2 l3} + |sigma|^{2 l1 l3} + tau^{2 l1 l2} = 1`, `tau >= 0`.
///
/// Latitude rings `theta_i = i pi / (2n)`, `i = 0..=n`, split the unit budget
/// as `cos^2 theta` between `(zeta, sigma)` and `sin^2 theta` for `tau`; each
/// ring below the pole carries `4n` longitudes. Ring `0` is the equator and
/// ring `n` is the single pole `(0, 0, 1)`.
pub fn hemisphere_sample(l: AnisotropyVector, n: usize) -> Vec<CovarPoint> {
    assert!(n >= 2, "hemisphere resolution must be >= 2");
    let (exps, _) = l.exponents();
    let root_of = |share: f64, e: u32| share.max(0.0).powf(1.0 / e as f64);
    let n_lon = 4 * n;
    let mut out = Vec::with_capacity(n * n_lon + 1);
    for i in 0..n {
        let theta = i as f64 * std::f64::consts::FRAC_PI_2 / n as f64;
        let (st, ct) = theta.sin_cos();
        let (tau_share, plane_share) = if i == 0 { (0.0, 1.0) } else { (st * st, ct * ct) };
        let tau = root_of(tau_share, exps[2]);
        for j in 0..n_lon {
            let phi = j as f64 * std::f64::consts::TAU / n_lon as f64;
            let (sp, cp) = phi.sin_cos();
            // exact axes avoid 1e-17 residues from cos(pi/2)
            let (cz, sz) = match (4 * j) % n_lon {
                0 => match (4 * j) / n_lon {
                    0 => (1.0, 0.0),
                    1 => (0.0, 1.0),
                    2 => (-1.0, 0.0),
                    _ => (0.0, -1.0),
                },
                _ => (cp, sp),
            };
            let zeta = cz.signum() * root_of(plane_share * cz * cz, exps[0]);
            let sigma = sz.signum() * root_of(plane_share * sz * sz, exps[1]);
            let zeta = if cz == 0.0 { 0.0 } else { zeta };
            let sigma = if sz == 0.0 { 0.0 } else { sigma };
            out.push(CovarPoint { zeta, sigma, tau });
        }
    }
    out.push(CovarPoint { zeta: 0.0, sigma: 0.0, tau: 1.0 });
    out
}

/// Empirical constants `(c, C)` with
/// `c <p>^{1/L} <= <p>_l <= C <p>^{L}`, `L = l1 + l2 + l3`,
/// from the extreme ratios over `sample`. The returned constants carry a
/// 10% margin over the sampled extremes.
pub fn sandwich_constants(l: AnisotropyVector, sample: &[CovarPoint]) -> (f64, f64) {
    let total = l.total() as f64;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for p in sample {
        let b = japanese_bracket(p);
        let a = aniso_bracket(p, l);
        lo = lo.min(a / b.powf(1.0 / total));
        hi = hi.max(a / b.powf(total));
    }
    (0.9 * lo, 1.1 * hi)
}

/// Coarse log-radial sample used to fit [`sandwich_constants`]: points on
/// rays through hemisphere directions at radii `10^{-3} .. 10^{6}`, both signs of `zeta`/`sigma`.
pub fn sandwich_sample(l: AnisotropyVector) -> Vec<CovarPoint> {
    let dirs = hemisphere_sample(l, 6);
    let mut out = Vec::new();
    for r_exp in -12..=24 {
        let rho = 10f64.powf(r_exp as f64 / 4.0);
        for d in &dirs {
            out.push(d.dilate(rho, l));
        }
    }
    out
}
