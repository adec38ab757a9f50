//! Exact anisotropic symbols of differential operators on the cone.
//!
//! A [`FormalSymbol`] is a polynomial `sum a_{alpha,j,k}(x,z) zeta^alpha sigma^j tau^k`
//! over [`CoeffElement`]. It stands for the left-quantized operator
//! `sum a_{alpha,j,k}(x,z) x^k D_z^alpha (xD_x)^j`.
//!
//! For polynomial symbols the Mellin composition and adjoint expansions
//! terminate, so [`FormalSymbol::sharp`] and [`FormalSymbol::star`] are exact.
//! The operator-valued product over `Z = S^1` is expanded with the Fourier
//! Leibniz rule in `(zeta, D_z)`, which is likewise finite.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num::rational::BigRational;
use num::{BigInt, One};
use serde::{Deserialize, Serialize};

use crate::aniso::AnisotropyVector;
use crate::coeffring::{CRat, CoeffElement, CoeffTermJson, TestMonomial};
use crate::error::{Error, Result};
use crate::C64;

/// Exponent triple `(alpha, j, k)` of `zeta^alpha sigma^j tau^k`.
pub type Multi = (u32, u32, u32);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FormalSymbol {
    l: AnisotropyVector,
    terms: BTreeMap<Multi, CoeffElement>,
}

/// Top-order part of a symbol: every term has anisotropic weight exactly `mu`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolHomPart {
    pub mu: u64,
    pub symbol: FormalSymbol,
}

impl SymbolHomPart {
    pub fn eval(&self, x: f64, z: f64, zeta: f64, sigma: f64, tau: f64) -> C64 {
        self.symbol.eval_unchecked(x, z, zeta, C64::new(sigma, 0.0), tau)
    }

    pub fn is_empty(&self) -> bool {
        self.symbol.is_zero()
    }
}

/// Exponent action of the Euler field `xD_x + tau D_tau` on `c(x,z) tau^k`.
fn euler_coeff(c: &CoeffElement, k: u32) -> CoeffElement {
    let tau_part = c.scale(&CRat::from_int(-(k as i64)).mul_i());
    &c.xdx() + &tau_part
}

fn factorial(n: u32) -> BigRational {
    let mut acc = BigInt::one();
    for i in 2..=n {
        acc *= i;
    }
    BigRational::from_integer(acc)
}

impl FormalSymbol {
    pub fn zero(l: AnisotropyVector) -> Self {
        Self { l, terms: BTreeMap::new() }
    }

    pub fn one(l: AnisotropyVector) -> Self {
        Self::constant(l, CRat::one())
    }

    pub fn constant(l: AnisotropyVector, c: CRat) -> Self {
        Self::monomial(l, (0, 0, 0), CoeffElement::constant(c))
    }

    /// `c * zeta^alpha sigma^j tau^k`.
    pub fn monomial(l: AnisotropyVector, exps: Multi, c: CoeffElement) -> Self {
        let mut s = Self::zero(l);
        s.accumulate(exps, c);
        s
    }

    pub fn zeta(l: AnisotropyVector) -> Self {
        Self::monomial(l, (1, 0, 0), CoeffElement::one())
    }

    pub fn sigma(l: AnisotropyVector) -> Self {
        Self::monomial(l, (0, 1, 0), CoeffElement::one())
    }

    pub fn tau(l: AnisotropyVector) -> Self {
        Self::monomial(l, (0, 0, 1), CoeffElement::one())
    }

    pub fn anisotropy(&self) -> AnisotropyVector {
        self.l
    }

    /// Same terms, reinterpreted under another anisotropy.
    pub fn with_anisotropy(&self, l: AnisotropyVector) -> Self {
        Self { l, terms: self.terms.clone() }
    }

    pub fn terms(&self) -> impl Iterator<Item = (Multi, &CoeffElement)> {
        self.terms.iter().map(|(e, c)| (*e, c))
    }

    pub fn coeff(&self, exps: Multi) -> Option<&CoeffElement> {
        self.terms.get(&exps)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_z_independent(&self) -> bool {
        self.terms.values().all(CoeffElement::is_z_independent)
    }

    pub fn degree_sigma(&self) -> u32 {
        self.terms.keys().map(|e| e.1).max().unwrap_or(0)
    }

    pub fn degree_zeta(&self) -> u32 {
        self.terms.keys().map(|e| e.0).max().unwrap_or(0)
    }

    pub fn degree_tau(&self) -> u32 {
        self.terms.keys().map(|e| e.2).max().unwrap_or(0)
    }

    fn accumulate(&mut self, key: Multi, c: CoeffElement) {
        if c.is_zero() {
            return;
        }
        let sum = match self.terms.get(&key) {
            Some(old) => old + &c,
            None => c,
        };
        if sum.is_zero() {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, sum);
        }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.l != other.l {
            return Err(Error::AnisotropyMismatch(self.l.as_array(), other.l.as_array()));
        }
        Ok(())
    }

    fn map_terms(&self, f: impl Fn(Multi, &CoeffElement) -> Option<(Multi, CoeffElement)>) -> Self {
        let mut out = Self::zero(self.l);
        for (&e, c) in &self.terms {
            if let Some((e2, c2)) = f(e, c) {
                out.accumulate(e2, c2);
            }
        }
        out
    }

    pub fn scale(&self, c: &CRat) -> Self {
        self.map_terms(|e, a| Some((e, a.scale(c))))
    }

    /// Pointwise (commutative) product of symbols.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = Self::zero(self.l);
        for (&(a1, j1, k1), c1) in &self.terms {
            for (&(a2, j2, k2), c2) in &other.terms {
                out.accumulate((a1 + a2, j1 + j2, k1 + k2), c1 * c2);
            }
        }
        Ok(out)
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (&e, c) in &other.terms {
            out.accumulate(e, c.clone());
        }
        Ok(out)
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one(self.l);
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// Anisotropic order `max l1 alpha + l2 j + l3 k`; `None` for the empty symbol.
    pub fn order(&self) -> Option<u64> {
        self.terms.keys().map(|&(a, j, k)| self.l.weight(a, j, k)).max()
    }

    pub fn try_order(&self) -> Result<u64> {
        self.order().ok_or(Error::EmptySymbol)
    }

    /// Extended principal symbol: the terms of top anisotropic weight.
    pub fn sym_e(&self) -> Result<SymbolHomPart> {
        let mu = self.try_order()?;
        let l = self.l;
        let symbol = self.map_terms(|(a, j, k), c| (l.weight(a, j, k) == mu).then(|| ((a, j, k), c.clone())));
        Ok(SymbolHomPart { mu, symbol })
    }

    /// `b`-principal symbol: the extended principal symbol restricted to `tau = 0`.
    pub fn b_sym_psi(&self) -> Result<SymbolHomPart> {
        let e = self.sym_e()?;
        let symbol = e.symbol.map_terms(|(a, j, k), c| (k == 0).then(|| ((a, j, k), c.clone())));
        Ok(SymbolHomPart { mu: e.mu, symbol })
    }

    /// Ordinary principal symbol at covector `(zeta, xi)`: the `b`-symbol at `sigma = x xi`.
    pub fn eval_sym_psi(&self, x: f64, z: f64, zeta: f64, xi: f64) -> Result<C64> {
        if !(x > 0.0) {
            return Err(Error::NonPositiveX(x));
        }
        let b = self.b_sym_psi()?;
        Ok(b.eval(x, z, zeta, x * xi, 0.0))
    }

    /// Full symbol value; `sigma` may be complex.
    pub fn eval(&self, x: f64, z: f64, zeta: f64, sigma: C64, tau: f64) -> Result<C64> {
        if !(x > 0.0) {
            return Err(Error::NonPositiveX(x));
        }
        Ok(self.eval_unchecked(x, z, zeta, sigma, tau))
    }

    pub(crate) fn eval_unchecked(&self, x: f64, z: f64, zeta: f64, sigma: C64, tau: f64) -> C64 {
        self.terms
            .iter()
            .map(|(&(a, j, k), c)| {
                c.eval_unchecked(x, z) * zeta.powi(a as i32) * sigma.powu(j) * tau.powi(k as i32)
            })
            .sum()
    }

    /// Value with coefficients replaced by their `x -> oo` limits.
    pub fn eval_at_infinity(&self, z: f64, zeta: f64, sigma: f64, tau: f64) -> C64 {
        self.terms
            .iter()
            .map(|(&(a, j, k), c)| {
                c.eval_at_infinity(z) * zeta.powi(a as i32) * sigma.powi(j as i32) * tau.powi(k as i32)
            })
            .sum()
    }

    /// `d/dsigma`.
    pub fn d_sigma(&self) -> Self {
        self.map_terms(|(a, j, k), c| {
            (j > 0).then(|| ((a, j - 1, k), c.scale(&CRat::from_int(j as i64))))
        })
    }

    /// `d/dzeta`.
    pub fn d_zeta(&self) -> Self {
        self.map_terms(|(a, j, k), c| {
            (a > 0).then(|| ((a - 1, j, k), c.scale(&CRat::from_int(a as i64))))
        })
    }

    /// `xD_x + tau D_tau`, the derivation that `xD_x` induces on `a(x, sigma, tau)` at `tau = x`.
    pub fn euler(&self) -> Self {
        self.map_terms(|e, c| Some((e, euler_coeff(c, e.2))))
    }

    /// `D_z` acting on the coefficients.
    pub fn dz(&self) -> Self {
        self.map_terms(|e, c| Some((e, c.dz())))
    }

    /// Coefficientwise complex conjugate (covariables treated as real).
    pub fn conj(&self) -> Self {
        self.map_terms(|e, c| Some((e, c.conj())))
    }

    /// Exact symbol of the composition `op(self) op(other)`:
    /// `sum_{k,b} 1/(k! b!) d_sigma^k d_zeta^b self * (xD_x + tau D_tau)^k D_z^b other`.
    pub fn sharp(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = Self::zero(self.l);
        let mut ds = self.clone();
        let mut eo = other.clone();
        for k in 0..=self.degree_sigma() {
            let mut dsz = ds.clone();
            let mut eoz = eo.clone();
            for b in 0..=self.degree_zeta() {
                let w = (factorial(k) * factorial(b)).recip();
                let term = dsz.try_mul(&eoz)?.scale(&CRat::real(w));
                out = out.try_add(&term)?;
                dsz = dsz.d_zeta();
                eoz = eoz.dz();
                if dsz.is_zero() {
                    break;
                }
            }
            ds = ds.d_sigma();
            eo = eo.euler();
            if ds.is_zero() {
                break;
            }
        }
        Ok(out)
    }

    /// Exact symbol of the formal adjoint in `L^2(dx/x dz)`:
    /// `sum_{k,b} 1/(k! b!) d_sigma^k d_zeta^b (xD_x + tau D_tau)^k D_z^b conj(self)`.
    pub fn star(&self) -> Self {
        let base = self.conj();
        let mut out = Self::zero(self.l);
        let mut ek = base;
        for k in 0..=self.degree_sigma() {
            let mut sk = ek.clone();
            for _ in 0..k {
                sk = sk.d_sigma();
            }
            let mut eb = sk;
            for b in 0..=self.degree_zeta() {
                let mut term = eb.clone();
                for _ in 0..b {
                    term = term.d_zeta();
                }
                let w = (factorial(k) * factorial(b)).recip();
                out = &out + &term.scale(&CRat::real(w));
                eb = eb.dz();
            }
            ek = ek.euler();
        }
        out
    }

    /// Symbol of `x^{-beta} op(a) x^{beta}`: substitute `sigma -> sigma - i beta`.
    pub fn conjugate_weight(&self, beta: &BigRational) -> Self {
        let shift = CRat::imag(-beta.clone());
        let mut out = Self::zero(self.l);
        for (&(a, j, k), c) in &self.terms {
            // (sigma + shift)^j = sum_i binom(j,i) sigma^i shift^{j-i}
            let mut binom = BigInt::one();
            for i in (0..=j).rev() {
                // binom(j, i) built from i = j downward
                let w = CRat::real(BigRational::from_integer(binom.clone()));
                let f = &w * &shift.pow(j - i);
                out.accumulate((a, i, k), c.scale(&f));
                if i > 0 {
                    binom = binom * BigInt::from(i) / BigInt::from(j - i + 1);
                }
            }
        }
        out
    }

    /// `tau^j` Taylor coefficient `(1/j!) d_tau^j a |_{tau=0}` as a `tau`-free symbol.
    pub fn taylor_tau(&self, j: u32) -> Self {
        self.map_terms(|(a, s, k), c| (k == j).then(|| ((a, s, 0), c.clone())))
    }

    /// Multiply by `tau^j`.
    pub fn times_tau(&self, j: u32) -> Self {
        self.map_terms(|(a, s, k), c| Some(((a, s, k + j), c.clone())))
    }

    /// Exact action on `x^s e^{iqz}`:
    /// `c x^{-m} e^{i kz z} x^k D_z^alpha (xD_x)^j` gives
    /// `c q^alpha (-i s)^j x^{s + k - m} e^{i(q + kz) z}`.
    pub fn apply(&self, u: &TestMonomial) -> BTreeMap<TestMonomial, CRat> {
        let mut out: BTreeMap<TestMonomial, CRat> = BTreeMap::new();
        let minus_is = u.s.mul_i().scale(&-BigRational::one());
        let q = CRat::from_int(u.k);
        for (&(a, j, k), c) in &self.terms {
            let factor = &q.pow(a) * &minus_is.pow(j);
            if factor.is_zero() {
                continue;
            }
            let shifted = TestMonomial::new(&u.s + &CRat::from_int(k as i64), u.k);
            for (cm, mono) in c.act_on(&shifted) {
                add_into(&mut out, mono, &cm * &factor);
            }
        }
        out
    }

    /// Linear extension of [`apply`](Self::apply) to finite sums of monomials.
    pub fn apply_sum(&self, u: &BTreeMap<TestMonomial, CRat>) -> BTreeMap<TestMonomial, CRat> {
        let mut out = BTreeMap::new();
        for (mono, c) in u {
            for (m2, c2) in self.apply(mono) {
                add_into(&mut out, m2, &c2 * c);
            }
        }
        out
    }

    pub fn to_json(&self) -> SymbolJson {
        SymbolJson {
            anisotropy: self.l,
            terms: self
                .terms
                .iter()
                .map(|(&(alpha, j, k), c)| SymbolTermJson { alpha, j, k, coeff: c.to_json_terms() })
                .collect(),
        }
    }

    pub fn from_json(js: &SymbolJson) -> Result<Self> {
        let mut out = Self::zero(js.anisotropy);
        for t in &js.terms {
            out.accumulate((t.alpha, t.j, t.k), CoeffElement::from_json_terms(&t.coeff)?);
        }
        Ok(out)
    }
}

fn add_into(map: &mut BTreeMap<TestMonomial, CRat>, key: TestMonomial, c: CRat) {
    if c.is_zero() {
        return;
    }
    let sum = match map.get(&key) {
        Some(old) => old + &c,
        None => c,
    };
    if sum.is_zero() {
        map.remove(&key);
    } else {
        map.insert(key, sum);
    }
}

/// Wire format `{"anisotropy":[l1,l2,l3],"terms":[{"alpha","j","k","coeff":[...]}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolJson {
    pub anisotropy: AnisotropyVector,
    pub terms: Vec<SymbolTermJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolTermJson {
    pub alpha: u32,
    pub j: u32,
    pub k: u32,
    pub coeff: Vec<CoeffTermJson>,
}

// Operators panic on anisotropy mismatch; use the try_* forms for checked arithmetic.
impl Add for &FormalSymbol {
    type Output = FormalSymbol;
    fn add(self, rhs: &FormalSymbol) -> FormalSymbol {
        self.try_add(rhs).expect("anisotropy mismatch")
    }
}

impl Sub for &FormalSymbol {
    type Output = FormalSymbol;
    fn sub(self, rhs: &FormalSymbol) -> FormalSymbol {
        self.try_add(&-rhs).expect("anisotropy mismatch")
    }
}

impl Neg for &FormalSymbol {
    type Output = FormalSymbol;
    fn neg(self) -> FormalSymbol {
        self.map_terms(|e, c| Some((e, -c)))
    }
}

impl Mul for &FormalSymbol {
    type Output = FormalSymbol;
    fn mul(self, rhs: &FormalSymbol) -> FormalSymbol {
        self.try_mul(rhs).expect("anisotropy mismatch")
    }
}

impl fmt::Display for FormalSymbol {
    /// Prints in the surface syntax accepted by [`crate::expr::parse_symbol_expr`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(a, j, k), c) in self.terms.iter().rev() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let mut factors: Vec<String> = Vec::new();
            if !c.is_one() {
                factors.push(format!("({c})"));
            }
            for (name, e) in [("zeta", a), ("sigma", j), ("tau", k)] {
                match e {
                    0 => {}
                    1 => factors.push(name.to_string()),
                    _ => factors.push(format!("{name}^{e}")),
                }
            }
            if factors.is_empty() {
                factors.push("1".into());
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}
