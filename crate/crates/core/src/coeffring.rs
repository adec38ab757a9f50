//! Exact coefficient ring: finite sums `sum c_{m,k} x^{-m} e^{ikz}` with
//! complex-rational `c_{m,k}` and `m >= 0`.
//!
//! The ring is closed under the derivations `xD_x` and `D_z`
//! (`D = -i d`), under complex conjugation of functions, and is bounded
//! with all derivatives as `x -> oo`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Exact complex rational `re + i im`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CRat {
    pub re: BigRational,
    pub im: BigRational,
}

impl CRat {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        Self { re, im }
    }

    pub fn zero() -> Self {
        Self::new(BigRational::zero(), BigRational::zero())
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn i() -> Self {
        Self::new(BigRational::zero(), BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Self::new(BigRational::from_integer(BigInt::from(n)), BigRational::zero())
    }

    pub fn from_ratio(p: i64, q: i64) -> Self {
        Self::new(
            BigRational::new(BigInt::from(p), BigInt::from(q)),
            BigRational::zero(),
        )
    }

    pub fn real(re: BigRational) -> Self {
        Self::new(re, BigRational::zero())
    }

    pub fn imag(im: BigRational) -> Self {
        Self::new(BigRational::zero(), im)
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn conj(&self) -> Self {
        Self::new(self.re.clone(), -self.im.clone())
    }

    /// Multiplication by `i`.
    pub fn mul_i(&self) -> Self {
        Self::new(-self.im.clone(), self.re.clone())
    }

    pub fn scale(&self, r: &BigRational) -> Self {
        Self::new(&self.re * r, &self.im * r)
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    pub fn to_c64(&self) -> C64 {
        C64::new(
            self.re.to_f64().unwrap_or(f64::NAN),
            self.im.to_f64().unwrap_or(f64::NAN),
        )
    }
}

impl PartialOrd for CRat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic on `(re, im)`; used only to key canonical maps.
impl Ord for CRat {
    fn cmp(&self, other: &Self) -> Ordering {
        self.re.cmp(&other.re).then_with(|| self.im.cmp(&other.im))
    }
}

impl Add for &CRat {
    type Output = CRat;
    fn add(self, rhs: &CRat) -> CRat {
        CRat::new(&self.re + &rhs.re, &self.im + &rhs.im)
    }
}

impl Sub for &CRat {
    type Output = CRat;
    fn sub(self, rhs: &CRat) -> CRat {
        CRat::new(&self.re - &rhs.re, &self.im - &rhs.im)
    }
}

impl Mul for &CRat {
    type Output = CRat;
    fn mul(self, rhs: &CRat) -> CRat {
        CRat::new(
            &self.re * &rhs.re - &self.im * &rhs.im,
            &self.re * &rhs.im + &self.im * &rhs.re,
        )
    }
}

impl Neg for &CRat {
    type Output = CRat;
    fn neg(self) -> CRat {
        CRat::new(-self.re.clone(), -self.im.clone())
    }
}

fn fmt_rat(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `"p"` or `"p/q"`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::Format(format!("not a rational: {s:?}"));
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(p, q))
        }
        None => Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

impl fmt::Display for CRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.re.is_zero(), self.im.is_zero()) {
            (_, true) => write!(f, "{}", fmt_rat(&self.re)),
            (true, false) => write!(f, "{}*i", fmt_rat(&self.im)),
            (false, false) => {
                let sign = if self.im.is_negative() { "-" } else { "+" };
                write!(f, "({} {} {}*i)", fmt_rat(&self.re), sign, fmt_rat(&self.im.abs()))
            }
        }
    }
}

/// `x^s e^{ikz}` with `s` an exact complex rational.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TestMonomial {
    pub s: CRat,
    pub k: i64,
}

impl TestMonomial {
    pub fn new(s: CRat, k: i64) -> Self {
        Self { s, k }
    }

    pub fn eval(&self, x: f64, z: f64) -> C64 {
        let s = self.s.to_c64();
        (s * x.ln()).exp() * C64::new(0.0, self.k as f64 * z).exp()
    }
}

/// Canonical finite sum `sum c_{m,k} x^{-m} e^{ikz}`; no stored coefficient is zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct CoeffElement {
    terms: BTreeMap<(u32, i64), CRat>,
}

impl CoeffElement {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::constant(CRat::one())
    }

    pub fn constant(c: CRat) -> Self {
        Self::monomial(0, 0, c)
    }

    /// `c x^{-m} e^{ikz}`.
    pub fn monomial(m: u32, k: i64, c: CRat) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert((m, k), c);
        }
        Self { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms.get(&(0, 0)) == Some(&CRat::one())
    }

    /// Terms keyed by `(m, k)`.
    pub fn terms(&self) -> impl Iterator<Item = (u32, i64, &CRat)> {
        self.terms.iter().map(|(&(m, k), c)| (m, k, c))
    }

    pub fn coeff(&self, m: u32, k: i64) -> Option<&CRat> {
        self.terms.get(&(m, k))
    }

    /// True if no term depends on `z`.
    pub fn is_z_independent(&self) -> bool {
        self.terms.keys().all(|&(_, k)| k == 0)
    }

    pub fn max_m(&self) -> u32 {
        self.terms.keys().map(|&(m, _)| m).max().unwrap_or(0)
    }

    pub fn max_abs_mode(&self) -> u64 {
        self.terms.keys().map(|&(_, k)| k.unsigned_abs()).max().unwrap_or(0)
    }

    fn accumulate(&mut self, key: (u32, i64), c: CRat) {
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

    pub fn scale(&self, c: &CRat) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(k, v)| (*k, v * c)).collect(),
        }
    }

    /// `xD_x`: `x^{-m} -> i m x^{-m}`.
    pub fn xdx(&self) -> Self {
        let mut out = Self::zero();
        for (&(m, k), c) in &self.terms {
            let f = CRat::from_int(m as i64).mul_i();
            out.accumulate((m, k), c * &f);
        }
        out
    }

    /// `D_z`: `e^{ikz} -> k e^{ikz}`.
    pub fn dz(&self) -> Self {
        let mut out = Self::zero();
        for (&(m, k), c) in &self.terms {
            out.accumulate((m, k), c * &CRat::from_int(k));
        }
        out
    }

    /// Pointwise complex conjugate: `c -> conj(c)`, `k -> -k`.
    pub fn conj(&self) -> Self {
        Self {
            terms: self.terms.iter().map(|(&(m, k), c)| ((m, -k), c.conj())).collect(),
        }
    }

    pub fn eval(&self, x: f64, z: f64) -> Result<C64> {
        if !(x > 0.0) {
            return Err(Error::NonPositiveX(x));
        }
        Ok(self.eval_unchecked(x, z))
    }

    pub(crate) fn eval_unchecked(&self, x: f64, z: f64) -> C64 {
        self.terms
            .iter()
            .map(|(&(m, k), c)| c.to_c64() * x.powi(-(m as i32)) * C64::new(0.0, k as f64 * z).exp())
            .sum()
    }

    /// Limit `x -> oo`: only the `m = 0` terms survive.
    pub fn eval_at_infinity(&self, z: f64) -> C64 {
        self.terms
            .iter()
            .filter(|((m, _), _)| *m == 0)
            .map(|(&(_, k), c)| c.to_c64() * C64::new(0.0, k as f64 * z).exp())
            .sum()
    }

    /// Multiplication of a test monomial: returns the monomials `c x^{s-m} e^{i(q+k)z}`.
    pub fn act_on(&self, u: &TestMonomial) -> Vec<(CRat, TestMonomial)> {
        self.terms
            .iter()
            .map(|(&(m, k), c)| {
                let s = &u.s - &CRat::from_int(m as i64);
                (c.clone(), TestMonomial::new(s, u.k + k))
            })
            .collect()
    }

    pub fn to_json_terms(&self) -> Vec<CoeffTermJson> {
        self.terms
            .iter()
            .map(|(&(m, k), c)| CoeffTermJson {
                m,
                kz: k,
                re: fmt_rat(&c.re),
                im: fmt_rat(&c.im),
            })
            .collect()
    }

    pub fn from_json_terms(terms: &[CoeffTermJson]) -> Result<Self> {
        let mut out = Self::zero();
        for t in terms {
            let c = CRat::new(parse_rational(&t.re)?, parse_rational(&t.im)?);
            out.accumulate((t.m, t.kz), c);
        }
        Ok(out)
    }
}

/// Wire form of one coefficient term: `{"m": int, "kz": int, "re": "p/q", "im": "p/q"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffTermJson {
    pub m: u32,
    pub kz: i64,
    pub re: String,
    pub im: String,
}

impl Add for &CoeffElement {
    type Output = CoeffElement;
    fn add(self, rhs: &CoeffElement) -> CoeffElement {
        let mut out = self.clone();
        for (&key, c) in &rhs.terms {
            out.accumulate(key, c.clone());
        }
        out
    }
}

impl Sub for &CoeffElement {
    type Output = CoeffElement;
    fn sub(self, rhs: &CoeffElement) -> CoeffElement {
        let mut out = self.clone();
        for (&key, c) in &rhs.terms {
            out.accumulate(key, -c);
        }
        out
    }
}

impl Neg for &CoeffElement {
    type Output = CoeffElement;
    fn neg(self) -> CoeffElement {
        CoeffElement {
            terms: self.terms.iter().map(|(k, c)| (*k, -c)).collect(),
        }
    }
}

impl Mul for &CoeffElement {
    type Output = CoeffElement;
    fn mul(self, rhs: &CoeffElement) -> CoeffElement {
        let mut out = CoeffElement::zero();
        for (&(m1, k1), c1) in &self.terms {
            for (&(m2, k2), c2) in &rhs.terms {
                out.accumulate((m1 + m2, k1 + k2), c1 * c2);
            }
        }
        out
    }
}

impl fmt::Display for CoeffElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(m, k), c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            if m > 0 {
                write!(f, "*x^-{m}")?;
            }
            if k != 0 {
                write!(f, "*exp({k}*i*z)")?;
            }
        }
        Ok(())
    }
}
