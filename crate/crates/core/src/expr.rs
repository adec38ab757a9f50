//! Surface syntax for symbols.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('-' | '+') unary | power
//! power  := atom ('^' int)?
//! atom   := number | 'i' | 'd' | 'zeta' | 'sigma' | 'tau' | 'x'
//!         | 'exp' '(' [sign] (int | 'i' | 'z') ('*' ...)* ')' | '(' expr ')'
//! ```
//!
//! Products are pointwise products of symbols. `d` is the manifold
//! dimension (2). Coefficients may carry `x^-m` and `exp(q*i*z)`; a positive
//! power of `x` must be written with `tau`. Division is by constants only.

use num::rational::BigRational;
use num::{BigInt, One, Zero};

use crate::aniso::AnisotropyVector;
use crate::coeffring::{CRat, CoeffElement};
use crate::error::{Error, Result};
use crate::symbol::FormalSymbol;

/// Dimension of the model cone `R+ x S^1`.
pub const DIMENSION: i64 = 2;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigRational, bool),
    Ident(String),
    Op(char),
    End,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let lit: String = chars[start..i].iter().collect();
            col += i - start;
            let (value, integral) = parse_decimal(&lit).ok_or_else(|| Error::Parse {
                line: tl,
                column: tc,
                message: format!("bad number {lit:?}"),
            })?;
            out.push(Token { tok: Tok::Num(value, integral), line: tl, column: tc });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: tl,
                column: tc,
            });
            continue;
        }
        if "+-*/^()".contains(c) {
            out.push(Token { tok: Tok::Op(c), line: tl, column: tc });
            i += 1;
            col += 1;
            continue;
        }
        return Err(Error::Parse { line: tl, column: tc, message: format!("unexpected character {c:?}") });
    }
    out.push(Token { tok: Tok::End, line, column: col });
    Ok(out)
}

fn parse_decimal(lit: &str) -> Option<(BigRational, bool)> {
    match lit.split_once('.') {
        None => Some((BigRational::from_integer(lit.parse().ok()?), true)),
        Some((a, b)) => {
            if b.contains('.') || (a.is_empty() && b.is_empty()) {
                return None;
            }
            let whole: BigInt = if a.is_empty() { BigInt::zero() } else { a.parse().ok()? };
            let frac: BigInt = if b.is_empty() { BigInt::zero() } else { b.parse().ok()? };
            let scale = num::pow(BigInt::from(10), b.len());
            let v = BigRational::from_integer(whole) + BigRational::new(frac, scale);
            Some((v, false))
        }
    }
}

/// Either an ordinary symbol value, or a bare power of `x` waiting for its exponent.
enum Val {
    Sym(FormalSymbol),
    X,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    l: AnisotropyVector,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, t: &Token, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { line: t.line, column: t.column, message: message.into() })
    }

    fn expect_op(&mut self, c: char) -> Result<()> {
        let t = self.next();
        if t.tok != Tok::Op(c) {
            return self.err(&t, format!("expected '{c}'"));
        }
        Ok(())
    }

    fn sym(&self, v: Val, at: &Token) -> Result<FormalSymbol> {
        match v {
            Val::Sym(s) => Ok(s),
            Val::X => self.err(at, "positive power of x in a coefficient; write it with tau"),
        }
    }

    fn expr(&mut self) -> Result<FormalSymbol> {
        let at = self.peek().clone();
        let first = self.term()?;
        let mut acc = self.sym(first, &at)?;
        loop {
            match self.peek().tok {
                Tok::Op('+') | Tok::Op('-') => {
                    let op = self.next();
                    let at = self.peek().clone();
                    let rhs = self.term()?;
                    let rhs = self.sym(rhs, &at)?;
                    acc = if op.tok == Tok::Op('+') { &acc + &rhs } else { &acc - &rhs };
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Val> {
        let at = self.peek().clone();
        let mut acc = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Op('*') => {
                    self.next();
                    let at2 = self.peek().clone();
                    let rhs = self.unary()?;
                    let a = self.sym(acc, &at)?;
                    let b = self.sym(rhs, &at2)?;
                    acc = Val::Sym(&a * &b);
                }
                Tok::Op('/') => {
                    self.next();
                    let at2 = self.peek().clone();
                    let rhs = self.unary()?;
                    let b = self.sym(rhs, &at2)?;
                    let c = constant_value(&b).ok_or_else(|| Error::Parse {
                        line: at2.line,
                        column: at2.column,
                        message: "division only by a nonzero constant".into(),
                    })?;
                    let a = self.sym(acc, &at)?;
                    acc = Val::Sym(a.scale(&invert(&c)));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Val> {
        match self.peek().tok {
            Tok::Op('-') => {
                let t = self.next();
                let v = self.unary()?;
                let s = self.sym(v, &t)?;
                Ok(Val::Sym(-&s))
            }
            Tok::Op('+') => {
                self.next();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn signed_int(&mut self) -> Result<i64> {
        let mut neg = false;
        let mut paren = false;
        if self.peek().tok == Tok::Op('(') {
            self.next();
            paren = true;
        }
        if self.peek().tok == Tok::Op('-') {
            self.next();
            neg = true;
        }
        let t = self.next();
        let v = match &t.tok {
            Tok::Num(v, true) => v.to_integer(),
            Tok::Num(_, false) => return self.err(&t, "non-integer exponent"),
            _ => return self.err(&t, "expected integer exponent"),
        };
        if paren {
            self.expect_op(')')?;
        }
        let v: i64 = v.try_into().map_err(|_| Error::Parse {
            line: t.line,
            column: t.column,
            message: "exponent too large".into(),
        })?;
        Ok(if neg { -v } else { v })
    }

    fn power(&mut self) -> Result<Val> {
        let at = self.peek().clone();
        let base = self.atom()?;
        if self.peek().tok != Tok::Op('^') {
            return Ok(base);
        }
        self.next();
        let et = self.peek().clone();
        let e = self.signed_int()?;
        match base {
            Val::X => {
                if e > 0 {
                    return self.err(&at, "positive power of x in a coefficient; write it with tau");
                }
                let m = u32::try_from(-e).map_err(|_| Error::Parse {
                    line: et.line,
                    column: et.column,
                    message: "exponent too large".into(),
                })?;
                Ok(Val::Sym(FormalSymbol::monomial(self.l, (0, 0, 0), CoeffElement::monomial(m, 0, CRat::one()))))
            }
            Val::Sym(s) => {
                if e < 0 {
                    return self.err(&et, "negative exponent on a symbol");
                }
                Ok(Val::Sym(s.pow(e as u32)))
            }
        }
    }

    fn atom(&mut self) -> Result<Val> {
        let t = self.next();
        let l = self.l;
        match &t.tok {
            Tok::Num(v, _) => Ok(Val::Sym(FormalSymbol::constant(l, CRat::real(v.clone())))),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(Val::Sym(e))
            }
            Tok::Ident(name) => match name.as_str() {
                "i" => Ok(Val::Sym(FormalSymbol::constant(l, CRat::i()))),
                "d" => Ok(Val::Sym(FormalSymbol::constant(l, CRat::from_int(DIMENSION)))),
                "zeta" => Ok(Val::Sym(FormalSymbol::zeta(l))),
                "sigma" => Ok(Val::Sym(FormalSymbol::sigma(l))),
                "tau" => Ok(Val::Sym(FormalSymbol::tau(l))),
                "x" => Ok(Val::X),
                "exp" => {
                    self.expect_op('(')?;
                    let k = self.exp_arg(&t)?;
                    self.expect_op(')')?;
                    Ok(Val::Sym(FormalSymbol::monomial(l, (0, 0, 0), CoeffElement::monomial(0, k, CRat::one()))))
                }
                other => self.err(&t, format!("unknown identifier {other:?}")),
            },
            Tok::End => self.err(&t, "unexpected end of input"),
            Tok::Op(c) => self.err(&t, format!("unexpected '{c}'")),
        }
    }

    /// `[sign] factor ('*' factor)*` with factors integers, `i`, `z`; exactly one `i` and one `z`.
    fn exp_arg(&mut self, at: &Token) -> Result<i64> {
        let mut coef = BigRational::one();
        let (mut n_i, mut n_z) = (0, 0);
        if self.peek().tok == Tok::Op('-') {
            self.next();
            coef = -coef;
        }
        loop {
            let t = self.next();
            match &t.tok {
                Tok::Num(v, true) => coef *= v.clone(),
                Tok::Ident(s) if s == "i" => n_i += 1,
                Tok::Ident(s) if s == "z" => n_z += 1,
                _ => return self.err(&t, "exp() argument must be q*i*z with integer q"),
            }
            if self.peek().tok == Tok::Op('*') {
                self.next();
            } else {
                break;
            }
        }
        if n_i != 1 || n_z != 1 || !coef.is_integer() {
            return self.err(at, "exp() argument must be q*i*z with integer q");
        }
        coef.to_integer().try_into().map_err(|_| Error::Parse {
            line: at.line,
            column: at.column,
            message: "angular mode too large".into(),
        })
    }
}

fn constant_value(s: &FormalSymbol) -> Option<CRat> {
    if s.terms().count() != 1 {
        return None;
    }
    let c = s.coeff((0, 0, 0))?;
    if c.terms().count() != 1 {
        return None;
    }
    c.coeff(0, 0).cloned()
}

fn invert(c: &CRat) -> CRat {
    let n = &c.re * &c.re + &c.im * &c.im;
    CRat::new(&c.re / &n, -(&c.im / &n))
}

/// Parses a symbol expression such as `sigma^2 - i*(d-2)*sigma + zeta^2 + tau^4`.
pub fn parse_symbol_expr(text: &str, l: AnisotropyVector) -> Result<FormalSymbol> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, l };
    let s = p.expr()?;
    let t = p.peek().clone();
    if t.tok != Tok::End {
        return p.err(&t, "unexpected trailing input");
    }
    Ok(s)
}
