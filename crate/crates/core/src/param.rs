//! Channel weights that are either numbers or symbolic expressions in named parameters.
//!
//! Arithmetic on two numeric weights is performed eagerly in `f64`; anything involving a
//! symbol records the same operation in an expression tree. Evaluating the tree repeats the
//! identical sequence of floating-point operations, so a parametric result evaluated at an
//! assignment is bit-identical to the result of the numerically instantiated computation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Parameter values keyed by name.
pub type Assignment = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Param(String),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Neg(Arc<Expr>),
}

impl Expr {
    pub fn eval(&self, a: &Assignment) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Param(name) => *a.get(name).ok_or_else(|| Error::UnboundParameter(name.clone()))?,
            Expr::Add(l, r) => l.eval(a)? + r.eval(a)?,
            Expr::Sub(l, r) => l.eval(a)? - r.eval(a)?,
            Expr::Mul(l, r) => l.eval(a)? * r.eval(a)?,
            Expr::Div(l, r) => l.eval(a)? / r.eval(a)?,
            Expr::Neg(e) => -e.eval(a)?,
        })
    }

    fn collect_params(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Param(name) => {
                out.insert(name.clone());
            }
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.collect_params(out);
                r.collect_params(out);
            }
            Expr::Neg(e) => e.collect_params(out),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Param(name) => f.write_str(name),
            Expr::Add(l, r) => write!(f, "({l} + {r})"),
            Expr::Sub(l, r) => write!(f, "({l} - {r})"),
            Expr::Mul(l, r) => write!(f, "{l}*{r}"),
            Expr::Div(l, r) => write!(f, "{l}/{r}"),
            Expr::Neg(e) => write!(f, "-{e}"),
        }
    }
}

/// A channel weight.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Num(f64),
    Sym(Arc<Expr>),
}

impl Weight {
    pub fn param(name: &str) -> Self {
        Weight::Sym(Arc::new(Expr::Param(name.to_string())))
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Weight::Num(_))
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Weight::Num(v) => Some(*v),
            Weight::Sym(_) => None,
        }
    }

    pub fn eval(&self, a: &Assignment) -> Result<f64> {
        match self {
            Weight::Num(v) => Ok(*v),
            Weight::Sym(e) => e.eval(a),
        }
    }

    /// Numeric weight with every bound symbol evaluated.
    pub fn instantiate(&self, a: &Assignment) -> Result<Weight> {
        self.eval(a).map(Weight::Num)
    }

    pub fn params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Weight::Sym(e) = self {
            e.collect_params(&mut out);
        }
        out
    }

    fn expr(&self) -> Arc<Expr> {
        match self {
            Weight::Num(v) => Arc::new(Expr::Const(*v)),
            Weight::Sym(e) => e.clone(),
        }
    }
}

impl From<f64> for Weight {
    fn from(v: f64) -> Self {
        Weight::Num(v)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Num(v) => write!(f, "{v}"),
            Weight::Sym(e) => write!(f, "{e}"),
        }
    }
}

macro_rules! weight_binop {
    ($tr:ident, $method:ident, $op:tt, $variant:ident) => {
        impl $tr<&Weight> for &Weight {
            type Output = Weight;
            fn $method(self, rhs: &Weight) -> Weight {
                match (self, rhs) {
                    (Weight::Num(a), Weight::Num(b)) => Weight::Num(a $op b),
                    _ => Weight::Sym(Arc::new(Expr::$variant(self.expr(), rhs.expr()))),
                }
            }
        }

        impl $tr<Weight> for Weight {
            type Output = Weight;
            fn $method(self, rhs: Weight) -> Weight {
                (&self).$method(&rhs)
            }
        }
    };
}

weight_binop!(Add, add, +, Add);
weight_binop!(Sub, sub, -, Sub);
weight_binop!(Mul, mul, *, Mul);
weight_binop!(Div, div, /, Div);

impl Neg for &Weight {
    type Output = Weight;
    fn neg(self) -> Weight {
        match self {
            Weight::Num(a) => Weight::Num(-a),
            Weight::Sym(e) => Weight::Sym(Arc::new(Expr::Neg(e.clone()))),
        }
    }
}

impl Neg for Weight {
    type Output = Weight;
    fn neg(self) -> Weight {
        -&self
    }
}

/// `+-v_0 +- v_1 +- ...` evaluated left to right. Every numeric factor in the crate goes
/// through this function so that symbolic and numeric paths round identically.
#[inline]
pub fn signed_sum(items: impl IntoIterator<Item = (bool, f64)>) -> f64 {
    let mut it = items.into_iter();
    let Some((neg, v)) = it.next() else {
        return 0.0;
    };
    let mut acc = if neg { -v } else { v };
    for (neg, v) in it {
        if neg {
            acc -= v;
        } else {
            acc += v;
        }
    }
    acc
}

/// Signed sum `+-w_0 +- w_1 +- ...`, evaluated left to right.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Factor {
    pub terms: Vec<(bool, Weight)>,
}

impl Factor {
    pub fn eval(&self, a: &Assignment) -> Result<f64> {
        let values = self.terms.iter().map(|(neg, w)| Ok((*neg, w.eval(a)?))).collect::<Result<Vec<_>>>()?;
        Ok(signed_sum(values))
    }

    pub fn params(&self) -> BTreeSet<String> {
        self.terms.iter().flat_map(|(_, w)| w.params()).collect()
    }

    /// Collects like parameter monomials into a polynomial. Non-contractual; used for
    /// display and for structural tests. Returns `None` for non-polynomial weights.
    pub fn to_polynomial(&self) -> Option<Polynomial> {
        let mut acc = Polynomial::zero();
        for (neg, w) in &self.terms {
            let p = Polynomial::from_weight(w)?;
            acc = if *neg { acc.sub(&p) } else { acc.add(&p) };
        }
        Some(acc)
    }

    /// Polynomial form with round-off coefficients dropped, for display.
    fn display_polynomial(&self) -> Option<Polynomial> {
        self.to_polynomial().map(|p| p.without_roundoff(1e-12))
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = self.display_polynomial() {
            return write!(f, "{p}");
        }
        for (i, (neg, w)) in self.terms.iter().enumerate() {
            match (i, neg) {
                (0, true) => write!(f, "-{w}")?,
                (0, false) => write!(f, "{w}")?,
                (_, true) => write!(f, " - {w}")?,
                (_, false) => write!(f, " + {w}")?,
            }
        }
        Ok(())
    }
}

/// Product-of-sums expectation value: `sign * prod_i factor_i`, with `sign` in {-1, 0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamExpr {
    pub sign: i8,
    pub factors: Vec<Factor>,
}

impl ParamExpr {
    pub fn zero() -> Self {
        Self { sign: 0, factors: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn eval(&self, a: &Assignment) -> Result<f64> {
        if self.sign == 0 {
            return Ok(0.0);
        }
        let mut acc = self.sign as f64;
        for f in &self.factors {
            acc *= f.eval(a)?;
        }
        Ok(acc)
    }

    pub fn params(&self) -> BTreeSet<String> {
        self.factors.iter().flat_map(|f| f.params()).collect()
    }

    pub fn to_polynomial(&self) -> Option<Polynomial> {
        let mut acc = Polynomial::constant(self.sign as f64);
        if self.sign == 0 {
            return Some(acc);
        }
        for f in &self.factors {
            acc = acc.mul(&f.to_polynomial()?);
        }
        Some(acc)
    }
}

impl fmt::Display for ParamExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sign == 0 {
            return f.write_str("0");
        }
        if self.sign < 0 {
            f.write_str("-")?;
        }
        let shown: Vec<&Factor> =
            self.factors.iter().filter(|fac| fac.display_polynomial().and_then(|p| p.as_constant()) != Some(1.0)).collect();
        if shown.is_empty() {
            return f.write_str("1");
        }
        for (i, fac) in shown.iter().enumerate() {
            if i > 0 {
                f.write_str(" * ")?;
            }
            write!(f, "({fac})")?;
        }
        Ok(())
    }
}

/// `constant + sum_k c_k * e_k`, evaluated left to right. Used for witnesses and energies.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprSum {
    pub constant: f64,
    pub terms: Vec<(f64, ParamExpr)>,
}

impl ExprSum {
    pub fn eval(&self, a: &Assignment) -> Result<f64> {
        let mut acc = self.constant;
        for (c, e) in &self.terms {
            acc += c * e.eval(a)?;
        }
        Ok(acc)
    }

    pub fn params(&self) -> BTreeSet<String> {
        self.terms.iter().flat_map(|(_, e)| e.params()).collect()
    }
}

impl fmt::Display for ExprSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constant)?;
        for (c, e) in &self.terms {
            if e.is_zero() {
                continue;
            }
            match *c {
                1.0 => write!(f, " + [{e}]")?,
                -1.0 => write!(f, " - [{e}]")?,
                c => write!(f, " + {c} * [{e}]")?,
            }
        }
        Ok(())
    }
}

/// Sparse multivariate polynomial with monomials as sorted parameter multisets.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub terms: BTreeMap<Vec<String>, f64>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self { terms: BTreeMap::new() }
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        if c != 0.0 {
            p.terms.insert(Vec::new(), c);
        }
        p
    }

    fn var(name: &str) -> Self {
        let mut p = Self::zero();
        p.terms.insert(vec![name.to_string()], 1.0);
        p
    }

    fn from_expr(e: &Expr) -> Option<Self> {
        Some(match e {
            Expr::Const(c) => Self::constant(*c),
            Expr::Param(name) => Self::var(name),
            Expr::Add(l, r) => Self::from_expr(l)?.add(&Self::from_expr(r)?),
            Expr::Sub(l, r) => Self::from_expr(l)?.sub(&Self::from_expr(r)?),
            Expr::Mul(l, r) => Self::from_expr(l)?.mul(&Self::from_expr(r)?),
            Expr::Div(l, r) => {
                let d = Self::from_expr(r)?;
                let c = d.as_constant()?;
                Self::from_expr(l)?.scale(1.0 / c)
            }
            Expr::Neg(x) => Self::from_expr(x)?.scale(-1.0),
        })
    }

    pub fn from_weight(w: &Weight) -> Option<Self> {
        match w {
            Weight::Num(v) => Some(Self::constant(*v)),
            Weight::Sym(e) => Self::from_expr(e),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.terms.len() {
            0 => Some(0.0),
            1 => self.terms.get(&Vec::new()).copied(),
            _ => None,
        }
    }

    pub fn coefficient(&self, monomial: &[&str]) -> f64 {
        let mut key: Vec<String> = monomial.iter().map(|s| s.to_string()).collect();
        key.sort();
        self.terms.get(&key).copied().unwrap_or(0.0)
    }

    fn insert(&mut self, k: Vec<String>, v: f64) {
        let e = self.terms.entry(k.clone()).or_insert(0.0);
        *e += v;
        if *e == 0.0 {
            self.terms.remove(&k);
        }
    }

    /// Drops coefficients below `rel` times the largest magnitude.
    pub fn without_roundoff(&self, rel: f64) -> Self {
        let max = self.terms.values().fold(0.0f64, |m, v| m.max(v.abs()));
        Self { terms: self.terms.iter().filter(|(_, v)| v.abs() > rel * max).map(|(k, v)| (k.clone(), *v)).collect() }
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (k, v) in &o.terms {
            out.insert(k.clone(), *v);
        }
        out
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::zero();
        for (k, v) in &self.terms {
            out.insert(k.clone(), v * c);
        }
        out
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = Self::zero();
        for (ka, va) in &self.terms {
            for (kb, vb) in &o.terms {
                let mut k: Vec<String> = ka.iter().chain(kb).cloned().collect();
                k.sort();
                out.insert(k, va * vb);
            }
        }
        out
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (k, v)) in self.terms.iter().enumerate() {
            let (neg, mag) = (*v < 0.0, v.abs());
            match (i, neg) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            if k.is_empty() {
                write!(f, "{mag}")?;
            } else {
                if mag != 1.0 {
                    write!(f, "{mag}*")?;
                }
                f.write_str(&k.join("*"))?;
            }
        }
        Ok(())
    }
}
