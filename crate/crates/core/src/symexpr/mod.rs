//! Canonical polynomial expressions over jet, momentum, multiplier, opaque
//! function and multivector-coefficient atoms, with exact rational
//! coefficients.
//!
//! Two expressions are equal as polynomials iff their representations are
//! identical, so `==` is the canonical equality test.

mod json;
mod parse;
mod render;

pub use json::{expr_from_json, expr_to_json, symbol_from_json, symbol_to_json};
pub use parse::{parse_ast, parse_expr, Ast, ParseContext};
pub use render::{render_latex, render_symbol_latex, render_symbol_text, render_text};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::multiindex::MultiIndex;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("`{name}` at offset {offset} cannot carry a derivative bracket")]
    NotDifferentiable { offset: usize, name: String },
    #[error("division by a non-constant expression at offset {offset}")]
    NonConstantDivisor { offset: usize },
    #[error("division by zero at offset {offset}")]
    DivisionByZero { offset: usize },
    #[error("cyclic bindings through {0}")]
    CyclicBindings(String),
    #[error("malformed JSON expression: {0}")]
    Json(String),
}

/// Coefficient atoms of a transverse multivector
/// `X_j = ∂/∂x^j + A^α_{Jj} ∂/∂u^α_J + B^{Ii}_{αj} ∂/∂p^{Ii}_α + C_j ∂/∂p`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Coefficient {
    A { field: usize, index: MultiIndex, dir: usize },
    /// `B^{Ii}_{αj}` with `dir = i` and `col = j`.
    B { field: usize, index: MultiIndex, dir: usize, col: usize },
    C { dir: usize },
}

/// Atom of the polynomial ring. The derived ordering (variant order, then
/// fields) is the fixed atom order used by the monomial order.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Symbol {
    /// Base coordinate `x^i`.
    Base(usize),
    /// Jet coordinate `u^α_J`; `J = 0` is the fiber coordinate itself.
    Jet { field: usize, index: MultiIndex },
    /// Momentum `p^{Ii}_α`.
    Momentum { field: usize, index: MultiIndex, dir: usize },
    /// The energy-like momentum `p`.
    Energy,
    /// Multiplier living on the velocity-momentum space.
    Multiplier(Arc<str>),
    /// Opaque base function with a record of partial derivatives taken.
    Function { name: Arc<str>, derivs: MultiIndex },
    Coefficient(Coefficient),
}

impl Symbol {
    pub fn jet(field: usize, index: MultiIndex) -> Symbol {
        Symbol::Jet { field, index }
    }

    pub fn function(name: &str, derivs: MultiIndex) -> Symbol {
        Symbol::Function { name: Arc::from(name), derivs }
    }

    pub fn multiplier(name: &str) -> Symbol {
        Symbol::Multiplier(Arc::from(name))
    }

    pub fn momentum(field: usize, index: MultiIndex, dir: usize) -> Symbol {
        Symbol::Momentum { field, index, dir }
    }

    pub fn jet_order(&self) -> Option<u32> {
        match self {
            Symbol::Jet { index, .. } => Some(index.order()),
            _ => None,
        }
    }

    pub fn is_jet(&self) -> bool {
        matches!(self, Symbol::Jet { .. })
    }
}

/// Product of atoms with positive exponents, sorted by atom.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Monomial(Vec<(Symbol, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn atom(s: Symbol) -> Self {
        Monomial(vec![(s, 1)])
    }

    pub fn factors(&self) -> &[(Symbol, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent(&self, s: &Symbol) -> u32 {
        self.0
            .binary_search_by(|(a, _)| a.cmp(s))
            .map(|k| self.0[k].1)
            .unwrap_or(0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut a, mut b) = (self.0.iter().peekable(), other.0.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some((sa, ea)), Some((sb, eb))) => match sa.cmp(sb) {
                    Ordering::Less => {
                        out.push((sa.clone(), *ea));
                        a.next();
                    }
                    Ordering::Greater => {
                        out.push((sb.clone(), *eb));
                        b.next();
                    }
                    Ordering::Equal => {
                        out.push((sa.clone(), ea + eb));
                        a.next();
                        b.next();
                    }
                },
                (Some(x), None) => {
                    out.push((*x).clone());
                    a.next();
                }
                (None, Some(y)) => {
                    out.push((*y).clone());
                    b.next();
                }
                (None, None) => break,
            }
        }
        Monomial(out)
    }

    /// `self / other` when every exponent of `other` is covered.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out = Vec::with_capacity(self.0.len());
        let mut b = other.0.iter().peekable();
        for (s, e) in &self.0 {
            match b.peek() {
                Some((sb, eb)) if sb == s => {
                    if eb > e {
                        return None;
                    }
                    if e > eb {
                        out.push((s.clone(), e - eb));
                    }
                    b.next();
                }
                Some((sb, _)) if sb < s => return None,
                _ => out.push((s.clone(), *e)),
            }
        }
        if b.next().is_some() {
            return None;
        }
        Some(Monomial(out))
    }

    /// Monomial with the exponent of `s` lowered by one, and the old exponent.
    fn without_one(&self, s: &Symbol) -> Option<(Monomial, u32)> {
        let k = self.0.binary_search_by(|(a, _)| a.cmp(s)).ok()?;
        let e = self.0[k].1;
        let mut v = self.0.clone();
        if e == 1 {
            v.remove(k);
        } else {
            v[k].1 -= 1;
        }
        Some((Monomial(v), e))
    }
}

/// Graded lexicographic order; lex compares the exponent of the smallest
/// atom first.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            for (x, y) in self.0.iter().zip(&other.0) {
                match x.0.cmp(&y.0) {
                    Ordering::Less => return Ordering::Greater,
                    Ordering::Greater => return Ordering::Less,
                    Ordering::Equal => match x.1.cmp(&y.1) {
                        Ordering::Equal => {}
                        o => return o,
                    },
                }
            }
            self.0.len().cmp(&other.0.len())
        })
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Canonical sparse polynomial.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Expr {
    terms: BTreeMap<Monomial, BigRational>,
}

impl Expr {
    pub fn zero() -> Self {
        Expr::default()
    }

    pub fn one() -> Self {
        Expr::constant(BigRational::one())
    }

    pub fn constant(c: BigRational) -> Self {
        let mut e = Expr::zero();
        e.add_term(Monomial::one(), c);
        e
    }

    pub fn int(n: i64) -> Self {
        Expr::constant(BigRational::from_integer(n.into()))
    }

    pub fn symbol(s: Symbol) -> Self {
        let mut e = Expr::zero();
        e.add_term(Monomial::atom(s), BigRational::one());
        e
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, BigRational)>) -> Self {
        let mut e = Expr::zero();
        for (m, c) in terms {
            e.add_term(m, c);
        }
        e
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in ascending monomial order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    /// The rational value if the expression has no atoms.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next()?;
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn leading(&self) -> Option<(&Monomial, &BigRational)> {
        self.terms.iter().next_back()
    }

    pub fn scale(&self, c: &BigRational) -> Expr {
        if c.is_zero() {
            return Expr::zero();
        }
        Expr {
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    fn mul_term(&self, m: &Monomial, c: &BigRational) -> Expr {
        Expr {
            terms: self
                .terms
                .iter()
                .map(|(mm, v)| (mm.mul(m), v * c))
                .collect(),
        }
    }

    pub fn pow(&self, n: u32) -> Expr {
        let mut acc = Expr::one();
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = &acc * &base;
            }
            n >>= 1;
            if n > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    pub fn atoms(&self) -> BTreeSet<Symbol> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|(s, _)| s.clone()))
            .collect()
    }

    pub fn any_atom(&self, pred: impl Fn(&Symbol) -> bool) -> bool {
        self.terms.keys().any(|m| m.0.iter().any(|(s, _)| pred(s)))
    }

    pub fn contains(&self, s: &Symbol) -> bool {
        self.terms.keys().any(|m| m.exponent(s) > 0)
    }

    /// Highest `|J|` among jet atoms, `None` if there are none.
    pub fn jet_order(&self) -> Option<u32> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().filter_map(|(s, _)| s.jet_order()))
            .max()
    }

    /// Total degree in the atoms selected by `pred`, maximised over terms.
    pub fn degree_in(&self, pred: impl Fn(&Symbol) -> bool) -> u32 {
        self.terms
            .keys()
            .map(|m| m.0.iter().filter(|(s, _)| pred(s)).map(|(_, e)| e).sum())
            .max()
            .unwrap_or(0)
    }

    /// Formal partial derivative treating all atoms as independent.
    pub fn partial(&self, s: &Symbol) -> Expr {
        let mut out = Expr::zero();
        for (m, c) in &self.terms {
            if let Some((rest, e)) = m.without_one(s) {
                out.add_term(rest, c * BigRational::from_integer(e.into()));
            }
        }
        out
    }

    /// Applies the derivation determined by its values on atoms (Leibniz rule).
    /// `on_atom` returns `None` for atoms the derivation annihilates.
    pub fn derive_with(&self, on_atom: impl Fn(&Symbol) -> Option<Expr>) -> Expr {
        let mut cache: BTreeMap<&Symbol, Option<Expr>> = BTreeMap::new();
        let mut out = Expr::zero();
        for (m, c) in &self.terms {
            for (s, _) in &m.0 {
                let d = cache.entry(s).or_insert_with(|| on_atom(s));
                let Some(d) = d else { continue };
                let (rest, e) = m.without_one(s).expect("atom present");
                let coeff = c * BigRational::from_integer(e.into());
                for (dm, dc) in &d.terms {
                    out.add_term(rest.mul(dm), &coeff * dc);
                }
            }
        }
        out
    }

    /// Simultaneous substitution of atoms. Bindings must be acyclic.
    pub fn substitute(&self, bindings: &BTreeMap<Symbol, Expr>) -> Result<Expr, ExprError> {
        check_acyclic(bindings)?;
        Ok(self.substitute_unchecked(bindings))
    }

    pub(crate) fn substitute_unchecked(&self, bindings: &BTreeMap<Symbol, Expr>) -> Expr {
        if bindings.is_empty() || !self.any_atom(|s| bindings.contains_key(s)) {
            return self.clone();
        }
        let mut out = Expr::zero();
        let mut powers: BTreeMap<(Symbol, u32), Expr> = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut kept = Vec::new();
            let mut factor = Expr::constant(c.clone());
            for (s, e) in &m.0 {
                match bindings.get(s) {
                    Some(v) => {
                        let p = powers
                            .entry((s.clone(), *e))
                            .or_insert_with(|| v.pow(*e));
                        factor = &factor * &*p;
                    }
                    None => kept.push((s.clone(), *e)),
                }
            }
            let kept = Monomial(kept);
            for (fm, fc) in factor.terms {
                out.add_term(fm.mul(&kept), fc);
            }
        }
        out
    }

    /// Evaluates at a point; `None` if some atom has no value.
    pub fn eval(&self, value: &impl Fn(&Symbol) -> Option<BigRational>) -> Option<BigRational> {
        let mut total = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (s, e) in &m.0 {
                let v = value(s)?;
                t *= num_traits::pow(v, *e as usize);
            }
            total += t;
        }
        Some(total)
    }

    /// Exact quotient `self / d`, or `None` if `d` does not divide `self`.
    pub fn div_exact(&self, d: &Expr) -> Option<Expr> {
        let (dm, dc) = d.leading()?;
        if let Some(c) = d.as_constant() {
            return Some(self.scale(&c.recip()));
        }
        let mut rem = self.clone();
        let mut quot = Expr::zero();
        while let Some((rm, rc)) = rem.leading() {
            let qm = rm.div(dm)?;
            let qc = rc / dc;
            rem = &rem - &d.mul_term(&qm, &qc);
            quot.add_term(qm, qc);
        }
        Some(quot)
    }

    /// Returns `c` with `self = c * other`, `c != 0`, when one exists.
    pub fn scale_to(&self, other: &Expr) -> Option<BigRational> {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Some(BigRational::one()),
            (true, false) | (false, true) => return None,
            _ => {}
        }
        if self.terms.len() != other.terms.len() {
            return None;
        }
        let (sm, sc) = self.leading()?;
        let (om, oc) = other.leading()?;
        if sm != om {
            return None;
        }
        let c = sc / oc;
        (other.scale(&c) == *self).then_some(c)
    }

    /// Content-normalised copy: integer coefficients with unit gcd and a
    /// positive leading coefficient.
    pub fn primitive(&self) -> Expr {
        let Some((_, lead)) = self.leading() else {
            return Expr::zero();
        };
        let mut den = BigInt::one();
        for c in self.terms.values() {
            den = num_integer::Integer::lcm(&den, c.denom());
        }
        let mut g = BigInt::zero();
        for c in self.terms.values() {
            let n = (c * BigRational::from_integer(den.clone())).to_integer();
            g = num_integer::Integer::gcd(&g, &n);
        }
        let mut factor = BigRational::new(den, g);
        if lead.is_negative() {
            factor = -factor;
        }
        self.scale(&factor)
    }
}

fn check_acyclic(bindings: &BTreeMap<Symbol, Expr>) -> Result<(), ExprError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn visit<'a>(
        s: &'a Symbol,
        bindings: &'a BTreeMap<Symbol, Expr>,
        marks: &mut BTreeMap<&'a Symbol, Mark>,
    ) -> Result<(), ExprError> {
        match marks.get(s) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Active) => return Err(ExprError::CyclicBindings(format!("{s:?}"))),
            None => {}
        }
        marks.insert(s, Mark::Active);
        if let Some(v) = bindings.get(s) {
            for m in v.terms.keys() {
                for (t, _) in &m.0 {
                    if let Some((key, _)) = bindings.get_key_value(t) {
                        visit(key, bindings, marks)?;
                    }
                }
            }
        }
        marks.insert(s, Mark::Done);
        Ok(())
    }
    let mut marks = BTreeMap::new();
    for k in bindings.keys() {
        visit(k, bindings, &mut marks)?;
    }
    Ok(())
}

/// Representation identity.
pub fn equal_canonical(a: &Expr, b: &Expr) -> bool {
    a == b
}

/// `c != 0` with `a = c * b`, if it exists.
pub fn equal_up_to_scale(a: &Expr, b: &Expr) -> Option<BigRational> {
    a.scale_to(b)
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms.iter().rev().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (s, e) in &m.0 {
                write!(f, "*{s:?}^{e}")?;
            }
        }
        Ok(())
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        self.terms.iter().rev().cmp(other.terms.iter().rev())
    }
}

impl From<Symbol> for Expr {
    fn from(s: Symbol) -> Self {
        Expr::symbol(s)
    }
}

impl From<BigRational> for Expr {
    fn from(c: BigRational) -> Self {
        Expr::constant(c)
    }
}

impl<'a> Add<&'a Expr> for &'a Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl<'a> Sub<&'a Expr> for &'a Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl<'a> Mul<&'a Expr> for &'a Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        let (small, big) = if self.terms.len() <= rhs.terms.len() {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let mut out = Expr::zero();
        for (m, c) in &small.terms {
            for (mm, cc) in &big.terms {
                out.add_term(m.mul(mm), c * cc);
            }
        }
        out
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $method:ident) => {
        impl $tr<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $tr<&'a Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &'a Expr) -> Expr {
                (&self).$method(rhs)
            }
        }
        impl<'a> $tr<Expr> for &'a Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                self.$method(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

impl std::iter::Sum for Expr {
    fn sum<I: Iterator<Item = Expr>>(iter: I) -> Expr {
        let mut out = Expr::zero();
        for e in iter {
            for (m, c) in e.terms {
                out.add_term(m, c);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet(field: usize, c: &[u32]) -> Expr {
        Expr::symbol(Symbol::jet(field, MultiIndex::new(c.to_vec())))
    }

    #[test]
    fn partial_examples() {
        let ux = jet(0, &[1]);
        let u = jet(0, &[0]);
        let half = Expr::constant(rational(1, 2));
        let e = &half * &ux.pow(2);
        assert_eq!(e.partial(&Symbol::jet(0, MultiIndex::new(vec![1]))), ux);
        let e = &u * &ux;
        assert_eq!(e.partial(&Symbol::jet(0, MultiIndex::new(vec![0]))), ux);
        let nu = Expr::symbol(Symbol::function("nu", MultiIndex::new(vec![0])));
        let uxx = Symbol::jet(0, MultiIndex::new(vec![2]));
        assert_eq!((&nu * &Expr::symbol(uxx.clone())).partial(&uxx), nu);
    }

    #[test]
    fn cancellation_is_canonical() {
        let ux = jet(0, &[1, 0]);
        let vy = jet(1, &[0, 1]);
        let e = &ux + &vy;
        let mut b = BTreeMap::new();
        b.insert(Symbol::jet(1, MultiIndex::new(vec![0, 1])), -&ux);
        assert!(e.substitute(&b).unwrap().is_zero());
        assert_eq!(e.substitute(&BTreeMap::new()).unwrap(), e);
    }

    #[test]
    fn cyclic_bindings_rejected() {
        let a = Symbol::Base(0);
        let b = Symbol::Base(1);
        let mut bind = BTreeMap::new();
        bind.insert(a.clone(), Expr::symbol(b.clone()));
        bind.insert(b, Expr::symbol(a.clone()));
        assert!(matches!(
            Expr::symbol(a).substitute(&bind),
            Err(ExprError::CyclicBindings(_))
        ));
    }

    #[test]
    fn scale_detection() {
        let ux = jet(0, &[1, 0]);
        let vy = jet(1, &[0, 1]);
        assert_eq!(equal_up_to_scale(&ux.scale(&rational(2, 1)), &ux), Some(rational(2, 1)));
        assert_eq!(equal_up_to_scale(&ux, &vy), None);
        assert!(equal_canonical(&(&ux * &vy), &(&vy * &ux)));
    }

    #[test]
    fn exact_division() {
        let a = jet(0, &[1, 0]);
        let b = jet(1, &[0, 0]);
        let p = &(&a + &b) * &(&a - &b.scale(&rational(3, 1)));
        assert_eq!(p.div_exact(&(&a + &b)), Some(&a - &b.scale(&rational(3, 1))));
        assert_eq!((&a + &Expr::one()).div_exact(&b), None);
    }

    #[test]
    fn monomial_order_is_multiplicative() {
        let x = Monomial::atom(Symbol::Base(0));
        let y = Monomial::atom(Symbol::Base(1));
        let xy = x.mul(&y);
        assert!(x > y);
        assert!(xy.mul(&x) > xy.mul(&y));
        assert!(xy > x);
    }

    #[test]
    fn primitive_normalises_content() {
        let a = jet(0, &[1]);
        let e = a.scale(&rational(-2, 3)) + Expr::constant(rational(4, 3));
        assert_eq!(e.primitive(), a - Expr::int(2));
    }
}
