//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := unary (("*"|"/") unary)*
//! unary  := "-" unary | factor
//! factor := base ("^" posint)?
//! base   := integer | name | name "[" axes "]" | "D" "[" axes "]" "(" expr ")" | "(" expr ")"
//! ```
//!
//! With momenta enabled, `p^{tx}` style momenta, the energy `p` and the
//! multivector coefficients `A^{u}_{J;j}`, `B^{Ii}_{j}`, `C_{j}` are accepted
//! as well, so everything the text renderer emits parses back.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use super::{Coefficient, Expr, ExprError, Symbol};
use crate::jetspace::{total_derivative, BundleSpec};
use crate::multiindex::MultiIndex;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Underscore,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Semi,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let n: BigInt = text[start..i].parse().expect("digits");
            out.push((Tok::Num(n), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() {
                let d = bytes[i] as char;
                if d == '_' && bytes.get(i + 1) == Some(&b'{') {
                    break;
                }
                if d.is_ascii_alphanumeric() || d == '_' {
                    i += 1;
                } else {
                    break;
                }
            }
            if i == start {
                out.push((Tok::Underscore, start));
                i += 1;
            } else {
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            continue;
        }
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            _ => {
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push((tok, start));
        i += c.len_utf8();
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

/// A name with its byte offset in the source.
pub type Spanned = (String, usize);

/// Raw script contents, e.g. the `tx` of `p^{tx}`; `;` splits into parts.
#[derive(Clone, Debug, PartialEq)]
pub struct Script {
    pub parts: Vec<Vec<Spanned>>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Ast {
    Num(BigInt),
    Name {
        name: String,
        offset: usize,
        bracket: Option<Vec<Spanned>>,
        sup: Option<Script>,
        sub: Option<Script>,
    },
    Deriv { axes: Vec<Spanned>, arg: Box<Ast> },
    Neg(Box<Ast>),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>, usize),
    Pow(Box<Ast>, u32),
}

impl Ast {
    /// Bare names referenced anywhere in the tree.
    pub fn names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut BTreeSet<String>) {
        match self {
            Ast::Num(_) => {}
            Ast::Name { name, .. } => {
                out.insert(name.clone());
            }
            Ast::Deriv { arg, .. } | Ast::Neg(arg) | Ast::Pow(arg, _) => arg.collect_names(out),
            Ast::Add(a, b) | Ast::Sub(a, b) | Ast::Mul(a, b) | Ast::Div(a, b, _) => {
                a.collect_names(out);
                b.collect_names(out);
            }
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax { offset: self.offset(), message: message.into() })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<usize, ExprError> {
        if *self.peek() == t {
            Ok(self.bump().1)
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Ast::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Ast::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Ast::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    let (_, off) = self.bump();
                    lhs = Ast::Div(Box::new(lhs), Box::new(self.unary()?), off);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Ast, ExprError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<Ast, ExprError> {
        let base = self.base()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            match self.bump() {
                (Tok::Num(n), off) => {
                    let e: u32 = n.try_into().map_err(|_| ExprError::Syntax {
                        offset: off,
                        message: "exponent too large".into(),
                    })?;
                    if e == 0 {
                        return Err(ExprError::Syntax {
                            offset: off,
                            message: "exponent must be positive".into(),
                        });
                    }
                    return Ok(Ast::Pow(Box::new(base), e));
                }
                (_, off) => {
                    return Err(ExprError::Syntax {
                        offset: off,
                        message: "expected a positive integer exponent".into(),
                    })
                }
            }
        }
        Ok(base)
    }

    fn axes(&mut self, close: Tok, what: &str) -> Result<Vec<Spanned>, ExprError> {
        let mut out = Vec::new();
        loop {
            match self.bump() {
                (Tok::Ident(s), off) => out.push((s, off)),
                (_, off) => {
                    return Err(ExprError::Syntax {
                        offset: off,
                        message: "expected a base coordinate".into(),
                    })
                }
            }
            if *self.peek() == Tok::Comma {
                self.bump();
                continue;
            }
            self.expect(close, what)?;
            return Ok(out);
        }
    }

    fn script(&mut self) -> Result<Script, ExprError> {
        let offset = self.expect(Tok::LBrace, "`{`")?;
        let mut parts = vec![Vec::new()];
        loop {
            match self.bump() {
                (Tok::Ident(s), off) => parts.last_mut().expect("part").push((s, off)),
                (Tok::Comma, _) => {}
                (Tok::Semi, _) => parts.push(Vec::new()),
                (Tok::RBrace, _) => return Ok(Script { parts, offset }),
                (_, off) => {
                    return Err(ExprError::Syntax {
                        offset: off,
                        message: "expected `}`".into(),
                    })
                }
            }
        }
    }

    fn base(&mut self) -> Result<Ast, ExprError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Ast::Num(n))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let (_, offset) = self.bump();
                if name == "D" && *self.peek() == Tok::LBracket {
                    let save = self.pos;
                    self.bump();
                    let axes = self.axes(Tok::RBracket, "`]`")?;
                    if *self.peek() == Tok::LParen {
                        self.bump();
                        let arg = self.expr()?;
                        self.expect(Tok::RParen, "`)`")?;
                        return Ok(Ast::Deriv { axes, arg: Box::new(arg) });
                    }
                    self.pos = save;
                }
                let mut bracket = None;
                let mut sup = None;
                let mut sub = None;
                if *self.peek() == Tok::LBracket {
                    self.bump();
                    bracket = Some(self.axes(Tok::RBracket, "`]`")?);
                }
                if *self.peek() == Tok::Caret && *self.peek_at(1) == Tok::LBrace {
                    self.bump();
                    sup = Some(self.script()?);
                }
                if *self.peek() == Tok::Underscore {
                    self.bump();
                    sub = Some(self.script()?);
                }
                Ok(Ast::Name { name, offset, bracket, sup, sub })
            }
            Tok::End => self.err("unexpected end of input"),
            _ => self.err("expected a number, name or `(`"),
        }
    }
}

/// Parses text into an unresolved syntax tree.
pub fn parse_ast(text: &str) -> Result<Ast, ExprError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err("unexpected trailing input");
    }
    Ok(e)
}

/// Name resolution environment.
#[derive(Clone, Debug)]
pub struct ParseContext<'a> {
    pub bundle: &'a BundleSpec,
    /// Named expressions substituted verbatim (definitions, multipliers).
    pub bindings: BTreeMap<String, Expr>,
    /// Accept momentum, energy and multivector-coefficient atoms.
    pub momenta: bool,
}

impl<'a> ParseContext<'a> {
    pub fn new(bundle: &'a BundleSpec) -> Self {
        ParseContext { bundle, bindings: BTreeMap::new(), momenta: false }
    }

    pub fn with_momenta(mut self) -> Self {
        self.momenta = true;
        self
    }

    pub fn bind(&mut self, name: &str, value: Expr) {
        self.bindings.insert(name.to_string(), value);
    }

    fn axis(&self, (name, offset): &Spanned) -> Result<usize, ExprError> {
        self.bundle.base_index(name).ok_or_else(|| ExprError::UnknownIdentifier {
            offset: *offset,
            name: name.clone(),
        })
    }

    fn multi(&self, axes: &[Spanned]) -> Result<MultiIndex, ExprError> {
        let mut c = vec![0u32; self.bundle.m()];
        for a in axes {
            c[self.axis(a)?] += 1;
        }
        Ok(MultiIndex::new(c))
    }

    /// Splits script text into base coordinates: comma lists are taken as
    /// given, juxtaposed names are split greedily.
    fn script_axes(&self, part: &[Spanned]) -> Result<Vec<usize>, ExprError> {
        let mut out = Vec::new();
        for (word, offset) in part {
            if let Some(i) = self.bundle.base_index(word) {
                out.push(i);
                continue;
            }
            let mut rest = word.as_str();
            let mut off = *offset;
            while !rest.is_empty() {
                let hit = (1..=rest.len())
                    .rev()
                    .find_map(|l| self.bundle.base_index(&rest[..l]).map(|i| (i, l)));
                match hit {
                    Some((i, l)) => {
                        out.push(i);
                        rest = &rest[l..];
                        off += l;
                    }
                    None => {
                        return Err(ExprError::UnknownIdentifier {
                            offset: off,
                            name: rest.to_string(),
                        })
                    }
                }
            }
        }
        Ok(out)
    }

    fn index_from_axes(&self, axes: &[usize]) -> MultiIndex {
        MultiIndex::from_axes(self.bundle.m(), axes)
    }

    fn special(&self, name: &str, offset: usize, sup: &Option<Script>, sub: &Option<Script>) -> Result<Option<Expr>, ExprError> {
        let bad = |message: &str| ExprError::Syntax { offset, message: message.into() };
        if let Some(field) = self.bundle.momentum_field(name) {
            let Some(sup) = sup else {
                return Ok(None);
            };
            if sub.is_some() || sup.parts.len() != 1 {
                return Err(bad("malformed momentum"));
            }
            let axes = self.script_axes(&sup.parts[0])?;
            let Some((&dir, rest)) = axes.split_last() else {
                return Err(bad("momentum needs at least one index"));
            };
            return Ok(Some(Expr::symbol(Symbol::momentum(field, self.index_from_axes(rest), dir))));
        }
        if let Some(field) = self.bundle.coefficient_b_field(name) {
            let (Some(sup), Some(sub)) = (sup, sub) else {
                return Ok(None);
            };
            let axes = self.script_axes(&sup.parts.concat())?;
            let col = self.script_axes(&sub.parts.concat())?;
            let (Some((&dir, rest)), [col]) = (axes.split_last(), col.as_slice()) else {
                return Err(bad("malformed B coefficient"));
            };
            return Ok(Some(Expr::symbol(Symbol::Coefficient(Coefficient::B {
                field,
                index: self.index_from_axes(rest),
                dir,
                col: *col,
            }))));
        }
        match (name, sup, sub) {
            ("A", Some(sup), Some(sub)) => {
                let field = match sup.parts.concat().as_slice() {
                    [(f, off)] => self.bundle.fiber_index(f).ok_or_else(|| {
                        ExprError::UnknownIdentifier { offset: *off, name: f.clone() }
                    })?,
                    _ => return Err(bad("malformed A coefficient")),
                };
                if sub.parts.len() != 2 {
                    return Err(bad("A coefficient subscript needs `J;j`"));
                }
                let index = self.script_axes(&sub.parts[0])?;
                let dir = self.script_axes(&sub.parts[1])?;
                let [dir] = dir.as_slice() else {
                    return Err(bad("malformed A coefficient"));
                };
                Ok(Some(Expr::symbol(Symbol::Coefficient(Coefficient::A {
                    field,
                    index: self.index_from_axes(&index),
                    dir: *dir,
                }))))
            }
            ("C", None, Some(sub)) => {
                let dir = self.script_axes(&sub.parts.concat())?;
                let [dir] = dir.as_slice() else {
                    return Err(bad("malformed C coefficient"));
                };
                Ok(Some(Expr::symbol(Symbol::Coefficient(Coefficient::C { dir: *dir }))))
            }
            _ => Ok(None),
        }
    }

    pub fn eval(&self, ast: &Ast) -> Result<Expr, ExprError> {
        match ast {
            Ast::Num(n) => Ok(Expr::constant(BigRational::from_integer(n.clone()))),
            Ast::Neg(a) => Ok(-self.eval(a)?),
            Ast::Add(a, b) => Ok(self.eval(a)? + self.eval(b)?),
            Ast::Sub(a, b) => Ok(self.eval(a)? - self.eval(b)?),
            Ast::Mul(a, b) => Ok(self.eval(a)? * self.eval(b)?),
            Ast::Pow(a, e) => Ok(self.eval(a)?.pow(*e)),
            Ast::Div(a, b, offset) => {
                let d = self.eval(b)?;
                let c = d
                    .as_constant()
                    .ok_or(ExprError::NonConstantDivisor { offset: *offset })?;
                if c.is_zero() {
                    return Err(ExprError::DivisionByZero { offset: *offset });
                }
                Ok(self.eval(a)?.scale(&c.recip()))
            }
            Ast::Deriv { axes, arg } => {
                let mut e = self.eval(arg)?;
                for a in axes {
                    let i = self.axis(a)?;
                    e = total_derivative(self.bundle, &e, i).map_err(|err| ExprError::Syntax {
                        offset: a.1,
                        message: err.to_string(),
                    })?;
                }
                Ok(e)
            }
            Ast::Name { name, offset, bracket, sup, sub } => {
                if self.momenta && (sup.is_some() || sub.is_some() || name == "p") {
                    if let Some(e) = self.special(name, *offset, sup, sub)? {
                        return Ok(e);
                    }
                    if name == "p" && sup.is_none() && sub.is_none() && !self.bindings.contains_key(name) {
                        return Ok(Expr::symbol(Symbol::Energy));
                    }
                }
                if sup.is_some() || sub.is_some() {
                    return Err(ExprError::Syntax {
                        offset: *offset,
                        message: format!("`{name}` cannot carry a script"),
                    });
                }
                let head = self.resolve(name, *offset)?;
                let Some(axes) = bracket else {
                    return Ok(head);
                };
                let j = self.multi(axes)?;
                let atom = match head.terms().next() {
                    Some((m, c)) if head.len() == 1 && c == &BigRational::from_integer(1.into()) && m.factors().len() == 1 && m.factors()[0].1 == 1 => m.factors()[0].0.clone(),
                    _ => {
                        return Err(ExprError::NotDifferentiable { offset: *offset, name: name.clone() })
                    }
                };
                match atom {
                    Symbol::Jet { field, index } => Ok(Expr::symbol(Symbol::jet(field, index.add(&j).expect("same length")))),
                    Symbol::Function { name: f, derivs } => {
                        if j.axes().any(|i| !self.bundle.function_depends(&f, i)) {
                            return Ok(Expr::zero());
                        }
                        Ok(Expr::symbol(Symbol::Function { name: f, derivs: derivs.add(&j).expect("same length") }))
                    }
                    _ => Err(ExprError::NotDifferentiable { offset: *offset, name: name.clone() }),
                }
            }
        }
    }

    fn resolve(&self, name: &str, offset: usize) -> Result<Expr, ExprError> {
        let m = self.bundle.m();
        if let Some(v) = self.bindings.get(name) {
            return Ok(v.clone());
        }
        if let Some(i) = self.bundle.base_index(name) {
            return Ok(Expr::symbol(Symbol::Base(i)));
        }
        if let Some(a) = self.bundle.fiber_index(name) {
            return Ok(Expr::symbol(Symbol::jet(a, MultiIndex::zero(m))));
        }
        if self.bundle.is_function(name) {
            return Ok(Expr::symbol(Symbol::function(name, MultiIndex::zero(m))));
        }
        Err(ExprError::UnknownIdentifier { offset, name: name.to_string() })
    }
}

/// Parses and resolves in one step.
pub fn parse_expr(text: &str, ctx: &ParseContext<'_>) -> Result<Expr, ExprError> {
    ctx.eval(&parse_ast(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::rational;

    fn bundle() -> BundleSpec {
        let mut b = BundleSpec::new(&["t", "x", "y"], &["u", "v"], 2).unwrap();
        b.declare_function("Pi", Some(&["t", "x", "y"][..])).unwrap();
        b.declare_function("g", Some(&["x"][..])).unwrap();
        b
    }

    #[test]
    fn two_term_expression() {
        let b = bundle();
        let ctx = ParseContext::new(&b);
        let e = parse_expr("u[x]*v + 1/2", &ctx).unwrap();
        assert_eq!(e.len(), 2);
        assert!(e.terms().any(|(m, c)| m.is_one() && *c == rational(1, 2)));
    }

    #[test]
    fn mixed_partials_identified() {
        let b = bundle();
        let ctx = ParseContext::new(&b);
        assert_eq!(parse_expr("u[x,y]", &ctx).unwrap(), parse_expr("u[y,x]", &ctx).unwrap());
    }

    #[test]
    fn syntax_error_offset() {
        let b = bundle();
        let ctx = ParseContext::new(&b);
        assert_eq!(
            parse_expr("u[x", &ctx),
            Err(ExprError::Syntax { offset: 3, message: "expected `]`".into() })
        );
    }

    #[test]
    fn division_rules() {
        let b = bundle();
        let ctx = ParseContext::new(&b);
        assert!(matches!(parse_expr("u/v", &ctx), Err(ExprError::NonConstantDivisor { offset: 1 })));
        assert!(matches!(parse_expr("u/(2-2)", &ctx), Err(ExprError::DivisionByZero { .. })));
        assert_eq!(
            parse_expr("(u^2 + v)/2", &ctx).unwrap(),
            parse_expr("1/2*u*u + v/2", &ctx).unwrap()
        );
    }

    #[test]
    fn unknown_identifier() {
        let b = bundle();
        let ctx = ParseContext::new(&b);
        assert_eq!(
            parse_expr("u + w", &ctx),
            Err(ExprError::UnknownIdentifier { offset: 4, name: "w".into() })
        );
    }

    #[test]
    fn function_derivatives_respect_dependencies() {
        let b = bundle();
        let ctx = ParseContext::new(&b);
        assert!(parse_expr("g[t]", &ctx).unwrap().is_zero());
        assert_eq!(parse_expr("Pi[x,t]", &ctx).unwrap(), parse_expr("Pi[t,x]", &ctx).unwrap());
    }

    #[test]
    fn total_derivative_syntax() {
        let b = bundle();
        let ctx = ParseContext::new(&b);
        assert_eq!(
            parse_expr("D[x](u*u[y])", &ctx).unwrap(),
            parse_expr("u[x]*u[y] + u*u[x,y]", &ctx).unwrap()
        );
    }

    #[test]
    fn momenta_and_coefficients() {
        let b = bundle();
        let ctx = ParseContext::new(&b).with_momenta();
        let p = parse_expr("p^{tx}", &ctx).unwrap();
        assert_eq!(
            p,
            Expr::symbol(Symbol::momentum(0, MultiIndex::new(vec![1, 0, 0]), 1))
        );
        let q = parse_expr("q^{t,x}", &ctx).unwrap();
        assert_eq!(q, Expr::symbol(Symbol::momentum(1, MultiIndex::new(vec![1, 0, 0]), 1)));
        assert_eq!(parse_expr("p", &ctx).unwrap(), Expr::symbol(Symbol::Energy));
        assert!(parse_expr("D^{tx}_{y} + A^{u}_{;t} + C_{x}", &ctx).is_ok());
        assert!(parse_expr("p^{tx}", &ParseContext::new(&b)).is_err());
    }

    #[test]
    fn definitions_via_bindings() {
        let b = bundle();
        let mut ctx = ParseContext::new(&b);
        ctx.bind("F", parse_expr("u[t]", &ctx).unwrap());
        assert_eq!(parse_expr("F^2", &ctx).unwrap(), parse_expr("u[t]^2", &ctx).unwrap());
    }
}
