//! Jet-bundle bookkeeping: bundle declarations, coordinate enumeration,
//! total derivatives, prolongation of vector fields and contact forms.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::multiindex::{binomial, up_to_order, MultiIndex};
use crate::symexpr::{Expr, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JetError {
    #[error("the {0} dimension must be at least 1")]
    EmptyDimension(&'static str),
    #[error("jet order must be at least 1")]
    ZeroOrder,
    #[error("`{0}` is declared more than once")]
    DuplicateName(String),
    #[error("`{0}` is not a valid identifier")]
    InvalidName(String),
    #[error("unknown base coordinate `{0}`")]
    UnknownCoordinate(String),
    #[error("total derivatives apply to jet and base-function expressions only (found {0})")]
    NotAJetExpression(String),
    #[error("vector field has {got} components, expected {expected}")]
    ComponentCount { expected: usize, got: usize },
    #[error("vector field components must live on the zeroth jet space")]
    NotProjectable,
    #[error("section has {got} components, expected {expected}")]
    SectionSize { expected: usize, got: usize },
}

fn valid_ident(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(h) if h.is_ascii_alphabetic())
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Base and fiber coordinate names, jet order, and declared opaque base
/// functions. Undeclared function names are taken to depend on every base
/// coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BundleSpec {
    base: Vec<String>,
    fiber: Vec<String>,
    order: u32,
    functions: BTreeMap<String, Vec<bool>>,
}

impl BundleSpec {
    pub fn new<S: AsRef<str>>(base: &[S], fiber: &[S], order: u32) -> Result<Self, JetError> {
        if base.is_empty() {
            return Err(JetError::EmptyDimension("base"));
        }
        if fiber.is_empty() {
            return Err(JetError::EmptyDimension("fiber"));
        }
        if order == 0 {
            return Err(JetError::ZeroOrder);
        }
        let b = BundleSpec {
            base: base.iter().map(|s| s.as_ref().to_string()).collect(),
            fiber: fiber.iter().map(|s| s.as_ref().to_string()).collect(),
            order,
            functions: BTreeMap::new(),
        };
        let mut seen = std::collections::BTreeSet::new();
        for n in b.base.iter().chain(&b.fiber) {
            if !valid_ident(n) {
                return Err(JetError::InvalidName(n.clone()));
            }
            if !seen.insert(n.clone()) {
                return Err(JetError::DuplicateName(n.clone()));
            }
        }
        Ok(b)
    }

    /// Declares an opaque function; `None` means it depends on all base
    /// coordinates.
    pub fn declare_function(&mut self, name: &str, deps: Option<&[&str]>) -> Result<(), JetError> {
        if !valid_ident(name) {
            return Err(JetError::InvalidName(name.to_string()));
        }
        if self.base_index(name).is_some()
            || self.fiber_index(name).is_some()
            || self.functions.contains_key(name)
        {
            return Err(JetError::DuplicateName(name.to_string()));
        }
        let mut mask = vec![deps.is_none(); self.m()];
        for d in deps.unwrap_or(&[]) {
            let i = self
                .base_index(d)
                .ok_or_else(|| JetError::UnknownCoordinate(d.to_string()))?;
            mask[i] = true;
        }
        self.functions.insert(name.to_string(), mask);
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.base.len()
    }

    pub fn n(&self) -> usize {
        self.fiber.len()
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn with_order(&self, order: u32) -> Result<Self, JetError> {
        if order == 0 {
            return Err(JetError::ZeroOrder);
        }
        Ok(BundleSpec { order, ..self.clone() })
    }

    pub fn base_names(&self) -> &[String] {
        &self.base
    }

    pub fn fiber_names(&self) -> &[String] {
        &self.fiber
    }

    pub fn base_index(&self, name: &str) -> Option<usize> {
        self.base.iter().position(|n| n == name)
    }

    pub fn fiber_index(&self, name: &str) -> Option<usize> {
        self.fiber.iter().position(|n| n == name)
    }

    pub fn is_function(&self, name: &str) -> bool {
        self.functions.contains_key(name)
    }

    /// Declared functions with the base coordinates they depend on.
    pub fn functions(&self) -> impl Iterator<Item = (&str, Vec<usize>)> {
        self.functions.iter().map(|(n, mask)| {
            (n.as_str(), mask.iter().enumerate().filter(|(_, d)| **d).map(|(i, _)| i).collect())
        })
    }

    pub fn function_depends(&self, name: &str, i: usize) -> bool {
        self.functions.get(name).is_none_or(|mask| mask[i])
    }

    /// `p`, `q`, then `p3`, `p4`, … by fiber index.
    pub fn momentum_letter(&self, field: usize) -> String {
        match field {
            0 => "p".into(),
            1 => "q".into(),
            a => format!("p{}", a + 1),
        }
    }

    pub fn momentum_field(&self, name: &str) -> Option<usize> {
        (0..self.n()).find(|&a| self.momentum_letter(a) == name)
    }

    /// `B`, `D`, then `B3`, `B4`, … by fiber index.
    pub fn coefficient_letter(&self, field: usize) -> String {
        match field {
            0 => "B".into(),
            1 => "D".into(),
            a => format!("B{}", a + 1),
        }
    }

    pub fn coefficient_b_field(&self, name: &str) -> Option<usize> {
        (0..self.n()).find(|&a| self.coefficient_letter(a) == name)
    }

    pub fn jet(&self, field: usize, index: MultiIndex) -> Expr {
        Expr::symbol(Symbol::jet(field, index))
    }

    /// Jet atoms `u^α_J` with `|J| = l`, by field then canonical index order.
    pub fn jets_of_order(&self, l: u32) -> Vec<Symbol> {
        let idx = crate::multiindex::of_order(self.m(), l);
        (0..self.n())
            .flat_map(|a| idx.iter().map(move |j| Symbol::jet(a, j.clone())))
            .collect()
    }
}

/// `m + n·Σ_{l=0}^{k} C(m−1+l, m−1)`.
pub fn jet_dimension(m: u64, n: u64, k: u64) -> u64 {
    m + n * (0..=k).map(|l| binomial(m - 1 + l, m - 1)).sum::<u64>()
}

/// Base coordinates, then jet coordinates of order ≤ r (by order, field,
/// then canonical multi-index order).
pub fn jet_coordinates(b: &BundleSpec, r: u32) -> Vec<Symbol> {
    let mut out: Vec<Symbol> = (0..b.m()).map(Symbol::Base).collect();
    for l in 0..=r {
        out.extend(b.jets_of_order(l));
    }
    out
}

fn reject_non_jet(e: &Expr) -> Result<(), JetError> {
    for s in e.atoms() {
        if matches!(
            s,
            Symbol::Momentum { .. } | Symbol::Energy | Symbol::Multiplier(_) | Symbol::Coefficient(_)
        ) {
            return Err(JetError::NotAJetExpression(format!("{s:?}")));
        }
    }
    Ok(())
}

/// Explicit partial derivative in `x^i`: jet coordinates are held fixed,
/// opaque functions are differentiated through their derivative record.
pub fn explicit_partial_base(b: &BundleSpec, e: &Expr, i: usize) -> Expr {
    e.derive_with(|s| match s {
        Symbol::Base(j) if *j == i => Some(Expr::one()),
        Symbol::Function { name, derivs } if b.function_depends(name, i) => {
            Some(Expr::symbol(Symbol::Function { name: name.clone(), derivs: derivs.raised(i) }))
        }
        _ => None,
    })
}

/// `D_i e = ∂e/∂x^i + Σ u^α_{J+1_i} ∂e/∂u^α_J`.
pub fn total_derivative(b: &BundleSpec, e: &Expr, i: usize) -> Result<Expr, JetError> {
    reject_non_jet(e)?;
    Ok(total_derivative_unchecked(b, e, i))
}

pub(crate) fn total_derivative_unchecked(b: &BundleSpec, e: &Expr, i: usize) -> Expr {
    e.derive_with(|s| match s {
        Symbol::Base(j) if *j == i => Some(Expr::one()),
        Symbol::Jet { field, index } => Some(Expr::symbol(Symbol::jet(*field, index.raised(i)))),
        Symbol::Function { name, derivs } if b.function_depends(name, i) => {
            Some(Expr::symbol(Symbol::Function { name: name.clone(), derivs: derivs.raised(i) }))
        }
        _ => None,
    })
}

/// `D_J e`, applying one total derivative per unit of `J`.
pub fn total_derivative_multi(b: &BundleSpec, e: &Expr, j: &MultiIndex) -> Result<Expr, JetError> {
    reject_non_jet(e)?;
    let mut out = e.clone();
    for i in j.axes() {
        out = total_derivative_unchecked(b, &out, i);
    }
    Ok(out)
}

/// `ξ = ξ^i ∂/∂x^i + ξ^α ∂/∂u^α` with components on `J^0`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub horizontal: Vec<Expr>,
    pub vertical: Vec<Expr>,
}

impl VectorField {
    pub fn new(b: &BundleSpec, horizontal: Vec<Expr>, vertical: Vec<Expr>) -> Result<Self, JetError> {
        let got = horizontal.len() + vertical.len();
        if horizontal.len() != b.m() || vertical.len() != b.n() {
            return Err(JetError::ComponentCount { expected: b.m() + b.n(), got });
        }
        for c in horizontal.iter().chain(&vertical) {
            reject_non_jet(c)?;
            if c.jet_order().unwrap_or(0) > 0 {
                return Err(JetError::NotProjectable);
            }
        }
        Ok(VectorField { horizontal, vertical })
    }

    pub fn vertical(b: &BundleSpec, vertical: Vec<Expr>) -> Result<Self, JetError> {
        VectorField::new(b, vec![Expr::zero(); b.m()], vertical)
    }

    pub fn is_vertical(&self) -> bool {
        self.horizontal.iter().all(Expr::is_zero)
    }
}

/// Components `ξ^α_J`, `|J| ≤ r`, of the r-th prolongation, from
/// `ξ^α_{I+1_i} = D_i ξ^α_I − u^α_{I+1_j} D_i ξ^j`.
pub fn prolong_vector_field(
    b: &BundleSpec,
    xi: &VectorField,
    r: u32,
) -> BTreeMap<(usize, MultiIndex), Expr> {
    let m = b.m();
    let dxi: Vec<Vec<Expr>> = (0..m)
        .map(|i| {
            xi.horizontal
                .iter()
                .map(|h| total_derivative_unchecked(b, h, i))
                .collect()
        })
        .collect();
    let mut out = BTreeMap::new();
    for a in 0..b.n() {
        out.insert((a, MultiIndex::zero(m)), xi.vertical[a].clone());
        for j in up_to_order(m, r).into_iter().filter(|j| !j.is_zero()) {
            let i = j.axes().next().expect("non-zero index");
            let prev = j.lowered(i).expect("component present");
            let mut c = total_derivative_unchecked(b, &out[&(a, prev.clone())], i);
            for (jj, dx) in dxi[i].iter().enumerate() {
                if !dx.is_zero() {
                    c = c - b.jet(a, prev.raised(jj)) * dx;
                }
            }
            out.insert((a, j), c);
        }
    }
    out
}

/// A one-form `Σ a_s ds` over base and jet coordinates `s`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct JetOneForm {
    pub terms: Vec<(Symbol, Expr)>,
}

/// `θ^α_I = du^α_I − u^α_{I+1_i} dx^i`.
pub fn contact_form(b: &BundleSpec, field: usize, index: &MultiIndex) -> JetOneForm {
    let mut terms = vec![(Symbol::jet(field, index.clone()), Expr::one())];
    for i in 0..b.m() {
        terms.push((Symbol::Base(i), -b.jet(field, index.raised(i))));
    }
    JetOneForm { terms }
}

/// Composes a jet expression with the lift of a section `u^α = φ^α(x)`.
pub fn evaluate_on_section(b: &BundleSpec, e: &Expr, section: &[Expr]) -> Result<Expr, JetError> {
    if section.len() != b.n() {
        return Err(JetError::SectionSize { expected: b.n(), got: section.len() });
    }
    let mut bind = BTreeMap::new();
    for s in e.atoms() {
        if let Symbol::Jet { field, index } = &s {
            let mut v = section[*field].clone();
            for i in index.axes() {
                v = explicit_partial_base(b, &v, i);
            }
            bind.insert(s.clone(), v);
        }
    }
    Ok(e.substitute_unchecked(&bind))
}

/// Coefficients of `dx^i` in the pullback of `ω` by the lift of a section.
pub fn pullback(b: &BundleSpec, form: &JetOneForm, section: &[Expr]) -> Result<Vec<Expr>, JetError> {
    let mut out = vec![Expr::zero(); b.m()];
    for (s, a) in &form.terms {
        let a = evaluate_on_section(b, a, section)?;
        let coord = evaluate_on_section(b, &Expr::symbol(s.clone()), section)?;
        for (i, slot) in out.iter_mut().enumerate() {
            let d = explicit_partial_base(b, &coord, i);
            if !d.is_zero() {
                *slot = &*slot + &(&a * &d);
            }
        }
    }
    Ok(out)
}

/// True iff `θ^α_I` pulls back to zero along the lift of the section.
pub fn contact_pullback_check(
    b: &BundleSpec,
    field: usize,
    index: &MultiIndex,
    section: &[Expr],
) -> Result<bool, JetError> {
    Ok(pullback(b, &contact_form(b, field, index), section)?
        .iter()
        .all(Expr::is_zero))
}
