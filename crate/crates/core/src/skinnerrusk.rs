//! Skinner–Rusk equation systems, unconstrained and constrained, multiplier
//! elimination for solved-form constraints, and regularity Hessians.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::jetspace::{explicit_partial_base, BundleSpec};
use crate::linalg::bareiss_rank;
use crate::multiindex::{decompositions, of_order, up_to_order, MultiIndex};
use crate::symexpr::{Coefficient, Expr, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SrError {
    #[error("{what} may only contain base, jet and base-function atoms (found {atom})")]
    ForbiddenAtom { what: String, atom: String },
    #[error("{what} has jet order {found}, above the bundle order {order}")]
    OrderTooHigh { what: String, found: u32, order: u32 },
    #[error("constraint `{0}` solves for a coordinate that is already solved")]
    DuplicateHat(String),
    #[error("constraint `{name}` uses the dependent coordinate {hat} on its right-hand side")]
    HatInPhi { name: String, hat: String },
    #[error("constraint `{0}` is not in solved form")]
    NotSolved(String),
    #[error("constraint `{0}` is below top order but its right-hand side involves top-order coordinates")]
    Fibering(String),
    #[error("constraint `{0}` solves for a coordinate beyond the bundle order")]
    HatOrder(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `u^α̂_Ĵ = Φ`.
    Solved { field: usize, index: MultiIndex, phi: Expr },
    /// `Ψ = 0`.
    Implicit(Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    /// Name of the associated multiplier.
    pub name: String,
    pub kind: ConstraintKind,
}

impl Constraint {
    pub fn solved(name: &str, field: usize, index: MultiIndex, phi: Expr) -> Self {
        Constraint { name: name.into(), kind: ConstraintKind::Solved { field, index, phi } }
    }

    pub fn implicit(name: &str, psi: Expr) -> Self {
        Constraint { name: name.into(), kind: ConstraintKind::Implicit(psi) }
    }

    /// Constraint function; `u^α̂_Ĵ − Φ` for solved entries.
    pub fn psi(&self) -> Expr {
        match &self.kind {
            ConstraintKind::Solved { field, index, phi } => {
                Expr::symbol(Symbol::jet(*field, index.clone())) - phi
            }
            ConstraintKind::Implicit(psi) => psi.clone(),
        }
    }

    pub fn hat(&self) -> Option<Symbol> {
        match &self.kind {
            ConstraintKind::Solved { field, index, .. } => Some(Symbol::jet(*field, index.clone())),
            ConstraintKind::Implicit(_) => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    pub entries: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new(entries: Vec<Constraint>) -> Self {
        ConstraintSet { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_solved(&self) -> bool {
        self.entries.iter().all(|c| c.hat().is_some())
    }

    /// Named constraint functions, in declaration order.
    pub fn functions(&self) -> Vec<(String, Expr)> {
        self.entries.iter().map(|c| (c.name.clone(), c.psi())).collect()
    }

    /// Dependent coordinates with their right-hand sides.
    pub fn hats(&self) -> BTreeMap<Symbol, Expr> {
        self.entries
            .iter()
            .filter_map(|c| match &c.kind {
                ConstraintKind::Solved { field, index, phi } => {
                    Some((Symbol::jet(*field, index.clone()), phi.clone()))
                }
                ConstraintKind::Implicit(_) => None,
            })
            .collect()
    }

    /// Checks atom kinds, orders, distinct hats and that no hat appears in
    /// any right-hand side.
    pub fn validate(&self, b: &BundleSpec) -> Result<(), SrError> {
        let mut hats = BTreeSet::new();
        for c in &self.entries {
            check_jet_expr(b, &c.psi(), &format!("constraint `{}`", c.name))?;
            if let Some(h) = c.hat() {
                if h.jet_order().unwrap_or(0) > b.order() {
                    return Err(SrError::HatOrder(c.name.clone()));
                }
                if !hats.insert(h) {
                    return Err(SrError::DuplicateHat(c.name.clone()));
                }
            }
        }
        for c in &self.entries {
            if let ConstraintKind::Solved { phi, .. } = &c.kind {
                if let Some(h) = hats.iter().find(|h| phi.contains(h)) {
                    return Err(SrError::HatInPhi { name: c.name.clone(), hat: format!("{h:?}") });
                }
            }
        }
        Ok(())
    }

    /// If `|Ĵ| < k` then `Φ` has no top-order jet coordinate.
    pub fn check_fibering(&self, b: &BundleSpec) -> Result<(), SrError> {
        for c in &self.entries {
            if let ConstraintKind::Solved { index, phi, .. } = &c.kind {
                if index.order() < b.order()
                    && phi.any_atom(|s| s.jet_order() == Some(b.order()))
                {
                    return Err(SrError::Fibering(c.name.clone()));
                }
            }
        }
        Ok(())
    }
}

fn check_jet_expr(b: &BundleSpec, e: &Expr, what: &str) -> Result<(), SrError> {
    for s in e.atoms() {
        if !matches!(s, Symbol::Base(_) | Symbol::Jet { .. } | Symbol::Function { .. }) {
            return Err(SrError::ForbiddenAtom { what: what.into(), atom: format!("{s:?}") });
        }
    }
    if let Some(found) = e.jet_order() {
        if found > b.order() {
            return Err(SrError::OrderTooHigh { what: what.into(), found, order: b.order() });
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EquationClass {
    Holonomy,
    DynamicsBottom,
    DynamicsMid,
    DynamicsTop,
    TangencyW1,
    TangencyH0,
    TangencyConstraint,
    MultiplierFree,
    SubmanifoldW0,
    SubmanifoldW1,
    SubmanifoldWC2,
    EulerLagrange,
    Boundary,
    Constraint,
}

impl EquationClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EquationClass::Holonomy => "holonomy",
            EquationClass::DynamicsBottom => "dynamics-bottom",
            EquationClass::DynamicsMid => "dynamics-mid",
            EquationClass::DynamicsTop => "dynamics-top",
            EquationClass::TangencyW1 => "tangency-W1",
            EquationClass::TangencyH0 => "tangency-H0",
            EquationClass::TangencyConstraint => "tangency-constraint",
            EquationClass::MultiplierFree => "multiplier-free",
            EquationClass::SubmanifoldW0 => "submanifold-W0",
            EquationClass::SubmanifoldW1 => "submanifold-W1",
            EquationClass::SubmanifoldWC2 => "submanifold-WC2",
            EquationClass::EulerLagrange => "euler-lagrange",
            EquationClass::Boundary => "boundary",
            EquationClass::Constraint => "constraint",
        }
    }
}

impl fmt::Display for EquationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Index metadata attached to an equation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Indices {
    pub field: Option<usize>,
    pub multi: Option<MultiIndex>,
    pub dir: Option<usize>,
    /// Secondary multi-index, e.g. the `I` of a boundary condition `D_I`.
    pub aux: Option<MultiIndex>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Equation {
    pub class: EquationClass,
    /// Free-form tag distinguishing variants within a class.
    pub label: String,
    pub indices: Indices,
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Equation {
    pub fn new(class: EquationClass, label: &str, indices: Indices, lhs: Expr, rhs: Expr) -> Self {
        Equation { class, label: label.into(), indices, lhs, rhs }
    }

    /// `lhs − rhs`.
    pub fn residual(&self) -> Expr {
        &self.lhs - &self.rhs
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EquationSet {
    pub equations: Vec<Equation>,
}

impl EquationSet {
    pub fn of_class(&self, class: EquationClass) -> impl Iterator<Item = &Equation> {
        self.equations.iter().filter(move |e| e.class == class)
    }

    pub fn push(&mut self, e: Equation) {
        self.equations.push(e);
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    pub fn contains_multiplier(&self) -> bool {
        self.equations.iter().any(|e| {
            e.lhs.any_atom(|s| matches!(s, Symbol::Multiplier(_)))
                || e.rhs.any_atom(|s| matches!(s, Symbol::Multiplier(_)))
        })
    }
}

fn at(field: usize, multi: &MultiIndex) -> Indices {
    Indices { field: Some(field), multi: Some(multi.clone()), ..Indices::default() }
}

fn momentum(field: usize, i: &MultiIndex, dir: usize) -> Expr {
    Expr::symbol(Symbol::momentum(field, i.clone(), dir))
}

fn coef_a(field: usize, j: &MultiIndex, dir: usize) -> Expr {
    Expr::symbol(Symbol::Coefficient(Coefficient::A { field, index: j.clone(), dir }))
}

fn coef_b(field: usize, i: &MultiIndex, dir: usize, col: usize) -> Expr {
    Expr::symbol(Symbol::Coefficient(Coefficient::B { field, index: i.clone(), dir, col }))
}

fn coef_c(dir: usize) -> Expr {
    Expr::symbol(Symbol::Coefficient(Coefficient::C { dir }))
}

fn jet(field: usize, j: &MultiIndex) -> Expr {
    Expr::symbol(Symbol::jet(field, j.clone()))
}

/// `Σ_{I+1_i=J} p^{Ii}_α`; empty for `J = 0`.
pub fn momentum_sum(field: usize, j: &MultiIndex) -> Expr {
    decompositions(j)
        .into_iter()
        .map(|(i, d)| momentum(field, &i, d))
        .sum()
}

/// `Σ_j B^{Jj}_{αj}`.
fn b_trace(b: &BundleSpec, field: usize, j: &MultiIndex) -> Expr {
    (0..b.m()).map(|d| coef_b(field, j, d, d)).sum()
}

/// `Σ_{|I|≤k−1, i} p^{Ii}_α u^α_{I+1_i}`.
fn momentum_pairing(b: &BundleSpec) -> Expr {
    let mut out = Expr::zero();
    for a in 0..b.n() {
        for i in up_to_order(b.m(), b.order() - 1) {
            for d in 0..b.m() {
                out = out + momentum(a, &i, d) * jet(a, &i.raised(d));
            }
        }
    }
    out
}

/// `H = p + p^{Ii}_α u^α_{I+1_i} − L`.
pub fn hamiltonian(b: &BundleSpec, l: &Expr) -> Result<Expr, SrError> {
    check_jet_expr(b, l, "the Lagrangian")?;
    Ok(Expr::symbol(Symbol::Energy) + momentum_pairing(b) - l)
}

/// `p = L − p^{Ii}_α u^α_{I+1_i}`.
pub fn w0_relation(b: &BundleSpec, l: &Expr) -> Equation {
    Equation::new(
        EquationClass::SubmanifoldW0,
        "",
        Indices::default(),
        Expr::symbol(Symbol::Energy),
        l - &momentum_pairing(b),
    )
}

fn holonomy(b: &BundleSpec, out: &mut EquationSet) {
    for a in 0..b.n() {
        for i in up_to_order(b.m(), b.order() - 1) {
            for d in 0..b.m() {
                out.push(Equation::new(
                    EquationClass::Holonomy,
                    "",
                    Indices { dir: Some(d), ..at(a, &i) },
                    coef_a(a, &i, d),
                    jet(a, &i.raised(d)),
                ));
            }
        }
    }
}

/// Multiplier-weighted constraint gradient `λ_μ ∂Ψ^μ/∂s`.
fn multiplier_term(psis: &[(String, Expr)], d: impl Fn(&Expr) -> Expr) -> Expr {
    psis.iter()
        .map(|(name, psi)| Expr::symbol(Symbol::multiplier(name)) * d(psi))
        .sum()
}

/// Dynamics families; `psis` empty gives the unconstrained equations.
fn dynamics(b: &BundleSpec, l: &Expr, psis: &[(String, Expr)], out: &mut EquationSet) {
    let k = b.order();
    let mut levels: [Vec<Equation>; 3] = Default::default();
    for a in 0..b.n() {
        for j in up_to_order(b.m(), k) {
            let s = Symbol::jet(a, j.clone());
            let grad = l.partial(&s) - multiplier_term(psis, |p| p.partial(&s));
            let (class, lhs, rhs) = if j.is_zero() {
                (EquationClass::DynamicsBottom, Expr::zero(), grad - b_trace(b, a, &j))
            } else if j.order() < k {
                (EquationClass::DynamicsMid, momentum_sum(a, &j), grad - b_trace(b, a, &j))
            } else {
                (EquationClass::DynamicsTop, momentum_sum(a, &j), grad)
            };
            let level = if j.is_zero() { 0 } else if j.order() < k { 1 } else { 2 };
            levels[level].push(Equation::new(class, "", at(a, &j), lhs, rhs));
        }
    }
    out.equations.extend(levels.into_iter().flatten());
}

/// Tangency to `H = 0`; `literal` takes `∂L/∂u_I` inside the decomposition
/// sum instead of `∂L/∂u_J`.
fn tangency_h0(b: &BundleSpec, l: &Expr, psis: &[(String, Expr)], literal: bool) -> Vec<Equation> {
    let k = b.order();
    let grad = |s: &Symbol| l.partial(s) - multiplier_term(psis, |p| p.partial(s));
    (0..b.m())
        .map(|d| {
            let mut rhs = explicit_partial_base(b, l, d)
                - multiplier_term(psis, |p| explicit_partial_base(b, p, d));
            for a in 0..b.n() {
                for j in up_to_order(b.m(), k - 1) {
                    let inner = if literal {
                        decompositions(&j)
                            .into_iter()
                            .map(|(i, dd)| grad(&Symbol::jet(a, i.clone())) - momentum(a, &i, dd))
                            .sum()
                    } else {
                        grad(&Symbol::jet(a, j.clone())) - momentum_sum(a, &j)
                    };
                    rhs = rhs + jet(a, &j.raised(d)) * inner;
                }
                for i in up_to_order(b.m(), k - 1) {
                    for dd in 0..b.m() {
                        rhs = rhs - jet(a, &i.raised(dd)) * coef_b(a, &i, dd, d);
                    }
                }
            }
            Equation::new(
                EquationClass::TangencyH0,
                if literal { "literal" } else { "" },
                Indices { dir: Some(d), ..Indices::default() },
                coef_c(d),
                rhs,
            )
        })
        .collect()
}

fn tangency_w1(b: &BundleSpec, l: &Expr, out: &mut EquationSet) {
    let k = b.order();
    let top = of_order(b.m(), k);
    for a in 0..b.n() {
        for kk in &top {
            let dl = l.partial(&Symbol::jet(a, kk.clone()));
            for d in 0..b.m() {
                let lhs: Expr = decompositions(kk)
                    .into_iter()
                    .map(|(i, dd)| coef_b(a, &i, dd, d))
                    .sum();
                let mut rhs = explicit_partial_base(b, &dl, d);
                for beta in 0..b.n() {
                    for i in up_to_order(b.m(), k - 1) {
                        let h = dl.partial(&Symbol::jet(beta, i.clone()));
                        if !h.is_zero() {
                            rhs = rhs + jet(beta, &i.raised(d)) * h;
                        }
                    }
                    for r in &top {
                        let h = dl.partial(&Symbol::jet(beta, r.clone()));
                        if !h.is_zero() {
                            rhs = rhs + coef_a(beta, r, d) * h;
                        }
                    }
                }
                out.push(Equation::new(
                    EquationClass::TangencyW1,
                    "",
                    Indices { dir: Some(d), ..at(a, kk) },
                    lhs,
                    rhs,
                ));
            }
        }
    }
}

/// Unconstrained Skinner–Rusk equations with `η(X) = 1`. With `strict`,
/// the literal reading of the `H = 0` tangency equation is emitted too.
pub fn sr_equations(b: &BundleSpec, l: &Expr, strict: bool) -> Result<EquationSet, SrError> {
    check_jet_expr(b, l, "the Lagrangian")?;
    let mut out = EquationSet::default();
    holonomy(b, &mut out);
    dynamics(b, l, &[], &mut out);
    tangency_w1(b, l, &mut out);
    out.equations.extend(tangency_h0(b, l, &[], false));
    if strict {
        out.equations.extend(tangency_h0(b, l, &[], true));
    }
    out.push(w0_relation(b, l));
    let w1: Vec<Equation> = out
        .of_class(EquationClass::DynamicsTop)
        .map(|e| Equation { class: EquationClass::SubmanifoldW1, ..e.clone() })
        .collect();
    out.equations.extend(w1);
    Ok(out)
}

/// Check coordinates: jet coordinates of order ≤ k that are not solved for.
fn check_coordinates(b: &BundleSpec, hats: &BTreeMap<Symbol, Expr>, order: u32) -> Vec<Symbol> {
    b.jets_of_order(order)
        .into_iter()
        .filter(|s| !hats.contains_key(s))
        .collect()
}

fn all_checks(b: &BundleSpec, hats: &BTreeMap<Symbol, Expr>) -> Vec<Symbol> {
    (0..=b.order()).flat_map(|l| check_coordinates(b, hats, l)).collect()
}

fn tangency_constraint(b: &BundleSpec, c: &ConstraintSet, out: &mut EquationSet) {
    let hats = c.hats();
    let checks = all_checks(b, &hats);
    for entry in &c.entries {
        let ConstraintKind::Solved { field, index, phi } = &entry.kind else {
            continue;
        };
        for d in 0..b.m() {
            let mut rhs = explicit_partial_base(b, phi, d);
            for s in &checks {
                let g = phi.partial(s);
                if g.is_zero() {
                    continue;
                }
                let Symbol::Jet { field: cf, index: ci } = s else { unreachable!() };
                rhs = rhs + coef_a(*cf, ci, d) * g;
            }
            out.push(Equation::new(
                EquationClass::TangencyConstraint,
                &entry.name,
                Indices { dir: Some(d), ..at(*field, index) },
                coef_a(*field, index, d),
                rhs,
            ));
        }
    }
}

/// Constrained Skinner–Rusk equations carrying multiplier atoms. An empty
/// constraint set gives [`sr_equations`].
pub fn constrained_sr_equations(
    b: &BundleSpec,
    l: &Expr,
    c: &ConstraintSet,
    strict: bool,
) -> Result<EquationSet, SrError> {
    if c.is_empty() {
        return sr_equations(b, l, strict);
    }
    check_jet_expr(b, l, "the Lagrangian")?;
    c.validate(b)?;
    c.check_fibering(b)?;
    let psis = c.functions();
    let mut out = EquationSet::default();
    holonomy(b, &mut out);
    dynamics(b, l, &psis, &mut out);
    out.equations.extend(tangency_h0(b, l, &psis, false));
    if strict {
        out.equations.extend(tangency_h0(b, l, &psis, true));
    }
    tangency_constraint(b, c, &mut out);
    out.push(w0_relation(b, l));
    Ok(out)
}

/// Derivatives of the restricted Lagrangian along the constraint graph.
struct Restricted<'a> {
    b: &'a BundleSpec,
    hats: BTreeMap<Symbol, Expr>,
}

impl Restricted<'_> {
    /// `∂f/∂s + Σ_ĥ ∂f/∂ĥ · ∂Φ_ĥ/∂s`.
    fn d(&self, f: &Expr, s: &Symbol) -> Expr {
        let mut out = f.partial(s);
        for (h, phi) in &self.hats {
            let fh = f.partial(h);
            if fh.is_zero() {
                continue;
            }
            let ph = phi.partial(s);
            if !ph.is_zero() {
                out = out + fh * ph;
            }
        }
        out
    }

    /// Explicit base-coordinate derivative along the graph.
    fn dx(&self, f: &Expr, j: usize) -> Expr {
        let mut out = explicit_partial_base(self.b, f, j);
        for (h, phi) in &self.hats {
            let fh = f.partial(h);
            if fh.is_zero() {
                continue;
            }
            let ph = explicit_partial_base(self.b, phi, j);
            if !ph.is_zero() {
                out = out + fh * ph;
            }
        }
        out
    }

    fn top_hats(&self) -> impl Iterator<Item = (&Symbol, &Expr)> {
        let k = self.b.order();
        self.hats.iter().filter(move |(h, _)| h.jet_order() == Some(k))
    }

    /// `Σ_{top ĥ} (Σ_{I+1_i=K̂} p^{Ii}_α̂) · g(Φ_ĥ)`.
    fn weighted_top(&self, g: impl Fn(&Expr) -> Expr) -> Expr {
        self.top_hats()
            .map(|(h, phi)| {
                let Symbol::Jet { field, index } = h else { unreachable!() };
                momentum_sum(*field, index) * g(phi)
            })
            .sum()
    }
}

fn jet_parts(s: &Symbol) -> (usize, &MultiIndex) {
    match s {
        Symbol::Jet { field, index } => (*field, index),
        _ => unreachable!("jet coordinate expected"),
    }
}

/// Multiplier-free equations for solved-form constraints, with the
/// `W^C_2` definition and the constrained tangency equations.
pub fn eliminate_multipliers(b: &BundleSpec, l: &Expr, c: &ConstraintSet) -> Result<EquationSet, SrError> {
    check_jet_expr(b, l, "the Lagrangian")?;
    c.validate(b)?;
    if let Some(e) = c.entries.iter().find(|e| e.hat().is_none()) {
        return Err(SrError::NotSolved(e.name.clone()));
    }
    c.check_fibering(b)?;
    let k = b.order();
    let r = Restricted { b, hats: c.hats() };
    let checks = all_checks(b, &r.hats);
    let mut out = EquationSet::default();
    let mut top = Vec::new();

    for s in &checks {
        let (a, j) = jet_parts(s);
        let mut lhs = if j.is_zero() { Expr::zero() } else { momentum_sum(a, j) };
        let mut b_hat = Expr::zero();
        for (h, phi) in &r.hats {
            let g = phi.partial(s);
            if g.is_zero() {
                continue;
            }
            let (ha, hj) = jet_parts(h);
            lhs = lhs + momentum_sum(ha, hj) * &g;
            if hj.order() < k {
                b_hat = b_hat + b_trace(b, ha, hj) * g;
            }
        }
        let grad = r.d(l, s);
        let (label, rhs) = match j.order() {
            0 => ("bottom", grad - b_trace(b, a, j) - b_hat),
            o if o < k => ("mid", grad - b_trace(b, a, j) - b_hat),
            _ => ("top", grad),
        };
        let eq = Equation::new(EquationClass::MultiplierFree, label, at(a, j), lhs, rhs);
        if label == "top" {
            top.push(eq.clone());
        }
        out.push(eq);
    }

    for entry in &c.entries {
        let (h, phi) = (entry.hat().expect("solved"), c.hats()[&entry.hat().expect("solved")].clone());
        let (a, j) = jet_parts(&h);
        out.push(Equation::new(EquationClass::SubmanifoldWC2, "constraint", at(a, j), Expr::symbol(h.clone()), phi));
    }
    out.push(Equation { class: EquationClass::SubmanifoldWC2, label: "w0".into(), ..w0_relation(b, l) });
    for e in &top {
        out.push(Equation { class: EquationClass::SubmanifoldWC2, label: "top".into(), ..e.clone() });
    }

    tangency_constraint(b, c, &mut out);
    out.equations.extend(constrained_tangency_h0(b, l, &r, &checks));
    constrained_tangency_w1(b, l, &r, &checks, &mut out);
    Ok(out)
}

fn constrained_tangency_h0(b: &BundleSpec, l: &Expr, r: &Restricted<'_>, checks: &[Symbol]) -> Vec<Equation> {
    let k = b.order();
    (0..b.m())
        .map(|d| {
            let mut rhs = r.dx(l, d);
            for s in checks {
                let (a, j) = jet_parts(s);
                if j.order() < k {
                    rhs = rhs + jet(a, &j.raised(d)) * (r.d(l, s) - momentum_sum(a, j));
                }
            }
            for (h, phi) in &r.hats {
                let (a, j) = jet_parts(h);
                if j.order() < k {
                    rhs = rhs - jet(a, &j.raised(d)) * momentum_sum(a, j);
                } else {
                    rhs = rhs - explicit_partial_base(b, phi, d) * momentum_sum(a, j);
                }
            }
            for a in 0..b.n() {
                for i in up_to_order(b.m(), k - 1) {
                    for dd in 0..b.m() {
                        rhs = rhs - jet(a, &i.raised(dd)) * coef_b(a, &i, dd, d);
                    }
                }
            }
            Equation::new(
                EquationClass::TangencyH0,
                "constrained",
                Indices { dir: Some(d), ..Indices::default() },
                coef_c(d),
                rhs,
            )
        })
        .collect()
}

fn constrained_tangency_w1(
    b: &BundleSpec,
    l: &Expr,
    r: &Restricted<'_>,
    checks: &[Symbol],
    out: &mut EquationSet,
) {
    let k = b.order();
    for kk in checks.iter().filter(|s| s.jet_order() == Some(k)) {
        let (a, kidx) = jet_parts(kk);
        let dl = r.d(l, kk);
        for d in 0..b.m() {
            let lhs: Expr = decompositions(kidx)
                .into_iter()
                .map(|(i, dd)| coef_b(a, &i, dd, d))
                .sum();
            let mut rhs = r.dx(&dl, d)
                - r.weighted_top(|phi| explicit_partial_base(b, &phi.partial(kk), d));
            for s in checks {
                let h = r.d(&dl, s) - r.weighted_top(|phi| phi.partial(kk).partial(s));
                if !h.is_zero() {
                    let (ca, cj) = jet_parts(s);
                    rhs = rhs + coef_a(ca, cj, d) * h;
                }
            }
            for (h, phi) in r.top_hats() {
                let g = phi.partial(kk);
                if g.is_zero() {
                    continue;
                }
                let (ha, hj) = jet_parts(h);
                let bs: Expr = decompositions(hj)
                    .into_iter()
                    .map(|(i, dd)| coef_b(ha, &i, dd, d))
                    .sum();
                rhs = rhs - bs * g;
            }
            out.push(Equation::new(
                EquationClass::TangencyW1,
                "constrained",
                Indices { dir: Some(d), ..at(a, kidx) },
                lhs,
                rhs,
            ));
        }
    }
}

/// Hessian matrix over top-order (check) coordinates with its generic rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HessianReport {
    pub coordinates: Vec<Symbol>,
    pub matrix: Vec<Vec<Expr>>,
    pub rank: usize,
}

impl HessianReport {
    pub fn is_regular(&self) -> bool {
        self.rank == self.coordinates.len()
    }
}

/// Unconstrained: `∂²L/∂u^β_R ∂u^α_K`. Constrained (solved form):
/// `∂²L^C/∂u^β̌_Ř ∂u^α̌_Ǩ − Σ p^{Ii}_α̂ ∂²Φ^α̂_K̂/∂u^β̌_Ř ∂u^α̌_Ǩ`. Momenta stay
/// symbolic unless values are supplied. Entries are restricted to the
/// constraint submanifold.
pub fn regularity_hessian(
    b: &BundleSpec,
    l: &Expr,
    c: Option<&ConstraintSet>,
    momenta: Option<&BTreeMap<Symbol, Expr>>,
) -> Result<HessianReport, SrError> {
    check_jet_expr(b, l, "the Lagrangian")?;
    let k = b.order();
    let hats = match c {
        Some(c) if !c.is_empty() => {
            c.validate(b)?;
            if let Some(e) = c.entries.iter().find(|e| e.hat().is_none()) {
                return Err(SrError::NotSolved(e.name.clone()));
            }
            c.check_fibering(b)?;
            c.hats()
        }
        _ => BTreeMap::new(),
    };
    let r = Restricted { b, hats };
    let coords = check_coordinates(b, &r.hats, k);
    let mut matrix = Vec::with_capacity(coords.len());
    for row in &coords {
        let dl = r.d(l, row);
        let mut line = Vec::with_capacity(coords.len());
        for col in &coords {
            let mut e = r.d(&dl, col) - r.weighted_top(|phi| phi.partial(row).partial(col));
            e = e.substitute_unchecked(&r.hats);
            if let Some(vals) = momenta {
                e = e.substitute_unchecked(vals);
            }
            line.push(e);
        }
        matrix.push(line);
    }
    let rank = bareiss_rank(&matrix);
    Ok(HessianReport { coordinates: coords, matrix, rank })
}
