//! Euler–Lagrange operator, boundary conditions, first variation,
//! integration-by-parts oracle and constrained Euler–Lagrange equations.

use std::collections::BTreeSet;

use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::jetspace::{
    prolong_vector_field, total_derivative_multi, total_derivative_unchecked, BundleSpec, JetError,
    VectorField,
};
use crate::linalg::rank_q;
use crate::multiindex::{ibp_lambda, up_to_order, MultiIndex, MultiIndexError};
use crate::symexpr::{Expr, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VariationalError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    MultiIndex(#[from] MultiIndexError),
    #[error("{what} may only contain base, jet and base-function atoms (found {atom})")]
    ForbiddenAtom { what: &'static str, atom: String },
    #[error("{what} has jet order {found}, above the bundle order {order}")]
    OrderTooHigh { what: &'static str, found: u32, order: u32 },
    #[error("only vertical variations are supported")]
    NotVertical,
    #[error("integration box must have one non-degenerate interval per base axis")]
    BadBox,
    #[error("integrands must be polynomials in the base coordinates")]
    NotPolynomialInBase,
}

fn check_jet_expr(b: &BundleSpec, e: &Expr, what: &'static str) -> Result<(), VariationalError> {
    for s in e.atoms() {
        if !matches!(s, Symbol::Base(_) | Symbol::Jet { .. } | Symbol::Function { .. }) {
            return Err(VariationalError::ForbiddenAtom { what, atom: format!("{s:?}") });
        }
    }
    if let Some(found) = e.jet_order() {
        if found > b.order() {
            return Err(VariationalError::OrderTooHigh { what, found, order: b.order() });
        }
    }
    Ok(())
}

fn jet(field: usize, j: &MultiIndex) -> Symbol {
    Symbol::jet(field, j.clone())
}

/// `EL_α(L) = Σ_{|J|≤k} (−1)^{|J|} D_J(∂L/∂u^α_J)`, one expression per field.
pub fn euler_lagrange(b: &BundleSpec, l: &Expr) -> Result<Vec<Expr>, VariationalError> {
    check_jet_expr(b, l, "the Lagrangian")?;
    Ok(euler_lagrange_unchecked(b, l))
}

fn euler_lagrange_unchecked(b: &BundleSpec, l: &Expr) -> Vec<Expr> {
    let idx = up_to_order(b.m(), b.order());
    (0..b.n())
        .map(|a| {
            let mut total = Expr::zero();
            for j in &idx {
                let d = l.partial(&jet(a, j));
                if d.is_zero() {
                    continue;
                }
                let dj = total_derivative_multi(b, &d, j).expect("jet expression");
                total = if j.order() % 2 == 0 { total + dj } else { total - dj };
            }
            total
        })
        .collect()
}

/// A boundary condition `D_I(∂L/∂u^α_J) = 0` with `|I| < |J|`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryCondition {
    pub field: usize,
    pub derivative: MultiIndex,
    pub index: MultiIndex,
    pub expr: Expr,
}

/// Boundary conditions, zero and duplicate expressions dropped.
pub fn boundary_conditions(b: &BundleSpec, l: &Expr) -> Result<Vec<BoundaryCondition>, VariationalError> {
    check_jet_expr(b, l, "the Lagrangian")?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for a in 0..b.n() {
        for j in up_to_order(b.m(), b.order()) {
            let d = l.partial(&jet(a, &j));
            if d.is_zero() {
                continue;
            }
            for i in up_to_order(b.m(), j.order().saturating_sub(1)) {
                if i.order() >= j.order() {
                    continue;
                }
                let e = total_derivative_multi(b, &d, &i)?;
                if !e.is_zero() && seen.insert(e.clone()) {
                    out.push(BoundaryCondition { field: a, derivative: i, index: j.clone(), expr: e });
                }
            }
        }
    }
    Ok(out)
}

/// First variation of the action along a vertical field.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationReport {
    /// `Σ_{α,J} D_J ξ^α · ∂L/∂u^α_J`.
    pub density: Expr,
    /// `Σ_α ξ^α · EL_α(L)`.
    pub interior: Expr,
    /// Boundary current per base direction.
    pub currents: Vec<Expr>,
    /// Jet order of the interior density.
    pub order: u32,
}

impl VariationReport {
    /// Checks `density = interior + Σ_i D_i current_i` canonically.
    pub fn identity_holds(&self, b: &BundleSpec) -> bool {
        let mut rhs = self.interior.clone();
        for (i, c) in self.currents.iter().enumerate() {
            rhs = rhs + total_derivative_unchecked(b, c, i);
        }
        rhs == self.density
    }
}

/// Pairs `(I_f, I_g)` with `I_f + I_g + 1_i = J`.
fn ibp_splits(j: &MultiIndex, i: usize) -> Vec<(MultiIndex, MultiIndex)> {
    let Some(k) = j.lowered(i) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for f in up_to_order(j.dim(), k.order()) {
        if let Ok(g) = k.sub(&f) {
            out.push((f, g));
        }
    }
    out
}

pub fn first_variation(b: &BundleSpec, l: &Expr, xi: &VectorField) -> Result<VariationReport, VariationalError> {
    check_jet_expr(b, l, "the Lagrangian")?;
    if !xi.is_vertical() {
        return Err(VariationalError::NotVertical);
    }
    let k = b.order();
    let m = b.m();
    let lifted = prolong_vector_field(b, xi, 2 * k);
    let el = euler_lagrange_unchecked(b, l);
    let mut density = Expr::zero();
    let mut interior = Expr::zero();
    let mut currents = vec![Expr::zero(); m];
    for a in 0..b.n() {
        interior = interior + &xi.vertical[a] * &el[a];
        for j in up_to_order(m, k) {
            let d = l.partial(&jet(a, &j));
            if d.is_zero() {
                continue;
            }
            density = density + &lifted[&(a, j.clone())] * &d;
            for (i, current) in currents.iter_mut().enumerate() {
                for (i_f, i_g) in ibp_splits(&j, i) {
                    let lam = ibp_lambda(&i_f, &i_g, &j)?;
                    let dg = total_derivative_multi(b, &d, &i_g)?;
                    let term = (&lifted[&(a, i_f)] * &dg).scale(&lam);
                    *current = &*current + &term;
                }
            }
        }
    }
    let order = interior.jet_order().unwrap_or(0);
    Ok(VariationReport { density, interior, currents, order })
}

fn integrate_box(e: &Expr, bounds: &[(BigRational, BigRational)], skip: Option<usize>) -> Result<BigRational, VariationalError> {
    let mut total = BigRational::zero();
    for (mono, c) in e.terms() {
        let mut exps = vec![0u32; bounds.len()];
        for (s, p) in mono.factors() {
            match s {
                Symbol::Base(i) if *i < bounds.len() && Some(*i) != skip => exps[*i] = *p,
                _ => return Err(VariationalError::NotPolynomialInBase),
            }
        }
        let mut t = c.clone();
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            let p = exps[i] as usize + 1;
            let n = BigRational::from_integer(p.into());
            t *= (num_traits::pow(hi.clone(), p) - num_traits::pow(lo.clone(), p)) / n;
        }
        total += t;
    }
    Ok(total)
}

fn base_partial(e: &Expr, j: &MultiIndex) -> Expr {
    let mut out = e.clone();
    for i in j.axes() {
        out = out.partial(&Symbol::Base(i));
    }
    out
}

/// Checks higher-order integration by parts on a box by exact integration.
/// Face integrals are top minus bottom along the face normal.
pub fn ibp_verify(
    f: &Expr,
    g: &Expr,
    j: &MultiIndex,
    bounds: &[(BigRational, BigRational)],
) -> Result<bool, VariationalError> {
    let m = bounds.len();
    if m == 0 || j.dim() != m || bounds.iter().any(|(lo, hi)| lo >= hi) {
        return Err(VariationalError::BadBox);
    }
    let lhs = integrate_box(&(base_partial(f, j) * g), bounds, None)?;
    let mut rhs = integrate_box(&(f * &base_partial(g, j)), bounds, None)?;
    if j.order() % 2 == 1 {
        rhs = -rhs;
    }
    for (i, (lo, hi)) in bounds.iter().enumerate() {
        for (i_f, i_g) in ibp_splits(j, i) {
            let lam = ibp_lambda(&i_f, &i_g, j)?;
            let h = base_partial(f, &i_f) * base_partial(g, &i_g);
            let at = |v: &BigRational| {
                let mut bind = std::collections::BTreeMap::new();
                bind.insert(Symbol::Base(i), Expr::constant(v.clone()));
                h.substitute_unchecked(&bind)
            };
            let face = &at(hi) - &at(lo);
            rhs += lam * integrate_box(&face, bounds, Some(i))?;
        }
    }
    Ok(lhs == rhs)
}

/// `EL_α` of `L − λ_μ Ψ^μ` with each `λ_μ` an opaque function of the base
/// coordinates named after its constraint.
pub fn constrained_euler_lagrange(
    b: &BundleSpec,
    l: &Expr,
    constraints: &[(String, Expr)],
) -> Result<Vec<Expr>, VariationalError> {
    check_jet_expr(b, l, "the Lagrangian")?;
    let mut lag = l.clone();
    for (name, psi) in constraints {
        check_jet_expr(b, psi, "a constraint")?;
        let lam = Expr::symbol(Symbol::function(name, MultiIndex::zero(b.m())));
        lag = lag - lam * psi;
    }
    Ok(euler_lagrange_unchecked(b, &lag))
}

/// Rank of `∂Ψ^μ/∂u^α_J` (jet coordinates of order ≤ k) at a point. A rank
/// equal to the number of constraints indicates functional independence
/// there; this is a diagnostic only.
pub fn constraint_rank_at(
    b: &BundleSpec,
    constraints: &[Expr],
    value: &impl Fn(&Symbol) -> Option<BigRational>,
) -> Option<usize> {
    let coords: Vec<Symbol> = (0..=b.order()).flat_map(|l| b.jets_of_order(l)).collect();
    let mut rows = Vec::new();
    for psi in constraints {
        let mut row = Vec::with_capacity(coords.len());
        for s in &coords {
            row.push(psi.partial(s).eval(value)?);
        }
        rows.push(row);
    }
    Some(rank_q(&rows))
}

/// Evaluates at a point where every atom takes the value one, a convenient
/// default for the rank diagnostic.
pub fn unit_point(_: &Symbol) -> Option<BigRational> {
    Some(BigRational::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::{parse_expr, rational, ParseContext};

    fn bundle(base: &[&str], k: u32) -> BundleSpec {
        let mut b = BundleSpec::new(base, &["u"], k).unwrap();
        b.declare_function("f", None).unwrap();
        b
    }

    fn p(b: &BundleSpec, s: &str) -> Expr {
        parse_expr(s, &ParseContext::new(b)).unwrap()
    }

    #[test]
    fn euler_lagrange_examples() {
        let b = bundle(&["x"], 1);
        assert_eq!(euler_lagrange(&b, &p(&b, "u[x]^2/2")).unwrap(), vec![p(&b, "-u[x,x]")]);
        let b = bundle(&["x"], 2);
        assert_eq!(euler_lagrange(&b, &p(&b, "u[x,x]^2/2")).unwrap(), vec![p(&b, "u[x,x,x,x]")]);
        let b = bundle(&["x", "y"], 1);
        assert_eq!(
            euler_lagrange(&b, &p(&b, "(u[x]^2 + u[y]^2)/2")).unwrap(),
            vec![p(&b, "-u[x,x] - u[y,y]")]
        );
    }

    #[test]
    fn euler_lagrange_rejects_momenta() {
        let b = bundle(&["x"], 1);
        let e = Expr::symbol(Symbol::Energy);
        assert!(matches!(euler_lagrange(&b, &e), Err(VariationalError::ForbiddenAtom { .. })));
        assert!(matches!(
            euler_lagrange(&b, &p(&b, "u[x,x]")),
            Err(VariationalError::OrderTooHigh { .. })
        ));
    }

    #[test]
    fn boundary_examples() {
        let b = bundle(&["x"], 1);
        let bc = boundary_conditions(&b, &p(&b, "u[x]^2/2")).unwrap();
        assert_eq!(bc.iter().map(|c| c.expr.clone()).collect::<Vec<_>>(), vec![p(&b, "u[x]")]);
        let b = bundle(&["x"], 2);
        let bc = boundary_conditions(&b, &p(&b, "u[x,x]^2/2")).unwrap();
        assert_eq!(
            bc.iter().map(|c| c.expr.clone()).collect::<Vec<_>>(),
            vec![p(&b, "u[x,x]"), p(&b, "u[x,x,x]")]
        );
        assert!(boundary_conditions(&b, &p(&b, "u^3")).unwrap().is_empty());
    }

    #[test]
    fn first_variation_examples() {
        let b = bundle(&["x"], 1);
        let l = p(&b, "u[x]^2/2");
        let zero = VectorField::vertical(&b, vec![Expr::zero()]).unwrap();
        let r = first_variation(&b, &l, &zero).unwrap();
        assert!(r.density.is_zero() && r.interior.is_zero() && r.currents.iter().all(Expr::is_zero));
        let xi = VectorField::vertical(&b, vec![p(&b, "f")]).unwrap();
        let r = first_variation(&b, &l, &xi).unwrap();
        assert_eq!(r.interior, p(&b, "-f*u[x,x]"));
        assert_eq!(r.currents, vec![p(&b, "f*u[x]")]);
        assert!(r.identity_holds(&b));
        let h = VectorField::new(&b, vec![Expr::one()], vec![Expr::zero()]).unwrap();
        assert_eq!(first_variation(&b, &l, &h), Err(VariationalError::NotVertical));
    }

    #[test]
    fn first_variation_second_order_two_dims() {
        let b = bundle(&["x", "y"], 2);
        let l = p(&b, "u[x,y]^2*u + x*u[x]*u[y,y] - f*u[x,x]*u[y]");
        let xi = VectorField::vertical(&b, vec![p(&b, "f*u + x")]).unwrap();
        assert!(first_variation(&b, &l, &xi).unwrap().identity_holds(&b));
    }

    #[test]
    fn ibp_examples() {
        let b = BundleSpec::new(&["x"], &["u"], 1).unwrap();
        let unit = vec![(rational(0, 1), rational(1, 1))];
        assert!(ibp_verify(&p(&b, "x^2"), &p(&b, "x"), &MultiIndex::new(vec![1]), &unit).unwrap());
        assert!(ibp_verify(&p(&b, "x^2"), &p(&b, "x"), &MultiIndex::new(vec![0]), &unit).unwrap());
        let b = BundleSpec::new(&["x", "y"], &["u"], 1).unwrap();
        let sq = vec![(rational(0, 1), rational(1, 1)); 2];
        assert!(ibp_verify(&p(&b, "x*y"), &p(&b, "x + y"), &MultiIndex::new(vec![1, 1]), &sq).unwrap());
        assert!(ibp_verify(&p(&b, "x"), &p(&b, "u"), &MultiIndex::new(vec![1, 0]), &sq).is_err());
    }

    #[test]
    fn constrained_with_empty_list_is_plain() {
        let b = bundle(&["x", "y"], 1);
        let l = p(&b, "u[x]^2*u[y]");
        assert_eq!(constrained_euler_lagrange(&b, &l, &[]).unwrap(), euler_lagrange(&b, &l).unwrap());
        let c = vec![("lambda".to_string(), p(&b, "u[x]"))];
        let with = constrained_euler_lagrange(&b, &l, &c).unwrap();
        assert!(with[0].any_atom(|s| matches!(s, Symbol::Function { name, .. } if name.as_ref() == "lambda")));
    }

    #[test]
    fn rank_diagnostic() {
        let b = BundleSpec::new(&["x", "y"], &["u", "v"], 1).unwrap();
        let c = vec![p(&b, "u[x] + v[y]"), p(&b, "2*u[x] + 2*v[y]")];
        assert_eq!(constraint_rank_at(&b, &c, &unit_point), Some(1));
    }
}
