//! Closure of constraint sets under total derivatives up to a target order.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use crate::jetspace::{total_derivative, BundleSpec, JetError};
use crate::linalg::{rank_q, rref};
use crate::multiindex::MultiIndex;
use crate::skinnerrusk::{Constraint, ConstraintSet};
use crate::symexpr::{Expr, Monomial, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProlongError {
    #[error("constraint `{name}` has order {order}, above the target order {target}")]
    TargetBelowOrder { name: String, order: u32, target: u32 },
    #[error(transparent)]
    Jet(#[from] JetError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prolongation {
    pub constraints: ConstraintSet,
    /// Number of derivative sweeps run, including the one that detected
    /// stabilization.
    pub iterations: usize,
    /// All generators affine in the jet coordinates.
    pub affine: bool,
}

#[derive(Clone, Debug)]
struct Generator {
    origin: usize,
    deriv: MultiIndex,
    expr: Expr,
}

fn is_affine(e: &Expr) -> bool {
    e.degree_in(Symbol::is_jet) <= 1
}

/// `lambda` differentiated along `t` then `x` becomes `lambda_tx`.
pub fn derived_name(b: &BundleSpec, parent: &str, deriv: &MultiIndex) -> String {
    if deriv.is_zero() {
        return parent.to_string();
    }
    let names: Vec<&str> = deriv.axes().map(|i| b.base_names()[i].as_str()).collect();
    let sep = if names.iter().all(|n| n.chars().count() == 1) { "" } else { "," };
    format!("{parent}_{}", names.join(sep))
}

/// Coefficient rows of `exprs` over their joint monomial support.
fn coefficient_rows(exprs: &[&Expr]) -> Vec<Vec<BigRational>> {
    let cols: BTreeSet<&Monomial> = exprs.iter().flat_map(|e| e.terms().map(|(m, _)| m)).collect();
    let index: BTreeMap<&Monomial, usize> = cols.iter().enumerate().map(|(i, m)| (*m, i)).collect();
    exprs
        .iter()
        .map(|e| {
            let mut row = vec![BigRational::zero(); cols.len()];
            for (m, c) in e.terms() {
                row[index[m]] = c.clone();
            }
            row
        })
        .collect()
}

pub fn rank_over_q(exprs: &[Expr]) -> usize {
    rank_q(&coefficient_rows(&exprs.iter().collect::<Vec<_>>()))
}

/// Whether both lists span the same ℚ-vector space of polynomials.
pub fn same_row_space(a: &[Expr], b: &[Expr]) -> bool {
    let joint: Vec<Expr> = a.iter().chain(b).cloned().collect();
    let r = rank_over_q(&joint);
    r == rank_over_q(a) && r == rank_over_q(b)
}

/// Whether `e` is a ℚ-linear combination of `basis`.
pub fn in_row_space(e: &Expr, basis: &[Expr]) -> bool {
    let mut all = basis.to_vec();
    all.push(e.clone());
    rank_over_q(&all) == rank_over_q(basis)
}

/// Reduced basis of the ℚ-span, as expressions.
pub fn reduced_basis(exprs: &[Expr]) -> Vec<Expr> {
    let refs: Vec<&Expr> = exprs.iter().collect();
    let cols: Vec<Monomial> = refs
        .iter()
        .flat_map(|e| e.terms().map(|(m, _)| m.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rows = coefficient_rows(&refs);
    rref(&mut rows);
    rows.into_iter()
        .map(|row| Expr::from_terms(cols.iter().cloned().zip(row)))
        .collect()
}

/// Prolongs named constraints on `J^r` to order `target`. Affine systems are
/// pruned of ℚ-linearly redundant generators and stabilize when a sweep
/// leaves the row space unchanged; otherwise generators are kept verbatim and
/// stabilization is set equality of canonical forms.
pub fn prolong_constraints(
    b: &BundleSpec,
    constraints: &[(String, Expr)],
    target: u32,
) -> Result<Prolongation, ProlongError> {
    for (name, psi) in constraints {
        let order = psi.jet_order().unwrap_or(0);
        if order > target {
            return Err(ProlongError::TargetBelowOrder { name: name.clone(), order, target });
        }
        // Rejects momenta, multipliers and other non-jet atoms.
        total_derivative(b, psi, 0)?;
    }
    let b = b.with_order(target.max(1))?;
    let mut gens: Vec<Generator> = constraints
        .iter()
        .enumerate()
        .map(|(origin, (_, e))| Generator { origin, deriv: MultiIndex::zero(b.m()), expr: e.clone() })
        .collect();
    let affine = constraints.iter().all(|(_, e)| is_affine(e));
    let mut frontier: Vec<usize> = (0..gens.len()).collect();
    let mut seen: BTreeSet<(usize, MultiIndex)> = gens.iter().map(|g| (g.origin, g.deriv.clone())).collect();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut fresh = Vec::new();
        for &gi in &frontier {
            let g = gens[gi].clone();
            if g.expr.jet_order().unwrap_or(0) >= target {
                continue;
            }
            for i in 0..b.m() {
                let deriv = g.deriv.raised(i);
                if !seen.insert((g.origin, deriv.clone())) {
                    continue;
                }
                let expr = total_derivative(&b, &g.expr, i)?;
                if expr.jet_order().unwrap_or(0) <= target {
                    fresh.push(Generator { origin: g.origin, deriv, expr });
                }
            }
        }
        let before: Vec<Expr> = gens.iter().map(|g| g.expr.clone()).collect();
        let start = gens.len();
        gens.extend(fresh);
        frontier = (start..gens.len()).collect();
        let after: Vec<Expr> = gens.iter().map(|g| g.expr.clone()).collect();
        let stable = if affine {
            same_row_space(&before, &after)
        } else {
            before.iter().collect::<BTreeSet<_>>() == after.iter().collect::<BTreeSet<_>>()
        };
        if stable || frontier.is_empty() {
            break;
        }
    }

    gens.sort_by(|a, c| (a.origin, &a.deriv).cmp(&(c.origin, &c.deriv)));
    let mut kept: Vec<Generator> = Vec::new();
    for g in gens {
        if g.expr.is_zero() {
            continue;
        }
        let redundant = if affine {
            let basis: Vec<Expr> = kept.iter().map(|k| k.expr.clone()).collect();
            !basis.is_empty() && in_row_space(&g.expr, &basis)
        } else {
            kept.iter().any(|k| k.expr == g.expr)
        };
        if !redundant {
            kept.push(g);
        }
    }
    let entries = kept
        .into_iter()
        .map(|g| Constraint::implicit(&derived_name(&b, &constraints[g.origin].0, &g.deriv), g.expr))
        .collect();
    Ok(Prolongation { constraints: ConstraintSet::new(entries), iterations, affine })
}

/// Default multiplier names: `lambda` for a single constraint, otherwise
/// `lambda1`, `lambda2`, ...
pub fn default_names(count: usize) -> Vec<String> {
    if count == 1 {
        vec!["lambda".into()]
    } else {
        (1..=count).map(|i| format!("lambda{i}")).collect()
    }
}
