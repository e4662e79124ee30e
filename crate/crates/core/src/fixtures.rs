//! Bundled fluid-control fixtures and their stored expected equations.

use std::time::Instant;

use crate::jetspace::BundleSpec;
use crate::problem::{parse_problem, FieldProblem};
use crate::prolong::{prolong_constraints, same_row_space};
use crate::skinnerrusk::{
    constrained_sr_equations, eliminate_multipliers, regularity_hessian, EquationClass, EquationSet,
};
use crate::symexpr::{equal_up_to_scale, parse_expr, render_text, Expr, ParseContext, Symbol};
use crate::variational::constrained_euler_lagrange;

pub const EULER_SOURCE: &str = include_str!("../fixtures/euler.jv");
pub const NAVIER_STOKES_SOURCE: &str = include_str!("../fixtures/navier_stokes.jv");

pub fn euler() -> FieldProblem {
    parse_problem(EULER_SOURCE).expect("bundled fixture parses")
}

pub fn navier_stokes() -> FieldProblem {
    parse_problem(NAVIER_STOKES_SOURCE).expect("bundled fixture parses")
}

/// `(lhs, rhs)` pairs in problem-file syntax. Multipliers in EL equations are
/// functions of the base coordinates; in Skinner–Rusk tables they are plain
/// symbols.
pub type Table = &'static [(&'static str, &'static str)];

pub const EULER_CEL: Table = &[
    ("D[t](F) + u*D[x](F) + v*D[y](F) + v[y]*F - v[x]*G", "lambda[x]"),
    ("D[t](G) + u*D[x](G) + v*D[y](G) + u[x]*G - u[y]*F", "lambda[y]"),
];

pub const EULER_BOTTOM: Table = &[
    ("0", "u[x]*F + v[x]*G - (B^{t}_{t} + B^{x}_{x} + B^{y}_{y})"),
    ("0", "u[y]*F + v[y]*G - (D^{t}_{t} + D^{x}_{x} + D^{y}_{y})"),
];

pub const EULER_TOP: Table = &[
    ("p^{t}", "F"),
    ("p^{x}", "u*F - lambda"),
    ("p^{y}", "v*F"),
    ("q^{t}", "G"),
    ("q^{x}", "u*G"),
    ("q^{y}", "v*G - lambda"),
];

pub const EULER_ELIMINATED: Table = &[("p^{x} - q^{y}", "u*F - v*G")];

/// Rows and columns ordered `u_t, u_x, u_y, v_t, v_x`.
pub const EULER_HESSIAN: [[&str; 5]; 5] = [
    ["1", "u", "v", "0", "0"],
    ["u", "u^2 + v^2", "u*v", "-v", "-u*v"],
    ["v", "u*v", "v^2", "0", "0"],
    ["0", "-v", "0", "1", "u"],
    ["0", "-u*v", "0", "u", "u^2"],
];

pub const EULER_HESSIAN_RANK: usize = 2;

pub const NS_PROLONGED: &[&str] = &["u[x] + v[y]", "u[x,t] + v[y,t]", "u[x,x] + v[x,y]", "u[x,y] + v[y,y]"];

pub const NS_BOTTOM: Table = EULER_BOTTOM;

pub const NS_TOP: Table = &[
    ("p^{tt}", "0"),
    ("p^{xx}", "-nu*F - lambda_x"),
    ("p^{yy}", "-nu*F"),
    ("p^{tx} + p^{xt}", "-lambda_t"),
    ("p^{ty} + p^{yt}", "0"),
    ("p^{xy} + p^{yx}", "-lambda_y"),
    ("q^{tt}", "0"),
    ("q^{xx}", "-nu*G"),
    ("q^{yy}", "-nu*G - lambda_y"),
    ("q^{tx} + q^{xt}", "0"),
    ("q^{ty} + q^{yt}", "-lambda_t"),
    ("q^{xy} + q^{yx}", "-lambda_x"),
];

pub const NS_ELIMINATED: Table = &[
    ("p^{tx} + p^{xt}", "q^{ty} + q^{yt}"),
    ("p^{xx} + nu*F", "q^{xy} + q^{yx}"),
    ("p^{xy} + p^{yx}", "q^{yy} + nu*G"),
];

/// As printed alongside the setup; compared up to a nonzero rational scale.
pub const NS_CEL: Table = &[
    (
        "2*D[t,x](lambda_t) + D[x,x](lambda_x) + 2*D[x,y](lambda_y) - D[x](lambda)",
        "nu[x,x]*F + 2*nu[x]*D[x](F) + nu*D[x,x](F) + nu[y,y]*F + 2*nu[y]*D[y](F) + nu*D[y,y](F) \
         - D[t](F) - u*D[x](F) - v*D[y](F) - v[y]*F + v[x]*G",
    ),
    (
        "2*D[t,y](lambda_t) + 2*D[x,y](lambda_x) + D[y,y](lambda_y) - D[y](lambda)",
        "nu[x,x]*G + 2*nu[x]*D[x](G) + nu*D[x,x](G) + nu[y,y]*G + 2*nu[y]*D[y](G) + nu*D[y,y](G) \
         - D[t](G) - u*D[x](G) - v*D[y](G) - u[x]*G + u[y]*F",
    ),
];

/// The constrained EL equations as they follow from `L − λ_μ Ψ^μ`.
pub const NS_CEL_DERIVED: Table = &[
    (
        "D[t,x](lambda_t) + D[x,x](lambda_x) + D[x,y](lambda_y) - D[x](lambda)",
        "-D[x,x](nu*F) - D[y,y](nu*F) - D[t](F) - u*D[x](F) - v*D[y](F) - v[y]*F + v[x]*G",
    ),
    (
        "D[t,y](lambda_t) + D[x,y](lambda_x) + D[y,y](lambda_y) - D[y](lambda)",
        "-D[x,x](nu*G) - D[y,y](nu*G) - D[t](G) - u*D[x](G) - v*D[y](G) - u[x]*G + u[y]*F",
    ),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub fixture: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn defs_context<'a>(b: &'a BundleSpec, p: &FieldProblem) -> ParseContext<'a> {
    let mut ctx = ParseContext::new(b);
    for (n, e) in &p.definitions {
        ctx.bind(n, e.clone());
    }
    ctx
}

/// Parses Skinner–Rusk table entries: momenta and coefficients enabled,
/// multipliers as plain symbols.
pub fn parse_sr(p: &FieldProblem, text: &str) -> Expr {
    let mut ctx = defs_context(&p.bundle, p).with_momenta();
    for c in &p.constraints.entries {
        ctx.bind(&c.name, Expr::symbol(Symbol::multiplier(&c.name)));
    }
    parse_expr(text, &ctx).unwrap_or_else(|e| panic!("stored expression `{text}`: {e}"))
}

pub fn parse_el(p: &FieldProblem, text: &str) -> Expr {
    let b = p.multiplier_bundle();
    parse_expr(text, &defs_context(&b, p)).unwrap_or_else(|e| panic!("stored expression `{text}`: {e}"))
}

struct Checker {
    fixture: &'static str,
    out: Vec<Check>,
}

impl Checker {
    fn record(&mut self, name: String, passed: bool, detail: String) {
        self.out.push(Check { fixture: self.fixture, name, passed, detail });
    }

    /// Exact match of an equation selected by its left-hand side.
    fn table_exact(&mut self, p: &FieldProblem, label: &str, set: &EquationSet, class: EquationClass, table: Table) {
        for (i, (lhs, rhs)) in table.iter().enumerate() {
            let (el, er) = (parse_sr(p, lhs), parse_sr(p, rhs));
            let name = format!("{label}[{i}] {lhs} = {rhs}");
            let hit = set.of_class(class).find(|e| e.lhs == el);
            match hit {
                Some(e) if e.rhs == er => self.record(name, true, String::new()),
                Some(e) => {
                    let detail = format!("got rhs {}", render_text(&e.rhs, &p.bundle));
                    self.record(name, false, detail)
                }
                None => self.record(name, false, "no equation with this left-hand side".into()),
            }
        }
    }

    /// Residual match up to a nonzero rational scale against any candidate.
    fn residual_scaled(&mut self, b: &BundleSpec, name: String, expected: &Expr, candidates: &[Expr]) {
        match candidates.iter().find_map(|c| equal_up_to_scale(c, expected)) {
            Some(s) => self.record(name, true, format!("scale {s}")),
            None => {
                let got: Vec<String> = candidates.iter().map(|c| render_text(c, b)).collect();
                let detail = format!(
                    "expected (up to scale) {} = 0\n  candidates:\n    {}",
                    render_text(expected, b),
                    got.join(" = 0\n    ")
                );
                self.record(name, false, detail)
            }
        }
    }
}

fn el_checks(c: &mut Checker, p: &FieldProblem, label: &str, table: Table) {
    let b = p.multiplier_bundle();
    let cel = constrained_euler_lagrange(&p.bundle, &p.lagrangian, &p.constraints.functions())
        .expect("fixture is well formed");
    for (i, (lhs, rhs)) in table.iter().enumerate() {
        let expected = parse_el(p, lhs) - parse_el(p, rhs);
        let own = cel.get(i).cloned().into_iter().collect::<Vec<_>>();
        c.residual_scaled(&b, format!("{label}[{i}]"), &expected, &own);
    }
}

fn bottom_checks(c: &mut Checker, p: &FieldProblem, set: &EquationSet, table: Table) {
    let bottom: Vec<_> = set.of_class(EquationClass::DynamicsBottom).collect();
    for (i, (lhs, rhs)) in table.iter().enumerate() {
        let expected = parse_sr(p, lhs) - parse_sr(p, rhs);
        let ok = bottom.get(i).is_some_and(|e| e.residual() == expected);
        let detail = bottom.get(i).map_or("missing".into(), |e| {
            format!("got {} = {}", render_text(&e.lhs, &p.bundle), render_text(&e.rhs, &p.bundle))
        });
        c.record(format!("csr.bottom[{i}]"), ok, if ok { String::new() } else { detail });
    }
}

pub fn verify_euler() -> Vec<Check> {
    let start = Instant::now();
    let p = euler();
    let mut c = Checker { fixture: "euler", out: Vec::new() };
    el_checks(&mut c, &p, "cel", EULER_CEL);

    let csr = constrained_sr_equations(&p.bundle, &p.lagrangian, &p.constraints, false).expect("well formed");
    bottom_checks(&mut c, &p, &csr, EULER_BOTTOM);
    c.table_exact(&p, "csr.top", &csr, EquationClass::DynamicsTop, EULER_TOP);

    let el = eliminate_multipliers(&p.bundle, &p.lagrangian, &p.constraints).expect("solved form");
    c.table_exact(&p, "eliminate", &el, EquationClass::MultiplierFree, EULER_ELIMINATED);

    let h = regularity_hessian(&p.bundle, &p.lagrangian, Some(&p.constraints), None).expect("solved form");
    let order: Vec<Symbol> = ["u[t]", "u[x]", "u[y]", "v[t]", "v[x]"]
        .iter()
        .map(|s| parse_sr(&p, s).atoms().into_iter().next().expect("atom"))
        .collect();
    c.record(
        "hessian.coordinates".into(),
        h.coordinates == order,
        format!("{:?}", h.coordinates.iter().map(|s| render_text(&Expr::symbol(s.clone()), &p.bundle)).collect::<Vec<_>>()),
    );
    let mut mismatches = Vec::new();
    for (i, row) in EULER_HESSIAN.iter().enumerate() {
        for (j, entry) in row.iter().enumerate() {
            let got = h.matrix.get(i).and_then(|r| r.get(j));
            if got != Some(&parse_sr(&p, entry)) {
                let got = got.map_or("missing".into(), |g| render_text(g, &p.bundle));
                mismatches.push(format!("({i},{j}) expected {entry}, got {got}"));
            }
        }
    }
    c.record("hessian.entries".into(), mismatches.is_empty(), mismatches.join("; "));
    c.record(
        "hessian.rank".into(),
        h.rank == EULER_HESSIAN_RANK,
        format!("rank {}", h.rank),
    );
    c.record("runtime".into(), start.elapsed().as_secs_f64() < 5.0, format!("{:.3} s", start.elapsed().as_secs_f64()));
    c.out
}

pub fn verify_navier_stokes() -> Vec<Check> {
    let start = Instant::now();
    let p = navier_stokes();
    let mut c = Checker { fixture: "navier-stokes", out: Vec::new() };

    let divergence = parse_sr(&p, "u[x] + v[y]");
    let pr = prolong_constraints(&p.bundle, &[("lambda".into(), divergence)], 2).expect("affine");
    let got: Vec<Expr> = pr.constraints.functions().into_iter().map(|(_, e)| e).collect();
    let expected: Vec<Expr> = NS_PROLONGED.iter().map(|s| parse_sr(&p, s)).collect();
    let got_text: Vec<String> = got.iter().map(|e| render_text(e, &p.bundle)).collect();
    c.record(
        "prolong".into(),
        got.len() == expected.len() && same_row_space(&got, &expected),
        got_text.join(", "),
    );

    let csr = constrained_sr_equations(&p.bundle, &p.lagrangian, &p.constraints, false).expect("well formed");
    bottom_checks(&mut c, &p, &csr, NS_BOTTOM);
    c.table_exact(&p, "csr.top", &csr, EquationClass::DynamicsTop, NS_TOP);

    let el = eliminate_multipliers(&p.bundle, &p.lagrangian, &p.constraints).expect("solved form");
    let top: Vec<Expr> = el
        .of_class(EquationClass::MultiplierFree)
        .filter(|e| e.label == "top")
        .map(|e| e.residual())
        .collect();
    for (i, (lhs, rhs)) in NS_ELIMINATED.iter().enumerate() {
        let expected = parse_sr(&p, lhs) - parse_sr(&p, rhs);
        c.residual_scaled(&p.bundle, format!("eliminate[{i}] {lhs} = {rhs}"), &expected, &top);
    }

    el_checks(&mut c, &p, "cel", NS_CEL);
    c.record("runtime".into(), start.elapsed().as_secs_f64() < 30.0, format!("{:.3} s", start.elapsed().as_secs_f64()));
    c.out
}

pub fn verify_all() -> Vec<Check> {
    let (a, b) = std::thread::scope(|s| {
        let e = s.spawn(verify_euler);
        let n = s.spawn(verify_navier_stokes);
        (e.join().expect("euler checks"), n.join().expect("navier-stokes checks"))
    });
    a.into_iter().chain(b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_parse() {
        let e = euler();
        assert_eq!((e.bundle.m(), e.bundle.n(), e.bundle.order(), e.constraints.len()), (3, 2, 1, 1));
        let n = navier_stokes();
        assert_eq!((n.bundle.m(), n.bundle.n(), n.bundle.order(), n.constraints.len()), (3, 2, 2, 4));
    }

    #[test]
    fn euler_checks_pass() {
        for c in verify_euler() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn navier_stokes_derived_cel() {
        let p = navier_stokes();
        let cel = constrained_euler_lagrange(&p.bundle, &p.lagrangian, &p.constraints.functions()).unwrap();
        for (i, (lhs, rhs)) in NS_CEL_DERIVED.iter().enumerate() {
            let expected = parse_el(&p, lhs) - parse_el(&p, rhs);
            assert!(equal_up_to_scale(&cel[i], &expected).is_some(), "equation {i}");
        }
    }

    #[test]
    fn navier_stokes_mid_level_sign() {
        let p = navier_stokes();
        let csr = constrained_sr_equations(&p.bundle, &p.lagrangian, &p.constraints, false).unwrap();
        let mid = csr
            .of_class(EquationClass::DynamicsMid)
            .find(|e| e.lhs == parse_sr(&p, "p^{x}"))
            .unwrap();
        assert_eq!(mid.rhs, parse_sr(&p, "u*F - lambda - (B^{xt}_{t} + B^{xx}_{x} + B^{xy}_{y})"));
    }
}
