//! Line-oriented problem files.
//!
//! ```text
//! [bundle]
//! base = t x y
//! fiber = u v
//! order = 1
//!
//! [functions]
//! Pi : t x y
//!
//! [definitions]
//! F = u[t] + u*u[x] + v*u[y] + Pi[x]
//!
//! [lagrangian]
//! L = F^2/2
//!
//! [constraints]
//! solve lambda: v[y] = -u[x]
//! implicit u[x] + v[y]
//! ```
//!
//! `#` starts a comment. Definitions may reference each other in any order
//! as long as they are acyclic; they are inlined at parse time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::jetspace::{BundleSpec, JetError};
use crate::prolong::default_names;
use crate::skinnerrusk::{Constraint, ConstraintKind, ConstraintSet, SrError};
use crate::symexpr::{parse_ast, render_text, Ast, Expr, ExprError, ParseContext, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProblemError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}, column {column}: {source}")]
    Expr { line: usize, column: usize, source: ExprError },
    #[error("line {line}: {source}")]
    Jet { line: usize, source: JetError },
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("cyclic definitions through `{0}`")]
    CyclicDefinitions(String),
    #[error("line {line}: {what} has jet order {found}, above the bundle order {order}")]
    OrderTooHigh { line: usize, what: String, found: u32, order: u32 },
    #[error(transparent)]
    Constraint(#[from] SrError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldProblem {
    pub bundle: BundleSpec,
    /// Definitions with all references inlined, in file order.
    pub definitions: Vec<(String, Expr)>,
    pub lagrangian: Expr,
    pub constraints: ConstraintSet,
}

impl FieldProblem {
    /// Bundle in which each multiplier is declared as a function of all base
    /// coordinates, as in constrained Euler–Lagrange equations.
    pub fn multiplier_bundle(&self) -> BundleSpec {
        let mut b = self.bundle.clone();
        for c in &self.constraints.entries {
            // Names clashing with existing declarations keep the original.
            let _ = b.declare_function(&c.name, None);
        }
        b
    }
}

#[derive(Default)]
struct Sections<'a> {
    bundle: Vec<(usize, &'a str)>,
    functions: Vec<(usize, &'a str)>,
    definitions: Vec<(usize, &'a str)>,
    lagrangian: Vec<(usize, &'a str)>,
    constraints: Vec<(usize, &'a str)>,
}

fn split_sections(text: &str) -> Result<Sections<'_>, ProblemError> {
    let mut s = Sections::default();
    let mut current: Option<&mut Vec<(usize, &str)>> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
            current = Some(match name.trim() {
                "bundle" => &mut s.bundle,
                "functions" => &mut s.functions,
                "definitions" => &mut s.definitions,
                "lagrangian" => &mut s.lagrangian,
                "constraints" => &mut s.constraints,
                other => {
                    return Err(ProblemError::Syntax { line, message: format!("unknown section `[{other}]`") })
                }
            });
            continue;
        }
        match current.as_mut() {
            Some(v) => v.push((line, content)),
            None => {
                return Err(ProblemError::Syntax { line, message: "content before the first section".into() })
            }
        }
    }
    Ok(s)
}

fn key_value(line: usize, content: &str) -> Result<(&str, &str), ProblemError> {
    content
        .split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| ProblemError::Syntax { line, message: "expected `name = value`".into() })
}

/// Column (1-based) of `part` inside `full`, both slices of the same line.
fn column_of(full: &str, part: &str) -> usize {
    part.as_ptr() as usize - full.as_ptr() as usize + 1
}

fn expr_error(line: usize, full: &str, part: &str, e: ExprError) -> ProblemError {
    let off = match &e {
        ExprError::Syntax { offset, .. }
        | ExprError::UnknownIdentifier { offset, .. }
        | ExprError::NotDifferentiable { offset, .. }
        | ExprError::NonConstantDivisor { offset }
        | ExprError::DivisionByZero { offset } => *offset,
        _ => 0,
    };
    ProblemError::Expr { line, column: column_of(full, part) + off, source: e }
}

fn parse_bundle(lines: &[(usize, &str)]) -> Result<BundleSpec, ProblemError> {
    let (mut base, mut fiber, mut order) = (None, None, None);
    for &(line, content) in lines {
        let (k, v) = key_value(line, content)?;
        match k {
            "base" => base = Some(v.split_whitespace().collect::<Vec<_>>()),
            "fiber" => fiber = Some(v.split_whitespace().collect::<Vec<_>>()),
            "order" => {
                order = Some(v.parse::<u32>().map_err(|_| ProblemError::Syntax {
                    line,
                    message: format!("`{v}` is not a jet order"),
                })?)
            }
            other => return Err(ProblemError::Syntax { line, message: format!("unknown bundle key `{other}`") }),
        }
    }
    let line = lines.first().map_or(0, |l| l.0);
    let base = base.ok_or(ProblemError::Missing("`base` in [bundle]"))?;
    let fiber = fiber.ok_or(ProblemError::Missing("`fiber` in [bundle]"))?;
    let order = order.ok_or(ProblemError::Missing("`order` in [bundle]"))?;
    BundleSpec::new(&base, &fiber, order).map_err(|source| ProblemError::Jet { line, source })
}

fn parse_functions(b: &mut BundleSpec, lines: &[(usize, &str)]) -> Result<(), ProblemError> {
    for &(line, content) in lines {
        let (name, deps) = content
            .split_once(':')
            .ok_or_else(|| ProblemError::Syntax { line, message: "expected `name : coordinates`".into() })?;
        let deps: Vec<&str> = deps.split_whitespace().collect();
        b.declare_function(name.trim(), Some(&deps)).map_err(|source| ProblemError::Jet { line, source })?;
    }
    Ok(())
}

fn check_order(b: &BundleSpec, line: usize, what: &str, e: &Expr) -> Result<(), ProblemError> {
    match e.jet_order() {
        Some(found) if found > b.order() => {
            Err(ProblemError::OrderTooHigh { line, what: what.into(), found, order: b.order() })
        }
        _ => Ok(()),
    }
}

fn parse_definitions(
    b: &BundleSpec,
    lines: &[(usize, &str)],
) -> Result<Vec<(String, Expr)>, ProblemError> {
    let mut asts: Vec<(usize, &str, &str, Ast)> = Vec::new();
    for &(line, content) in lines {
        let (name, body) = key_value(line, content)?;
        if b.base_index(name).is_some() || b.fiber_index(name).is_some() || b.is_function(name) {
            return Err(ProblemError::Jet { line, source: JetError::DuplicateName(name.into()) });
        }
        if asts.iter().any(|a| a.1 == name) {
            return Err(ProblemError::Jet { line, source: JetError::DuplicateName(name.into()) });
        }
        let ast = parse_ast(body).map_err(|e| expr_error(line, content, body, e))?;
        asts.push((line, name, content, ast));
    }
    let names: BTreeSet<&str> = asts.iter().map(|a| a.1).collect();
    let mut resolved: BTreeMap<String, Expr> = BTreeMap::new();
    while resolved.len() < asts.len() {
        let before = resolved.len();
        for (line, name, content, ast) in &asts {
            if resolved.contains_key(*name) {
                continue;
            }
            let ready = ast
                .names()
                .iter()
                .all(|n| !names.contains(n.as_str()) || resolved.contains_key(n));
            if !ready {
                continue;
            }
            let mut ctx = ParseContext::new(b);
            ctx.bindings = resolved.clone();
            let body = content.split_once('=').map_or("", |(_, v)| v.trim());
            let e = ctx.eval(ast).map_err(|err| expr_error(*line, content, body, err))?;
            check_order(b, *line, name, &e)?;
            resolved.insert(name.to_string(), e);
        }
        if resolved.len() == before {
            let stuck = asts.iter().find(|a| !resolved.contains_key(a.1)).map_or("", |a| a.1);
            return Err(ProblemError::CyclicDefinitions(stuck.into()));
        }
    }
    Ok(asts.iter().map(|a| (a.1.to_string(), resolved[a.1].clone())).collect())
}

fn context<'a>(b: &'a BundleSpec, defs: &[(String, Expr)]) -> ParseContext<'a> {
    let mut ctx = ParseContext::new(b);
    for (n, e) in defs {
        ctx.bind(n, e.clone());
    }
    ctx
}

fn parse_constraints(
    b: &BundleSpec,
    defs: &[(String, Expr)],
    lines: &[(usize, &str)],
) -> Result<ConstraintSet, ProblemError> {
    let ctx = context(b, defs);
    let eval = |line: usize, content: &str, part: &str| -> Result<Expr, ProblemError> {
        let e = crate::symexpr::parse_expr(part, &ctx).map_err(|err| expr_error(line, content, part, err))?;
        check_order(b, line, "constraint", &e)?;
        Ok(e)
    };
    let mut parsed: Vec<(Option<String>, ConstraintKind)> = Vec::new();
    for &(line, content) in lines {
        let (kw, rest) = content.split_once(char::is_whitespace).unwrap_or((content, ""));
        let rest = rest.trim_start();
        let (name, body) = match rest.split_once(':') {
            Some((n, body)) if !n.contains(['=', '[', '(']) => (Some(n.trim().to_string()), body.trim_start()),
            _ => (None, rest),
        };
        let kind = match kw {
            "solve" => {
                let (lhs, rhs) = body
                    .split_once('=')
                    .ok_or_else(|| ProblemError::Syntax { line, message: "expected `solve lhs = rhs`".into() })?;
                let (lhs, rhs) = (lhs.trim(), rhs.trim());
                let hat = eval(line, content, lhs)?;
                let atoms = hat.atoms();
                let sym = match atoms.iter().next() {
                    Some(s @ Symbol::Jet { .. }) if atoms.len() == 1 && hat == Expr::symbol(s.clone()) => s.clone(),
                    _ => {
                        return Err(ProblemError::Syntax {
                            line,
                            message: "the left-hand side of `solve` must be a single jet coordinate".into(),
                        })
                    }
                };
                let Symbol::Jet { field, index } = sym else { unreachable!() };
                ConstraintKind::Solved { field, index, phi: eval(line, content, rhs)? }
            }
            "implicit" => ConstraintKind::Implicit(eval(line, content, body)?),
            other => {
                return Err(ProblemError::Syntax {
                    line,
                    message: format!("expected `solve` or `implicit`, found `{other}`"),
                })
            }
        };
        parsed.push((name, kind));
    }
    let defaults = default_names(parsed.len());
    let entries = parsed
        .into_iter()
        .zip(defaults)
        .map(|((name, kind), d)| Constraint { name: name.unwrap_or(d), kind })
        .collect();
    let set = ConstraintSet::new(entries);
    set.validate(b)?;
    Ok(set)
}

pub fn parse_problem(text: &str) -> Result<FieldProblem, ProblemError> {
    let s = split_sections(text)?;
    if s.bundle.is_empty() {
        return Err(ProblemError::Missing("[bundle] section"));
    }
    let mut bundle = parse_bundle(&s.bundle)?;
    parse_functions(&mut bundle, &s.functions)?;
    let definitions = parse_definitions(&bundle, &s.definitions)?;
    let lagrangian = match s.lagrangian.as_slice() {
        [] => return Err(ProblemError::Missing("[lagrangian] section")),
        [(line, content)] => {
            let (_, body) = key_value(*line, content)?;
            let e = crate::symexpr::parse_expr(body, &context(&bundle, &definitions))
                .map_err(|err| expr_error(*line, content, body, err))?;
            check_order(&bundle, *line, "the Lagrangian", &e)?;
            e
        }
        [_, (line, _), ..] => {
            return Err(ProblemError::Syntax { line: *line, message: "only one Lagrangian may be given".into() })
        }
    };
    let constraints = parse_constraints(&bundle, &definitions, &s.constraints)?;
    Ok(FieldProblem { bundle, definitions, lagrangian, constraints })
}

/// Renders one constraint as a `[constraints]` line.
pub fn render_constraint(b: &BundleSpec, c: &Constraint) -> String {
    match &c.kind {
        ConstraintKind::Solved { field, index, phi } => format!(
            "solve {}: {} = {}",
            c.name,
            render_text(&Expr::symbol(Symbol::jet(*field, index.clone())), b),
            render_text(phi, b)
        ),
        ConstraintKind::Implicit(psi) => format!("implicit {}: {}", c.name, render_text(psi, b)),
    }
}

pub fn render_constraints(b: &BundleSpec, c: &ConstraintSet) -> String {
    let mut out = String::from("[constraints]\n");
    for e in &c.entries {
        out.push_str(&render_constraint(b, e));
        out.push('\n');
    }
    out
}

/// Canonical problem file; parsing the output reproduces the problem.
pub fn render_problem(p: &FieldProblem) -> String {
    let b = &p.bundle;
    let mut out = String::new();
    let _ = writeln!(out, "[bundle]");
    let _ = writeln!(out, "base = {}", b.base_names().join(" "));
    let _ = writeln!(out, "fiber = {}", b.fiber_names().join(" "));
    let _ = writeln!(out, "order = {}", b.order());
    let funcs: Vec<_> = b.functions().collect();
    if !funcs.is_empty() {
        let _ = writeln!(out, "\n[functions]");
        for (name, deps) in funcs {
            let deps: Vec<&str> = deps.iter().map(|&i| b.base_names()[i].as_str()).collect();
            let _ = writeln!(out, "{name} : {}", deps.join(" ")).map(|_| ());
        }
    }
    if !p.definitions.is_empty() {
        let _ = writeln!(out, "\n[definitions]");
        for (n, e) in &p.definitions {
            let _ = writeln!(out, "{n} = {}", render_text(e, b));
        }
    }
    let _ = writeln!(out, "\n[lagrangian]\nL = {}", render_text(&p.lagrangian, b));
    if !p.constraints.is_empty() {
        out.push('\n');
        out.push_str(&render_constraints(b, &p.constraints));
    }
    out
}
