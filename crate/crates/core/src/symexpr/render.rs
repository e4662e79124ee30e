//! Plain-text and LaTeX renderers. Plain text uses the parser grammar, so
//! rendered output parses back to the same canonical expression.

use num_rational::BigRational;
use num_traits::{One, Signed};

use super::{Coefficient, Expr, Monomial, Symbol};
use crate::jetspace::BundleSpec;
use crate::multiindex::MultiIndex;

fn join_axes(b: &BundleSpec, axes: impl Iterator<Item = usize>) -> String {
    let names: Vec<&str> = axes.map(|i| b.base_names()[i].as_str()).collect();
    if b.base_names().iter().all(|n| n.chars().count() == 1) {
        names.concat()
    } else {
        names.join(",")
    }
}

fn index_axes(b: &BundleSpec, j: &MultiIndex) -> String {
    join_axes(b, j.axes())
}

pub fn render_symbol_text(s: &Symbol, b: &BundleSpec) -> String {
    let bracket = |name: &str, j: &MultiIndex| {
        if j.is_zero() {
            name.to_string()
        } else {
            let axes: Vec<&str> = j.axes().map(|i| b.base_names()[i].as_str()).collect();
            format!("{name}[{}]", axes.join(","))
        }
    };
    match s {
        Symbol::Base(i) => b.base_names()[*i].clone(),
        Symbol::Jet { field, index } => bracket(&b.fiber_names()[*field], index),
        Symbol::Function { name, derivs } => bracket(name, derivs),
        Symbol::Multiplier(name) => name.to_string(),
        Symbol::Energy => "p".to_string(),
        Symbol::Momentum { field, index, dir } => format!(
            "{}^{{{}}}",
            b.momentum_letter(*field),
            join_axes(b, index.axes().chain(std::iter::once(*dir)))
        ),
        Symbol::Coefficient(c) => match c {
            Coefficient::A { field, index, dir } => format!(
                "A^{{{}}}_{{{};{}}}",
                b.fiber_names()[*field],
                index_axes(b, index),
                b.base_names()[*dir]
            ),
            Coefficient::B { field, index, dir, col } => format!(
                "{}^{{{}}}_{{{}}}",
                b.coefficient_letter(*field),
                join_axes(b, index.axes().chain(std::iter::once(*dir))),
                b.base_names()[*col]
            ),
            Coefficient::C { dir } => format!("C_{{{}}}", b.base_names()[*dir]),
        },
    }
}

fn monomial_text(m: &Monomial, b: &BundleSpec) -> String {
    m.factors()
        .iter()
        .map(|(s, e)| {
            let a = render_symbol_text(s, b);
            if *e == 1 {
                a
            } else {
                format!("{a}^{e}")
            }
        })
        .collect::<Vec<_>>()
        .join("*")
}

fn render_terms(
    e: &Expr,
    coeff: impl Fn(&BigRational) -> String,
    mono: impl Fn(&Monomial) -> String,
    join: &str,
) -> String {
    if e.is_zero() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (k, (m, c)) in e.terms().rev().enumerate() {
        let neg = c.is_negative();
        let a = c.abs();
        match (k, neg) {
            (0, true) => out.push('-'),
            (0, false) => {}
            (_, true) => out.push_str(" - "),
            (_, false) => out.push_str(" + "),
        }
        if m.is_one() {
            out.push_str(&coeff(&a));
        } else if a.is_one() {
            out.push_str(&mono(m));
        } else {
            out.push_str(&coeff(&a));
            out.push_str(join);
            out.push_str(&mono(m));
        }
    }
    out
}

pub fn render_text(e: &Expr, b: &BundleSpec) -> String {
    render_terms(e, |c| c.to_string(), |m| monomial_text(m, b), "*")
}

const GREEK: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa",
    "lambda", "mu", "nu", "xi", "pi", "rho", "sigma", "tau", "upsilon", "phi", "chi", "psi",
    "omega", "Gamma", "Delta", "Theta", "Lambda", "Xi", "Pi", "Sigma", "Upsilon", "Phi", "Psi",
    "Omega",
];

fn latex_name(name: &str) -> String {
    let (head, tail) = match name.split_once('_') {
        Some((h, t)) => (h, Some(t)),
        None => (name, None),
    };
    let head = if GREEK.contains(&head) {
        format!("\\{head}")
    } else if head.chars().count() > 1 {
        format!("\\mathrm{{{head}}}")
    } else {
        head.to_string()
    };
    match tail {
        Some(t) => format!("{head}_{{{t}}}"),
        None => head,
    }
}

pub fn render_symbol_latex(s: &Symbol, b: &BundleSpec) -> String {
    match s {
        Symbol::Base(i) => latex_name(&b.base_names()[*i]),
        Symbol::Jet { field, index } => {
            let n = latex_name(&b.fiber_names()[*field]);
            if index.is_zero() {
                n
            } else {
                format!("{n}_{{{}}}", index_axes(b, index))
            }
        }
        Symbol::Function { name, derivs } => {
            let n = latex_name(name);
            match derivs.order() {
                0 => n,
                1 => format!("\\partial_{{{}}}{n}", index_axes(b, derivs)),
                o => format!("\\partial^{{{o}}}_{{{}}}{n}", index_axes(b, derivs)),
            }
        }
        Symbol::Multiplier(name) => latex_name(name),
        Symbol::Energy => "p".to_string(),
        Symbol::Momentum { field, index, dir } => format!(
            "{}^{{{}}}",
            b.momentum_letter(*field),
            join_axes(b, index.axes().chain(std::iter::once(*dir)))
        ),
        Symbol::Coefficient(c) => match c {
            Coefficient::A { field, index, dir } => format!(
                "A^{{{}}}_{{{}\\,{}}}",
                latex_name(&b.fiber_names()[*field]),
                index_axes(b, index),
                b.base_names()[*dir]
            ),
            Coefficient::B { field, index, dir, col } => format!(
                "{}^{{{}}}_{{{}}}",
                b.coefficient_letter(*field),
                join_axes(b, index.axes().chain(std::iter::once(*dir))),
                b.base_names()[*col]
            ),
            Coefficient::C { dir } => format!("C_{{{}}}", b.base_names()[*dir]),
        },
    }
}

fn latex_coeff(c: &BigRational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("\\frac{{{}}}{{{}}}", c.numer(), c.denom())
    }
}

pub fn render_latex(e: &Expr, b: &BundleSpec) -> String {
    render_terms(
        e,
        latex_coeff,
        |m| {
            m.factors()
                .iter()
                .map(|(s, e)| {
                    let a = render_symbol_latex(s, b);
                    if *e == 1 {
                        a
                    } else {
                        format!("{a}^{{{e}}}")
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        },
        " ",
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::{parse_expr, ParseContext};

    fn bundle() -> BundleSpec {
        let mut b = BundleSpec::new(&["t", "x", "y"], &["u", "v"], 2).unwrap();
        b.declare_function("nu", None).unwrap();
        b
    }

    #[test]
    fn text_round_trip() {
        let b = bundle();
        let ctx = ParseContext::new(&b).with_momenta();
        for src in [
            "-u[x,x]",
            "u[x]*v + 1/2",
            "-1/3*nu[x,y]*u^2 + 7*v[t] - 2",
            "p^{tx} + q^{yt} - p + A^{u}_{;t} - D^{tx}_{y} + C_{x}",
            "A^{v}_{xy;t}*u",
        ] {
            let e = parse_expr(src, &ctx).unwrap();
            let text = render_text(&e, &b);
            assert_eq!(parse_expr(&text, &ctx).unwrap(), e, "{src} -> {text}");
        }
    }

    #[test]
    fn renders_expected_forms() {
        let b = bundle();
        let ctx = ParseContext::new(&b).with_momenta();
        let e = parse_expr("-u[x,x]", &ctx).unwrap();
        assert_eq!(render_text(&e, &b), "-u[x,x]");
        let e = parse_expr("q^{ty}", &ctx).unwrap();
        assert_eq!(render_text(&e, &b), "q^{ty}");
        let e = parse_expr("nu[x,x]*u[x]^2/2", &ctx).unwrap();
        assert_eq!(render_latex(&e, &b), "\\frac{1}{2} u_{x}^{2} \\partial^{2}_{xx}\\nu");
    }
}
