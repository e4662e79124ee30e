//! Command-line front end: argument parsing, dispatch and output rendering.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::fixtures::{self, Check};
use crate::jetspace::BundleSpec;
use crate::problem::{parse_problem, render_constraints, FieldProblem};
use crate::prolong::prolong_constraints;
use crate::skinnerrusk::{
    constrained_sr_equations, eliminate_multipliers, regularity_hessian, sr_equations, Equation, EquationClass,
    Indices,
};
use crate::symexpr::{expr_to_json, parse_expr, render_latex, render_text, Expr, ParseContext, Symbol};
use crate::variational::{boundary_conditions, constrained_euler_lagrange, constraint_rank_at, euler_lagrange, unit_point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Latex,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "jetvar", version, about = "Variational calculus and Skinner–Rusk equations on jet bundles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output format.
    #[arg(long, global = true, value_enum, env = "JETVAR_FORMAT", default_value = "text")]
    pub format: Format,
    /// Also emit the literal reading of the H = 0 tangency equation.
    #[arg(long, global = true)]
    pub strict_paper: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Euler–Lagrange equations of the Lagrangian (constraints ignored).
    El { file: PathBuf },
    /// Constrained Euler–Lagrange equations with multiplier functions.
    Cel { file: PathBuf },
    /// Natural boundary conditions.
    Bc { file: PathBuf },
    /// Unconstrained Skinner–Rusk equations.
    Sr { file: PathBuf },
    /// Constrained Skinner–Rusk equations.
    Csr { file: PathBuf },
    /// Multiplier-free equations for solved-form constraints.
    Eliminate { file: PathBuf },
    /// Total-derivative consequences of the constraints.
    Prolong {
        file: PathBuf,
        /// Target jet order (defaults to the bundle order).
        #[arg(long)]
        order: Option<u32>,
    },
    /// Regularity Hessian over top-order coordinates.
    Hessian {
        file: PathBuf,
        /// Substitutes a momentum value, e.g. `q^{y}=0`; repeatable.
        #[arg(long = "momentum", value_name = "MOMENTUM=EXPR")]
        momenta: Vec<String>,
    },
    /// Checks the bundled fixtures against their stored equations.
    VerifyPaper {
        /// `euler` or `navier-stokes`; both when omitted.
        fixture: Option<String>,
    },
}

/// Rendered output and process exit status.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { stdout, stderr: String::new(), code: 0 }
    }

    fn input_error(msg: impl std::fmt::Display) -> Self {
        Outcome { stdout: String::new(), stderr: format!("error: {msg}\n"), code: 2 }
    }
}

/// A bundled fixture by name (`@euler`, `@navier-stokes`) or a file path.
pub fn load_problem(path: &Path) -> Result<(String, FieldProblem), String> {
    let shown = path.display().to_string();
    let text = match shown.as_str() {
        "@euler" => fixtures::EULER_SOURCE.to_string(),
        "@navier-stokes" => fixtures::NAVIER_STOKES_SOURCE.to_string(),
        _ => std::fs::read_to_string(path).map_err(|e| format!("{shown}: {e}"))?,
    };
    let name = path
        .file_stem()
        .map_or(shown.clone(), |s| s.to_string_lossy().trim_start_matches('@').to_string());
    let problem = parse_problem(&text).map_err(|e| format!("{shown}: {e}"))?;
    Ok((name, problem))
}

struct Rendered {
    equations: Vec<Equation>,
    bundle: BundleSpec,
    diagnostics: Map<String, Value>,
    /// Text output replacing the default equation listing.
    text: Option<String>,
    latex: Option<String>,
    headers: bool,
}

impl Rendered {
    fn new(equations: Vec<Equation>, bundle: BundleSpec) -> Self {
        Rendered { equations, bundle, diagnostics: Map::new(), text: None, latex: None, headers: false }
    }
}

fn indices_json(b: &BundleSpec, i: &Indices) -> Value {
    let mut m = Map::new();
    if let Some(f) = i.field {
        m.insert("field".into(), json!(b.fiber_names()[f]));
    }
    if let Some(j) = &i.multi {
        m.insert("index".into(), json!(j.to_string()));
    }
    if let Some(d) = i.dir {
        m.insert("direction".into(), json!(b.base_names()[d]));
    }
    if let Some(a) = &i.aux {
        m.insert("derivative".into(), json!(a.to_string()));
    }
    Value::Object(m)
}

fn render(command: &str, problem: &str, r: &Rendered, format: Format) -> String {
    let b = &r.bundle;
    match format {
        Format::Json => {
            let eqs: Vec<Value> = r
                .equations
                .iter()
                .map(|e| {
                    let mut o = json!({
                        "class": e.class.as_str(),
                        "indices": indices_json(b, &e.indices),
                        "lhs": expr_to_json(&e.lhs, b),
                        "rhs": expr_to_json(&e.rhs, b),
                    });
                    if !e.label.is_empty() {
                        o["label"] = json!(e.label);
                    }
                    o
                })
                .collect();
            let v = json!({
                "problem": problem,
                "command": command,
                "equations": eqs,
                "diagnostics": Value::Object(r.diagnostics.clone()),
            });
            let mut s = serde_json::to_string_pretty(&v).expect("serializable");
            s.push('\n');
            s
        }
        Format::Text if r.text.is_some() => r.text.clone().unwrap_or_default(),
        Format::Latex if r.latex.is_some() => r.latex.clone().unwrap_or_default(),
        Format::Text | Format::Latex => {
            let latex = format == Format::Latex;
            let mut out = String::new();
            if latex {
                out.push_str("\\begin{align*}\n");
            }
            let mut last: Option<(EquationClass, &str)> = None;
            for (n, e) in r.equations.iter().enumerate() {
                let key = (e.class, e.label.as_str());
                if r.headers && last != Some(key) {
                    let title = if e.label.is_empty() {
                        e.class.as_str().to_string()
                    } else {
                        format!("{} ({})", e.class, e.label)
                    };
                    if latex {
                        out.push_str(&format!("&\\text{{{title}}} \\\\\n"));
                    } else {
                        out.push_str(&format!("# {title}\n"));
                    }
                    last = Some(key);
                }
                if latex {
                    let sep = if n + 1 < r.equations.len() { " \\\\" } else { "" };
                    out.push_str(&format!("{} &= {}{sep}\n", render_latex(&e.lhs, b), render_latex(&e.rhs, b)));
                } else {
                    out.push_str(&format!("{} = {}\n", render_text(&e.lhs, b), render_text(&e.rhs, b)));
                }
            }
            if latex {
                out.push_str("\\end{align*}\n");
            } else if !r.diagnostics.is_empty() && r.text.is_none() {
                for (k, v) in &r.diagnostics {
                    if let Some(s) = v.as_str() {
                        out.push_str(&format!("# {k}: {s}\n"));
                    } else {
                        out.push_str(&format!("# {k}: {v}\n"));
                    }
                }
            }
            out
        }
    }
}

fn zero_rhs(class: EquationClass, indices: Indices, lhs: Expr) -> Equation {
    Equation::new(class, "", indices, lhs, Expr::zero())
}

fn field_indices(a: usize) -> Indices {
    Indices { field: Some(a), ..Indices::default() }
}

fn class_counts(eqs: &[Equation]) -> Value {
    let mut m: BTreeMap<&str, usize> = BTreeMap::new();
    for e in eqs {
        *m.entry(e.class.as_str()).or_default() += 1;
    }
    json!(m)
}

fn parse_momenta(p: &FieldProblem, specs: &[String]) -> Result<BTreeMap<Symbol, Expr>, String> {
    let ctx = ParseContext::new(&p.bundle).with_momenta();
    let mut out = BTreeMap::new();
    for s in specs {
        let (lhs, rhs) = s.split_once('=').ok_or_else(|| format!("`{s}`: expected MOMENTUM=EXPR"))?;
        let key = parse_expr(lhs.trim(), &ctx).map_err(|e| format!("`{s}`: {e}"))?;
        let sym = match key.atoms().into_iter().next() {
            Some(m @ Symbol::Momentum { .. }) if key == Expr::symbol(m.clone()) => m,
            _ => return Err(format!("`{s}`: the left-hand side must be a single momentum")),
        };
        let value = parse_expr(rhs.trim(), &ctx).map_err(|e| format!("`{s}`: {e}"))?;
        out.insert(sym, value);
    }
    Ok(out)
}

fn run_problem(command: &Command, p: &FieldProblem, strict: bool) -> Result<(&'static str, Rendered), String> {
    let b = &p.bundle;
    let l = &p.lagrangian;
    let err = |e: &dyn std::fmt::Display| e.to_string();
    Ok(match command {
        Command::El { .. } => {
            let eqs = euler_lagrange(b, l).map_err(|e| err(&e))?;
            let eqs = eqs.into_iter().enumerate().map(|(a, e)| zero_rhs(EquationClass::EulerLagrange, field_indices(a), e));
            ("el", Rendered::new(eqs.collect(), b.clone()))
        }
        Command::Cel { .. } => {
            let psis = p.constraints.functions();
            let eqs = constrained_euler_lagrange(b, l, &psis).map_err(|e| err(&e))?;
            let eqs = eqs.into_iter().enumerate().map(|(a, e)| zero_rhs(EquationClass::EulerLagrange, field_indices(a), e));
            let mut r = Rendered::new(eqs.collect(), p.multiplier_bundle());
            let exprs: Vec<Expr> = psis.into_iter().map(|(_, e)| e).collect();
            if let Some(rank) = constraint_rank_at(b, &exprs, &unit_point) {
                r.diagnostics.insert("constraint_rank_at_unit_point".into(), json!(rank));
            }
            r.diagnostics.insert("constraints".into(), json!(exprs.len()));
            ("cel", r)
        }
        Command::Bc { .. } => {
            let bcs = boundary_conditions(b, l).map_err(|e| err(&e))?;
            let eqs = bcs.into_iter().map(|c| {
                let idx = Indices { field: Some(c.field), multi: Some(c.index), aux: Some(c.derivative), dir: None };
                zero_rhs(EquationClass::Boundary, idx, c.expr)
            });
            ("bc", Rendered::new(eqs.collect(), b.clone()))
        }
        Command::Sr { .. } | Command::Csr { .. } | Command::Eliminate { .. } => {
            let (name, set) = match command {
                Command::Sr { .. } => ("sr", sr_equations(b, l, strict)),
                Command::Csr { .. } => ("csr", constrained_sr_equations(b, l, &p.constraints, strict)),
                _ => ("eliminate", eliminate_multipliers(b, l, &p.constraints)),
            };
            let set = set.map_err(|e| err(&e))?;
            let mut r = Rendered::new(set.equations, b.clone());
            r.headers = true;
            r.diagnostics.insert("counts".into(), class_counts(&r.equations));
            (name, r)
        }
        Command::Prolong { order, .. } => {
            let target = order.unwrap_or(b.order());
            let pr = prolong_constraints(b, &p.constraints.functions(), target).map_err(|e| err(&e))?;
            let tb = b.with_order(target.max(1)).map_err(|e| err(&e))?;
            let eqs: Vec<Equation> = pr
                .constraints
                .entries
                .iter()
                .map(|c| Equation::new(EquationClass::Constraint, &c.name, Indices::default(), c.psi(), Expr::zero()))
                .collect();
            let mut r = Rendered::new(eqs, tb.clone());
            r.diagnostics.insert("order".into(), json!(target));
            r.diagnostics.insert("iterations".into(), json!(pr.iterations));
            r.diagnostics.insert("affine".into(), json!(pr.affine));
            r.text = Some(format!(
                "# prolonged to order {target}; stabilized after {} sweep(s)\n{}",
                pr.iterations,
                render_constraints(&tb, &pr.constraints)
            ));
            ("prolong", r)
        }
        Command::Hessian { momenta, .. } => {
            let vals = parse_momenta(p, momenta)?;
            let c = (!p.constraints.is_empty()).then_some(&p.constraints);
            let h = regularity_hessian(b, l, c, (!vals.is_empty()).then_some(&vals)).map_err(|e| err(&e))?;
            let coords: Vec<String> = h.coordinates.iter().map(|s| render_text(&Expr::symbol(s.clone()), b)).collect();
            let mut r = Rendered::new(Vec::new(), b.clone());
            r.diagnostics.insert("coordinates".into(), json!(coords));
            r.diagnostics.insert(
                "matrix".into(),
                Value::Array(h.matrix.iter().map(|row| Value::Array(row.iter().map(|e| expr_to_json(e, b)).collect())).collect()),
            );
            r.diagnostics.insert("rank".into(), json!(h.rank));
            r.diagnostics.insert("regular".into(), json!(h.is_regular()));
            let mut text = format!("coordinates: {}\n", coords.join(", "));
            for row in &h.matrix {
                let cells: Vec<String> = row.iter().map(|e| render_text(e, b)).collect();
                text.push_str(&format!("[{}]\n", cells.join(", ")));
            }
            text.push_str(&format!("rank: {} of {}\n", h.rank, h.coordinates.len()));
            r.text = Some(text);
            let rows: Vec<String> = h
                .matrix
                .iter()
                .map(|row| row.iter().map(|e| render_latex(e, b)).collect::<Vec<_>>().join(" & "))
                .collect();
            r.latex = Some(format!(
                "\\begin{{pmatrix}}\n{}\n\\end{{pmatrix}}\n% rank {} of {}\n",
                rows.join(" \\\\\n"),
                h.rank,
                h.coordinates.len()
            ));
            ("hessian", r)
        }
        Command::VerifyPaper { .. } => unreachable!("handled by run"),
    })
}

fn verify(fixture: Option<&str>, format: Format) -> Outcome {
    let checks: Vec<Check> = match fixture {
        None => fixtures::verify_all(),
        Some("euler") => fixtures::verify_euler(),
        Some("navier-stokes") => fixtures::verify_navier_stokes(),
        Some(other) => return Outcome::input_error(format!("unknown fixture `{other}`")),
    };
    let failed = checks.iter().filter(|c| !c.passed).count();
    let stdout = if format == Format::Json {
        let v = json!({
            "problem": fixture.unwrap_or("all"),
            "command": "verify-paper",
            "equations": [],
            "diagnostics": {
                "checks": checks.iter().map(|c| json!({
                    "fixture": c.fixture, "name": c.name, "passed": c.passed, "detail": c.detail,
                })).collect::<Vec<_>>(),
                "failed": failed,
            },
        });
        serde_json::to_string_pretty(&v).expect("serializable") + "\n"
    } else {
        let mut out = String::new();
        for c in &checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{status} {}: {}", c.fixture, c.name));
            if c.passed && !c.detail.is_empty() {
                out.push_str(&format!(" ({})", c.detail));
            }
            out.push('\n');
            if !c.passed && !c.detail.is_empty() {
                for line in c.detail.lines() {
                    out.push_str(&format!("    {line}\n"));
                }
            }
        }
        out.push_str(&format!("{} of {} checks passed\n", checks.len() - failed, checks.len()));
        out
    };
    Outcome { stdout, stderr: String::new(), code: i32::from(failed > 0) }
}

pub fn run(cli: &Cli) -> Outcome {
    let file = match &cli.command {
        Command::VerifyPaper { fixture } => return verify(fixture.as_deref(), cli.format),
        Command::El { file }
        | Command::Cel { file }
        | Command::Bc { file }
        | Command::Sr { file }
        | Command::Csr { file }
        | Command::Eliminate { file }
        | Command::Prolong { file, .. }
        | Command::Hessian { file, .. } => file,
    };
    let (name, problem) = match load_problem(file) {
        Ok(p) => p,
        Err(e) => return Outcome::input_error(e),
    };
    match run_problem(&cli.command, &problem, cli.strict_paper) {
        Ok((command, r)) => Outcome::ok(render(command, &name, &r, cli.format)),
        Err(e) => Outcome::input_error(e),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                Outcome::ok(text)
            } else {
                Outcome { stdout: String::new(), stderr: text, code }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    struct TempPath(PathBuf);

    impl TempPath {
        fn new(text: &str) -> Self {
            use std::sync::atomic::{AtomicUsize, Ordering};
            static N: AtomicUsize = AtomicUsize::new(0);
            let name = format!("jetvar-cli-{}-{}.jv", std::process::id(), N.fetch_add(1, Ordering::SeqCst));
            let p = std::env::temp_dir().join(name);
            std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
            TempPath(p)
        }
    }

    impl Drop for TempPath {
        fn drop(&mut self) {
            let _ = std::fs::remove_file(&self.0);
        }
    }

    fn run_on(text: &str, args: &[&str]) -> Outcome {
        let f = TempPath::new(text);
        let mut argv = vec!["jetvar".to_string()];
        argv.extend(args.iter().map(|s| s.to_string()));
        argv.insert(2, f.0.display().to_string());
        run_args(argv)
    }

    const FREE: &str = "[bundle]\nbase = x\nfiber = u\norder = 1\n[lagrangian]\nL = u[x]^2/2\n";

    #[test]
    fn el_text() {
        let o = run_on(FREE, &["el", "--format", "text"]);
        assert_eq!((o.stdout.as_str(), o.code), ("-u[x,x] = 0\n", 0));
    }

    #[test]
    fn input_errors_exit_two() {
        let o = run_on("[bundle]\nbase = x\nfiber = u\norder = 0\n[lagrangian]\nL = u\n", &["el"]);
        assert_eq!(o.code, 2);
        assert!(o.stderr.contains("order"));
        assert_eq!(run_args(["jetvar", "frobnicate"]).code, 2);
        assert_eq!(run_args(["jetvar", "el", "/nonexistent/problem.jv"]).code, 2);
    }

    #[test]
    fn prolong_block() {
        let text = "[bundle]\nbase = t x y\nfiber = u v\norder = 1\n[lagrangian]\nL = u\n\
                    [constraints]\nimplicit u[x] + v[y]\n";
        let o = run_on(text, &["prolong", "--order", "2"]);
        assert_eq!(o.code, 0);
        let lines: Vec<&str> = o.stdout.lines().filter(|l| l.starts_with("implicit")).collect();
        assert_eq!(
            lines,
            [
                "implicit lambda: u[x] + v[y]",
                "implicit lambda_t: u[t,x] + v[t,y]",
                "implicit lambda_x: u[x,x] + v[x,y]",
                "implicit lambda_y: u[x,y] + v[y,y]",
            ]
        );
    }

    #[test]
    fn json_shape() {
        let o = run_on(FREE, &["sr", "--format", "json"]);
        let v: Value = serde_json::from_str(&o.stdout).unwrap();
        for key in ["problem", "command", "equations", "diagnostics"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let e = &v["equations"][0];
        for key in ["class", "indices", "lhs", "rhs"] {
            assert!(e.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn bundled_fixture_paths() {
        let o = run_args(["jetvar", "hessian", "@euler"]);
        assert_eq!(o.code, 0);
        assert!(o.stdout.contains("rank: 2 of 5"));
        let o = run_args(["jetvar", "hessian", "@euler", "--momentum", "q^{y}=1"]);
        assert_eq!(o.code, 0);
        assert_eq!(run_args(["jetvar", "hessian", "@euler", "--momentum", "u=1"]).code, 2);
    }

    #[test]
    fn verify_euler_exit_zero() {
        let o = run_args(["jetvar", "verify-paper", "euler"]);
        assert_eq!(o.code, 0, "{}", o.stdout);
    }
}
