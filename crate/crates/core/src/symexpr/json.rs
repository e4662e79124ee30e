//! JSON trees of terms with explicit atoms.

use num_rational::BigRational;
use serde_json::{json, Value};

use super::{Coefficient, Expr, ExprError, Monomial, Symbol};
use crate::jetspace::BundleSpec;
use crate::multiindex::MultiIndex;

pub fn symbol_to_json(s: &Symbol, b: &BundleSpec) -> Value {
    let base = |i: &usize| Value::String(b.base_names()[*i].clone());
    let fiber = |a: &usize| Value::String(b.fiber_names()[*a].clone());
    match s {
        Symbol::Base(i) => json!({"kind": "base", "name": base(i)}),
        Symbol::Jet { field, index } => {
            json!({"kind": "jet", "field": fiber(field), "index": index.to_string()})
        }
        Symbol::Momentum { field, index, dir } => json!({
            "kind": "momentum", "field": fiber(field), "index": index.to_string(), "direction": base(dir)
        }),
        Symbol::Energy => json!({"kind": "energy"}),
        Symbol::Multiplier(name) => json!({"kind": "multiplier", "name": name.as_ref()}),
        Symbol::Function { name, derivs } => {
            json!({"kind": "function", "name": name.as_ref(), "index": derivs.to_string()})
        }
        Symbol::Coefficient(Coefficient::A { field, index, dir }) => json!({
            "kind": "coefficient", "class": "A", "field": fiber(field),
            "index": index.to_string(), "direction": base(dir)
        }),
        Symbol::Coefficient(Coefficient::B { field, index, dir, col }) => json!({
            "kind": "coefficient", "class": "B", "field": fiber(field),
            "index": index.to_string(), "direction": base(dir), "column": base(col)
        }),
        Symbol::Coefficient(Coefficient::C { dir }) => {
            json!({"kind": "coefficient", "class": "C", "direction": base(dir)})
        }
    }
}

fn bad(msg: impl Into<String>) -> ExprError {
    ExprError::Json(msg.into())
}

fn field_str<'v>(v: &'v Value, key: &str) -> Result<&'v str, ExprError> {
    v.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| bad(format!("missing string field `{key}`")))
}

pub fn symbol_from_json(v: &Value, b: &BundleSpec) -> Result<Symbol, ExprError> {
    let base = |key: &str| {
        let n = field_str(v, key)?;
        b.base_index(n).ok_or_else(|| bad(format!("unknown base coordinate `{n}`")))
    };
    let fiber = || {
        let n = field_str(v, "field")?;
        b.fiber_index(n).ok_or_else(|| bad(format!("unknown fiber coordinate `{n}`")))
    };
    let index = || -> Result<MultiIndex, ExprError> {
        let mi: MultiIndex = field_str(v, "index")?.parse::<MultiIndex>().map_err(|e| bad(e.to_string()))?;
        if mi.dim() != b.m() {
            return Err(bad("multi-index length does not match the base dimension"));
        }
        Ok(mi)
    };
    Ok(match field_str(v, "kind")? {
        "base" => Symbol::Base(base("name")?),
        "jet" => Symbol::jet(fiber()?, index()?),
        "momentum" => Symbol::momentum(fiber()?, index()?, base("direction")?),
        "energy" => Symbol::Energy,
        "multiplier" => Symbol::multiplier(field_str(v, "name")?),
        "function" => Symbol::function(field_str(v, "name")?, index()?),
        "coefficient" => Symbol::Coefficient(match field_str(v, "class")? {
            "A" => Coefficient::A { field: fiber()?, index: index()?, dir: base("direction")? },
            "B" => Coefficient::B {
                field: fiber()?,
                index: index()?,
                dir: base("direction")?,
                col: base("column")?,
            },
            "C" => Coefficient::C { dir: base("direction")? },
            other => return Err(bad(format!("unknown coefficient class `{other}`"))),
        }),
        other => return Err(bad(format!("unknown atom kind `{other}`"))),
    })
}

pub fn expr_to_json(e: &Expr, b: &BundleSpec) -> Value {
    let terms: Vec<Value> = e
        .terms()
        .rev()
        .map(|(m, c)| {
            let factors: Vec<Value> = m
                .factors()
                .iter()
                .map(|(s, p)| json!({"atom": symbol_to_json(s, b), "exp": p}))
                .collect();
            json!({"coeff": c.to_string(), "factors": factors})
        })
        .collect();
    json!({ "terms": terms })
}

pub fn expr_from_json(v: &Value, b: &BundleSpec) -> Result<Expr, ExprError> {
    let terms = v
        .get("terms")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing `terms` array"))?;
    let mut out = Expr::zero();
    for t in terms {
        let c: BigRational = field_str(t, "coeff")?
            .parse()
            .map_err(|_| bad("malformed coefficient"))?;
        let mut term = Expr::constant(c);
        let factors = t
            .get("factors")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing `factors` array"))?;
        for f in factors {
            let atom = symbol_from_json(f.get("atom").ok_or_else(|| bad("missing atom"))?, b)?;
            let p = f
                .get("exp")
                .and_then(Value::as_u64)
                .filter(|&p| p > 0 && p <= u32::MAX as u64)
                .ok_or_else(|| bad("exponent must be a positive integer"))?;
            term = term * Expr::from_terms([(Monomial::atom(atom), BigRational::from_integer(1.into()))]).pow(p as u32);
        }
        out = out + term;
    }
    Ok(out)
}
