mod common;

use std::collections::BTreeMap;

use jetvar::cli::run_args;
use jetvar::fixtures::{euler, parse_sr};
use jetvar::jetspace::{
    evaluate_on_section, explicit_partial_base, prolong_vector_field, total_derivative, BundleSpec, VectorField,
};
use jetvar::multiindex::{binomial, ibp_lambda, of_order, up_to_order, MultiIndex};
use jetvar::problem::{parse_problem, render_problem, FieldProblem};
use jetvar::prolong::{in_row_space, prolong_constraints, same_row_space};
use jetvar::skinnerrusk::{
    constrained_sr_equations, eliminate_multipliers, momentum_sum, regularity_hessian, sr_equations, Constraint,
    ConstraintSet, EquationClass,
};
use jetvar::symexpr::{
    expr_from_json, expr_to_json, parse_expr, render_text, Expr, ParseContext, Symbol,
};
use jetvar::variational::{constrained_euler_lagrange, euler_lagrange};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BASE: [&str; 4] = ["t", "x", "y", "z"];
const FIBER: [&str; 3] = ["u", "v", "w"];

fn bundle(m: usize, n: usize, k: u32) -> BundleSpec {
    BundleSpec::new(&BASE[..m], &FIBER[..n], k).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_index(rng: &mut impl Rng, m: usize, max: u32) -> MultiIndex {
    MultiIndex::new((0..m).map(|_| rng.gen_range(0..=max)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multiindex_counts(m in 1usize..=4, l in 0u32..=5) {
        let level = of_order(m, l);
        prop_assert_eq!(level.len() as u64, binomial(m as u64 + l as u64 - 1, l as u64));
        prop_assert!(level.iter().all(|j| j.order() == l && j.dim() == m));
        prop_assert!(level.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(up_to_order(m, l).len() as u64, binomial(m as u64 + l as u64, l as u64));
    }

    #[test]
    fn ibp_lambda_is_axis_symmetric(seed in any::<u64>(), m in 2usize..=3) {
        let mut r = rng(seed);
        let i_f = random_index(&mut r, m, 2);
        let i_g = random_index(&mut r, m, 2);
        let axis = r.gen_range(0..m);
        let j = i_f.add(&i_g).unwrap().raised(axis);
        let lam = ibp_lambda(&i_f, &i_g, &j).unwrap();
        let perm = |x: &MultiIndex| {
            let mut c = x.components().to_vec();
            c.rotate_left(1);
            MultiIndex::new(c)
        };
        prop_assert_eq!(lam, ibp_lambda(&perm(&i_f), &perm(&i_g), &perm(&j)).unwrap());
    }

    #[test]
    fn render_parse_round_trip(seed in any::<u64>(), m in 1usize..=3, n in 1usize..=3, k in 1u32..=3) {
        let mut r = rng(seed);
        let mut b = bundle(m, n, k);
        b.declare_function("f", None).unwrap();
        let e = common::random_poly(&mut r, &common::atom_pool(&b, k), 5, 4);
        let back = parse_expr(&render_text(&e, &b), &ParseContext::new(&b)).unwrap();
        prop_assert_eq!(back, e);
    }

    #[test]
    fn json_round_trip(seed in any::<u64>(), m in 1usize..=3, k in 1u32..=2) {
        let mut r = rng(seed);
        let mut b = bundle(m, 2, k);
        b.declare_function("f", None).unwrap();
        let e = common::random_poly(&mut r, &common::atom_pool(&b, k), 5, 3);
        prop_assert_eq!(expr_from_json(&expr_to_json(&e, &b), &b).unwrap(), e);
    }

    #[test]
    fn ring_laws(seed in any::<u64>()) {
        let mut r = rng(seed);
        let b = bundle(2, 2, 2);
        let pool = common::atom_pool(&b, 2);
        let [x, y, z]: [Expr; 3] = std::array::from_fn(|_| common::random_poly(&mut r, &pool, 4, 3));
        prop_assert_eq!(x.clone() * (y.clone() + z.clone()), x.clone() * y.clone() + x.clone() * z.clone());
        prop_assert_eq!((x.clone() * y.clone()) * z.clone(), x.clone() * (y.clone() * z.clone()));
        prop_assert_eq!(x.clone() * y.clone(), y.clone() * x.clone());
        prop_assert!((x.clone() - x.clone()).is_zero());
        prop_assert_eq!(x.pow(2), x.clone() * x);
    }

    #[test]
    fn partials_commute(seed in any::<u64>()) {
        let mut r = rng(seed);
        let b = bundle(2, 2, 2);
        let pool = common::atom_pool(&b, 2);
        let e = common::random_poly(&mut r, &pool, 6, 4);
        let s = &pool[r.gen_range(0..pool.len())];
        let t = &pool[r.gen_range(0..pool.len())];
        prop_assert_eq!(e.partial(s).partial(t), e.partial(t).partial(s));
    }

    #[test]
    fn total_derivative_leibniz(seed in any::<u64>(), m in 1usize..=3) {
        let mut r = rng(seed);
        let mut b = bundle(m, 2, 2);
        b.declare_function("f", None).unwrap();
        let pool = common::atom_pool(&b, 1);
        let f = common::random_poly(&mut r, &pool, 4, 3);
        let g = common::random_poly(&mut r, &pool, 4, 3);
        let i = r.gen_range(0..m);
        let d = |e: &Expr| total_derivative(&b, e, i).unwrap();
        prop_assert_eq!(d(&(f.clone() * g.clone())), d(&f) * g.clone() + f * d(&g));
    }

    #[test]
    fn total_derivatives_commute(seed in any::<u64>(), m in 2usize..=3) {
        let mut r = rng(seed);
        let mut b = bundle(m, 2, 2);
        b.declare_function("f", None).unwrap();
        let e = common::random_poly(&mut r, &common::atom_pool(&b, 2), 5, 3);
        let (i, j) = (r.gen_range(0..m), r.gen_range(0..m));
        let dd = |a, c| total_derivative(&b, &total_derivative(&b, &e, a).unwrap(), c).unwrap();
        prop_assert_eq!(dd(i, j), dd(j, i));
    }

    #[test]
    fn total_derivative_matches_section(seed in any::<u64>(), m in 1usize..=3, k in 1u32..=3) {
        let mut r = rng(seed);
        let b = bundle(m, 2, k);
        let base: Vec<Symbol> = (0..m).map(Symbol::Base).collect();
        let section: Vec<Expr> = (0..2).map(|_| common::random_poly(&mut r, &base, 4, 3)).collect();
        let e = common::random_poly(&mut r, &common::atom_pool(&b, k - 1), 4, 3);
        let i = r.gen_range(0..m);
        let lhs = evaluate_on_section(&b, &total_derivative(&b, &e, i).unwrap(), &section).unwrap();
        let rhs = explicit_partial_base(&b, &evaluate_on_section(&b, &e, &section).unwrap(), i);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn prolongation_extends(seed in any::<u64>(), m in 1usize..=2) {
        let mut r = rng(seed);
        let b = bundle(m, 2, 2);
        let pool = common::atom_pool(&b, 0);
        let xi = VectorField::new(
            &b,
            (0..m).map(|_| common::random_poly(&mut r, &pool, 2, 2)).collect(),
            (0..2).map(|_| common::random_poly(&mut r, &pool, 2, 2)).collect(),
        )
        .unwrap();
        let low = prolong_vector_field(&b, &xi, 1);
        let high = prolong_vector_field(&b, &xi, 2);
        for (key, v) in &low {
            prop_assert_eq!(Some(v), high.get(key));
        }
        prop_assert!(high.len() > low.len());
    }

    #[test]
    fn euler_lagrange_is_linear(seed in any::<u64>(), m in 1usize..=2, k in 1u32..=2) {
        let mut r = rng(seed);
        let b = bundle(m, 2, k);
        let pool = common::atom_pool(&b, k);
        let l1 = common::random_poly(&mut r, &pool, 4, 3);
        let l2 = common::random_poly(&mut r, &pool, 4, 3);
        let (a, c) = (common::random_coeff(&mut r), common::random_coeff(&mut r));
        let lhs = euler_lagrange(&b, &(l1.scale(&a) + l2.scale(&c))).unwrap();
        let e1 = euler_lagrange(&b, &l1).unwrap();
        let e2 = euler_lagrange(&b, &l2).unwrap();
        for (i, e) in lhs.iter().enumerate() {
            prop_assert_eq!(e, &(e1[i].scale(&a) + e2[i].scale(&c)));
        }
    }

    #[test]
    fn null_lagrangians(seed in any::<u64>(), m in 1usize..=2, k in 1u32..=2) {
        let mut r = rng(seed);
        let b = bundle(m, 2, k);
        let pool = common::atom_pool(&b, k - 1);
        let l: Expr = (0..m)
            .map(|i| total_derivative(&b, &common::random_poly(&mut r, &pool, 3, 3), i).unwrap())
            .sum();
        prop_assert!(euler_lagrange(&b, &l).unwrap().iter().all(Expr::is_zero));
    }

    #[test]
    fn unconstrained_cel_is_el(seed in any::<u64>(), m in 1usize..=2, k in 1u32..=2) {
        let mut r = rng(seed);
        let b = bundle(m, 2, k);
        let l = common::random_poly(&mut r, &common::atom_pool(&b, k), 4, 3);
        prop_assert_eq!(constrained_euler_lagrange(&b, &l, &[]).unwrap(), euler_lagrange(&b, &l).unwrap());
    }

    #[test]
    fn top_dynamics_lhs_is_momentum_sum(seed in any::<u64>(), m in 1usize..=3, k in 1u32..=3) {
        let mut r = rng(seed);
        let b = bundle(m, 1, k);
        let l = common::random_poly(&mut r, &common::atom_pool(&b, k), 3, 2);
        let sr = sr_equations(&b, &l, false).unwrap();
        let top: Vec<_> = sr.of_class(EquationClass::DynamicsTop).collect();
        prop_assert_eq!(top.len(), of_order(m, k).len());
        for e in top {
            let j = e.indices.multi.clone().unwrap();
            prop_assert_eq!(&e.lhs, &momentum_sum(0, &j));
            let jet = Symbol::jet(0, j);
            prop_assert_eq!(&e.rhs, &l.partial(&jet));
        }
    }

    #[test]
    fn eliminated_system_is_multiplier_free(seed in any::<u64>(), k in 1u32..=2) {
        let mut r = rng(seed);
        let b = bundle(2, 2, k);
        let l = common::random_poly(&mut r, &common::atom_pool(&b, k), 4, 3);
        let hat = MultiIndex::new(vec![0, k]);
        let checks: Vec<Symbol> = common::atom_pool(&b, k)
            .into_iter()
            .filter(|s| *s != Symbol::jet(1, hat.clone()))
            .collect();
        let phi = common::random_poly(&mut r, &checks, 3, 2);
        let c = ConstraintSet::new(vec![Constraint::solved("lambda", 1, hat, phi)]);
        let el = eliminate_multipliers(&b, &l, &c).unwrap();
        prop_assert!(!el.is_empty());
        prop_assert!(!el.contains_multiplier());
        prop_assert!(constrained_sr_equations(&b, &l, &c, false).unwrap().contains_multiplier());
    }

    /// Constrained Hessian of `L` under a constraint affine in velocities
    /// equals `Jᵀ H J` with `H` the unconstrained Hessian restricted to the
    /// constraint and `J` the Jacobian of the embedding.
    #[test]
    fn constrained_hessian_is_pullback(seed in any::<u64>()) {
        let mut r = rng(seed);
        let b = bundle(3, 2, 1);
        let l = common::random_poly(&mut r, &common::atom_pool(&b, 1), 5, 3);
        let hat = Symbol::jet(1, MultiIndex::new(vec![0, 0, 1]));
        let zero = common::atom_pool(&b, 0);
        let velocities: Vec<Symbol> = b.jets_of_order(1).into_iter().filter(|s| *s != hat).collect();
        let mut phi = common::random_poly(&mut r, &zero, 2, 2);
        for v in &velocities {
            if r.gen_bool(0.5) {
                phi = phi + common::random_poly(&mut r, &zero, 2, 1) * Expr::symbol(v.clone());
            }
        }
        let c = ConstraintSet::new(vec![Constraint::solved("lambda", 1, MultiIndex::new(vec![0, 0, 1]), phi.clone())]);
        let full = regularity_hessian(&b, &l, None, None).unwrap();
        let reduced = regularity_hessian(&b, &l, Some(&c), None).unwrap();
        prop_assert_eq!(&reduced.coordinates, &velocities);

        let bind: BTreeMap<Symbol, Expr> = [(hat.clone(), phi.clone())].into();
        let embed = |s: &Symbol| if *s == hat { phi.clone() } else { Expr::symbol(s.clone()) };
        let jac: Vec<Vec<Expr>> = full
            .coordinates
            .iter()
            .map(|s| velocities.iter().map(|v| embed(s).partial(v)).collect())
            .collect();
        let h: Vec<Vec<Expr>> = full
            .matrix
            .iter()
            .map(|row| row.iter().map(|e| e.substitute(&bind).unwrap()).collect())
            .collect();
        let n = full.coordinates.len();
        for (a, _) in velocities.iter().enumerate() {
            for (c2, _) in velocities.iter().enumerate() {
                let mut s = Expr::zero();
                for i in 0..n {
                    for j in 0..n {
                        s = s + jac[i][a].clone() * h[i][j].clone() * jac[j][c2].clone();
                    }
                }
                prop_assert_eq!(&reduced.matrix[a][c2], &s);
            }
        }
    }

    #[test]
    fn prolongation_is_closed(seed in any::<u64>(), m in 1usize..=3) {
        let mut r = rng(seed);
        let b = bundle(m, 2, 2);
        let pool = common::atom_pool(&b, 1);
        let lin: Vec<Symbol> = pool.iter().filter(|s| s.is_jet()).cloned().collect();
        let count = r.gen_range(1..=2);
        let cs: Vec<(String, Expr)> = (0..count)
            .map(|i| (format!("c{i}"), common::random_nonconstant(&mut r, &lin, 3, 1)))
            .collect();
        let pr = prolong_constraints(&b, &cs, 2).unwrap();
        let gens: Vec<Expr> = pr.constraints.functions().into_iter().map(|(_, e)| e).collect();
        for g in &gens {
            if g.jet_order().unwrap_or(0) < 2 {
                for i in 0..m {
                    let d = total_derivative(&b, g, i).unwrap();
                    if d.jet_order().unwrap_or(0) <= 2 {
                        prop_assert!(in_row_space(&d, &gens));
                    }
                }
            }
        }
        for (_, psi) in &cs {
            prop_assert!(in_row_space(psi, &gens));
        }
        let again = prolong_constraints(&b, &pr.constraints.functions(), 2).unwrap();
        let again: Vec<Expr> = again.constraints.functions().into_iter().map(|(_, e)| e).collect();
        prop_assert!(same_row_space(&gens, &again));
    }

    #[test]
    fn problem_round_trip(seed in any::<u64>(), m in 1usize..=3, k in 1u32..=2) {
        let mut r = rng(seed);
        let mut b = bundle(m, 2, k);
        b.declare_function("rho", None).unwrap();
        let l = common::random_poly(&mut r, &common::atom_pool(&b, k), 4, 3);
        let hat = MultiIndex::unit(m, 0);
        let phi = common::random_poly(&mut r, &common::atom_pool(&b, 0), 2, 2);
        let p = FieldProblem {
            bundle: b,
            definitions: Vec::new(),
            lagrangian: l,
            constraints: ConstraintSet::new(vec![Constraint::solved("lambda", 1, hat, phi)]),
        };
        let text = render_problem(&p);
        let back = parse_problem(&text).unwrap();
        prop_assert_eq!(&back.lagrangian, &p.lagrangian);
        prop_assert_eq!(&back.constraints, &p.constraints);
        prop_assert_eq!(render_problem(&back), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cli_json_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let b = bundle(2, 2, 2);
        let l = common::random_poly(&mut r, &common::atom_pool(&b, 2), 4, 3);
        let p = FieldProblem {
            bundle: b.clone(),
            definitions: Vec::new(),
            lagrangian: l.clone(),
            constraints: ConstraintSet::new(Vec::new()),
        };
        let dir = std::env::temp_dir().join(format!("jetvar-prop-{}-{seed}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.jv");
        std::fs::write(&path, render_problem(&p)).unwrap();
        let out = run_args(["jetvar".as_ref(), "el".as_ref(), path.as_os_str(), "--format".as_ref(), "json".as_ref()]);
        std::fs::remove_dir_all(&dir).ok();
        prop_assert_eq!(out.code, 0, "{}", out.stderr);
        let v: serde_json::Value = serde_json::from_str(&out.stdout).unwrap();
        let el = euler_lagrange(&b, &l).unwrap();
        let eqs = v["equations"].as_array().unwrap();
        prop_assert_eq!(eqs.len(), el.len());
        for (e, want) in eqs.iter().zip(&el) {
            let lhs = expr_from_json(&e["lhs"], &b).unwrap();
            let rhs = expr_from_json(&e["rhs"], &b).unwrap();
            prop_assert_eq!(&(lhs - rhs), want);
        }
    }
}

#[test]
fn multiplier_solved_from_momentum_gives_eliminated_relation() {
    let p = euler();
    let csr = constrained_sr_equations(&p.bundle, &p.lagrangian, &p.constraints, false).unwrap();
    let lambda = Symbol::multiplier("lambda");
    let top = |lhs: &str| {
        let lhs = parse_sr(&p, lhs);
        csr.of_class(EquationClass::DynamicsTop).find(|e| e.lhs == lhs).unwrap().clone()
    };
    // p^x = uF - lambda gives lambda = uF - p^x.
    let px = top("p^{x}");
    let solved = px.rhs.clone() + Expr::symbol(lambda.clone()) - px.lhs.clone();
    let qy = top("q^{y}");
    let bind: BTreeMap<Symbol, Expr> = [(lambda, solved)].into();
    let relation = qy.lhs.clone() - qy.rhs.substitute(&bind).unwrap();
    let el = eliminate_multipliers(&p.bundle, &p.lagrangian, &p.constraints).unwrap();
    assert!(el
        .of_class(EquationClass::MultiplierFree)
        .any(|e| e.residual() == relation || e.residual() == -relation.clone()));
}
