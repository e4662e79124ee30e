#![allow(dead_code)]

use jetvar::jetspace::BundleSpec;
use jetvar::symexpr::{rational, Expr, Monomial, Symbol};
use rand::Rng;

/// Base coordinates, jets of order ≤ r and the bundle's declared functions.
pub fn atom_pool(b: &BundleSpec, r: u32) -> Vec<Symbol> {
    let mut pool: Vec<Symbol> = (0..b.m()).map(Symbol::Base).collect();
    for l in 0..=r {
        pool.extend(b.jets_of_order(l));
    }
    let m = b.m();
    for (name, _) in b.functions() {
        pool.push(Symbol::function(name, jetvar::multiindex::MultiIndex::zero(m)));
    }
    pool
}

pub fn random_coeff(rng: &mut impl Rng) -> num_rational::BigRational {
    let mut n = 0;
    while n == 0 {
        n = rng.gen_range(-6..=6);
    }
    rational(n, rng.gen_range(1..=3))
}

/// Random polynomial with up to `terms` terms of total degree ≤ `max_deg`.
pub fn random_poly(rng: &mut impl Rng, pool: &[Symbol], terms: usize, max_deg: u32) -> Expr {
    let mut out = Expr::zero();
    for _ in 0..terms {
        let deg = rng.gen_range(0..=max_deg);
        let mut mono = Monomial::one();
        for _ in 0..deg {
            mono = mono.mul(&Monomial::atom(pool[rng.gen_range(0..pool.len())].clone()));
        }
        out = out + Expr::from_terms([(mono, random_coeff(rng))]);
    }
    out
}

/// Random polynomial that involves at least one atom from the pool.
pub fn random_nonconstant(rng: &mut impl Rng, pool: &[Symbol], terms: usize, max_deg: u32) -> Expr {
    loop {
        let e = random_poly(rng, pool, terms, max_deg.max(1));
        if !e.atoms().is_empty() {
            return e;
        }
    }
}
