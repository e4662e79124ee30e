//! Exact row reduction over the rationals and fraction-free rank over
//! polynomial matrices.

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::symexpr::Expr;

/// Reduced row echelon form in place; returns the pivot columns.
pub fn rref(rows: &mut Vec<Vec<BigRational>>) -> Vec<usize> {
    let ncols = rows.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = rows[r][c].recip();
        for v in rows[r].iter_mut() {
            *v *= &inv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    rows.truncate(r);
    pivots
}

pub fn rank_q(rows: &[Vec<BigRational>]) -> usize {
    let mut m = rows.to_vec();
    rref(&mut m).len()
}

/// Rank over the field of rational functions in the atoms, by fraction-free
/// (Bareiss) elimination. A pivot is usable iff it is a nonzero polynomial.
pub fn bareiss_rank(matrix: &[Vec<Expr>]) -> usize {
    let mut m: Vec<Vec<Expr>> = matrix.to_vec();
    let ncols = m.first().map_or(0, Vec::len);
    let mut prev = Expr::one();
    let mut r = 0;
    for c in 0..ncols {
        if r == m.len() {
            break;
        }
        let Some(p) = (r..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let pivot = m[r][c].clone();
        for i in r + 1..m.len() {
            let lead = m[i][c].clone();
            for j in c + 1..ncols {
                let num = &(&pivot * &m[i][j]) - &(&lead * &m[r][j]);
                m[i][j] = num.div_exact(&prev).unwrap_or(num);
            }
            m[i][c] = Expr::zero();
        }
        prev = pivot;
        r += 1;
    }
    r
}

pub fn identity(n: usize) -> Vec<Vec<BigRational>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { BigRational::one() } else { BigRational::zero() })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symexpr::{rational, Symbol};

    #[test]
    fn rational_rank() {
        let rows = vec![
            vec![rational(1, 1), rational(2, 1), rational(3, 1)],
            vec![rational(2, 1), rational(4, 1), rational(6, 1)],
            vec![rational(0, 1), rational(1, 2), rational(1, 1)],
        ];
        assert_eq!(rank_q(&rows), 2);
        assert_eq!(rank_q(&identity(4)), 4);
    }

    #[test]
    fn symbolic_rank() {
        let a = Expr::symbol(Symbol::Base(0));
        let b = Expr::symbol(Symbol::Base(1));
        let m = vec![
            vec![Expr::one(), a.clone()],
            vec![a.clone(), &a * &a],
        ];
        assert_eq!(bareiss_rank(&m), 1);
        let m = vec![vec![a.clone(), b.clone()], vec![b.clone(), a.clone()]];
        assert_eq!(bareiss_rank(&m), 2);
        let z = vec![vec![Expr::zero(); 3]; 3];
        assert_eq!(bareiss_rank(&z), 0);
    }
}
