//! Multi-indexes: m-tuples of non-negative integers counting repeated partial
//! derivatives along each base axis.
//!
//! Besides the component-wise arithmetic this module provides the
//! decomposition enumeration `I + 1_i = J` used throughout the dynamics
//! equations, the integration-by-parts coefficient and exact checks of the
//! four combinatorial identities (reindexing, unit identity, lower sum and
//! lower paired sum).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MultiIndexError {
    #[error("multi-index length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("not a multi-index: component {axis} would be negative")]
    Negative { axis: usize },
    #[error("base index {index} out of range for base dimension {dim}")]
    AxisOutOfRange { index: usize, dim: usize },
    #[error("I_f + I_g + 1_i does not equal J for any i")]
    NotADecomposition,
    #[error("the identity requires a non-zero multi-index")]
    ZeroMultiIndex,
    #[error("the Q family violates the q-condition at J = {0}")]
    QConditionViolated(MultiIndex),
    #[error("lemma parameter out of range: {0}")]
    BadParameter(String),
}

/// Dense multi-index. Ordering is graded lexicographic: first by length,
/// then so that derivatives along earlier axes come first, e.g. for two axes
/// `(2,0) < (1,1) < (0,2)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(components: Vec<u32>) -> Self {
        MultiIndex(components)
    }

    pub fn zero(m: usize) -> Self {
        MultiIndex(vec![0; m])
    }

    /// The multi-index `1_i`.
    pub fn unit(m: usize, i: usize) -> Self {
        let mut v = vec![0; m];
        v[i] = 1;
        MultiIndex(v)
    }

    /// Multi-index counting the occurrences of each axis in `axes`.
    pub fn from_axes(m: usize, axes: &[usize]) -> Self {
        let mut v = vec![0; m];
        for &a in axes {
            v[a] += 1;
        }
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    /// `|I|`
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// `I!`
    pub fn factorial(&self) -> BigUint {
        self.0
            .iter()
            .fold(BigUint::one(), |acc, &c| acc * factorial(c))
    }

    /// Axes listed with repetition in increasing order, e.g. `(2,1)` -> `[0,0,1]`.
    pub fn axes(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
    }

    pub fn add(&self, other: &MultiIndex) -> Result<MultiIndex, MultiIndexError> {
        self.check_len(other)?;
        Ok(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &MultiIndex) -> Result<MultiIndex, MultiIndexError> {
        self.check_len(other)?;
        self.0
            .iter()
            .zip(&other.0)
            .enumerate()
            .map(|(axis, (a, b))| a.checked_sub(*b).ok_or(MultiIndexError::Negative { axis }))
            .collect::<Result<Vec<_>, _>>()
            .map(MultiIndex)
    }

    /// `I + 1_i`
    pub fn raised(&self, i: usize) -> MultiIndex {
        let mut v = self.0.clone();
        v[i] += 1;
        MultiIndex(v)
    }

    /// `I - 1_i`, if still a multi-index.
    pub fn lowered(&self, i: usize) -> Option<MultiIndex> {
        if self.0[i] == 0 {
            return None;
        }
        let mut v = self.0.clone();
        v[i] -= 1;
        Some(MultiIndex(v))
    }

    fn check_len(&self, other: &MultiIndex) -> Result<(), MultiIndexError> {
        if self.0.len() != other.0.len() {
            return Err(MultiIndexError::LengthMismatch(self.0.len(), other.0.len()));
        }
        Ok(())
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl std::str::FromStr for MultiIndex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("malformed multi-index {s:?}"))?;
        if inner.trim().is_empty() {
            return Ok(MultiIndex(Vec::new()));
        }
        inner
            .split(',')
            .map(|c| c.trim().parse::<u32>().map_err(|e| format!("{s:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(MultiIndex)
    }
}

pub fn factorial(n: u32) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, j| acc * (n - j) / (j + 1))
}

/// All multi-indexes of length `l` over `m` axes, in canonical order.
pub fn of_order(m: usize, l: u32) -> Vec<MultiIndex> {
    fn rec(m: usize, axis: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if axis + 1 == m {
            cur.push(left);
            out.push(MultiIndex(cur.clone()));
            cur.pop();
            return;
        }
        for c in (0..=left).rev() {
            cur.push(c);
            rec(m, axis + 1, left - c, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if m == 0 {
        if l == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return out;
    }
    rec(m, 0, l, &mut Vec::with_capacity(m), &mut out);
    out
}

/// All multi-indexes with `|J| <= r`, in canonical order.
pub fn up_to_order(m: usize, r: u32) -> Vec<MultiIndex> {
    (0..=r).flat_map(|l| of_order(m, l)).collect()
}

/// The pairs `(I, i)` with `I + 1_i = J`, one per axis with `J(i) >= 1`,
/// ordered by axis. Empty iff `J` is zero.
pub fn decompositions(j: &MultiIndex) -> Vec<(MultiIndex, usize)> {
    (0..j.dim())
        .filter_map(|i| j.lowered(i).map(|lower| (lower, i)))
        .collect()
}

fn ratio(num: BigUint, den: BigUint) -> BigRational {
    BigRational::new(num.into(), den.into())
}

/// Coefficient of the boundary term `f_{I_f} g_{I_g} d^{m-1}x_i` in the
/// higher-order integration by parts of `∫ f_J g`:
/// `(-1)^{|I_g|} (|I_f|! |I_g|! / |J|!) (J! / (I_f! I_g!))`.
pub fn ibp_lambda(
    i_f: &MultiIndex,
    i_g: &MultiIndex,
    j: &MultiIndex,
) -> Result<BigRational, MultiIndexError> {
    let sum = i_f.add(i_g)?;
    sum.check_len(j)?;
    let diff = j.sub(&sum).map_err(|_| MultiIndexError::NotADecomposition)?;
    if diff.order() != 1 {
        return Err(MultiIndexError::NotADecomposition);
    }
    let magnitude = ratio(
        factorial(i_f.order()) * factorial(i_g.order()) * j.factorial(),
        factorial(j.order()) * i_f.factorial() * i_g.factorial(),
    );
    Ok(if i_g.order() % 2 == 1 {
        -magnitude
    } else {
        magnitude
    })
}

/// Weight `(I(i)+1)/(|I|+1)` attached to a decomposition `(I, i)`.
pub fn decomposition_weight(i_idx: &MultiIndex, i: usize) -> BigRational {
    BigRational::new(
        (i_idx.get(i) + 1).into(),
        (i_idx.order() + 1).into(),
    )
}

/// Family `a_{I,i}` indexed by a multi-index and an axis. Missing entries are zero.
pub type PairFamily = BTreeMap<(MultiIndex, usize), BigRational>;
/// Family `a_J` indexed by a multi-index. Missing entries are zero.
pub type IndexFamily = BTreeMap<MultiIndex, BigRational>;

/// One instance of the multi-index identities to be checked exactly.
#[derive(Debug, Clone)]
pub enum LemmaCase {
    /// `Σ_{|I|=k-1} Σ_i a_{I,i} = Σ_{|J|=k} Σ_{I+1_i=J} a_{I,i}`
    Fubini { m: usize, k: u32, a: PairFamily },
    /// `Σ_{I+1_i=J} (I(i)+1)/(|I|+1) = 1` for non-zero `J`.
    Identity { j: MultiIndex },
    /// `Σ_{|J|=l} a_J = Σ_{|I|=l-1} Σ_i (I(i)+1)/(|I|+1) a_{I+1_i}`
    LowerSum { m: usize, l: u32, a: IndexFamily },
    /// Paired variant with a correction family `Q` satisfying the q-condition.
    LowerPairedSum {
        m: usize,
        l: u32,
        a: IndexFamily,
        b: IndexFamily,
        q: PairFamily,
    },
}

fn lookup<K: Ord>(family: &BTreeMap<K, BigRational>, key: &K) -> BigRational {
    family.get(key).cloned().unwrap_or_else(BigRational::zero)
}

/// Evaluates both sides of the identity and reports whether they agree.
pub fn verify_lemma(case: &LemmaCase) -> Result<bool, MultiIndexError> {
    match case {
        LemmaCase::Fubini { m, k, a } => {
            if *k < 1 {
                return Err(MultiIndexError::BadParameter("k must be >= 1".into()));
            }
            let lhs: BigRational = of_order(*m, k - 1)
                .iter()
                .flat_map(|i| (0..*m).map(move |ax| (i.clone(), ax)))
                .map(|key| lookup(a, &key))
                .sum();
            let rhs: BigRational = of_order(*m, *k)
                .iter()
                .flat_map(decompositions)
                .map(|key| lookup(a, &key))
                .sum();
            Ok(lhs == rhs)
        }
        LemmaCase::Identity { j } => {
            if j.is_zero() {
                return Err(MultiIndexError::ZeroMultiIndex);
            }
            let total: BigRational = decompositions(j)
                .iter()
                .map(|(i, ax)| decomposition_weight(i, *ax))
                .sum();
            Ok(total.is_one())
        }
        LemmaCase::LowerSum { m, l, a } => {
            if *l < 1 {
                return Err(MultiIndexError::BadParameter("l must be >= 1".into()));
            }
            let lhs: BigRational = of_order(*m, *l).iter().map(|j| lookup(a, j)).sum();
            let rhs: BigRational = of_order(*m, l - 1)
                .iter()
                .flat_map(|i| (0..*m).map(move |ax| (i.clone(), ax)))
                .map(|(i, ax)| decomposition_weight(&i, ax) * lookup(a, &i.raised(ax)))
                .sum();
            Ok(lhs == rhs)
        }
        LemmaCase::LowerPairedSum { m, l, a, b, q } => {
            if *l < 1 {
                return Err(MultiIndexError::BadParameter("l must be >= 1".into()));
            }
            check_q_condition(*m, *l, q)?;
            let lhs: BigRational = of_order(*m, *l)
                .iter()
                .map(|j| lookup(b, j) * lookup(a, j))
                .sum();
            let rhs: BigRational = of_order(*m, l - 1)
                .iter()
                .flat_map(|i| (0..*m).map(move |ax| (i.clone(), ax)))
                .map(|(i, ax)| {
                    let up = i.raised(ax);
                    let w = decomposition_weight(&i, ax);
                    w * (lookup(b, &up) + lookup(q, &(i, ax))) * lookup(a, &up)
                })
                .sum();
            Ok(lhs == rhs)
        }
    }
}

/// Checks `Σ_{I+1_i=J} (I(i)+1)/(|I|+1) Q^{I,i} = 0` for every `|J| = l`.
/// Entries of `Q` with `|I| != l-1` never enter the paired sum and are ignored.
pub fn check_q_condition(m: usize, l: u32, q: &PairFamily) -> Result<(), MultiIndexError> {
    for j in of_order(m, l) {
        let s: BigRational = decompositions(&j)
            .into_iter()
            .map(|(i, ax)| decomposition_weight(&i, ax) * lookup(q, &(i, ax)))
            .sum();
        if !s.is_zero() {
            return Err(MultiIndexError::QConditionViolated(j));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(c: &[u32]) -> MultiIndex {
        MultiIndex::new(c.to_vec())
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn add_sub() {
        assert_eq!(mi(&[1, 0]).add(&mi(&[0, 2])).unwrap(), mi(&[1, 2]));
        assert_eq!(
            mi(&[1, 0]).sub(&mi(&[0, 1])),
            Err(MultiIndexError::Negative { axis: 1 })
        );
        assert!(matches!(
            mi(&[1, 0]).add(&mi(&[1])),
            Err(MultiIndexError::LengthMismatch(2, 1))
        ));
    }

    #[test]
    fn factorial_and_length() {
        let j = mi(&[2, 1]);
        assert_eq!(j.factorial(), BigUint::from(2u32));
        assert_eq!(j.order(), 3);
    }

    #[test]
    fn decomposition_examples() {
        assert!(decompositions(&mi(&[0, 0])).is_empty());
        assert_eq!(
            decompositions(&mi(&[1, 1])),
            vec![(mi(&[0, 1]), 0), (mi(&[1, 0]), 1)]
        );
        assert_eq!(decompositions(&mi(&[2, 0])), vec![(mi(&[1, 0]), 0)]);
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(ibp_lambda(&mi(&[0]), &mi(&[0]), &mi(&[1])).unwrap(), q(1, 1));
        assert_eq!(
            ibp_lambda(&mi(&[1, 0]), &mi(&[0, 0]), &mi(&[1, 1])).unwrap(),
            q(1, 2)
        );
        assert_eq!(
            ibp_lambda(&mi(&[0, 0]), &mi(&[1, 0]), &mi(&[1, 1])).unwrap(),
            q(-1, 2)
        );
        assert_eq!(
            ibp_lambda(&mi(&[1, 0]), &mi(&[1, 0]), &mi(&[1, 1])),
            Err(MultiIndexError::NotADecomposition)
        );
    }

    #[test]
    fn canonical_order() {
        let got = of_order(2, 2);
        assert_eq!(got, vec![mi(&[2, 0]), mi(&[1, 1]), mi(&[0, 2])]);
        let mut sorted = got.clone();
        sorted.reverse();
        sorted.sort();
        assert_eq!(sorted, got);
        assert!(mi(&[0, 0, 1]) < mi(&[2, 0, 0]));
    }

    #[test]
    fn render_and_parse() {
        assert_eq!(mi(&[1, 0, 2]).to_string(), "(1,0,2)");
        assert_eq!("(1,0,2)".parse::<MultiIndex>().unwrap(), mi(&[1, 0, 2]));
    }

    #[test]
    fn identity_cases() {
        assert_eq!(verify_lemma(&LemmaCase::Identity { j: mi(&[2, 1]) }), Ok(true));
        assert_eq!(
            verify_lemma(&LemmaCase::Identity { j: mi(&[0, 0]) }),
            Err(MultiIndexError::ZeroMultiIndex)
        );
    }

    #[test]
    fn lower_sum_example() {
        let mut a = IndexFamily::new();
        a.insert(mi(&[1, 0]), q(3, 1));
        a.insert(mi(&[0, 1]), q(5, 1));
        assert_eq!(verify_lemma(&LemmaCase::LowerSum { m: 2, l: 1, a: a.clone() }), Ok(true));
        let paired = LemmaCase::LowerPairedSum {
            m: 2,
            l: 1,
            a,
            b: IndexFamily::new(),
            q: PairFamily::new(),
        };
        assert_eq!(verify_lemma(&paired), Ok(true));
    }

    #[test]
    fn q_condition_violation_is_distinct() {
        let mut qf = PairFamily::new();
        qf.insert((mi(&[0, 0]), 0), q(1, 1));
        let case = LemmaCase::LowerPairedSum {
            m: 2,
            l: 1,
            a: IndexFamily::new(),
            b: IndexFamily::new(),
            q: qf,
        };
        assert_eq!(
            verify_lemma(&case),
            Err(MultiIndexError::QConditionViolated(mi(&[1, 0])))
        );
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(2, 3), 0);
        assert_eq!(binomial(4, 0), 1);
    }
}
