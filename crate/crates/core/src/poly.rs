//! Integer Laurent polynomials in one variable.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Sparse Laurent polynomial; zero coefficients are never stored, so derived
/// equality is coefficient-wise equality.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LaurentPolynomial {
    terms: BTreeMap<i32, i64>,
}

impl LaurentPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::monomial(1, 0)
    }

    pub fn monomial(coeff: i64, exp: i32) -> Self {
        let mut p = Self::zero();
        p.add_term(exp, coeff);
        p
    }

    /// Builds from `(exponent, coefficient)` pairs, summing repeats.
    pub fn from_terms<I: IntoIterator<Item = (i32, i64)>>(terms: I) -> Self {
        let mut p = Self::zero();
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    }

    /// Coefficients of `x^offset, x^(offset+1), ...`.
    pub fn from_dense(offset: i32, coeffs: &[i64]) -> Self {
        Self::from_terms(coeffs.iter().enumerate().map(|(i, &c)| (offset + i as i32, c)))
    }

    pub fn add_term(&mut self, exp: i32, coeff: i64) {
        if coeff == 0 {
            return;
        }
        let entry = self.terms.entry(exp).or_insert(0);
        *entry += coeff;
        if *entry == 0 {
            self.terms.remove(&exp);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms.get(&0) == Some(&1)
    }

    pub fn coeff(&self, exp: i32) -> i64 {
        self.terms.get(&exp).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (i32, i64)> + '_ {
        self.terms.iter().map(|(&e, &c)| (e, c))
    }

    pub fn min_exp(&self) -> Option<i32> {
        self.terms.keys().next().copied()
    }

    pub fn max_exp(&self) -> Option<i32> {
        self.terms.keys().next_back().copied()
    }

    /// `max_exp - min_exp`, or `None` for the zero polynomial.
    pub fn span(&self) -> Option<u32> {
        Some(self.max_exp()?.abs_diff(self.min_exp()?))
    }

    /// Dense coefficients starting at the lowest exponent.
    pub fn to_dense(&self) -> (i32, Vec<i64>) {
        match (self.min_exp(), self.max_exp()) {
            (Some(lo), Some(hi)) => (lo, (lo..=hi).map(|e| self.coeff(e)).collect()),
            _ => (0, Vec::new()),
        }
    }

    /// Multiplies by `x^k`.
    pub fn shift(&self, k: i32) -> Self {
        Self {
            terms: self.terms.iter().map(|(&e, &c)| (e + k, c)).collect(),
        }
    }

    /// Substitutes `x -> x^k`.
    pub fn scale_exponents(&self, k: i32) -> Self {
        Self::from_terms(self.terms.iter().map(|(&e, &c)| (e * k, c)))
    }

    /// Divides every exponent by `k`; `None` unless all are divisible.
    pub fn divide_exponents(&self, k: i32) -> Option<Self> {
        if self.terms.keys().any(|e| e % k != 0) {
            return None;
        }
        Some(Self {
            terms: self.terms.iter().map(|(&e, &c)| (e / k, c)).collect(),
        })
    }

    /// Substitutes `x -> x^-1`.
    pub fn invert_variable(&self) -> Self {
        self.scale_exponents(-1)
    }

    pub fn scale(&self, k: i64) -> Self {
        if k == 0 {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(&e, &c)| (e, c * k)).collect(),
        }
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut out = Self::one();
        for _ in 0..n {
            out = &out * self;
        }
        out
    }

    /// Exact evaluation at an integer; panics on overflow only in debug builds.
    pub fn eval_i64(&self, x: i64) -> i128 {
        self.terms
            .iter()
            .map(|(&e, &c)| {
                if e >= 0 {
                    c as i128 * (x as i128).pow(e as u32)
                } else {
                    assert!(x == 1 || x == -1, "negative powers need a unit argument");
                    c as i128 * (x as i128).pow(e.unsigned_abs())
                }
            })
            .sum()
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.terms.iter().map(|(&e, &c)| c as f64 * x.powi(e)).sum()
    }

    /// Exact division. Returns `None` when `divisor` does not divide `self`
    /// in `Z[x, x^-1]`.
    pub fn div_exact(&self, divisor: &Self) -> Option<Self> {
        let d_lo = divisor.min_exp()?;
        let d_hi = divisor.max_exp()?;
        let d_lead = divisor.coeff(d_hi);
        let mut rem = self.clone();
        let mut quot = Self::zero();
        while let Some(hi) = rem.max_exp() {
            let lo = rem.min_exp().unwrap();
            if hi - lo < d_hi - d_lo {
                return None;
            }
            let c = rem.coeff(hi);
            if c % d_lead != 0 {
                return None;
            }
            let term = Self::monomial(c / d_lead, hi - d_hi);
            rem = &rem - &(&term * divisor);
            quot = &quot + &term;
        }
        Some(quot)
    }

    /// `(offset, coeffs, variable)` record used in output files.
    pub fn to_record(&self, variable: &str) -> PolyRecord {
        let (offset, coeffs) = self.to_dense();
        PolyRecord { offset, coeffs, variable: variable.to_string() }
    }
}

/// File representation of a polynomial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyRecord {
    pub offset: i32,
    pub coeffs: Vec<i64>,
    pub variable: String,
}

impl From<&PolyRecord> for LaurentPolynomial {
    fn from(r: &PolyRecord) -> Self {
        LaurentPolynomial::from_dense(r.offset, &r.coeffs)
    }
}

impl Add for &LaurentPolynomial {
    type Output = LaurentPolynomial;
    fn add(self, rhs: &LaurentPolynomial) -> LaurentPolynomial {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl AddAssign<&LaurentPolynomial> for LaurentPolynomial {
    fn add_assign(&mut self, rhs: &LaurentPolynomial) {
        for (&e, &c) in &rhs.terms {
            self.add_term(e, c);
        }
    }
}

impl Sub for &LaurentPolynomial {
    type Output = LaurentPolynomial;
    fn sub(self, rhs: &LaurentPolynomial) -> LaurentPolynomial {
        let mut out = self.clone();
        for (&e, &c) in &rhs.terms {
            out.add_term(e, -c);
        }
        out
    }
}

impl Mul for &LaurentPolynomial {
    type Output = LaurentPolynomial;
    fn mul(self, rhs: &LaurentPolynomial) -> LaurentPolynomial {
        let mut out = LaurentPolynomial::zero();
        for (&e1, &c1) in &self.terms {
            for (&e2, &c2) in &rhs.terms {
                out.add_term(e1 + e2, c1 * c2);
            }
        }
        out
    }
}

impl Neg for &LaurentPolynomial {
    type Output = LaurentPolynomial;
    fn neg(self) -> LaurentPolynomial {
        self.scale(-1)
    }
}

impl fmt::Display for LaurentPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (&e, &c)) in self.terms.iter().rev().enumerate() {
            let sign = if c < 0 { "-" } else if i > 0 { "+" } else { "" };
            if i > 0 {
                write!(f, " ")?;
            }
            let mag = c.unsigned_abs();
            match (e, mag) {
                (0, _) => write!(f, "{sign}{mag}")?,
                (_, 1) => write!(f, "{sign}x^{e}")?,
                _ => write!(f, "{sign}{mag}x^{e}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(terms: &[(i32, i64)]) -> LaurentPolynomial {
        LaurentPolynomial::from_terms(terms.iter().copied())
    }

    #[test]
    fn zero_terms_are_dropped() {
        let a = p(&[(1, 2), (1, -2), (0, 1)]);
        assert_eq!(a, LaurentPolynomial::one());
        assert_eq!(a.span(), Some(0));
        assert_eq!(LaurentPolynomial::zero().span(), None);
    }

    #[test]
    fn exact_division() {
        // (t - 1 + t^-1)(1 + t) = t^2 + t^-1
        let q = p(&[(1, 1), (0, -1), (-1, 1)]);
        let d = p(&[(0, 1), (1, 1)]);
        let prod = &q * &d;
        assert_eq!(prod, p(&[(2, 1), (-1, 1)]));
        assert_eq!(prod.div_exact(&d), Some(q));
        assert_eq!(p(&[(0, 1)]).div_exact(&d), None);
        assert_eq!(p(&[(0, 3)]).div_exact(&p(&[(0, 2)])), None);
    }

    #[test]
    fn dense_round_trip() {
        let a = p(&[(-2, 1), (1, -3)]);
        let (off, coeffs) = a.to_dense();
        assert_eq!(off, -2);
        assert_eq!(coeffs, vec![1, 0, 0, -3]);
        assert_eq!(LaurentPolynomial::from_dense(off, &coeffs), a);
    }

    #[test]
    fn evaluation() {
        let a = p(&[(1, 1), (0, -1), (-1, 1)]);
        assert_eq!(a.eval_i64(-1), -3);
        assert_eq!(a.eval_i64(1), 1);
        assert!((a.eval_f64(2.0) - 1.5).abs() < 1e-12);
    }

    fn arb_poly() -> impl Strategy<Value = LaurentPolynomial> {
        proptest::collection::vec((-6i32..6, -5i64..5), 0..6)
            .prop_map(LaurentPolynomial::from_terms)
    }

    proptest! {
        #[test]
        fn multiplication_then_division_recovers(a in arb_poly(), b in arb_poly()) {
            prop_assume!(!b.is_zero());
            let prod = &a * &b;
            prop_assert_eq!(prod.div_exact(&b), Some(a));
        }

        #[test]
        fn ring_laws(a in arb_poly(), b in arb_poly(), c in arb_poly()) {
            prop_assert_eq!(&(&a + &b) * &c, &(&a * &c) + &(&b * &c));
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert!((&a - &a).is_zero());
        }
    }
}
