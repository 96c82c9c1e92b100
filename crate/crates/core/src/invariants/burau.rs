//! Reduced Burau representation and the Alexander polynomial.

use crate::braid::BraidWord;
use crate::poly::LaurentPolynomial;

use super::{require_knot, InvariantError};

/// Dense square matrix over `Z[t, t^-1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyMatrix {
    size: usize,
    entries: Vec<LaurentPolynomial>,
}

impl PolyMatrix {
    pub fn identity(size: usize) -> Self {
        let mut entries = vec![LaurentPolynomial::zero(); size * size];
        for i in 0..size {
            entries[i * size + i] = LaurentPolynomial::one();
        }
        Self { size, entries }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> &LaurentPolynomial {
        &self.entries[row * self.size + col]
    }

    fn get_mut(&mut self, row: usize, col: usize) -> &mut LaurentPolynomial {
        &mut self.entries[row * self.size + col]
    }

    /// Determinant by fraction-free (Bareiss) elimination.
    pub fn determinant(&self) -> LaurentPolynomial {
        let n = self.size;
        if n == 0 {
            return LaurentPolynomial::one();
        }
        let mut m = self.entries.clone();
        let at = |r: usize, c: usize| r * n + c;
        let mut prev = LaurentPolynomial::one();
        let mut negate = false;
        for k in 0..n - 1 {
            if m[at(k, k)].is_zero() {
                let Some(swap) = (k + 1..n).find(|&r| !m[at(r, k)].is_zero()) else {
                    return LaurentPolynomial::zero();
                };
                for c in 0..n {
                    m.swap(at(k, c), at(swap, c));
                }
                negate = !negate;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let num = &(&m[at(i, j)] * &m[at(k, k)]) - &(&m[at(i, k)] * &m[at(k, j)]);
                    m[at(i, j)] = num
                        .div_exact(&prev)
                        .expect("Bareiss quotients are exact in an integral domain");
                }
            }
            prev = m[at(k, k)].clone();
        }
        let det = m[at(n - 1, n - 1)].clone();
        if negate {
            -&det
        } else {
            det
        }
    }
}

/// 3x3 block for `σ_i^±1` on rows/cols `i-1..=i+1` (1-based `i`), before
/// clipping at the matrix border.
fn generator_block(letter: i32) -> [[LaurentPolynomial; 3]; 3] {
    let z = LaurentPolynomial::zero;
    let one = LaurentPolynomial::one;
    let t = |c: i64, e: i32| LaurentPolynomial::monomial(c, e);
    if letter > 0 {
        [[one(), t(1, 1), z()], [z(), t(-1, 1), z()], [z(), one(), one()]]
    } else {
        [[one(), one(), z()], [z(), t(-1, -1), z()], [z(), t(1, -1), one()]]
    }
}

/// Product of reduced Burau matrices, one per letter.
pub fn burau_reduced(w: &BraidWord) -> PolyMatrix {
    let size = w.strands().saturating_sub(1);
    let mut m = PolyMatrix::identity(size);
    for &letter in w.letters() {
        let i = letter.unsigned_abs() as isize;
        let block = generator_block(letter);
        // Block row/col r covers matrix index i - 2 + r (0-based).
        let idx = |r: usize| -> Option<usize> {
            let k = i - 2 + r as isize;
            (k >= 0 && (k as usize) < size).then_some(k as usize)
        };
        // Right multiplication only touches the block's columns.
        let mut new_cols: Vec<(usize, Vec<LaurentPolynomial>)> = Vec::with_capacity(3);
        for c in 0..3 {
            let Some(col) = idx(c) else { continue };
            let mut column = vec![LaurentPolynomial::zero(); size];
            for (row, out) in column.iter_mut().enumerate() {
                for r in 0..3 {
                    let Some(k) = idx(r) else { continue };
                    if block[r][c].is_zero() {
                        continue;
                    }
                    *out += &(m.get(row, k) * &block[r][c]);
                }
            }
            new_cols.push((col, column));
        }
        for (col, column) in new_cols {
            for (row, value) in column.into_iter().enumerate() {
                *m.get_mut(row, col) = value;
            }
        }
    }
    m
}

/// Alexander polynomial in its symmetric form with `Δ(1) = 1`.
pub fn alexander_polynomial(w: &BraidWord) -> Result<LaurentPolynomial, InvariantError> {
    require_knot(w)?;
    let b = burau_reduced(w);
    let n = b.size();
    let mut i_minus_b = PolyMatrix::identity(n);
    for r in 0..n {
        for c in 0..n {
            let v = i_minus_b.get(r, c) - b.get(r, c);
            *i_minus_b.get_mut(r, c) = v;
        }
    }
    let det = i_minus_b.determinant();
    let divisor = LaurentPolynomial::from_terms((0..w.strands() as i32).map(|e| (e, 1)));
    let delta = det
        .div_exact(&divisor)
        .expect("det(I - B) is divisible by 1 + t + ... + t^(n-1)");
    Ok(normalize_alexander(&delta))
}

fn normalize_alexander(p: &LaurentPolynomial) -> LaurentPolynomial {
    let (Some(lo), Some(hi)) = (p.min_exp(), p.max_exp()) else {
        return p.clone();
    };
    let centered = p.shift(-(lo + hi).div_euclid(2));
    if centered.eval_i64(1) < 0 {
        -&centered
    } else {
        centered
    }
}
