//! Kauffman bracket of a braid closure by a sweep through the
//! Temperley–Lieb algebra.
//!
//! A diagram on `n` strands is stored as a perfect matching of `2n` boundary
//! points: `0..n` along the bottom, `n..2n` along the top. Letters act on the
//! top edge; a closed loop created while composing is absorbed as a factor of
//! `δ = -A^2 - A^-2`.

use std::collections::HashMap;

use crate::braid::BraidWord;
use crate::poly::LaurentPolynomial;

use super::InvariantError;

/// Largest strand count accepted by default; Catalan(9) = 4862 basis
/// diagrams.
pub const DEFAULT_STRAND_CAP: usize = 9;

type Matching = Vec<u8>;

fn identity_matching(n: usize) -> Matching {
    let mut m = vec![0u8; 2 * n];
    for i in 0..n {
        m[i] = (n + i) as u8;
        m[n + i] = i as u8;
    }
    m
}

/// Multiplies `m` by `e_j` on top. Returns whether a loop was closed.
fn apply_cup_cap(m: &mut Matching, n: usize, j: usize) -> bool {
    let a = n + j;
    let b = a + 1;
    let (pa, pb) = (m[a] as usize, m[b] as usize);
    if pa == b {
        return true;
    }
    m[pa] = pb as u8;
    m[pb] = pa as u8;
    m[a] = b as u8;
    m[b] = a as u8;
    false
}

/// Loops in the closure, joining top point `n + i` to bottom point `i`.
fn closure_loops(m: &Matching, n: usize) -> usize {
    let mut seen = vec![false; 2 * n];
    let mut loops = 0;
    for start in 0..2 * n {
        if seen[start] {
            continue;
        }
        loops += 1;
        let mut p = start;
        loop {
            seen[p] = true;
            let q = m[p] as usize;
            seen[q] = true;
            // Closure strand leaves q on the opposite edge.
            p = if q < n { q + n } else { q - n };
            if seen[p] {
                break;
            }
        }
    }
    loops
}

pub(crate) fn delta() -> LaurentPolynomial {
    LaurentPolynomial::from_terms([(2, -1), (-2, -1)])
}

/// Normalized Kauffman bracket in the variable `A` (`⟨unknot⟩ = 1`).
pub fn kauffman_bracket(w: &BraidWord) -> Result<LaurentPolynomial, InvariantError> {
    kauffman_bracket_capped(w, DEFAULT_STRAND_CAP)
}

/// As [`kauffman_bracket`] with an explicit strand cap.
pub fn kauffman_bracket_capped(
    w: &BraidWord,
    cap: usize,
) -> Result<LaurentPolynomial, InvariantError> {
    let n = w.strands();
    if n > cap {
        return Err(InvariantError::StrandLimitExceeded { strands: n, cap });
    }
    let delta = delta();
    let mut state: HashMap<Matching, LaurentPolynomial> = HashMap::new();
    state.insert(identity_matching(n), LaurentPolynomial::one());

    for &letter in w.letters() {
        let j = letter.unsigned_abs() as usize - 1;
        let s = letter.signum();
        let keep = LaurentPolynomial::monomial(1, s);
        let smooth = LaurentPolynomial::monomial(1, -s);
        let mut next: HashMap<Matching, LaurentPolynomial> = HashMap::with_capacity(state.len() * 2);
        for (m, coeff) in state {
            let mut e = m.clone();
            let looped = apply_cup_cap(&mut e, n, j);
            let mut via_e = &coeff * &smooth;
            if looped {
                via_e = &via_e * &delta;
            }
            *next.entry(m).or_default() += &(&coeff * &keep);
            *next.entry(e).or_default() += &via_e;
        }
        next.retain(|_, p| !p.is_zero());
        state = next;
    }

    let max_loops = n;
    let delta_pows: Vec<LaurentPolynomial> = (0..max_loops).map(|k| delta.pow(k as u32)).collect();
    let mut total = LaurentPolynomial::zero();
    for (m, coeff) in &state {
        let loops = closure_loops(m, n);
        total += &(coeff * &delta_pows[loops - 1]);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_closure_counts_strands() {
        for n in 1..6 {
            assert_eq!(closure_loops(&identity_matching(n), n), n);
        }
    }

    #[test]
    fn cup_cap_squares_to_delta() {
        let mut m = identity_matching(3);
        assert!(!apply_cup_cap(&mut m, 3, 1));
        assert!(apply_cup_cap(&mut m, 3, 1));
        assert_eq!(closure_loops(&m, 3), 2);
    }

    #[test]
    fn unknot_is_one() {
        let w = BraidWord::new(vec![1, -1], 2).unwrap();
        // Two-component unlink: δ.
        assert_eq!(kauffman_bracket(&w).unwrap(), delta());
        assert!(kauffman_bracket(&BraidWord::identity(1).unwrap()).unwrap().is_one());
        let kink = BraidWord::new(vec![1], 2).unwrap();
        assert_eq!(kauffman_bracket(&kink).unwrap(), LaurentPolynomial::monomial(-1, 3));
    }

    #[test]
    fn strand_cap_enforced() {
        let w = BraidWord::identity(10).unwrap();
        assert_eq!(
            kauffman_bracket(&w),
            Err(InvariantError::StrandLimitExceeded { strands: 10, cap: 9 })
        );
        assert!(kauffman_bracket_capped(&w, 10).is_ok());
    }
}
