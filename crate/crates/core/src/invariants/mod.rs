//! Classical knot invariants computed directly from braid words.

mod burau;
mod features;
mod goeritz;
mod temperley_lieb;

use std::fmt;

use thiserror::Error;

use crate::braid::BraidWord;
use crate::poly::LaurentPolynomial;

pub use burau::{alexander_polynomial, burau_reduced, PolyMatrix};
pub use features::{KnotInvariants, invariant_features, InvariantFeatures, PaddedCoeffs, PaddingSpec};
pub use goeritz::{goeritz_matrix, integer_determinant, knot_determinant, GoeritzMatrix};
pub use temperley_lieb::{kauffman_bracket, kauffman_bracket_capped, DEFAULT_STRAND_CAP};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InvariantError {
    #[error("braid has {strands} strands, above the cap of {cap}")]
    StrandLimitExceeded { strands: usize, cap: usize },
    #[error("the zero polynomial has no span")]
    ZeroPolynomial,
    #[error("closure has {components} components, expected a knot")]
    NotAKnot { components: usize },
    #[error("{what} does not fit the padding ({detail})")]
    PaddingOverflow { what: &'static str, detail: String },
}

/// Jones polynomial, stored with exponents in units of `t^(1/2)` so that
/// links with an even number of components are representable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JonesPolynomial {
    half: LaurentPolynomial,
}

impl JonesPolynomial {
    /// The polynomial in `t`, when every exponent is integral (always the
    /// case for knots).
    pub fn in_t(&self) -> Option<LaurentPolynomial> {
        self.half.divide_exponents(2)
    }

    /// The polynomial in `t^(1/2)`.
    pub fn in_half_t(&self) -> &LaurentPolynomial {
        &self.half
    }

    pub fn is_one(&self) -> bool {
        self.half.is_one()
    }

    /// Span in units of `t`.
    pub fn span(&self) -> Option<f64> {
        self.half.span().map(|s| s as f64 / 2.0)
    }

    /// `J(t) -> J(t^-1)`.
    pub fn invert_variable(&self) -> JonesPolynomial {
        JonesPolynomial { half: self.half.invert_variable() }
    }
}

impl fmt::Display for JonesPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.in_t() {
            Some(p) => write!(f, "{}", p.to_string().replace('x', "t")),
            None => write!(f, "{}", self.half.to_string().replace('x', "t^(1/2)")),
        }
    }
}

/// Writhe-corrected bracket with `A = t^(-1/4)`.
pub fn jones_polynomial(w: &BraidWord) -> Result<JonesPolynomial, InvariantError> {
    jones_polynomial_capped(w, DEFAULT_STRAND_CAP)
}

pub fn jones_polynomial_capped(
    w: &BraidWord,
    cap: usize,
) -> Result<JonesPolynomial, InvariantError> {
    let bracket = kauffman_bracket_capped(w, cap)?;
    let writhe = w.writhe();
    // (-A)^(-3w) = (-1)^w A^(-3w)
    let sign = if writhe % 2 == 0 { 1 } else { -1 };
    let corrected = bracket.shift((-3 * writhe) as i32).scale(sign);
    // A^k = t^(-k/4) = (t^(1/2))^(-k/2); the corrected bracket only has even
    // powers of A.
    let half = corrected
        .divide_exponents(-2)
        .expect("writhe-corrected bracket has only even powers of A");
    Ok(JonesPolynomial { half })
}

/// Highest minus lowest exponent.
pub fn jones_span(p: &LaurentPolynomial) -> Result<u32, InvariantError> {
    p.span().ok_or(InvariantError::ZeroPolynomial)
}

pub(crate) fn require_knot(w: &BraidWord) -> Result<(), InvariantError> {
    match w.component_count() {
        1 => Ok(()),
        components => Err(InvariantError::NotAKnot { components }),
    }
}
