//! Fixed-width feature vectors built from invariants.

use serde::{Deserialize, Serialize};

use crate::braid::BraidWord;
use crate::poly::LaurentPolynomial;

use super::{
    alexander_polynomial, goeritz_matrix, jones_polynomial, require_knot, GoeritzMatrix,
    InvariantError,
};

/// Coefficients of `t^offset, t^(offset+1), ...`, zero-padded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddedCoeffs {
    pub offset: i32,
    pub coeffs: Vec<i64>,
}

impl PaddedCoeffs {
    fn pad(p: &LaurentPolynomial, offset: i32, len: usize, what: &'static str) -> Result<Self, InvariantError> {
        let mut coeffs = vec![0; len];
        for (e, c) in p.terms() {
            let idx = e - offset;
            if idx < 0 || idx as usize >= len {
                return Err(InvariantError::PaddingOverflow {
                    what,
                    detail: format!("exponent {e} outside [{offset}, {})", offset + len as i32),
                });
            }
            coeffs[idx as usize] = c;
        }
        Ok(Self { offset, coeffs })
    }

    pub fn to_polynomial(&self) -> LaurentPolynomial {
        LaurentPolynomial::from_dense(self.offset, &self.coeffs)
    }
}

/// Widths and exponent windows shared by every knot of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddingSpec {
    pub jones_offset: i32,
    pub jones_len: usize,
    pub alexander_offset: i32,
    pub alexander_len: usize,
    pub goeritz_size: usize,
}

impl PaddingSpec {
    /// Windows of the given lengths centred on exponent 0.
    pub fn centered(jones_len: usize, alexander_len: usize, goeritz_size: usize) -> Self {
        Self {
            jones_offset: -((jones_len / 2) as i32),
            jones_len,
            alexander_offset: -((alexander_len / 2) as i32),
            alexander_len,
            goeritz_size,
        }
    }

    /// Tightest windows that hold every knot in `knots`.
    pub fn fit<'a, I: IntoIterator<Item = &'a KnotInvariants>>(knots: I) -> Self {
        let mut j = (i32::MAX, i32::MIN);
        let mut a = (i32::MAX, i32::MIN);
        let mut g = 0;
        for k in knots {
            for (lo_hi, p) in [(&mut j, &k.jones), (&mut a, &k.alexander)] {
                if let (Some(lo), Some(hi)) = (p.min_exp(), p.max_exp()) {
                    lo_hi.0 = lo_hi.0.min(lo);
                    lo_hi.1 = lo_hi.1.max(hi);
                }
            }
            g = g.max(k.goeritz.size());
        }
        let window = |(lo, hi): (i32, i32)| {
            if lo > hi {
                (0, 1)
            } else {
                (lo, (hi - lo + 1) as usize)
            }
        };
        let (jones_offset, jones_len) = window(j);
        let (alexander_offset, alexander_len) = window(a);
        Self { jones_offset, jones_len, alexander_offset, alexander_len, goeritz_size: g }
    }
}

/// Raw invariants of one knot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnotInvariants {
    pub jones: LaurentPolynomial,
    pub alexander: LaurentPolynomial,
    /// Reduced matrix.
    pub goeritz: GoeritzMatrix,
    pub determinant: u64,
    pub writhe: i64,
}

impl KnotInvariants {
    pub fn compute(w: &BraidWord) -> Result<Self, InvariantError> {
        require_knot(w)?;
        let jones = jones_polynomial(w)?
            .in_t()
            .expect("knots have integral Jones exponents");
        let goeritz = goeritz_matrix(w)?.reduce();
        let determinant = goeritz.determinant().unsigned_abs() as u64;
        Ok(Self {
            jones,
            alexander: alexander_polynomial(w)?,
            goeritz,
            determinant,
            writhe: w.writhe(),
        })
    }

    pub fn jones_span(&self) -> u32 {
        self.jones.span().unwrap_or(0)
    }

    pub fn pad(&self, spec: &PaddingSpec) -> Result<InvariantFeatures, InvariantError> {
        let n = self.goeritz.size();
        if n > spec.goeritz_size {
            return Err(InvariantError::PaddingOverflow {
                what: "goeritz",
                detail: format!("{n}x{n} matrix in a {0}x{0} frame", spec.goeritz_size),
            });
        }
        let mut goeritz_flat = vec![0; spec.goeritz_size * spec.goeritz_size];
        for (r, row) in self.goeritz.rows().enumerate() {
            goeritz_flat[r * spec.goeritz_size..r * spec.goeritz_size + n].copy_from_slice(row);
        }
        Ok(InvariantFeatures {
            jones: PaddedCoeffs::pad(&self.jones, spec.jones_offset, spec.jones_len, "jones")?,
            alexander: PaddedCoeffs::pad(
                &self.alexander,
                spec.alexander_offset,
                spec.alexander_len,
                "alexander",
            )?,
            goeritz_flat,
            goeritz_size: spec.goeritz_size,
            determinant: self.determinant,
            jones_span: self.jones_span(),
            writhe: self.writhe,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantFeatures {
    pub jones: PaddedCoeffs,
    pub alexander: PaddedCoeffs,
    /// Reduced Goeritz matrix, row-major in a `goeritz_size` square frame.
    pub goeritz_flat: Vec<i64>,
    pub goeritz_size: usize,
    pub determinant: u64,
    pub jones_span: u32,
    pub writhe: i64,
}

impl InvariantFeatures {
    pub fn scalars(&self) -> [f64; 3] {
        [self.determinant as f64, self.jones_span as f64, self.writhe as f64]
    }
}

pub fn invariant_features(
    w: &BraidWord,
    spec: &PaddingSpec,
) -> Result<InvariantFeatures, InvariantError> {
    KnotInvariants::compute(w)?.pad(spec)
}
