use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::braid::BraidWord;

use super::{Encoder, NnError};

/// Affine map `x -> (x - mean) / std` fitted on padded letter vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedScaler {
    pub mean: f64,
    pub std: f64,
}

impl SignedScaler {
    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    /// Statistics over every position (padding included) of the words
    /// zero-padded to `length`.
    pub fn fit<'a, I: IntoIterator<Item = &'a BraidWord>>(words: I, length: usize) -> Self {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for w in words {
            for &l in w.letters() {
                sum += l as f64;
                sq += (l as f64).powi(2);
            }
            n += length.max(w.len());
        }
        if n == 0 {
            return Self::identity();
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        let std = if var > 1e-12 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    SignedInteger,
    OneHot,
}

/// Letters as reals, zero-padded to `length`, then scaled.
pub fn encode_signed(w: &BraidWord, length: usize, scaler: &SignedScaler) -> Result<Vec<f64>, NnError> {
    if w.len() > length {
        return Err(NnError::TooLong { len: w.len(), max: length });
    }
    let mut out = vec![scaler.apply(0.0); length];
    for (o, &l) in out.iter_mut().zip(w.letters()) {
        *o = scaler.apply(l as f64);
    }
    Ok(out)
}

/// One row per letter: `σ_i -> e_(2i-2)`, `σ_i^-1 -> e_(2i-1)`.
pub fn encode_one_hot(w: &BraidWord, n_strands: usize) -> Result<Array2<f64>, NnError> {
    let width = 2 * n_strands.saturating_sub(1);
    let mut m = Array2::zeros((w.len(), width));
    for (r, &l) in w.letters().iter().enumerate() {
        let g = l.unsigned_abs() as usize;
        if g >= n_strands {
            return Err(NnError::LetterOutOfRange { letter: l, strands: n_strands });
        }
        let col = 2 * (g - 1) + usize::from(l < 0);
        m[[r, col]] = 1.0;
    }
    Ok(m)
}

/// How braid words become fixed-width network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEncoding {
    pub scheme: Scheme,
    pub length: usize,
    /// Alphabet size for one-hot input.
    pub n_strands: usize,
    pub scaler: SignedScaler,
}

impl InputEncoding {
    pub fn signed(length: usize, scaler: SignedScaler) -> Self {
        Self { scheme: Scheme::SignedInteger, length, n_strands: 0, scaler }
    }

    pub fn one_hot(length: usize, n_strands: usize) -> Self {
        Self { scheme: Scheme::OneHot, length, n_strands, scaler: SignedScaler::identity() }
    }

    pub fn dim(&self) -> usize {
        match self.scheme {
            Scheme::SignedInteger => self.length,
            Scheme::OneHot => self.length * 2 * self.n_strands.saturating_sub(1),
        }
    }

    pub fn encode(&self, w: &BraidWord) -> Result<Vec<f64>, NnError> {
        match self.scheme {
            Scheme::SignedInteger => encode_signed(w, self.length, &self.scaler),
            Scheme::OneHot => {
                if w.len() > self.length {
                    return Err(NnError::TooLong { len: w.len(), max: self.length });
                }
                let m = encode_one_hot(w, self.n_strands)?;
                let mut out = m.into_raw_vec_and_offset().0;
                out.resize(self.dim(), 0.0);
                Ok(out)
            }
        }
    }

    pub fn encode_batch<'a, I: IntoIterator<Item = &'a BraidWord>>(&self, words: I) -> Result<Array2<f64>, NnError> {
        let mut data = Vec::new();
        let mut rows = 0;
        for w in words {
            data.extend(self.encode(w)?);
            rows += 1;
        }
        Ok(Array2::from_shape_vec((rows, self.dim()), data).expect("rows have equal width"))
    }
}

/// An encoder together with the input encoding it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct BraidEncoder {
    pub input: InputEncoding,
    pub net: Encoder,
}

impl BraidEncoder {
    pub fn embed<'a, I: IntoIterator<Item = &'a BraidWord>>(&self, words: I) -> Result<Array2<f64>, NnError> {
        self.net.forward(&self.input.encode_batch(words)?)
    }

    pub fn embed_one(&self, w: &BraidWord) -> Result<Vec<f64>, NnError> {
        self.net.forward_one(&self.input.encode(w)?)
    }
}
