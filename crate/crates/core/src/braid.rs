//! Braid words, Markov moves and closure combinatorics.
//!
//! A letter `k` stands for the Artin generator `σ_|k|` when positive and for
//! its inverse when negative. Every operation here is pure: it takes a word
//! by reference and returns a new one.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BraidError {
    #[error("letter {letter} is out of range for a braid on {strands} strands")]
    LetterOutOfRange { letter: i32, strands: usize },
    #[error("no applicable rewrite at position {0}")]
    PositionInvalid(usize),
    #[error("the top generator does not occur exactly once")]
    NotDestabilizable,
    #[error("target length {target} is shorter than the word ({len} letters)")]
    TargetTooShort { target: usize, len: usize },
    #[error("a braid needs at least one strand")]
    NoStrands,
}

/// Sign of a stabilization letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_i32(self) -> i32 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// A word in the braid group on `strands` strands.
///
/// The empty word on one strand is the trivial closed braid (the unknot);
/// every other word needs `strands >= 2` to carry letters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BraidWord {
    letters: Vec<i32>,
    strands: usize,
}

/// A single closure-preserving rewrite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarkovMove {
    Conjugate(i32),
    Stabilize(Sign),
    Destabilize,
    BraidRelation(usize),
    Commutation(usize),
    FreeReduce(usize),
}

fn check_letter(letter: i32, strands: usize) -> Result<(), BraidError> {
    let abs = letter.unsigned_abs() as usize;
    if letter == 0 || abs >= strands {
        Err(BraidError::LetterOutOfRange { letter, strands })
    } else {
        Ok(())
    }
}

impl BraidWord {
    pub fn new(letters: Vec<i32>, strands: usize) -> Result<Self, BraidError> {
        if strands == 0 {
            return Err(BraidError::NoStrands);
        }
        for &l in &letters {
            check_letter(l, strands)?;
        }
        Ok(Self { letters, strands })
    }

    /// The identity braid on `strands` strands.
    pub fn identity(strands: usize) -> Result<Self, BraidError> {
        Self::new(Vec::new(), strands)
    }

    /// Builds a word on the fewest strands that accommodate its letters.
    pub fn from_letters(letters: Vec<i32>) -> Result<Self, BraidError> {
        let strands = letters
            .iter()
            .map(|l| l.unsigned_abs() as usize + 1)
            .max()
            .unwrap_or(1)
            .max(1);
        Self::new(letters, strands)
    }

    fn from_parts(letters: Vec<i32>, strands: usize) -> Self {
        debug_assert!(letters
            .iter()
            .all(|&l| l != 0 && (l.unsigned_abs() as usize) < strands));
        Self { letters, strands }
    }

    pub fn letters(&self) -> &[i32] {
        &self.letters
    }

    pub fn strands(&self) -> usize {
        self.strands
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn into_letters(self) -> Vec<i32> {
        self.letters
    }

    /// Flips every crossing.
    pub fn mirror(&self) -> BraidWord {
        Self::from_parts(self.letters.iter().map(|l| -l).collect(), self.strands)
    }

    /// Exponent sum.
    pub fn writhe(&self) -> i64 {
        self.letters.iter().map(|l| l.signum() as i64).sum()
    }

    /// Cancels adjacent inverse pairs until none remain.
    pub fn free_reduce(&self) -> BraidWord {
        let mut out: Vec<i32> = Vec::with_capacity(self.letters.len());
        for &l in &self.letters {
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Self::from_parts(out, self.strands)
    }

    /// Swaps the letters at `pos` and `pos + 1` when their generators are far
    /// apart.
    pub fn apply_commutation(&self, pos: usize) -> Result<BraidWord, BraidError> {
        if !self.commutes_at(pos) {
            return Err(BraidError::PositionInvalid(pos));
        }
        let mut letters = self.letters.clone();
        letters.swap(pos, pos + 1);
        Ok(Self::from_parts(letters, self.strands))
    }

    fn commutes_at(&self, pos: usize) -> bool {
        match (self.letters.get(pos), self.letters.get(pos + 1)) {
            (Some(&a), Some(&b)) => far_apart(a, b),
            _ => false,
        }
    }

    /// Rewrites the triple at `pos` to the other side of a braid relation.
    ///
    /// Handles `σ_i σ_j σ_i = σ_j σ_i σ_j` (and its inverse) together with
    /// the mixed form `σ_i^e σ_j^f σ_i^-e = σ_j^-e σ_i^f σ_j^e`, for
    /// `|i - j| = 1`. Both rewrites are involutions.
    pub fn apply_braid_relation(&self, pos: usize) -> Result<BraidWord, BraidError> {
        let triple = self
            .letters
            .get(pos..pos + 3)
            .ok_or(BraidError::PositionInvalid(pos))?;
        let replacement =
            relation_rewrite(triple[0], triple[1], triple[2]).ok_or(BraidError::PositionInvalid(pos))?;
        let mut letters = self.letters.clone();
        letters[pos..pos + 3].copy_from_slice(&replacement);
        Ok(Self::from_parts(letters, self.strands))
    }

    fn relation_at(&self, pos: usize) -> bool {
        self.letters
            .get(pos..pos + 3)
            .is_some_and(|t| relation_rewrite(t[0], t[1], t[2]).is_some())
    }

    /// `g w g^-1`, left unreduced.
    pub fn conjugate(&self, g: i32) -> Result<BraidWord, BraidError> {
        check_letter(g, self.strands)?;
        let mut letters = Vec::with_capacity(self.letters.len() + 2);
        letters.push(g);
        letters.extend_from_slice(&self.letters);
        letters.push(-g);
        Ok(Self::from_parts(letters, self.strands))
    }

    /// Adds a strand and appends `σ_n^±1` where `n` is the old strand count.
    pub fn stabilize(&self, sign: Sign) -> BraidWord {
        let mut letters = self.letters.clone();
        letters.push(sign.as_i32() * self.strands as i32);
        Self::from_parts(letters, self.strands + 1)
    }

    /// Removes the single occurrence of the top generator, rotating it to the
    /// end of the word first.
    pub fn destabilize(&self) -> Result<BraidWord, BraidError> {
        let pos = self.destabilize_position().ok_or(BraidError::NotDestabilizable)?;
        let mut letters = Vec::with_capacity(self.letters.len() - 1);
        letters.extend_from_slice(&self.letters[pos + 1..]);
        letters.extend_from_slice(&self.letters[..pos]);
        Ok(Self::from_parts(letters, self.strands - 1))
    }

    fn destabilize_position(&self) -> Option<usize> {
        if self.strands < 2 {
            return None;
        }
        let top = (self.strands - 1) as u32;
        let mut found = None;
        for (i, l) in self.letters.iter().enumerate() {
            if l.unsigned_abs() == top {
                if found.is_some() {
                    return None;
                }
                found = Some(i);
            }
        }
        found
    }

    /// Rotates the letters left by `r` (negative `r` rotates right).
    pub fn cyclic_rotate(&self, r: isize) -> BraidWord {
        let mut letters = self.letters.clone();
        if !letters.is_empty() {
            let shift = r.rem_euclid(letters.len() as isize) as usize;
            letters.rotate_left(shift);
        }
        Self::from_parts(letters, self.strands)
    }

    /// Permutation induced on strand positions; `perm[i]` is the strand that
    /// ends at position `i`.
    pub fn closure_permutation(&self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.strands).collect();
        for &l in &self.letters {
            let i = l.unsigned_abs() as usize - 1;
            perm.swap(i, i + 1);
        }
        perm
    }

    /// Number of components of the closure.
    pub fn component_count(&self) -> usize {
        count_cycles(&self.closure_permutation())
    }

    pub fn apply_move(&self, mv: MarkovMove) -> Result<BraidWord, BraidError> {
        match mv {
            MarkovMove::Conjugate(g) => self.conjugate(g),
            MarkovMove::Stabilize(sign) => Ok(self.stabilize(sign)),
            MarkovMove::Destabilize => self.destabilize(),
            MarkovMove::BraidRelation(pos) => self.apply_braid_relation(pos),
            MarkovMove::Commutation(pos) => self.apply_commutation(pos),
            MarkovMove::FreeReduce(pos) => match (self.letters.get(pos), self.letters.get(pos + 1)) {
                (Some(&a), Some(&b)) if a == -b => {
                    let mut letters = self.letters.clone();
                    letters.drain(pos..pos + 2);
                    Ok(Self::from_parts(letters, self.strands))
                }
                _ => Err(BraidError::PositionInvalid(pos)),
            },
        }
    }

    /// Pads with stabilizations of alternating sign (`+`, `-`, `+`, ...)
    /// until the word has `target` letters.
    pub fn pad_to_length(&self, target: usize) -> Result<BraidWord, BraidError> {
        if target < self.len() {
            return Err(BraidError::TargetTooShort { target, len: self.len() });
        }
        let mut w = self.clone();
        let mut sign = Sign::Plus;
        while w.len() < target {
            w = w.stabilize(sign);
            sign = sign.flip();
        }
        Ok(w)
    }

    /// Applies `n_moves` random closure-preserving moves.
    ///
    /// Each move kind (conjugation, stabilization, destabilization, local
    /// relation) is drawn uniformly; a draw that does not apply is redrawn up
    /// to 16 times and then skipped.
    pub fn scramble<R: Rng + ?Sized>(&self, n_moves: usize, rng: &mut R) -> BraidWord {
        const REDRAWS: usize = 16;
        let mut w = self.clone();
        for _ in 0..n_moves {
            for _ in 0..=REDRAWS {
                if let Some(next) = w.random_move(rng) {
                    w = next;
                    break;
                }
            }
        }
        w
    }

    fn random_move<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<BraidWord> {
        match rng.random_range(0..4) {
            0 => {
                if self.strands < 2 {
                    return None;
                }
                let g = rng.random_range(1..self.strands as i32);
                let g = if rng.random_bool(0.5) { g } else { -g };
                self.conjugate(g).ok()
            }
            1 => {
                let sign = if rng.random_bool(0.5) { Sign::Plus } else { Sign::Minus };
                Some(self.stabilize(sign))
            }
            2 => self.destabilize().ok(),
            _ => {
                let candidates: Vec<MarkovMove> = (0..self.len())
                    .flat_map(|p| {
                        let rel = self.relation_at(p).then_some(MarkovMove::BraidRelation(p));
                        let com = self.commutes_at(p).then_some(MarkovMove::Commutation(p));
                        rel.into_iter().chain(com)
                    })
                    .collect();
                if candidates.is_empty() {
                    return None;
                }
                let mv = candidates[rng.random_range(0..candidates.len())];
                self.apply_move(mv).ok()
            }
        }
    }

    /// Greedy shrinking that preserves the closure.
    ///
    /// Each round looks for a strictly shorter word: free and cyclic
    /// cancellation, destabilization, cancellation across commuting letters,
    /// and finally a single braid relation that unlocks one of the former.
    /// This is a heuristic, not a normal form.
    pub fn simplify(&self) -> BraidWord {
        let mut w = self.free_reduce();
        while let Some(shorter) = w.shrink_step(true) {
            w = shorter;
        }
        w
    }

    fn shrink_step(&self, try_relations: bool) -> Option<BraidWord> {
        if let Some(w) = self.cyclic_cancel() {
            return Some(w);
        }
        if let Ok(w) = self.destabilize() {
            return Some(w.free_reduce());
        }
        if let Some(w) = self.commuting_cancel() {
            return Some(w);
        }
        if try_relations {
            for pos in 0..self.len().saturating_sub(2) {
                if let Ok(rewritten) = self.apply_braid_relation(pos) {
                    if let Some(w) = rewritten.shrink_step(false) {
                        return Some(w);
                    }
                }
            }
        }
        None
    }

    /// Removes a leading/trailing inverse pair (conjugation under closure).
    fn cyclic_cancel(&self) -> Option<BraidWord> {
        let reduced = self.free_reduce();
        if reduced.len() < self.len() {
            return Some(reduced);
        }
        match (self.letters.first(), self.letters.last()) {
            (Some(&a), Some(&b)) if self.len() >= 2 && a == -b => {
                let letters = self.letters[1..self.len() - 1].to_vec();
                Some(Self::from_parts(letters, self.strands).free_reduce())
            }
            _ => None,
        }
    }

    /// Finds `x ... x^-1` where every letter in between commutes with `x`,
    /// reading the word cyclically, and deletes the pair.
    fn commuting_cancel(&self) -> Option<BraidWord> {
        let n = self.len();
        for p in 0..n {
            let x = self.letters[p];
            for step in 1..n {
                let q = (p + step) % n;
                let y = self.letters[q];
                if y == -x {
                    let mut letters = Vec::with_capacity(n - 2);
                    if q > p {
                        letters.extend(
                            self.letters
                                .iter()
                                .enumerate()
                                .filter(|&(i, _)| i != p && i != q)
                                .map(|(_, &l)| l),
                        );
                    } else {
                        // Wrapped around: keep the word starting after p.
                        let rotated = self.cyclic_rotate(p as isize + 1);
                        let q_rot = (q + n - p - 1) % n;
                        letters.extend(
                            rotated
                                .letters
                                .iter()
                                .enumerate()
                                .filter(|&(i, _)| i != q_rot && i != n - 1)
                                .map(|(_, &l)| l),
                        );
                    }
                    return Some(Self::from_parts(letters, self.strands).free_reduce());
                }
                if !far_apart(x, y) {
                    break;
                }
            }
        }
        None
    }
}

impl fmt::Display for BraidWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, l) in self.letters.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "]/{}", self.strands)
    }
}

fn far_apart(a: i32, b: i32) -> bool {
    a.unsigned_abs().abs_diff(b.unsigned_abs()) > 1
}

fn relation_rewrite(a: i32, b: i32, c: i32) -> Option<[i32; 3]> {
    let (ia, ib) = (a.unsigned_abs() as i32, b.unsigned_abs() as i32);
    if (ia - ib).abs() != 1 {
        return None;
    }
    if a == c && a.signum() == b.signum() {
        // σ_i σ_j σ_i = σ_j σ_i σ_j, uniform sign.
        return Some([b, a, b]);
    }
    if c == -a {
        // σ_i^e σ_j^f σ_i^-e = σ_j^-e σ_i^f σ_j^e
        let (e, f) = (a.signum(), b.signum());
        return Some([-e * ib, f * ia, e * ib]);
    }
    None
}

pub(crate) fn count_cycles(perm: &[usize]) -> usize {
    let mut seen = vec![false; perm.len()];
    let mut cycles = 0;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        cycles += 1;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = perm[i];
        }
    }
    cycles
}
