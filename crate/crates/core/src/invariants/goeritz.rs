//! Goeritz matrix of the closed-braid diagram.
//!
//! The closure is drawn around an axis left of strand 1. Its regions are the
//! inner disk (column 0), the outer region (column `n`), and for each column
//! `c` between strands `c` and `c + 1` the segments cut out by the `σ_c`
//! crossings. Columns of even index are coloured white.

use crate::braid::BraidWord;

use super::{require_knot, InvariantError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoeritzMatrix {
    size: usize,
    entries: Vec<i64>,
    reduced: bool,
}

impl GoeritzMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    pub fn get(&self, row: usize, col: usize) -> i64 {
        self.entries[row * self.size + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i64]> {
        self.entries.chunks(self.size.max(1)).take(self.size)
    }

    /// Drops the last row and column.
    pub fn reduce(&self) -> GoeritzMatrix {
        if self.reduced || self.size == 0 {
            return self.clone();
        }
        let n = self.size - 1;
        let mut entries = Vec::with_capacity(n * n);
        for r in 0..n {
            entries.extend_from_slice(&self.entries[r * self.size..r * self.size + n]);
        }
        GoeritzMatrix { size: n, entries, reduced: true }
    }

    pub fn determinant(&self) -> i128 {
        integer_determinant(self.size, &self.entries)
    }
}

/// Segment of column `col` containing height `pos`, where `heights` are the
/// sorted crossing positions of that column. Segment `j` runs from crossing
/// `j` up to crossing `j + 1`, the last one wrapping around.
fn segment_at(heights: &[usize], pos: usize) -> usize {
    let below = heights.partition_point(|&h| h < pos);
    (below + heights.len() - 1) % heights.len()
}

/// Unreduced Goeritz matrix over the white regions.
pub fn goeritz_matrix(w: &BraidWord) -> Result<GoeritzMatrix, InvariantError> {
    require_knot(w)?;
    let n = w.strands();
    let mut heights: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (pos, &l) in w.letters().iter().enumerate() {
        heights[l.unsigned_abs() as usize].push(pos);
    }

    // Index white regions column by column.
    let mut base = vec![usize::MAX; n + 1];
    let mut count = 0;
    for col in (0..=n).step_by(2) {
        base[col] = count;
        count += if col == 0 || col == n { 1 } else { heights[col].len().max(1) };
    }
    let region = |col: usize, pos: usize| -> usize {
        if col == 0 || col == n || heights[col].is_empty() {
            base[col]
        } else {
            base[col] + segment_at(&heights[col], pos)
        }
    };

    let mut g = vec![0i64; count * count];
    for (pos, &l) in w.letters().iter().enumerate() {
        let col = l.unsigned_abs() as usize;
        let sign = l.signum() as i64;
        let (a, b, eta) = if col % 2 == 0 {
            let hs = &heights[col];
            let j = hs.binary_search(&pos).expect("crossing is listed in its column");
            let above = base[col] + j;
            let below = base[col] + (j + hs.len() - 1) % hs.len();
            (above, below, -sign)
        } else {
            (region(col - 1, pos), region(col + 1, pos), sign)
        };
        if a == b {
            continue;
        }
        g[a * count + b] -= eta;
        g[b * count + a] -= eta;
        g[a * count + a] += eta;
        g[b * count + b] += eta;
    }
    Ok(GoeritzMatrix { size: count, entries: g, reduced: false })
}

/// `|det|` of the reduced Goeritz matrix.
pub fn knot_determinant(w: &BraidWord) -> Result<u64, InvariantError> {
    let det = goeritz_matrix(w)?.reduce().determinant();
    Ok(det.unsigned_abs() as u64)
}

/// Determinant of a row-major integer matrix by Bareiss elimination; the
/// empty matrix has determinant 1.
pub fn integer_determinant(size: usize, entries: &[i64]) -> i128 {
    if size == 0 {
        return 1;
    }
    let mut m: Vec<i128> = entries.iter().map(|&x| x as i128).collect();
    let at = |r: usize, c: usize| r * size + c;
    let mut prev: i128 = 1;
    let mut sign = 1;
    for k in 0..size - 1 {
        if m[at(k, k)] == 0 {
            let Some(swap) = (k + 1..size).find(|&r| m[at(r, k)] != 0) else {
                return 0;
            };
            for c in 0..size {
                m.swap(at(k, c), at(swap, c));
            }
            sign = -sign;
        }
        for i in k + 1..size {
            for j in k + 1..size {
                m[at(i, j)] = (m[at(i, j)] * m[at(k, k)] - m[at(i, k)] * m[at(k, j)]) / prev;
            }
        }
        prev = m[at(k, k)];
    }
    sign * m[at(size - 1, size - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(letters: &[i32], strands: usize) -> BraidWord {
        BraidWord::new(letters.to_vec(), strands).unwrap()
    }

    #[test]
    fn unknot_has_empty_reduced_matrix() {
        let g = goeritz_matrix(&w(&[], 1)).unwrap().reduce();
        assert_eq!(g.size(), 0);
        assert_eq!(g.determinant(), 1);
        assert_eq!(knot_determinant(&w(&[1], 2)), Ok(1));
    }

    #[test]
    fn trefoil_and_figure_eight() {
        let t = goeritz_matrix(&w(&[1, 1, 1], 2)).unwrap();
        assert_eq!(t.size(), 2);
        assert_eq!(t.reduce().determinant().abs(), 3);
        assert_eq!(knot_determinant(&w(&[1, 2, 1, 2], 3)), Ok(3));
        let f = goeritz_matrix(&w(&[1, -2, 1, -2], 3)).unwrap();
        assert_eq!(f.size(), 3);
        assert_eq!(knot_determinant(&w(&[1, -2, 1, -2], 3)), Ok(5));
    }

    #[test]
    fn unreduced_is_symmetric_with_zero_row_sums() {
        let g = goeritz_matrix(&w(&[1, -2, 3, 1, 2, -3, -2], 4)).unwrap();
        for r in 0..g.size() {
            assert_eq!(g.rows().nth(r).unwrap().iter().sum::<i64>(), 0);
            for c in 0..g.size() {
                assert_eq!(g.get(r, c), g.get(c, r));
            }
        }
    }

    #[test]
    fn links_are_rejected() {
        assert_eq!(
            knot_determinant(&w(&[1, 1], 2)),
            Err(InvariantError::NotAKnot { components: 2 })
        );
    }

    #[test]
    fn integer_determinant_matches_cofactor_expansion() {
        let m = [2, -1, 0, -1, 3, -2, 0, -2, 4];
        // 2(12 - 4) + 1(-4 - 0) = 12
        assert_eq!(integer_determinant(3, &m), 12);
        assert_eq!(integer_determinant(2, &[0, 1, 1, 0]), -1);
    }
}
