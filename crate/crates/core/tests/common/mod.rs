//! Independent reference computations shared by the integration suites.
#![allow(dead_code)]

use braidforge::{BraidWord, LaurentPolynomial};

/// Kauffman bracket by summing over all `2^n` smoothings.
///
/// Nodes are `(level, strand)` points of the braid picture; each smoothing
/// decides how the two strands at a crossing continue, and the closure glues
/// the top level to the bottom one. Loops are counted with a union-find.
pub fn state_sum_bracket(w: &BraidWord) -> LaurentPolynomial {
    let n = w.strands();
    let letters = w.letters();
    let len = letters.len();
    assert!(len <= 20, "state sum is exponential");
    let node = |level: usize, strand: usize| level * n + strand;
    let total_nodes = (len + 1) * n;
    let mut result = LaurentPolynomial::zero();
    for state in 0u32..(1u32 << len) {
        let mut uf = UnionFind::new(total_nodes);
        let mut a_power = 0i32;
        for (level, &l) in letters.iter().enumerate() {
            let i = l.unsigned_abs() as usize - 1;
            let s = l.signum();
            let horizontal = state >> level & 1 == 1;
            for strand in 0..n {
                if strand != i && strand != i + 1 {
                    uf.union(node(level, strand), node(level + 1, strand));
                }
            }
            if horizontal {
                uf.union(node(level, i), node(level, i + 1));
                uf.union(node(level + 1, i), node(level + 1, i + 1));
                a_power -= s;
            } else {
                uf.union(node(level, i), node(level + 1, i));
                uf.union(node(level, i + 1), node(level + 1, i + 1));
                a_power += s;
            }
        }
        // Closure: top level is identified with the bottom one.
        for strand in 0..n {
            uf.union(node(len, strand), node(0, strand));
        }
        let loops = uf.components();
        let delta = LaurentPolynomial::from_terms([(2, -1), (-2, -1)]);
        let term = &LaurentPolynomial::monomial(1, a_power) * &delta.pow(loops as u32 - 1);
        result += &term;
    }
    result
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }

    fn components(&mut self) -> usize {
        (0..self.parent.len()).filter(|&x| self.find(x) == x).count()
    }
}

/// Number of cycles of the strand permutation, computed by following each
/// strand through the word letter by letter.
pub fn cycle_count_oracle(w: &BraidWord) -> usize {
    let n = w.strands();
    let follow = |start: usize| {
        let mut pos = start;
        for &l in w.letters() {
            let i = l.unsigned_abs() as usize - 1;
            if pos == i {
                pos = i + 1;
            } else if pos == i + 1 {
                pos = i;
            }
        }
        pos
    };
    let mut seen = vec![false; n];
    let mut cycles = 0;
    for s in 0..n {
        if !seen[s] {
            cycles += 1;
            let mut p = s;
            while !seen[p] {
                seen[p] = true;
                p = follow(p);
            }
        }
    }
    cycles
}

/// Largest relative error between the analytic gradient of
/// `sum(weights * out) + 0.5 * sum(out^2)` and central differences.
pub fn max_gradient_error(
    enc: &braidforge::nn::Encoder,
    x: &ndarray::Array2<f64>,
    weights: &ndarray::Array2<f64>,
    h: f64,
) -> f64 {
    let loss = |out: &ndarray::Array2<f64>| (out * weights).sum() + 0.5 * out.mapv(|v| v * v).sum();
    let (_, grads) = enc
        .gradients(x, |out| (loss(out), weights + out))
        .expect("shapes match");
    let base = enc.parameters();
    let mut worst: f64 = 0.0;
    let mut probe = enc.clone();
    for (t, tensor) in base.iter().enumerate() {
        for idx in 0..tensor.len() {
            let eval = |probe: &mut braidforge::nn::Encoder, delta: f64| {
                let mut p = base.clone();
                let flat = p[t].as_slice_mut().expect("contiguous");
                flat[idx] += delta;
                probe.set_parameters(&p).unwrap();
                loss(&probe.forward(x).unwrap())
            };
            let numeric = (eval(&mut probe, h) - eval(&mut probe, -h)) / (2.0 * h);
            let analytic = grads.0[t].as_slice().expect("contiguous")[idx];
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}
