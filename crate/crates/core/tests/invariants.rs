mod common;

use braidforge::invariants::{
    alexander_polynomial, jones_polynomial, jones_polynomial_capped, kauffman_bracket,
    knot_determinant, KnotInvariants,
};
use braidforge::BraidWord;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_word(max_strands: usize, max_len: usize) -> impl Strategy<Value = BraidWord> {
    (2..=max_strands).prop_flat_map(move |n| {
        let letter = (1..n as i32, any::<bool>()).prop_map(|(g, pos)| if pos { g } else { -g });
        proptest::collection::vec(letter, 0..=max_len)
            .prop_map(move |l| BraidWord::new(l, n).unwrap())
    })
}

fn arb_knot(max_strands: usize, max_len: usize) -> impl Strategy<Value = BraidWord> {
    arb_word(max_strands, max_len).prop_filter("closure must be a knot", |w| w.component_count() == 1)
}

#[test]
fn bracket_matches_state_sum_on_small_words() {
    let words: [(&[i32], usize); 5] = [
        (&[1, 1, 1], 2),
        (&[1, -2, 1, -2], 3),
        (&[1, 2, -1, 2, 3, -2], 4),
        (&[-1, -1, 2, 1, 2], 3),
        (&[], 3),
    ];
    for (l, n) in words {
        let w = BraidWord::new(l.to_vec(), n).unwrap();
        assert_eq!(kauffman_bracket(&w).unwrap(), common::state_sum_bracket(&w), "{w}");
    }
}

#[test]
fn determinant_of_known_knots() {
    let cases: [(&[i32], usize, u64); 4] = [
        (&[1, 1, 1], 2, 3),
        (&[1, -2, 1, -2], 3, 5),
        (&[1, 1, 1, 1, 1], 2, 5),
        (&[1, 1, 1, 2, -1, 2], 3, 7),
    ];
    for (l, n, det) in cases {
        let w = BraidWord::new(l.to_vec(), n).unwrap();
        assert_eq!(knot_determinant(&w).unwrap(), det, "{w}");
    }
}

#[test]
fn scrambled_trefoil_keeps_its_invariants() {
    let trefoil = BraidWord::new(vec![1, 1, 1], 2).unwrap();
    let base = KnotInvariants::compute(&trefoil).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let w = trefoil.scramble(10, &mut rng);
        let j = jones_polynomial_capped(&w, 14).unwrap();
        assert_eq!(j.in_t().unwrap(), base.jones);
        assert_eq!(alexander_polynomial(&w).unwrap(), base.alexander);
        assert_eq!(knot_determinant(&w).unwrap(), base.determinant);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bracket_agrees_with_state_sum(w in arb_word(5, 12)) {
        prop_assert_eq!(kauffman_bracket(&w).unwrap(), common::state_sum_bracket(&w));
    }

    #[test]
    fn determinant_matches_polynomials_at_minus_one(w in arb_knot(5, 12)) {
        let det = knot_determinant(&w).unwrap() as i128;
        let alex = alexander_polynomial(&w).unwrap();
        let jones = jones_polynomial(&w).unwrap().in_t().unwrap();
        prop_assert_eq!(alex.eval_i64(-1).abs(), det);
        prop_assert_eq!(jones.eval_i64(-1).abs(), det);
    }

    #[test]
    fn mirror_inverts_jones_variable(w in arb_knot(5, 12)) {
        let j = jones_polynomial(&w).unwrap();
        prop_assert_eq!(jones_polynomial(&w.mirror()).unwrap(), j.invert_variable());
    }

    #[test]
    fn invariants_survive_markov_moves(w in arb_knot(4, 10), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let moved = w.scramble(10, &mut rng);
        let a = KnotInvariants::compute(&w).unwrap();
        let j = jones_polynomial_capped(&moved, 16).unwrap().in_t().unwrap();
        prop_assert_eq!(j, a.jones);
        prop_assert_eq!(alexander_polynomial(&moved).unwrap(), a.alexander);
        prop_assert_eq!(knot_determinant(&moved).unwrap(), a.determinant);
    }

    #[test]
    fn alexander_is_symmetric(w in arb_knot(5, 12)) {
        let a = alexander_polynomial(&w).unwrap();
        prop_assert_eq!(a.invert_variable(), a.clone());
        prop_assert!(a.eval_i64(1) == 1);
    }
}
