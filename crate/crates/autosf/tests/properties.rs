//! Property tests for the algebraic invariants of the block scoring
//! function space.

use ndarray::Array1;
use proptest::prelude::*;

use autosf::blm::{relation_col_vector, relation_row_vector, score, BlockSF};
use autosf::equivalence::{apply, canonical_form, check_c2, GroupElement};
use autosf::srf::srf;

fn arb_block_sf() -> impl Strategy<Value = BlockSF> {
    proptest::array::uniform16(-4i8..=4).prop_map(|flat| {
        let mut cells = [[0i8; 4]; 4];
        for (n, v) in flat.into_iter().enumerate() {
            cells[n / 4][n % 4] = v;
        }
        BlockSF::from_cells(cells).unwrap()
    })
}

fn arb_perm() -> impl Strategy<Value = [usize; 4]> {
    Just([0usize, 1, 2, 3]).prop_shuffle().prop_map(|v| v.try_into().unwrap())
}

fn arb_group_element() -> impl Strategy<Value = GroupElement> {
    (arb_perm(), arb_perm(), proptest::array::uniform4(any::<bool>())).prop_map(
        |(entity_perm, relation_perm, sign_flips)| GroupElement {
            entity_perm,
            relation_perm,
            sign_flips,
        },
    )
}

fn arb_vector(d: usize) -> impl Strategy<Value = Array1<f64>> {
    proptest::collection::vec(-1.0f64..1.0, d).prop_map(Array1::from_vec)
}

proptest! {
    #[test]
    fn text_encoding_round_trips(sf in arb_block_sf()) {
        let text = sf.to_string();
        let back: BlockSF = text.parse().unwrap();
        prop_assert_eq!(back, sf);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn row_and_col_vectors_factor_the_score(
        sf in arb_block_sf(),
        h in arb_vector(16),
        r in arb_vector(16),
        t in arb_vector(16),
    ) {
        let s = score(&sf, h.view(), r.view(), t.view()).unwrap();
        let q = relation_row_vector(&sf, h.view(), r.view()).unwrap();
        let p = relation_col_vector(&sf, t.view(), r.view()).unwrap();
        let via_q: f64 = q.iter().zip(&t).map(|(a, b)| a * b).sum();
        let via_p: f64 = p.iter().zip(&h).map(|(a, b)| a * b).sum();
        prop_assert!((via_q - s).abs() < 1e-12);
        prop_assert!((via_p - s).abs() < 1e-12);
    }

    #[test]
    fn score_is_bilinear(
        sf in arb_block_sf(),
        h in arb_vector(8),
        h2 in arb_vector(8),
        r in arb_vector(8),
        t in arb_vector(8),
        alpha in -3.0f64..3.0,
    ) {
        let s = score(&sf, h.view(), r.view(), t.view()).unwrap();
        let scaled = score(&sf, (&h * alpha).view(), r.view(), t.view()).unwrap();
        prop_assert!((scaled - alpha * s).abs() < 1e-10);
        let s2 = score(&sf, h2.view(), r.view(), t.view()).unwrap();
        let summed = score(&sf, (&h + &h2).view(), r.view(), t.view()).unwrap();
        prop_assert!((summed - (s + s2)).abs() < 1e-10);
    }

    #[test]
    fn transpose_swaps_head_and_tail(
        sf in arb_block_sf(),
        h in arb_vector(8),
        r in arb_vector(8),
        t in arb_vector(8),
    ) {
        let a = score(&sf, h.view(), r.view(), t.view()).unwrap();
        let b = score(&sf.transpose(), t.view(), r.view(), h.view()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    // Orbit scans are ~1ms each; keep the case count modest.
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_form_collapses_orbits(sf in arb_block_sf(), elem in arb_group_element()) {
        let canon = canonical_form(&sf);
        prop_assert_eq!(canonical_form(&apply(&elem, &sf)), canon);
        prop_assert_eq!(canonical_form(&canon), canon);
        prop_assert!(canon <= sf);
    }

    #[test]
    fn group_action_preserves_structure(sf in arb_block_sf(), elem in arb_group_element()) {
        let moved = apply(&elem, &sf);
        prop_assert_eq!(moved.block_count(), sf.block_count());
        prop_assert_eq!(check_c2(&moved), check_c2(&sf));
        prop_assert_eq!(srf(&moved), srf(&sf));
        let back = apply(&elem.inverse(), &moved);
        prop_assert_eq!(back, sf);
    }
}
