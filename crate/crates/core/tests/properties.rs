use dpt_core::dpt::{decompose, decompose_with, reconstruct, reconstruct_full, DecomposeOptions, Engine};
use dpt_core::lulu::{l_n_fast, l_n_oracle, p_cascade, p_n, smooth_shuffled, u_n_fast, u_n_oracle, OperatorExpr};
use dpt_core::verify::find_small_extremal_set;
use dpt_core::{Boundary, CellSet, Connectivity, Lattice, Polarity, ScalarField};
use proptest::prelude::*;

fn lattice_strategy(max_len: usize, max_side: usize) -> impl Strategy<Value = Lattice> {
    let boundary = prop_oneof![Just(Boundary::ZeroPadded), Just(Boundary::DomainOnly)];
    let line = (1..=max_len, boundary.clone()).prop_map(|(n, b)| Lattice::line(n, b).unwrap());
    let conn = prop_oneof![Just(Connectivity::Facet), Just(Connectivity::Full)];
    let grid =
        (1..=max_side, 1..=max_side, conn, boundary).prop_map(|(r, c, conn, b)| Lattice::grid(r, c, conn, b).unwrap());
    prop_oneof![line, grid]
}

fn field_in(lat: Lattice, lo: i64, hi: i64) -> impl Strategy<Value = ScalarField> {
    let len = lat.len();
    proptest::collection::vec(lo..=hi, len).prop_map(move |v| ScalarField::new(lat.clone(), v).unwrap())
}

fn field_strategy(max_len: usize, max_side: usize) -> impl Strategy<Value = ScalarField> {
    lattice_strategy(max_len, max_side).prop_flat_map(|lat| field_in(lat, -5, 5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn adjacency_is_symmetric(lat in lattice_strategy(12, 5)) {
        for a in 0..lat.len() {
            for b in lat.neighbors(a).unwrap().cells.iter() {
                prop_assert!(lat.neighbors(*b).unwrap().cells.contains(a));
            }
        }
    }

    #[test]
    fn outside_adjacency_matches_border(lat in lattice_strategy(12, 5)) {
        for a in 0..lat.len() {
            let n = lat.neighbors(a).unwrap();
            prop_assert_eq!(n.outside, lat.is_zero_padded() && lat.is_border(a));
        }
    }

    #[test]
    fn connected_supersets_have_exact_size(len in 1usize..6, x in 0usize..6, size in 1usize..4) {
        let lat = Lattice::line(len, Boundary::DomainOnly).unwrap();
        prop_assume!(x < len);
        let sets = lat.connected_supersets(&[x as isize], size).unwrap();
        for s in &sets {
            prop_assert_eq!(s.len(), size);
            prop_assert!(s.contains(&vec![x as isize]));
        }
        if size <= len {
            prop_assert!(!sets.is_empty());
        }
    }

    #[test]
    fn reconstruction_is_exact(f in field_strategy(16, 6)) {
        let r = decompose(&f);
        prop_assert_eq!(reconstruct_full(&r), f.clone());
        prop_assert!(r.n_max() <= f.lattice().len());
    }

    #[test]
    fn bands_partition_the_field(f in field_strategy(12, 5), split in 1usize..6) {
        let r = decompose(&f);
        let n = r.n_max();
        prop_assume!(n >= 2 && split < n);
        let low = reconstruct(&r, 1, split).unwrap();
        let high = reconstruct(&r, split + 1, n).unwrap();
        let residual = ScalarField::constant(f.lattice().clone(), r.residual);
        prop_assert_eq!(&(&low + &high) + &residual, f);
    }

    #[test]
    fn pulses_are_connected_with_size_equal_to_scale(f in field_strategy(12, 5)) {
        let r = decompose(&f);
        for layer in &r.layers {
            let mut seen = CellSet::new();
            for p in layer.pulses() {
                prop_assert_eq!(p.support.len(), layer.n);
                prop_assert!(f.lattice().is_connected(&p.support));
                prop_assert!(p.value != 0);
                prop_assert!(p.support.is_disjoint(&seen));
                seen = seen.union(&p.support);
            }
            for d in &layer.down {
                prop_assert!(d.value < 0);
                for u in &layer.up {
                    prop_assert!(u.value > 0);
                    prop_assert!(d.support.is_disjoint(&u.support));
                }
            }
        }
    }

    #[test]
    fn engines_agree(f in field_strategy(12, 5)) {
        let reference = decompose_with(&f, &DecomposeOptions { engine: Engine::Reference, shuffle_seed: None }).unwrap();
        prop_assert_eq!(decompose(&f), reference);
    }

    #[test]
    fn shuffled_processing_gives_same_output(f in field_strategy(16, 6), seed in any::<u64>()) {
        let shuffled = decompose_with(&f, &DecomposeOptions { engine: Engine::ZoneGraph, shuffle_seed: Some(seed) }).unwrap();
        prop_assert_eq!(decompose(&f), shuffled);
        for n in 1..4 {
            prop_assert_eq!(smooth_shuffled(&f, n, Polarity::Min, seed), u_n_fast(&f, n));
            prop_assert_eq!(smooth_shuffled(&f, n, Polarity::Max, seed), l_n_fast(&f, n));
        }
    }

    #[test]
    fn fast_matches_oracle(f in field_strategy(8, 4), n in 1usize..4) {
        prop_assume!(f.lattice().len() <= 16);
        prop_assert_eq!(u_n_fast(&f, n), u_n_oracle(&f, n).unwrap());
        prop_assert_eq!(l_n_fast(&f, n), l_n_oracle(&f, n).unwrap());
    }

    #[test]
    fn smoother_laws(f in field_strategy(12, 5), n in 1usize..4) {
        let u = u_n_fast(&f, n);
        let l = l_n_fast(&f, n);
        prop_assert!(l.le(&f) && f.le(&u));
        prop_assert_eq!(u_n_fast(&u, n), u.clone());
        prop_assert_eq!(l_n_fast(&l, n), l);
        prop_assert_eq!(find_small_extremal_set(&p_n(&p_cascade(&f, n - 1), n), n + 1).unwrap(), None);
    }

    #[test]
    fn smoothers_are_monotone(
        (f, bump) in lattice_strategy(12, 5).prop_flat_map(|lat| (field_in(lat.clone(), -5, 5), field_in(lat, 0, 3))),
        n in 1usize..4,
    ) {
        let g = &f + &bump;
        prop_assert!(u_n_fast(&f, n).le(&u_n_fast(&g, n)));
        prop_assert!(l_n_fast(&f, n).le(&l_n_fast(&g, n)));
    }

    #[test]
    fn upper_and_lower_are_dual_under_negation(f in field_strategy(12, 5), n in 1usize..4) {
        prop_assert_eq!(-&u_n_fast(&f, n), l_n_fast(&-&f, n));
    }

    #[test]
    fn operator_expressions_round_trip(depth in 1usize..4, picks in proptest::collection::vec((any::<bool>(), 1usize..4), 3)) {
        let ops = picks.iter().take(depth).map(|&(up, m)| if up { OperatorExpr::Upper(m) } else { OperatorExpr::Lower(m) });
        let expr = OperatorExpr::chain(ops);
        let text = expr.to_string();
        prop_assert_eq!(text.parse::<OperatorExpr>().unwrap(), expr);
    }

    #[test]
    fn result_serde_round_trip(f in field_strategy(10, 4)) {
        let r = decompose(&f);
        let json = serde_json::to_string(&r).unwrap();
        let back: dpt_core::dpt::DptResult = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, r);
    }
}
