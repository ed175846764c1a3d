use nalgebra::DMatrix;
use pinned_rigidity::hypergraph::{subsets, Dims, Hypergraph};
use pinned_rigidity::incidence::{
    chart_from_homogeneous, min_dictionary_size, random_framework, rank_deficiency,
};
use pinned_rigidity::rigidity::{jacobian, numeric_rank, DEFAULT_REL_THRESHOLD};
use pinned_rigidity::sparsity::{
    brute_force_sparsity, check_rigidity_combinatorial, map_decomposition, pebble_game,
    random_tight_hypergraph, VerdictKind,
};
use proptest::prelude::*;

const PAIRS: [(usize, usize); 6] = [(3, 2), (4, 2), (4, 3), (5, 2), (5, 3), (5, 4)];

fn dims_strategy() -> impl Strategy<Value = Dims> {
    prop::sample::select(PAIRS.to_vec()).prop_map(|(d, s)| Dims::new(d, s).unwrap())
}

/// Any valid hypergraph with up to `max_n` vertices; supports may repeat.
fn hypergraph(max_n: usize, max_m: usize) -> impl Strategy<Value = Hypergraph> {
    dims_strategy().prop_flat_map(move |dims| hypergraph_with(dims, max_n, max_m))
}

fn hypergraph_with(dims: Dims, max_n: usize, max_m: usize) -> impl Strategy<Value = Hypergraph> {
    (dims.s()..=max_n)
        .prop_flat_map(move |n| {
            let pick = prop::sample::select(subsets(n, dims.s()));
            (Just(n), prop::collection::vec(pick, 0..=max_m))
        })
        .prop_map(move |(n, edges)| Hypergraph::new(n, dims, edges).unwrap())
}

fn tight_instance() -> impl Strategy<Value = (Hypergraph, u64)> {
    (dims_strategy(), 2usize..=9, any::<u64>()).prop_filter_map(
        "no tight hypergraph of that size",
        |(dims, n, seed)| {
            random_tight_hypergraph(n, dims, seed)
                .ok()
                .map(|h| (h, seed))
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn codec_round_trip(h in hypergraph(9, 14)) {
        prop_assert_eq!(Hypergraph::from_json(&h.to_json()).unwrap(), h);
    }

    #[test]
    fn expand_then_project(h in hypergraph(9, 14)) {
        let eh = h.expand();
        prop_assert_eq!(eh.n_edges(), h.n_edges() * h.dims().copies());
        prop_assert_eq!(eh.project(), h.edges().to_vec());
    }

    #[test]
    fn counts_add_over_disjoint_union(
        (a, b) in dims_strategy().prop_flat_map(|d| (hypergraph_with(d, 6, 8), hypergraph_with(d, 6, 8)))
    ) {
        let u = a.disjoint_union(&b);
        prop_assert_eq!(u.n_vertices(), a.n_vertices() + b.n_vertices());
        prop_assert_eq!(u.tightness_counts(), a.tightness_counts() + b.tightness_counts());
    }

    #[test]
    fn pebble_game_matches_brute_force(h in hypergraph(8, 16)) {
        let k = h.dims().coords();
        let (fast, _) = pebble_game(&h.expand(), k);
        let slow = brute_force_sparsity(&h).unwrap();
        prop_assert_eq!(fast.kind, slow.kind);
        if fast.kind == VerdictKind::NotSparse {
            prop_assert!(fast.witness_violates(&h));
        }
        if fast.kind == VerdictKind::Tight {
            let c = h.tightness_counts();
            prop_assert_eq!(c.lhs, c.rhs);
        }
    }

    #[test]
    fn generated_graphs_are_rigid_with_valid_maps((h, _) in tight_instance()) {
        prop_assert!(check_rigidity_combinatorial(&h).is_minimally_rigid());
        prop_assert!(!h.has_repeated_supports());
        let eh = h.expand();
        let maps = map_decomposition(&eh).unwrap();
        prop_assert!(maps.is_valid(&eh));
    }

    #[test]
    fn min_dictionary_size_is_monotone(dims in dims_strategy(), m in 0usize..500) {
        let a = min_dictionary_size(m, dims);
        prop_assert!(a <= min_dictionary_size(m + 1, dims));
        if (dims.copies() * m) % dims.coords() == 0 {
            prop_assert_eq!(a * dims.coords(), dims.copies() * m);
        }
    }

    #[test]
    fn chart_is_projective(
        pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..6),
        scale in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        which in any::<prop::sample::Index>(),
        seed in any::<u64>(),
    ) {
        prop_assume!(pts.iter().all(|p| p.iter().map(|v| v * v).sum::<f64>() > 1e-3));
        let base = chart_from_homogeneous(&pts, seed).unwrap();
        let mut scaled = pts.clone();
        let i = which.index(pts.len());
        scaled[i].iter_mut().for_each(|v| *v *= scale);
        let moved = chart_from_homogeneous(&scaled, seed).unwrap();
        for (a, b) in base.points[i].iter().zip(&moved.points[i]) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn residual_ignores_support_order((h, seed) in tight_instance(), rot in 1usize..4) {
        let fw = random_framework(&h, seed);
        let pin = &fw.pins()[0];
        let rows: Vec<Vec<f64>> = h.edge(0).iter()
            .map(|&v| fw.dictionary().vectors[v].iter().zip(&pin.x).map(|(a, b)| a - b).collect())
            .collect();
        let mut rotated = rows.clone();
        rotated.rotate_left(rot % rows.len());
        let (r0, r1) = (rank_deficiency(&rows), rank_deficiency(&rotated));
        prop_assert!((r0 - r1).abs() <= 1e-14, "{} vs {}", r0, r1);
        prop_assert!(r0 < 1e-12);
    }

    #[test]
    fn rank_survives_affine_maps((h, seed) in tight_instance(), entries in prop::collection::vec(-1.0f64..1.0, 16)) {
        let c = h.dims().coords();
        let mut a = DMatrix::from_fn(c, c, |i, j| entries[(i * c + j) % 16]);
        for i in 0..c {
            a[(i, i)] += 3.0;
        }
        let b: Vec<f64> = entries[..c].to_vec();
        let fw = random_framework(&h, seed);
        let before = numeric_rank(&jacobian(&fw).entries, DEFAULT_REL_THRESHOLD).rank;
        let after = numeric_rank(&jacobian(&fw.map_affine(&a, &b)).entries, DEFAULT_REL_THRESHOLD).rank;
        prop_assert_eq!(before, after);
    }
}
