use conegibbs::geometry::{CubeIndex, PartitionSpec, Region};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = PartitionSpec> {
    (1usize..=3, 0.1f64..2.0, 0.2f64..=5.0).prop_map(|(d, delta, ratio)| PartitionSpec::new(d, delta, ratio * delta).unwrap())
}

proptest! {
    #[test]
    fn every_point_lies_in_exactly_its_cube(spec in spec_strategy(), raw in prop::collection::vec(-50.0f64..50.0, 3)) {
        let x = &raw[..spec.dim()];
        let k = spec.cube_index(x).unwrap();
        prop_assert!(spec.cube_contains(&k, x));
        // the only candidates for a second owner are the adjacent cubes
        let adj = Region::block(&vec![-1; spec.dim()], &vec![1; spec.dim()]);
        for o in adj.iter().filter(|o| o.iter().any(|&c| c != 0)) {
            prop_assert!(!spec.cube_contains(&k.offset(o), x));
        }
    }

    #[test]
    fn neighbour_relation_is_symmetric(spec in spec_strategy(), k in prop::collection::vec(-20i64..20, 3)) {
        let k = CubeIndex::new(&k[..spec.dim()]);
        let nb = spec.neighbor_cubes(&k);
        prop_assert!(!nb.contains(&k));
        for j in nb.iter() {
            prop_assert!(spec.neighbor_cubes(j).contains(&k));
        }
    }

    #[test]
    fn neighbour_count_within_interaction_parameter(spec in spec_strategy()) {
        let n = spec.neighbor_cubes(&CubeIndex::origin(spec.dim())).len() as f64;
        prop_assert!(n <= spec.interaction_parameter(), "{} neighbours > m = {}", n, spec.interaction_parameter());
    }

    #[test]
    fn halo_is_disjoint_and_covers_neighbours(spec in spec_strategy(), lo in prop::collection::vec(-3i64..3, 3), ext in prop::collection::vec(0i64..3, 3)) {
        let d = spec.dim();
        let hi: Vec<i64> = lo.iter().zip(&ext).map(|(a, e)| a + e).collect();
        let lam = Region::block(&lo[..d], &hi[..d]);
        let halo = spec.halo(&lam);
        prop_assert!(halo.is_disjoint(&lam));
        for k in lam.iter() {
            for j in spec.neighbor_cubes(k).iter() {
                prop_assert!(lam.contains(j) || halo.contains(j));
            }
        }
        for j in halo.iter() {
            prop_assert!(lam.iter().any(|k| spec.within_range(k, j)));
        }
    }
}

#[test]
fn interaction_parameter_dominates_neighbour_count_on_a_grid() {
    for d in 1..=3 {
        for i in 1..=50 {
            let ratio = i as f64 / 10.0;
            let spec = PartitionSpec::new(d, 1.0, ratio).unwrap();
            let n = spec.neighbor_cubes(&CubeIndex::origin(d)).len() as f64;
            assert!(n <= spec.interaction_parameter(), "d={d} R/delta={ratio}: {n}");
        }
    }
}
