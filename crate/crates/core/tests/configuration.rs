mod common;

use conegibbs::configuration::{Configuration, MassMode};
use conegibbs::geometry::{PartitionSpec, Region};
use conegibbs::rng::StreamSeed;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn masses_are_additive_over_disjoint_regions(seed in any::<u64>(), n in 0usize..60, d in 1usize..=2) {
        let spec = PartitionSpec::new(d, 0.7, 1.0).unwrap();
        let window = Region::block(&vec![-2; d], &vec![2; d]);
        let eta = common::random_configuration(&spec, &window, n, false, &mut StreamSeed::new(seed).rng());
        let (a, b): (Vec<_>, Vec<_>) = window.iter().cloned().partition(|k| k.iter().sum::<i64>() % 2 == 0);
        let (a, b): (Region, Region) = (a.into_iter().collect(), b.into_iter().collect());
        let tv = eta.tv_mass(&window).unwrap();
        let split = eta.tv_mass(&a).unwrap() + eta.tv_mass(&b).unwrap();
        prop_assert!((tv - split).abs() <= 1e-12 * tv.max(1.0));
        let v = eta.vector_mass(&window).unwrap();
        let va = eta.vector_mass(&a).unwrap();
        let vb = eta.vector_mass(&b).unwrap();
        for i in 0..d {
            prop_assert!((v[i] - va[i] - vb[i]).abs() <= 1e-12 * tv.max(1.0));
        }
        prop_assert_eq!(eta.count_in(&a) + eta.count_in(&b), eta.len());
        prop_assert!(eta.mass(&window, MassMode::VectorNorm).unwrap() <= tv * (1.0 + 1e-12));
    }

    #[test]
    fn text_round_trip_is_exact(seed in any::<u64>(), n in 0usize..40, d in 1usize..=3) {
        let spec = PartitionSpec::new(d, 0.3, 0.8).unwrap();
        let window = Region::block(&vec![-1; d], &vec![1; d]);
        let eta = common::random_configuration(&spec, &window, n, false, &mut StreamSeed::new(seed).rng());
        let back = Configuration::from_text(&eta.to_text()).unwrap();
        prop_assert_eq!(back, eta);
    }

    #[test]
    fn glue_and_outside_partition_atoms(seed in any::<u64>(), n in 0usize..40) {
        let spec = PartitionSpec::new(1, 0.5, 0.5).unwrap();
        let window = Region::interval(-4, 4);
        let lam = Region::interval(-1, 1);
        let mut rng = StreamSeed::new(seed).rng();
        let xi = common::random_configuration(&spec, &window, n, false, &mut rng);
        let eta = common::random_configuration(&spec, &lam, n / 2, false, &mut rng);
        let glued = xi.glue(&eta);
        prop_assert_eq!(glued.len(), eta.len() + xi.outside(&lam).len());
        prop_assert_eq!(glued.restrict(&lam), eta.restrict(&lam));
        prop_assert_eq!(glued.outside(&lam), xi.outside(&lam));
    }
}
