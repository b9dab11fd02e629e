mod common;

use std::collections::HashMap;

use oodseg::kmeans::{assign, fit, inertia_of, ClusterModel, KMeansParams};
use oodseg::rng::CounterRng;
use oodseg::tensor_io::FeatureMap;
use proptest::prelude::*;

fn to_map(points: &[Vec<f32>]) -> FeatureMap {
    let dim = points[0].len();
    FeatureMap::new(1, points.len(), dim, points.concat()).unwrap()
}

fn random_points(rng: &mut CounterRng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| (rng.next_f64() * 10.0 - 5.0) as f32)
                .collect()
        })
        .collect()
}

#[test]
fn twelve_points_match_step_by_step_oracle() {
    let mut rng = CounterRng::new(1234);
    let points = random_points(&mut rng, 12, 3);
    let (model, assignment) = fit(&to_map(&points), &KMeansParams::new(3, 7)).unwrap();
    let oracle = common::kmeans(&points, 3, 7, 100, 1e-4);
    assert_eq!(model.inertia(), oracle.inertia);
    let labels: Vec<usize> = assignment.labels().iter().map(|&l| l as usize).collect();
    assert_eq!(labels, oracle.labels);
    for j in 0..3 {
        assert_eq!(model.centroid(j), oracle.centroids[j].as_slice());
    }
}

#[test]
fn many_instances_match_oracle() {
    let mut rng = CounterRng::new(99);
    for case in 0..60 {
        let n = 2 + rng.next_index(80);
        let dim = 1 + rng.next_index(5);
        let k = 1 + rng.next_index(n.min(6));
        // coarse grid values produce duplicates and ties
        let points: Vec<Vec<f32>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.next_index(6) as f32).collect())
            .collect();
        let params = KMeansParams {
            k,
            seed: case,
            max_iter: 50,
            tol: 1e-6,
        };
        let (model, assignment) = fit(&to_map(&points), &params).unwrap();
        let oracle = common::kmeans(&points, k, case, 50, 1e-6);
        assert_eq!(model.inertia(), oracle.inertia, "case {case}");
        let labels: Vec<usize> = assignment.labels().iter().map(|&l| l as usize).collect();
        assert_eq!(labels, oracle.labels, "case {case}");
    }
}

#[test]
fn assign_matches_exhaustive_scan() {
    let mut rng = CounterRng::new(5);
    for _ in 0..20 {
        let dim = 1 + rng.next_index(4);
        let k = 1 + rng.next_index(5);
        let centroids: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..dim).map(|_| rng.next_index(4) as f64).collect())
            .collect();
        let model = ClusterModel::from_centroids(k, dim, centroids.concat()).unwrap();
        let points: Vec<Vec<f32>> = (0..50)
            .map(|_| (0..dim).map(|_| rng.next_index(8) as f32 * 0.5).collect())
            .collect();
        let a = assign(&model, &to_map(&points)).unwrap();
        assert_eq!(
            a.labels(),
            common::nearest_scan(&points, &centroids).as_slice()
        );
    }
}

/// Canonical form of a partition: each point mapped to the first point of
/// its cluster.
fn partition(labels: &[u32]) -> Vec<usize> {
    let mut first = HashMap::new();
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| *first.entry(*l).or_insert(i))
        .collect()
}

fn arb_instance() -> impl Strategy<Value = (Vec<Vec<f32>>, usize, u64)> {
    (2usize..40, 1usize..4).prop_flat_map(|(n, dim)| {
        (
            proptest::collection::vec(proptest::collection::vec(-20i32..20, dim), n),
            1..=n.min(5),
            any::<u64>(),
        )
            .prop_map(|(pts, k, seed)| {
                (
                    pts.into_iter()
                        .map(|p| p.into_iter().map(|v| v as f32 * 0.25).collect())
                        .collect(),
                    k,
                    seed,
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fit_invariants((points, k, seed) in arb_instance()) {
        let map = to_map(&points);
        let (model, a) = fit(&map, &KMeansParams::new(k, seed)).unwrap();

        // nearest-centroid labels
        let cents: Vec<Vec<f64>> = (0..k).map(|j| model.centroid(j).to_vec()).collect();
        let expected = common::nearest_scan(&points, &cents);
        prop_assert_eq!(a.labels(), expected.as_slice());

        // stored inertia reproduces
        let recomputed = inertia_of(&model, &map, &a);
        prop_assert!((recomputed - model.inertia()).abs() <= 1e-9 * model.inertia().max(1e-300));

        // inertia never increases
        for w in model.inertia_history().windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9));
        }

        // no empty clusters unless there are fewer distinct points than k
        let mut distinct = points.clone();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        let counts = (0..k as u32).map(|j| a.labels().iter().filter(|&&l| l == j).count());
        if distinct.len() >= k {
            prop_assert!(!model.degenerate());
            for c in counts {
                prop_assert!(c > 0);
            }
        } else {
            prop_assert!(model.degenerate());
        }
    }

    #[test]
    fn partition_is_invariant_under_pixel_permutation(
        (points, k, seed) in arb_instance(),
        perm_seed in any::<u64>(),
    ) {
        let mut rng = CounterRng::new(perm_seed);
        let mut perm: Vec<usize> = (0..points.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.next_index(i + 1));
        }
        let shuffled: Vec<Vec<f32>> = perm.iter().map(|&i| points[i].clone()).collect();

        let (m1, a1) = fit(&to_map(&points), &KMeansParams::new(k, seed)).unwrap();
        let (m2, a2) = fit(&to_map(&shuffled), &KMeansParams::new(k, seed)).unwrap();
        prop_assert_eq!(m1.inertia(), m2.inertia());
        let unshuffled: Vec<u32> = {
            let mut v = vec![0; points.len()];
            for (pos, &orig) in perm.iter().enumerate() {
                v[orig] = a2.labels()[pos];
            }
            v
        };
        prop_assert_eq!(partition(a1.labels()), partition(&unshuffled));
    }

    #[test]
    fn determinism((points, k, seed) in arb_instance()) {
        let map = to_map(&points);
        let a = fit(&map, &KMeansParams::new(k, seed)).unwrap();
        let b = fit(&map, &KMeansParams::new(k, seed)).unwrap();
        let bits = |m: &ClusterModel| m.centroids().iter().map(|c| c.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a.0), bits(&b.0));
        prop_assert_eq!(a.1, b.1);
    }
}
