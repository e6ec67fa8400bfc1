use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use topicseg::clustering::{
    core_distances, euclidean, hdbscan_points, mutual_reachability, mutual_reachability_mst,
    HdbscanParams,
};
use topicseg::eval::{adjusted_rand_index, ContingencyTable};

fn keys(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("k{i}")).collect()
}

fn blobs(rng: &mut ChaCha8Rng, per: usize, sep: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for (b, cx) in [0.0, sep].iter().enumerate() {
        for _ in 0..per {
            pts.push(vec![cx + unit.sample(rng), unit.sample(rng), unit.sample(rng)]);
            truth.push(b);
        }
    }
    (pts, truth)
}

/// Labels with noise mapped to a fresh id so the contingency table keeps it.
fn flat(labels: &[Option<usize>]) -> Vec<i64> {
    labels.iter().map(|l| l.map_or(-1, |c| c as i64)).collect()
}

#[test]
fn separated_blobs_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (pts, truth) = blobs(&mut rng, 50, 20.0);
    let r = hdbscan_points(keys(100), &pts, &HdbscanParams::new(10)).unwrap();
    assert_eq!(r.cluster_count, 2);
    let t = ContingencyTable::from_labels(&flat(&r.labels), &truth).unwrap();
    assert_eq!(adjusted_rand_index(&t).unwrap(), 1.0);
    assert!(r.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn fewer_points_than_min_cluster_size_is_all_noise() {
    let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 0.0]).collect();
    let r = hdbscan_points(keys(5), &pts, &HdbscanParams::new(200)).unwrap();
    assert_eq!(r.cluster_count, 0);
    assert_eq!(r.noise_count(), 5);
}

#[test]
fn uniform_cloud_never_splits_in_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let pts: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        let r = hdbscan_points(keys(100), &pts, &HdbscanParams::new(90)).unwrap();
        assert!(r.cluster_count <= 1);
    }
}

#[test]
fn partition_survives_row_shuffles() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let (mut pts, _) = blobs(&mut rng, 40, 6.0);
    // a third, looser group and a few stragglers
    for _ in 0..30 {
        pts.push(vec![rng.random_range(-3.0..3.0), 12.0 + rng.random_range(-2.0..2.0), 0.0]);
    }
    let params = HdbscanParams::new(8).with_min_samples(5);
    let base = hdbscan_points(keys(pts.len()), &pts, &params).unwrap();
    let base_flat = flat(&base.labels);
    let mut order: Vec<usize> = (0..pts.len()).collect();
    for _ in 0..100 {
        order.shuffle(&mut rng);
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| pts[i].clone()).collect();
        let r = hdbscan_points(keys(pts.len()), &shuffled, &params).unwrap();
        let mut back = vec![0i64; pts.len()];
        for (pos, &orig) in order.iter().enumerate() {
            back[orig] = flat(&r.labels)[pos];
        }
        // same partition: identical noise set and a bijection between ids
        let mut map = std::collections::HashMap::new();
        for (a, b) in base_flat.iter().zip(&back) {
            assert_eq!(*a == -1, *b == -1);
            assert_eq!(*map.entry(*a).or_insert(*b), *b);
        }
        assert_eq!(r.cluster_count, base.cluster_count);
    }
}

fn prufer_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    let total = n.pow((n - 2) as u32);
    for code in 0..total {
        let mut seq = Vec::with_capacity(n - 2);
        let mut c = code;
        for _ in 0..n - 2 {
            seq.push(c % n);
            c /= n;
        }
        let mut degree = vec![1usize; n];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        for &s in &seq {
            let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
            edges.push((leaf, s));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
        edges.push((rest[0], rest[1]));
        out.push(edges);
    }
    out
}

#[test]
fn mst_weight_matches_all_spanning_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 3..=7 {
        let trees = prufer_trees(n);
        for _ in 0..3 {
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)])
                .collect();
            let core = core_distances(&pts, 2);
            let mst: f64 = mutual_reachability_mst(&pts, &core).iter().map(|e| e.weight).sum();
            let best = trees
                .iter()
                .map(|t| t.iter().map(|&(a, b)| mutual_reachability(&pts, &core, a, b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!((mst - best).abs() < 1e-9, "n={n}: {mst} vs {best}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reachability_dominates_euclidean(
        pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 3..25),
        k in 1usize..4,
    ) {
        let core = core_distances(&pts, k);
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                prop_assert!(mutual_reachability(&pts, &core, i, j) >= euclidean(&pts[i], &pts[j]));
            }
        }
    }

    #[test]
    fn clusters_meet_min_size(
        pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 10..80),
        mcs in 2usize..12,
    ) {
        let r = hdbscan_points(keys(pts.len()), &pts, &HdbscanParams::new(mcs)).unwrap();
        for c in 0..r.cluster_count {
            prop_assert!(r.labels.iter().filter(|l| **l == Some(c)).count() >= mcs);
        }
    }
}
