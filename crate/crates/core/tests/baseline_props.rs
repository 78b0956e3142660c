mod common;

use cigan_core::baselines::{
    baseline_plan, estimate_transitions, kmeans_fit, knn_affinity, normalized_laplacian, smooth_trajectory,
    spectral_fit, temporal_kmeans_fit, BaselineKind, Clustering,
};
use cigan_core::env::{random_walk, DomainName, DomainSpec, PairRecord, Trajectory};
use cigan_core::grad::SeededRng;
use cigan_core::plan::{shortest_path, WeightedGraph};
use common::{brute_force_cost, exhaustive_inertia};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn inertia_of(points: &[Vec<f64>], c: &Clustering) -> f64 {
    points
        .iter()
        .map(|p| {
            let k = c.assign(p);
            p.iter().zip(&c.centroids[k]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum()
}

#[test]
fn square_corners_split_into_adjacent_pairs() {
    let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    let c = kmeans_fit(&pts, 2, 10, &mut SeededRng::new(0, "sq")).unwrap();
    assert!((c.inertia - exhaustive_inertia(&pts, 2)).abs() < 1e-12);
    assert!((c.inertia - 1.0).abs() < 1e-12);
    let (a, b, d) = (c.assign(&pts[0]), c.assign(&pts[1]), c.assign(&pts[3]));
    assert!(a != d && (a == b || b == d));
}

#[test]
fn tiny_instances_reach_the_exhaustive_optimum() {
    let mut rng = SeededRng::new(7, "tiny");
    let trials = 200;
    let mut hits = 0;
    for _ in 0..trials {
        let n = rng.int_in(3, 10);
        let k = rng.int_in(2, 3.min(n));
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let c = kmeans_fit(&pts, k, 50, &mut rng).unwrap();
        assert!((c.inertia - inertia_of(&pts, &c)).abs() < 1e-9);
        if c.inertia <= exhaustive_inertia(&pts, k) + 1e-9 {
            hits += 1;
        }
    }
    assert!(hits * 100 >= 95 * trials, "{hits}/{trials}");
}

fn zigzag() -> Trajectory {
    Trajectory {
        observations: (0..60)
            .map(|t| vec![t as f64 * 0.02, if t % 2 == 0 { 0.3 } else { -0.3 }])
            .collect(),
    }
}

#[test]
fn smoothing_lowers_inertia_on_a_zigzag() {
    let tr = zigzag();
    let raw = kmeans_fit(&tr.observations, 3, 5, &mut SeededRng::new(0, "z")).unwrap();
    let smooth = temporal_kmeans_fit(std::slice::from_ref(&tr), 3, 5, 5, &mut SeededRng::new(0, "z")).unwrap();
    assert!(smooth.inertia <= raw.inertia);
    assert_eq!(smooth.kind, BaselineKind::TemporalKMeans);

    let unit = temporal_kmeans_fit(std::slice::from_ref(&tr), 3, 1, 5, &mut SeededRng::new(0, "z")).unwrap();
    assert_eq!(unit.centroids, raw.centroids);
    assert_eq!(unit.inertia, raw.inertia);
    assert!(temporal_kmeans_fit(&[tr], 3, 4, 5, &mut SeededRng::new(0, "z")).is_err());
    assert_eq!(smooth_trajectory(&zigzag().observations, 1), zigzag().observations);
}

#[test]
fn spectral_separates_two_blobs() {
    let mut rng = SeededRng::new(3, "blobs");
    let sigma = 0.05;
    let pts: Vec<Vec<f64>> = (0..200)
        .map(|i| {
            let cx = if i < 100 { 0.0 } else { 10.0 * sigma };
            vec![cx + sigma * rng.normal(), sigma * rng.normal()]
        })
        .collect();
    let c = spectral_fit(&pts, 2, 10, 400, &mut rng).unwrap();
    let a = c.assign(&pts[0]);
    let wrong = pts.iter().enumerate().filter(|(i, p)| (c.assign(p) == a) != (*i < 100)).count();
    assert_eq!(wrong, 0);
    // medoids are fitted points
    assert!(c.centroids.iter().all(|m| pts.contains(m)));
}

#[test]
fn laplacian_is_positive_semidefinite() {
    let mut rng = SeededRng::new(5, "psd");
    for _ in 0..5 {
        let pts: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let w = knn_affinity(&pts, 6);
        assert_eq!(w.clone(), w.transpose());
        let l = normalized_laplacian(&w);
        let ev = SymmetricEigen::new(l).eigenvalues;
        assert!(ev.iter().all(|v| *v >= -1e-9), "{ev}");
    }
}

#[test]
fn duplicate_points_share_a_label() {
    let mut rng = SeededRng::new(6, "dup");
    let mut pts: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.normal(), rng.normal()]).collect();
    pts.extend(pts[..20].to_vec());
    for c in [
        kmeans_fit(&pts, 4, 4, &mut rng).unwrap(),
        spectral_fit(&pts, 4, 8, 200, &mut rng).unwrap(),
    ] {
        for i in 0..20 {
            assert_eq!(c.assign(&pts[i]), c.assign(&pts[80 + i]));
            assert!(c.assign(&pts[i]) < c.k);
        }
    }
}

fn open_box() -> DomainSpec {
    DomainSpec {
        name: DomainName::Tunnel,
        bounds: (-1.0, 1.0),
        walls: vec![],
        door: None,
        key_region: None,
        key_scale: 1.0,
    }
}

#[test]
fn open_box_transitions_are_symmetric() {
    let d = open_box();
    let mut rng = SeededRng::new(8, "walk");
    let mut pairs = Vec::new();
    for t in 0..200 {
        let start = vec![rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
        let tr = random_walk(&d, &start, 200, 0.1, &mut rng).unwrap();
        for w in tr.observations.windows(2) {
            pairs.push(PairRecord { o: w[0].clone(), op: w[1].clone(), gap: 1, traj: t });
        }
    }
    let split = Clustering {
        kind: BaselineKind::KMeans,
        k: 2,
        centroids: vec![vec![-0.5, 0.0], vec![0.5, 0.0]],
        inertia: 0.0,
        support: vec![],
    };
    let t = estimate_transitions(&split, &pairs, 0.0).unwrap();
    assert!((t[0][1] - t[1][0]).abs() <= 0.05, "{t:?}");
    for row in &t {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let mut shuffled = pairs.clone();
    rng.shuffle(&mut shuffled);
    assert_eq!(estimate_transitions(&split, &shuffled, 0.02).unwrap(), estimate_transitions(&split, &pairs, 0.02).unwrap());
}

fn random_clustering(k: usize, rng: &mut SeededRng) -> (Clustering, Vec<Vec<f64>>) {
    let centroids: Vec<Vec<f64>> = (0..k).map(|_| vec![rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)]).collect();
    let mut t = vec![vec![0.0; k]; k];
    for row in t.iter_mut() {
        for v in row.iter_mut() {
            if rng.uniform() < 0.4 {
                *v = rng.uniform();
            }
        }
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    let c = Clustering { kind: BaselineKind::KMeans, k, centroids, inertia: 0.0, support: vec![] };
    (c, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn baseline_paths_are_optimal(seed in 0u64..100_000, k in 2usize..=8) {
        let mut rng = SeededRng::new(seed, "bp");
        let (c, t) = random_clustering(k, &mut rng);
        let (s, g) = (rng.index(k), rng.index(k));
        let (start, goal) = (c.centroids[s].clone(), c.centroids[g].clone());
        let w = baseline_plan(&c, &t, &start, &goal).unwrap();
        let graph = WeightedGraph::from_probabilities(&t, 0.0);
        let brute = brute_force_cost(&graph, s, g);
        prop_assert_eq!(w.empty, brute.is_none());
        if !w.empty {
            let path: Vec<usize> = w.latent.iter().map(|v| v[0] as usize).collect();
            let shared = shortest_path(&graph, s, g).unwrap().unwrap();
            if s != g {
                prop_assert_eq!(&path, &shared);
                prop_assert!((graph.path_cost(&path).unwrap() - brute.unwrap()).abs() < 1e-9);
                prop_assert_eq!(w.obs.len(), path.len());
            } else {
                prop_assert_eq!(w.obs.len(), 2);
            }
            prop_assert_eq!(w.obs.first().unwrap(), &start);
            prop_assert_eq!(w.obs.last().unwrap(), &goal);
        }
    }
}
