use chainfis::fcm::{
    compute_objective, dataset_from_rows, run_fcm, update_centers, update_memberships, ClusterSet,
    DataPoint, FcmConfig, MembershipMatrix,
};
use proptest::prelude::*;

fn points(rows: &[Vec<f64>]) -> Vec<DataPoint<f64>> {
    dataset_from_rows(rows).unwrap()
}

/// Membership from the ratio form `1 / Σ_j (d_ik / d_jk)^(2/(m−1))`, written
/// without sharing code with the library.
fn oracle_memberships(data: &[Vec<f64>], centers: &[Vec<f64>], m: f64) -> Vec<Vec<f64>> {
    let dist = |x: &[f64], v: &[f64]| -> f64 {
        x.iter()
            .zip(v)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut u = vec![vec![0.0; data.len()]; centers.len()];
    for (k, x) in data.iter().enumerate() {
        for i in 0..centers.len() {
            let di = dist(x, &centers[i]);
            let s: f64 = centers
                .iter()
                .map(|vj| (di / dist(x, vj)).powf(2.0 / (m - 1.0)))
                .sum();
            u[i][k] = 1.0 / s;
        }
    }
    u
}

#[test]
fn two_cluster_line() {
    let data = points(&[vec![0.0], vec![1.0], vec![9.0], vec![10.0]]);
    let result = run_fcm(&data, 2, &FcmConfig::default()).unwrap();
    let mut centers: Vec<f64> = result.clusters.centers.iter().map(|c| c[0]).collect();
    centers.sort_by(f64::total_cmp);
    assert!((centers[0] - 0.5).abs() < 0.1 && (centers[1] - 9.5).abs() < 0.1);
    assert!(result.trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    for k in 0..4 {
        let s: f64 = result.memberships.column(k).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}

#[test]
fn coincident_point_gets_crisp_membership() {
    let data = points(&[vec![0.0, 0.0], vec![5.0, 5.0]]);
    let clusters = ClusterSet::new(vec![vec![0.0, 0.0], vec![5.0, 5.0]], 2.0).unwrap();
    let u = update_memberships(&data, &clusters).unwrap();
    assert_eq!((u.get(0, 0), u.get(1, 0)), (1.0, 0.0));
    assert_eq!((u.get(0, 1), u.get(1, 1)), (0.0, 1.0));
}

#[test]
fn objective_matches_brute_force() {
    let rows = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]];
    let data = points(&rows);
    let u =
        MembershipMatrix::<f64>::from_rows(vec![vec![0.2, 0.5, 0.9], vec![0.8, 0.5, 0.1]]).unwrap();
    let clusters = ClusterSet::new(vec![vec![1.0, 1.0], vec![3.0, 0.0]], 2.0).unwrap();
    let mut expected = 0.0;
    for (i, v) in [[1.0, 1.0], [3.0, 0.0]].iter().enumerate() {
        for (k, x) in rows.iter().enumerate() {
            let d2 = (x[0] - v[0]).powi(2) + (x[1] - v[1]).powi(2);
            expected += u.get(i, k).powi(2) * d2;
        }
    }
    let j = compute_objective(&data, &u, &clusters).unwrap();
    assert!((j - expected).abs() < 1e-12);
}

fn dataset_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4).prop_flat_map(|dim| {
        prop::collection::vec(prop::collection::vec(-50.0f64..50.0, dim), 4..25)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn centers_are_weighted_means(rows in dataset_strategy(), seed in any::<u64>(), m in 1.2f64..3.5) {
        let data = points(&rows);
        let u = MembershipMatrix::<f64>::random(3, rows.len(), seed);
        let clusters = update_centers(&data, &u, m).unwrap();
        for i in 0..3 {
            let w: Vec<f64> = (0..rows.len()).map(|k| u.get(i, k).powf(m)).collect();
            let total: f64 = w.iter().sum();
            for d in 0..rows[0].len() {
                let mean = rows.iter().zip(&w).map(|(x, wk)| wk * x[d]).sum::<f64>() / total;
                prop_assert!((clusters.centers[i][d] - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
            }
        }
    }

    #[test]
    fn memberships_match_ratio_form(rows in dataset_strategy(), m in 1.2f64..3.5) {
        let dim = rows[0].len();
        let centers: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..dim).map(|d| 100.0 + 7.0 * i as f64 + d as f64).collect())
            .collect();
        let data = points(&rows);
        let clusters = ClusterSet::new(centers.clone(), m).unwrap();
        let u = update_memberships(&data, &clusters).unwrap();
        let oracle = oracle_memberships(&rows, &centers, m);
        for (i, row) in oracle.iter().enumerate() {
            for (k, &expected) in row.iter().enumerate() {
                prop_assert!((u.get(i, k) - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn run_is_monotone_and_normalized(rows in dataset_strategy(), seed in any::<u64>()) {
        let data = points(&rows);
        let config = FcmConfig { seed, ..FcmConfig::default() };
        let result = run_fcm(&data, 2, &config).unwrap();
        prop_assert!(result.trace.windows(2).all(|w| w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs())));
        for k in 0..rows.len() {
            let col = result.memberships.column(k);
            prop_assert!(col.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_under_seed(rows in dataset_strategy(), seed in any::<u64>()) {
        let data = points(&rows);
        let config = FcmConfig { seed, ..FcmConfig::default() };
        let a = run_fcm(&data, 2, &config).unwrap();
        let b = run_fcm(&data, 2, &config).unwrap();
        prop_assert_eq!(a.clusters, b.clusters);
        prop_assert_eq!(a.trace, b.trace);
    }
}

#[test]
fn single_precision_runs() {
    let data = dataset_from_rows(&[vec![0.0f32], vec![1.0], vec![9.0], vec![10.0]]).unwrap();
    let result = run_fcm(&data, 2, &FcmConfig::<f32>::default()).unwrap();
    let mut centers: Vec<f32> = result.clusters.centers.iter().map(|c| c[0]).collect();
    centers.sort_by(f32::total_cmp);
    assert!((centers[0] - 0.5).abs() < 0.1 && (centers[1] - 9.5).abs() < 0.1);
}
