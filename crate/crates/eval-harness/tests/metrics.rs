use eval_harness::metrics::COV_RIDGE;
use eval_harness::*;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use scene_data::SemanticLayout;

/// exp(H(marginal) - mean row entropy), computed per split.
fn is_oracle(probs: &Array2<f64>, splits: usize) -> (f64, f64) {
    let n = probs.nrows();
    let ent = |p: &[f64]| -> f64 { p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum() };
    let scores: Vec<f64> = (0..splits)
        .map(|s| {
            let rows: Vec<Vec<f64>> = (s * n / splits..(s + 1) * n / splits).map(|i| probs.row(i).to_vec()).collect();
            let k = rows[0].len();
            let marg: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect();
            let cond = rows.iter().map(|r| ent(r)).sum::<f64>() / rows.len() as f64;
            (ent(&marg) - cond).exp()
        })
        .collect();
    let m = scores.iter().sum::<f64>() / splits as f64;
    let v = scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / splits as f64;
    (m, v.sqrt())
}

fn random_probs(n: usize, k: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Array2::from_shape_fn((n, k), |_| rng.random::<f64>().powi(3) + 1e-3);
    for mut row in p.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    p
}

#[test]
fn inception_score_uniform_rows_is_one() {
    let p = Array2::from_elem((40, 5), 0.2);
    let (m, s) = inception_score(&p, 4).unwrap();
    assert!((m - 1.0).abs() < 1e-12 && s.abs() < 1e-12);
}

#[test]
fn inception_score_balanced_one_hot_is_class_count() {
    let n_classes = 7;
    let p = Array2::from_shape_fn((70, n_classes), |(i, j)| if i % n_classes == j { 1.0 } else { 0.0 });
    let (m, _) = inception_score(&p, 1).unwrap();
    assert!((m - n_classes as f64).abs() < 1e-9, "{m}");
    let (m, s) = inception_score(&p, 10).unwrap();
    assert!((m - n_classes as f64).abs() < 1e-9 && s < 1e-9);
}

#[test]
fn inception_score_matches_entropy_form() {
    for seed in 0..5 {
        let p = random_probs(100, 6, seed);
        for splits in [1, 4, 10] {
            let (m, s) = inception_score(&p, splits).unwrap();
            let (om, os) = is_oracle(&p, splits);
            assert!((m - om).abs() < 1e-10 && (s - os).abs() < 1e-10, "{m} {om} {s} {os}");
        }
    }
}

#[test]
fn inception_score_rejects_non_distributions() {
    let p = array![[0.5, 0.6], [0.5, 0.5]];
    assert!(matches!(inception_score(&p, 1), Err(EvalError::Contract(_))));
    assert!(inception_score(&Array2::from_elem((3, 2), 0.5), 4).is_err());
}

fn gaussian_cloud(n: usize, mean: &[f64], std: &[f64], seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    Array2::from_shape_fn((n, mean.len()), |(_, j)| mean[j] + std[j] * z.sample(&mut rng))
}

#[test]
fn frechet_of_identical_sets_is_zero() {
    let x = gaussian_cloud(200, &[0.3, -1.0, 2.0, 0.0], &[1.0, 0.5, 2.0, 0.1], 3);
    assert!(frechet_distance(&x, &x).unwrap().abs() < 1e-8);
}

#[test]
fn frechet_one_dimensional_unit_shift() {
    let x = gaussian_cloud(500, &[0.0], &[1.3], 1);
    let y = x.mapv(|v| v + 1.0);
    assert!((frechet_distance(&x, &y).unwrap() - 1.0).abs() < 1e-9);
}

/// Full-factorial ±1 design scaled per axis: exact mean and diagonal covariance.
fn factorial(mean: &[f64], scale: &[f64]) -> Array2<f64> {
    let d = mean.len();
    let n = 1 << d;
    Array2::from_shape_fn((n, d), |(i, j)| mean[j] + scale[j] * if i >> j & 1 == 1 { 1.0 } else { -1.0 })
}

#[test]
fn frechet_matches_closed_form_for_diagonal_covariances() {
    let (ma, sa) = ([0.0, 1.0, -2.0], [1.0, 0.5, 2.0]);
    let (mb, sb) = ([0.5, 1.0, 0.0], [0.3, 1.5, 2.0]);
    let a = factorial(&ma, &sa);
    let b = factorial(&mb, &sb);
    // unbiased variance of the ±s design with n = 8 rows
    let var = |s: f64| s * s * 8.0 / 7.0;
    let expected: f64 = (0..3)
        .map(|j| (ma[j] - mb[j]).powi(2) + ((var(sa[j]) + COV_RIDGE).sqrt() - (var(sb[j]) + COV_RIDGE).sqrt()).powi(2))
        .sum();
    assert!((frechet_distance(&a, &b).unwrap() - expected).abs() < 1e-9);
}

#[test]
fn frechet_is_symmetric_and_grows_with_offset() {
    let x = gaussian_cloud(300, &[0.0; 4], &[1.0, 0.7, 1.2, 0.3], 5);
    let base = gaussian_cloud(300, &[0.0; 4], &[1.1, 0.9, 1.0, 0.5], 6);
    let ab = frechet_distance(&x, &base).unwrap();
    let ba = frechet_distance(&base, &x).unwrap();
    assert!((ab - ba).abs() < 1e-8 * ab.max(1.0));
    let mut last = -1.0;
    for k in 0..6 {
        let shifted = base.mapv(|v| v + 0.5 * k as f64);
        let f = frechet_distance(&x, &shifted).unwrap();
        assert!(f > last, "offset {k}: {f} <= {last}");
        last = f;
    }
}

#[test]
fn frechet_rejects_mismatched_dimensions() {
    let a = Array2::<f64>::zeros((10, 3));
    let b = Array2::<f64>::zeros((10, 4));
    assert!(frechet_distance(&a, &b).is_err());
}

#[test]
fn attribute_mse_cases() {
    let t = random_probs(50, 4, 9);
    assert_eq!(attribute_mse(&t, &t).unwrap(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let targets = Array2::from_shape_fn((20_000, 4), |_| rng.random::<f64>());
    let pred = Array2::from_elem((20_000, 4), 0.5);
    let mse = attribute_mse(&pred, &targets).unwrap();
    assert!((mse - 1.0 / 12.0).abs() < 2e-3, "{mse}");
    assert!(attribute_mse(&pred, &Array2::zeros((3, 4))).is_err());
}

#[test]
fn segmentation_accuracy_cases() {
    let layout = SemanticLayout::new(Array2::from_shape_fn((4, 4), |(y, _)| (y / 2) as u8), 3).unwrap();
    let exact = layout.labels().clone();
    assert_eq!(segmentation_accuracy(&[exact.clone()], &[&layout]).unwrap(), 100.0);
    let half = Array2::from_shape_fn((4, 4), |(y, x)| if x < 2 { (y / 2) as u8 } else { 2 });
    assert_eq!(segmentation_accuracy(&[half], &[&layout]).unwrap(), 50.0);
    assert!(segmentation_accuracy(&[Array2::zeros((3, 4))], &[&layout]).is_err());
}

#[test]
fn spearman_monotone_and_ties() {
    assert!((spearman(&[0.0, 0.25, 0.5, 0.75, 1.0], &[5.0, 4.0, 1.0, 0.5, -3.0]).unwrap() + 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 8.0, 27.0]).unwrap() - 1.0).abs() < 1e-12);
    // ranks (1.5, 1.5, 3) vs (1, 2, 3)
    let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12, "{r}");
}

#[test]
fn table_rows_keep_input_order() {
    let row = |label: &str, fid: f64| MetricReport {
        label: label.into(),
        inception_score: 1.5,
        inception_score_std: 0.1,
        fid,
        attribute_mse: 0.02,
        segmentation_accuracy: 80.0,
        generated_count: 4,
        real_count: 4,
        checkpoint_hash: None,
    };
    let rows: Vec<MetricReport> = ablation_variants().iter().enumerate().map(|(i, v)| row(&v.label, i as f64)).collect();
    let table = format_table(&rows);
    let labels: Vec<&str> = table.lines().skip(1).map(|l| l.split(" | ").next().unwrap()).collect();
    assert_eq!(labels, ["SGN", "SGN+RNM", "SGN+PL", "SGN+RNM+PL"]);
    assert_eq!(table.lines().next().unwrap(), TABLE_HEADER);
    let json = serde_json::to_string(&rows).unwrap();
    let back: Vec<MetricReport> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rows);
    assert!(rows.iter().all(MetricReport::check_ranges));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inception_score_is_bounded(seed in 0u64..10_000, n in 4usize..40, k in 2usize..8) {
        let p = random_probs(n, k, seed);
        let (m, s) = inception_score(&p, 2).unwrap();
        prop_assert!(m >= 1.0 - 1e-12 && m <= k as f64 + 1e-9);
        prop_assert!(s >= 0.0);
    }

    #[test]
    fn frechet_is_non_negative_and_symmetric(seed in 0u64..10_000, shift in -2.0f64..2.0) {
        let a = gaussian_cloud(40, &[0.0, 1.0, 0.5], &[1.0, 0.4, 2.0], seed);
        let b = gaussian_cloud(50, &[shift, 0.0, 0.5], &[0.6, 1.0, 1.0], seed + 1);
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-7 * ab.max(1.0));
    }

    #[test]
    fn spearman_is_rank_invariant(xs in prop::collection::vec(-10.0f64..10.0, 3..20)) {
        let ys: Vec<f64> = xs.iter().map(|v| v.powi(3) + 2.0 * v).collect();
        prop_assume!(xs.iter().any(|v| (v - xs[0]).abs() > 1e-9));
        prop_assert!((spearman(&xs, &ys).unwrap() - 1.0).abs() < 1e-9);
    }
}
