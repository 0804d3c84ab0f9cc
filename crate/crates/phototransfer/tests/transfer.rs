use ndarray::{Array2, Array3};
use phototransfer::cg::CgOptions;
use phototransfer::poisson::screened_poisson_with;
use phototransfer::smooth::smooth_with_graph;
use phototransfer::wct::masked_rows;
use phototransfer::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use scene_data::{build_synthetic_corpus, CorpusConfig, OracleRecipe, SceneSample, SemanticLayout};

fn desk_samples(resolution: usize, n: usize, seed: u64) -> Vec<SceneSample> {
    let cfg = CorpusConfig { resolution, n_train: n, n_test: 1, seed };
    let split = build_synthetic_corpus(&OracleRecipe::desk(seed), &cfg).unwrap();
    split.load_train().unwrap().into_iter().map(|s| (*s).clone()).collect()
}

fn max_abs(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn mean_cov(rows: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let (n, c) = rows.dim();
    let mean: Vec<f64> = (0..c).map(|k| rows.column(k).sum() / n as f64).collect();
    let mut cov = Array2::zeros((c, c));
    for r in rows.outer_iter() {
        for i in 0..c {
            for j in 0..c {
                cov[[i, j]] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n as f64 - 1.0);
            }
        }
    }
    (mean, cov)
}

fn correlated_rows(n: usize, mix: [[f64; 3]; 3], shift: [f64; 3], rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut out = Array2::zeros((n, 3));
    for mut row in out.outer_iter_mut() {
        let z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        for i in 0..3 {
            row[i] = shift[i] + (0..3).map(|j| mix[i][j] * z[j]).sum::<f64>();
        }
    }
    out
}

#[test]
fn two_pixel_stats_are_unbiased() {
    let f = Array3::from_shape_vec((1, 2, 1), vec![0.0, 2.0]).unwrap();
    let s = region_stats(&f, &Array2::from_elem((1, 2), true)).unwrap();
    assert_eq!(s.mean[0], 1.0);
    assert_eq!(s.cov[(0, 0)], 2.0);
    assert_eq!(s.count, 2);
}

#[test]
fn single_pixel_region_falls_back_to_mean_shift() {
    let content = Array2::from_shape_vec((1, 3), vec![0.1, 0.2, 0.3]).unwrap();
    let cs = RegionStats::from_rows(&content).unwrap();
    let style = Array2::from_shape_vec((2, 3), vec![0.5, 0.5, 0.5, 0.7, 0.7, 0.7]).unwrap();
    let ss = RegionStats::from_rows(&style).unwrap();
    assert!(cs.is_degenerate());
    let out = wct_region(&content, &cs, &ss).unwrap();
    for k in 0..3 {
        assert!((out[[0, k]] - 0.6).abs() < 1e-12);
    }
}

#[test]
fn scalar_whitening_coloring() {
    // Four samples of ±√(3/4) have sample mean 0 and unbiased variance 1.
    let k = (0.75f64).sqrt();
    let content = Array2::from_shape_vec((4, 1), vec![-k, k, -k, k]).unwrap();
    let style = Array2::from_shape_vec((4, 1), vec![5.0 - 2.0 * k, 5.0 + 2.0 * k, 5.0 - 2.0 * k, 5.0 + 2.0 * k]).unwrap();
    let cs = RegionStats::from_rows(&content).unwrap();
    let ss = RegionStats::from_rows(&style).unwrap();
    let out = wct_region(&Array2::from_elem((1, 1), 1.0), &cs, &ss).unwrap();
    assert!((out[[0, 0]] - 7.0).abs() < 1e-9, "{}", out[[0, 0]]);
}

#[test]
fn matching_stats_give_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows = correlated_rows(300, [[0.2, 0.05, 0.0], [0.0, 0.1, 0.03], [0.02, 0.0, 0.15]], [0.1, -0.2, 0.3], &mut rng);
    let s = RegionStats::from_rows(&rows).unwrap();
    let out = wct_region(&rows, &s, &s).unwrap();
    let d = out.iter().zip(&rows).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d < 1e-10, "{d}");
}

#[test]
fn wct_matches_style_moments_on_random_regions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mut mix = || -> [[f64; 3]; 3] { std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-0.3..0.3))) };
        let (mc, ms) = (mix(), mix());
        let content = correlated_rows(500, mc, [0.0, 0.1, -0.1], &mut rng);
        let style = correlated_rows(500, ms, [0.3, -0.2, 0.05], &mut rng);
        let cs = RegionStats::from_rows(&content).unwrap();
        let ss = RegionStats::from_rows(&style).unwrap();
        let out = wct_region(&content, &cs, &ss).unwrap();
        let (mean, cov) = mean_cov(&out);
        for i in 0..3 {
            assert!((mean[i] - ss.mean[i]).abs() < 1e-4);
            for j in 0..3 {
                assert!((cov[[i, j]] - ss.cov[(i, j)]).abs() < 1e-4, "cov[{i}{j}] {} vs {}", cov[[i, j]], ss.cov[(i, j)]);
            }
        }
    }
}

#[test]
fn stylize_same_image_is_identity() {
    let s = &desk_samples(64, 2, 3)[0];
    let out = stylize(&s.image, &s.image, &s.layout, &s.layout, true).unwrap();
    assert!(max_abs(&out, &s.image) < 1e-9);
}

#[test]
fn stylize_matches_per_region_style_covariance() {
    let samples = desk_samples(64, 2, 4);
    let (c, s) = (&samples[0], &samples[1]);
    let out = stylize(&c.image, &s.image, &c.layout, &s.layout, true).unwrap();
    let clamped = out.iter().filter(|v| v.abs() >= 1.0).count();
    assert_eq!(clamped, 0, "audit assumes no clamping");
    let style_hist = s.layout.histogram();
    let mut audited = 0;
    for (label, &n) in c.layout.histogram().iter().enumerate() {
        if n < 6 || style_hist[label] < 6 {
            continue;
        }
        let got = RegionStats::from_rows(&masked_rows(&out, &c.layout.mask(label as u8)).unwrap()).unwrap();
        let want = region_stats(&s.image, &s.layout.mask(label as u8)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((got.cov[(i, j)] - want.cov[(i, j)]).abs() < 1e-3, "label {label}");
            }
        }
        audited += 1;
    }
    assert!(audited >= 2);
}

#[test]
fn sky_only_style_shift_leaves_ground_alone() {
    let s = desk_samples(64, 8, 6).into_iter().find(|s| {
        let h = s.layout.histogram();
        h[0] > 200 && h[0] < 3000
    }).expect("sample with sky and ground");
    let mut style = s.image.clone();
    for ((y, x), &l) in s.layout.labels().indexed_iter() {
        if l == 0 {
            style[[y, x, 0]] = (style[[y, x, 0]] + 0.5).min(1.0);
            style[[y, x, 2]] -= 0.3;
        }
    }
    let out = stylize(&s.image, &style, &s.layout, &s.layout, true).unwrap();
    let region_mean = |img: &Array3<f64>, sky: bool| -> f64 {
        let (mut sum, mut n) = (0.0, 0.0);
        for ((y, x), &l) in s.layout.labels().indexed_iter() {
            if (l == 0) == sky {
                sum += (0..3).map(|k| (img[[y, x, k]] + 1.0) / 2.0).sum::<f64>();
                n += 3.0;
            }
        }
        sum / n
    };
    let (before, after) = (region_mean(&s.image, false), region_mean(&out, false));
    assert!((after - before).abs() <= 0.02 * before, "{before} {after}");
    assert!((region_mean(&out, true) - region_mean(&s.image, true)).abs() > 0.02);
}

#[test]
fn smoothing_alpha_zero_is_exact() {
    let s = &desk_samples(32, 2, 1)[0];
    assert_eq!(smooth_affinity(&s.image, &s.image, 0.0, 0.1).unwrap(), s.image);
}

#[test]
fn smoothing_keeps_constants() {
    let s = &desk_samples(48, 2, 2)[0];
    let y = Array3::from_elem(s.image.dim(), 0.37);
    for alpha in [0.3, 0.6, 0.9, 0.99] {
        let r = smooth_affinity(&y, &s.image, alpha, 0.1).unwrap();
        assert!(r.iter().all(|v| (v - 0.37).abs() < 1e-6), "alpha {alpha}");
    }
}

#[test]
fn smoothing_residual_and_mean_at_128() {
    let samples = desk_samples(128, 2, 7);
    let (c, s) = (&samples[0], &samples[1]);
    let y = stylize(&c.image, &s.image, &c.layout, &s.layout, true).unwrap();
    let graph = AffinityGraph::from_guide(&c.image, 0.1).unwrap();
    for alpha in [0.3, 0.6, 0.9] {
        let (r, _) = smooth_with_graph(&y, &graph, alpha, CgOptions::default()).unwrap();
        assert!(smoothing_residual(&r, &y, &graph, alpha) < 1e-6);
        for k in 0..3 {
            let mean = |img: &Array3<f64>| img.index_axis(ndarray::Axis(2), k).mapv(|v| (v + 1.0) / 2.0).mean().unwrap();
            let (a, b) = (mean(&y), mean(&r));
            assert!((a - b).abs() <= 0.01 * a, "alpha {alpha} channel {k}: {a} {b}");
        }
    }
}

#[test]
fn solver_reports_non_convergence() {
    let s = &desk_samples(32, 2, 9)[0];
    let graph = AffinityGraph::from_guide(&s.image, 0.1).unwrap();
    let y = s.image.mapv(|v| -v);
    let err = smooth_with_graph(&y, &graph, 0.99, CgOptions { max_iters: 1, tol: 1e-12 }).unwrap_err();
    assert!(matches!(err, TransferError::NoConvergence { iterations: 1, .. }), "{err}");
}

/// Separable Gaussian blur with per-axis in-bounds normalisation.
fn gaussian_oracle(t: &Array3<f64>, sigma: f64) -> Array3<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let g = |d: isize| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp();
    let (h, w, c) = t.dim();
    let pass = |src: &Array3<f64>, vertical: bool| {
        Array3::from_shape_fn((h, w, c), |(y, x, k)| {
            let (mut num, mut den) = (0.0, 0.0);
            for d in -r..=r {
                let (yy, xx) = if vertical { (y as isize + d, x as isize) } else { (y as isize, x as isize + d) };
                if yy >= 0 && xx >= 0 && yy < h as isize && xx < w as isize {
                    num += g(d) * src[[yy as usize, xx as usize, k]];
                    den += g(d);
                }
            }
            num / den
        })
    };
    pass(&pass(t, false), true)
}

#[test]
fn bilateral_with_constant_guide_is_gaussian_blur() {
    let s = &desk_samples(40, 2, 12)[0];
    let guide = Array3::from_elem(s.image.dim(), 0.2);
    for sigma in [0.8, 1.5, 2.5] {
        let got = cross_bilateral(&s.image, &guide, sigma, 0.1).unwrap();
        let want = gaussian_oracle(&s.image, sigma);
        assert!(max_abs(&got, &want) < 1e-6, "sigma {sigma}");
    }
}

#[test]
fn bilateral_does_not_bleed_across_guide_edge() {
    let guide = Array3::from_shape_fn((12, 12, 3), |(_, x, _)| if x < 6 { -0.5 } else { 0.5 });
    let target = Array3::from_shape_fn((12, 12, 3), |(y, x, _)| if x < 6 { -1.0 + 0.01 * y as f64 } else { 1.0 });
    let out = cross_bilateral(&target, &guide, 3.0, 1e-3).unwrap();
    for y in 0..12 {
        for x in 0..12 {
            for k in 0..3 {
                if x < 6 {
                    assert!(out[[y, x, k]] < -0.85);
                } else {
                    assert_eq!(out[[y, x, k]], 1.0);
                }
            }
        }
    }
}

#[test]
fn poisson_same_input_is_fixed_point() {
    let s = &desk_samples(32, 2, 13)[0];
    assert_eq!(screened_poisson(&s.image, &s.image, 5.0).unwrap(), s.image);
}

#[test]
fn poisson_contracts_at_128() {
    let samples = desk_samples(128, 2, 14);
    let (u, s) = (&samples[0].image, &samples[1].image);
    let (f, _) = screened_poisson_with(s, u, 5.0, CgOptions::default()).unwrap();
    assert!(poisson_residual(&f, s, u, 5.0) < 1e-6);
    let e = poisson_energy(&f, s, u, 5.0);
    assert!(e <= poisson_energy(s, s, u, 5.0));
    assert!(e <= poisson_energy(u, s, u, 5.0));
    let stiff = screened_poisson(s, u, 1e6).unwrap();
    assert!(max_abs(&stiff, s) < 1e-3);
}

#[test]
fn poisson_output_is_a_minimiser() {
    let samples = desk_samples(24, 2, 15);
    let (u, s) = (&samples[0].image, &samples[1].image);
    let (f, _) = screened_poisson_with(s, u, 2.0, CgOptions { max_iters: 10_000, tol: 1e-12 }).unwrap();
    let e = poisson_energy(&f, s, u, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let eta = Array3::from_shape_fn(f.dim(), |_| StandardNormal.sample(&mut rng));
        let norm = eta.mapv(|v: f64| v * v).sum().sqrt();
        let g = &f + &(eta * (1e-3 / norm));
        assert!(poisson_energy(&g, s, u, 2.0) >= e - 1e-12);
    }
}

#[test]
fn poisson_is_idempotent_on_its_solution() {
    let u = &desk_samples(48, 2, 16)[0].image;
    // Any offset of u has the same gradients, so it solves its own problem.
    let s = u.mapv(|v| v + 0.1);
    let f = screened_poisson(&s, u, 5.0).unwrap();
    assert!(max_abs(&f, &s) < 1e-6);
    let g = screened_poisson(&f, u, 5.0).unwrap();
    assert!(max_abs(&g, &f) < 1e-6);
}

#[test]
fn pipeline_with_own_style_is_near_identity() {
    for (i, s) in desk_samples(128, 3, 21).iter().enumerate() {
        let r = transfer_pipeline(&s.image, &s.layout, &s.image, &s.layout, &TransferConfig::default()).unwrap();
        let d = max_abs(&r.output, &s.image);
        assert!(d < 0.02, "sample {i}: {d}");
    }
}

#[test]
fn pipeline_is_deterministic_and_ordered() {
    let samples = desk_samples(64, 2, 22);
    let (c, s) = (&samples[0], &samples[1]);
    let cfg = TransferConfig { use_bilateral: true, ..TransferConfig::default() };
    let a = transfer_pipeline(&c.image, &c.layout, &s.image, &s.layout, &cfg).unwrap();
    let b = transfer_pipeline(&c.image, &c.layout, &s.image, &s.layout, &cfg).unwrap();
    assert_eq!(a.output, b.output);
    let order: Vec<Stage> = a.stages.iter().map(|s| s.stage).collect();
    assert_eq!(order, vec![Stage::Stylize, Stage::Smooth, Stage::Bilateral, Stage::Poisson]);
    let row = a.timing_row(0.1);
    assert_eq!((row.width, row.height), (64, 64));
    assert!((row.total() - row.generator - row.style_transfer - row.post_processing).abs() < 1e-12);
    assert!(row.to_string().starts_with("64 x 64 | 0.10 |"));
}

#[test]
fn pipeline_rejects_invalid_config() {
    let s = &desk_samples(16, 2, 23)[0];
    for cfg in [
        TransferConfig { alpha: 1.0, ..Default::default() },
        TransferConfig { lambda_f: 0.0, ..Default::default() },
        TransferConfig { sigma_spatial: 0.0, ..Default::default() },
    ] {
        assert!(matches!(
            transfer_pipeline(&s.image, &s.layout, &s.image, &s.layout, &cfg),
            Err(TransferError::Config(_))
        ));
    }
}

#[test]
fn disjoint_labels_fall_back_to_global_stats() {
    let content = Array3::from_shape_fn((8, 8, 3), |(y, x, k)| ((y + x + k) % 5) as f64 * 0.1 - 0.2);
    let style = Array3::from_shape_fn((8, 8, 3), |(y, x, k)| ((y * x + k) % 7) as f64 * 0.05);
    let cl = SemanticLayout::filled(8, 8, 1, 6).unwrap();
    let sl = SemanticLayout::filled(8, 8, 2, 6).unwrap();
    let a = stylize(&content, &style, &cl, &sl, true).unwrap();
    let b = stylize(&content, &style, &cl, &sl, false).unwrap();
    assert!(max_abs(&a, &b) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stats_ignore_pixel_order(values in prop::collection::vec(-1.0f64..1.0, 6..60), seed in any::<u64>()) {
        let n = values.len() / 3;
        let rows = Array2::from_shape_vec((n, 3), values[..n * 3].to_vec()).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let shuffled = Array2::from_shape_fn((n, 3), |(i, k)| rows[[order[i], k]]);
        let a = RegionStats::from_rows(&rows).unwrap();
        let b = RegionStats::from_rows(&shuffled).unwrap();
        prop_assert!((&a.mean - &b.mean).amax() < 1e-12);
        prop_assert!((&a.cov - &b.cov).amax() < 1e-12);
    }

    #[test]
    fn bilateral_keeps_constant_targets(v in -1.0f64..1.0, ss in 0.5f64..3.0, sr in 0.0f64..0.5) {
        let t = Array3::from_elem((9, 7, 3), v);
        let g = Array3::from_shape_fn((9, 7, 3), |(y, x, k)| ((y * 3 + x + k) % 4) as f64 * 0.2);
        let out = cross_bilateral(&t, &g, ss, sr).unwrap();
        prop_assert!(out.iter().all(|o| (o - v).abs() < 1e-12));
    }
}
