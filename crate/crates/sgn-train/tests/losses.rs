use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scene_data::{build_synthetic_corpus, CorpusConfig, OracleRecipe};
use sgn_nets::{forward_discriminator, layout_batch_at, Graph, ParamStore, SegNetSpec, SgnModel, Surrogate, SurrogateSpec};
use sgn_train::losses::discriminator_loss_graph;
use sgn_train::*;

const LN2: f64 = std::f64::consts::LN_2;

#[test]
fn analytic_loss_values() {
    assert!((discriminator_loss(0.5, 0.5, 0.5).unwrap() - 3.0 * LN2).abs() < 1e-9);
    assert!((generator_loss(&[0.5; 3], 0.0, 10.0).unwrap() - 3.0 * LN2).abs() < 1e-9);
    assert!((generator_loss(&[0.5; 3], 0.1, 10.0).unwrap() - (3.0 * LN2 + 1.0)).abs() < 1e-9);
    let direct = -((0.9f64).ln() + (0.8f64).ln() + (0.9f64).ln());
    assert!((discriminator_loss(0.9, 0.2, 0.1).unwrap() - direct).abs() < 1e-12);
    assert!((direct - 0.4338).abs() < 1e-4);
    let eps = 1e-9;
    let near_perfect = discriminator_loss(1.0 - eps, eps, eps).unwrap();
    assert!(near_perfect > 0.0 && (near_perfect - 3.0 * eps).abs() < 1e-12);
    assert_eq!(generator_loss(&[0.3, 0.6], 0.25, 0.0).unwrap(), generator_loss(&[0.3, 0.6], 0.0, 0.0).unwrap());
    assert!((feature_distance(&[1.0, 2.0], &[3.0, 2.0]).unwrap() - 2.0).abs() < 1e-15);
    assert_eq!(feature_distance(&[0.4, -1.0], &[0.4, -1.0]).unwrap(), 0.0);
    assert_eq!(feature_distance(&[0.1, 0.7], &[0.5, -0.2]).unwrap(), feature_distance(&[0.5, -0.2], &[0.1, 0.7]).unwrap());
}

#[test]
fn graph_losses_agree_with_scalar_forms() {
    let mut g = Graph::new();
    let t = |g: &mut Graph, v: &[f64]| g.constant(ndarray::Array::from_shape_vec(ndarray::IxDyn(&[v.len(), 1]), v.to_vec()).unwrap());
    let (r, f, m) = (t(&mut g, &[0.9, 0.7]), t(&mut g, &[0.2, 0.4]), t(&mut g, &[0.1, 0.3]));
    let l = discriminator_loss_graph(&mut g, r, f, m);
    let want = (discriminator_loss(0.9, 0.2, 0.1).unwrap() + discriminator_loss(0.7, 0.4, 0.3).unwrap()) / 2.0;
    assert!((g.scalar(l) - want).abs() < 1e-12);
}

fn tiny() -> (Trainer, sgn_train::train::TrainBatch) {
    let split = build_synthetic_corpus(&OracleRecipe::desk(0), &CorpusConfig { resolution: 16, n_train: 6, n_test: 1, seed: 0 }).unwrap();
    let mut cfg = TrainConfig::desk();
    cfg.net = NetConfig { fine_resolution: 16, scale_divisor: 16, noise_channels: 2, coarse_blocks: 1, fine_blocks: 1, ..NetConfig::default() };
    let mut model = SgnModel::new(cfg.model_spec(&split.manifest), 3).unwrap();
    // Wider weights keep gradients far above finite-difference round-off.
    for (name, v) in model.params.clone().iter() {
        if name.ends_with(".w") {
            model.params.insert(name, v * 6.0);
        }
    }
    let enc = PerceptualEncoder::from_segmenter(Surrogate::new(SurrogateSpec::Segmenter(SegNetSpec::new(6)), 1).unwrap(), 0.0).unwrap();
    let t = Trainer::new(model, cfg, split.load_train().unwrap(), Some(enc)).unwrap();
    let batch = t.make_batch(&[0, 2, 5], &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    (t, batch)
}

/// Indices of the three largest-magnitude entries, where finite differences are well conditioned.
fn largest(t: &sgn_nets::Tensor) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..t.len()).collect();
    let v = t.as_slice().unwrap();
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    idx.truncate(3);
    idx
}

fn check(name: &str, analytic: f64, numeric: f64) {
    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
    assert!(rel < 1e-4, "{name}: analytic {analytic} numeric {numeric} rel {rel}");
}

#[test]
fn generator_loss_gradients_match_finite_differences() {
    let (mut t, batch) = tiny();
    let h = 1e-6;
    for (phase, lambda, probes) in [
        (Phase::Joint, 0.0, ["g1.enc1.w", "g1.dec1.mod.beta.w", "g2.res0.c1.w", "g2.out.w"]),
        (Phase::Joint, 10.0, ["g1.res0.c2.w", "g1.dec2.w", "g2.enc0.w", "g2.dec0.mod.gamma.w"]),
        (Phase::Coarse, 10.0, ["g1.enc0.w", "g1.res0.c1.w", "g1.dec0.mod.gamma.w", "g1.out.w"]),
    ] {
        let grads = t.generator_gradients(&batch, phase, lambda).unwrap();
        for name in probes {
            let an = grads.get(name).unwrap_or_else(|| panic!("no gradient for {name}")).clone();
            for i in largest(&an) {
                let mut eval = |delta: f64| {
                    t.model.params.get_mut(name).unwrap().as_slice_mut().unwrap()[i] += delta;
                    let v = t.generator_objective(&batch, phase, lambda).unwrap().g_total;
                    t.model.params.get_mut(name).unwrap().as_slice_mut().unwrap()[i] -= delta;
                    v
                };
                let num = (eval(h) - eval(-h)) / (2.0 * h);
                check(&format!("{name}[{i}] λ={lambda} {phase:?}"), an.as_slice().unwrap()[i], num);
            }
        }
    }
}

#[test]
fn discriminator_loss_gradients_match_finite_differences() {
    let (t, batch) = tiny();
    let spec = t.model.spec.discriminator.clone();
    let side = 8;
    let fake = sgn_nets::graph::avg_pool2(&batch.images.mapv(|v| 0.5 * v - 0.1));
    let real = sgn_nets::graph::avg_pool2(&batch.images);
    let planes = |ls: &[scene_data::SemanticLayout]| layout_batch_at(&ls.iter().collect::<Vec<_>>(), spec.layout_bits, side).unwrap();
    let (s, s_neg) = (planes(&batch.layouts), planes(&batch.neg_layouts));
    let loss = |store: &ParamStore, g: &mut Graph| {
        let (xr, xf) = (g.constant(real.clone()), g.constant(fake.clone()));
        let (a, a_neg) = (g.constant(batch.attributes.clone()), g.constant(batch.neg_attributes.clone()));
        let (sv, snv) = (g.constant(s.clone()), g.constant(s_neg.clone()));
        let dr = forward_discriminator(g, store, &spec, "d_fine.1", xr, a, sv).unwrap();
        let df = forward_discriminator(g, store, &spec, "d_fine.1", xf, a, sv).unwrap();
        let dm = forward_discriminator(g, store, &spec, "d_fine.1", xr, a_neg, snv).unwrap();
        discriminator_loss_graph(g, dr, df, dm)
    };
    let mut g = Graph::new();
    let l = loss(&t.model.params, &mut g);
    let grads = g.backward(l);
    let h = 1e-6;
    for name in ["d_fine.1.img0.w", "d_fine.1.img2.w", "d_fine.1.cond0.w", "d_fine.1.cond3.b", "d_fine.1.fuse.w", "d_fine.1.out.w", "d_fine.1.out.b"] {
        let an = grads.param(name).unwrap_or_else(|| panic!("no gradient for {name}"));
        for i in largest(an) {
            let eval = |delta: f64| {
                let mut st = t.model.params.clone();
                st.get_mut(name).unwrap().as_slice_mut().unwrap()[i] += delta;
                let mut g = Graph::new();
                let l = loss(&st, &mut g);
                g.scalar(l)
            };
            check(&format!("{name}[{i}]"), an.as_slice().unwrap()[i], (eval(h) - eval(-h)) / (2.0 * h));
        }
    }
}
