use eval_harness::*;
use scene_data::{build_synthetic_corpus, CorpusConfig, OracleRecipe, SceneImage, SceneSample};
use sgn_nets::{FitConfig, SgnModel};
use sgn_train::TrainConfig;

fn fixture() -> (scene_data::DatasetSplit, Surrogates) {
    let split = build_synthetic_corpus(&OracleRecipe::desk(1), &CorpusConfig { resolution: 32, n_train: 48, n_test: 16, seed: 4 }).unwrap();
    let train = split.load_train().unwrap();
    let refs: Vec<&SceneSample> = train.iter().map(|s| s.as_ref()).collect();
    let cfg = SurrogateConfig { width: 4, fit: FitConfig { epochs: 2, batch_size: 8, lr: 2e-3, seed: 0, class_balanced: false } };
    let s = Surrogates::train(&refs, split.manifest.num_classes as usize, &cfg).unwrap();
    (split, s)
}

#[test]
fn real_images_score_as_their_own_reference() {
    let (split, surrogates) = fixture();
    let test_owned = split.load_test().unwrap();
    let test: Vec<&SceneSample> = test_owned.iter().map(|s| s.as_ref()).collect();
    let r = evaluate_real(&test, &surrogates).unwrap();
    assert!(r.fid.abs() < 1e-6, "{}", r.fid);
    assert!(r.check_ranges(), "{r:?}");
    assert_eq!(r.generated_count, 16);

    let dir = tempfile::tempdir().unwrap();
    surrogates.save(dir.path()).unwrap();
    let loaded = Surrogates::load(dir.path()).unwrap();
    assert_eq!(evaluate_real(&test, &loaded).unwrap(), r);
}

#[test]
fn missing_surrogate_is_reported_by_name() {
    let dir = tempfile::tempdir().unwrap();
    match Surrogates::load(dir.path()) {
        Err(EvalError::MissingSurrogate { name, .. }) => assert_eq!(name, "embedder"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn model_evaluation_is_seeded_and_in_range() {
    let (split, surrogates) = fixture();
    let test_owned = split.load_test().unwrap();
    let test: Vec<&SceneSample> = test_owned.iter().map(|s| s.as_ref()).collect();
    let mut cfg = TrainConfig::desk();
    cfg.net.fine_resolution = 32;
    let model = SgnModel::new(cfg.model_spec(&split.manifest), 0).unwrap();
    let a = evaluate_model("untrained", &model, &test, &surrogates, 11).unwrap();
    let b = evaluate_model("untrained", &model, &test, &surrogates, 11).unwrap();
    assert_eq!(a, b);
    assert!(a.check_ranges(), "{a:?}");
    assert!(a.fid > 0.0);

    let path = tempfile::tempdir().unwrap();
    let file = path.path().join("m.ckpt");
    model.save(&file).unwrap();
    let c = evaluate_checkpoint(&file, &test, &surrogates, 11).unwrap();
    assert_eq!(c.fid, a.fid);
    assert_eq!(c.checkpoint_hash.as_ref().map(String::len), Some(64));

    let (rho, lum) = controllability(&model, &test[..2], "night", &[0.0, 0.5, 1.0], 0).unwrap();
    assert_eq!(lum.len(), 3);
    assert!((-1.0..=1.0).contains(&rho));
}

#[test]
fn mismatched_counts_are_rejected() {
    let (split, surrogates) = fixture();
    let test_owned = split.load_test().unwrap();
    let test: Vec<&SceneSample> = test_owned.iter().map(|s| s.as_ref()).collect();
    let images: Vec<SceneImage> = test.iter().take(3).map(|s| s.image.clone()).collect();
    assert!(matches!(evaluate_images("x", &images, &test, &surrogates), Err(EvalError::Contract(_))));
}
