use lbb_core::acquisition::Strategy;
use lbb_core::scores::bald_scores;
use lbb_core::sim::idx::{encode_images, encode_labels};
use lbb_core::sim::{
    accuracy, load_idx, make_dataset, posterior_predict, run_al_loop, train_model, BlobSpec, DatasetSource, ModelKind,
    ModelSpec, RunConfig,
};

#[test]
fn noiseless_blobs_are_learned_exactly() {
    let ds = make_dataset(&BlobSpec {
        classes: 3,
        dims: 2,
        per_class: 30,
        test_per_class: 50,
        noise: 0.0,
        center_scale: 3.0,
        seed: 21,
        ..BlobSpec::default()
    })
    .unwrap();
    let labeled: Vec<usize> = (0..3).flat_map(|c| [c * 30, c * 30 + 1]).collect();
    let model = train_model(&ds, &labeled, &ModelSpec::default()).unwrap();
    assert!(accuracy(&model, &ds, ds.test()).unwrap() >= 0.99);
}

#[test]
fn mc_dropout_prediction_is_repeatable() {
    let ds = make_dataset(&BlobSpec {
        test_per_class: 10,
        ..BlobSpec::default()
    })
    .unwrap();
    let spec = ModelSpec {
        kind: ModelKind::McDropout,
        members: 6,
        epochs: 40,
        ..ModelSpec::default()
    };
    let model = train_model(&ds, &[0, 1, 2, 100, 101, 102], &spec).unwrap();
    let inputs = ds.gather(ds.pool());
    let a = posterior_predict(&model, &inputs).unwrap();
    assert_eq!(a.members(), 6);
    assert_eq!(a, posterior_predict(&model, &inputs).unwrap());
    assert!(bald_scores(&a).0.values.iter().any(|&v| v > 1e-6));
}

#[test]
fn idx_files_feed_the_loop() {
    let dir = tempfile::tempdir().unwrap();
    // two classes separated by brightness, 4x4 images
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for i in 0..60u32 {
        let class = (i % 2) as u8;
        let level = if class == 0 { 30 } else { 220 };
        pixels.extend((0..16).map(|p| level + ((i * 7 + p) % 20) as u8));
        labels.push(class);
    }
    std::fs::write(dir.path().join("img.idx"), encode_images(4, 4, &pixels)).unwrap();
    std::fs::write(dir.path().join("lab.idx"), encode_labels(&labels)).unwrap();
    let ds = load_idx(dir.path().join("img.idx"), dir.path().join("lab.idx"), Some(50)).unwrap();
    assert_eq!((ds.len(), ds.dims()), (50, 16));
    assert!(ds.features(0).iter().all(|&v| (0.0..=1.0).contains(&v)));

    let cfg = RunConfig {
        dataset: DatasetSource::Idx {
            images: dir.path().join("img.idx"),
            labels: dir.path().join("lab.idx"),
            limit: Some(50),
            classes: 2,
            test_images: None,
            test_labels: None,
            test_limit: None,
            holdout: Some(20),
        },
        model: ModelSpec {
            epochs: 60,
            members: 3,
            ..ModelSpec::default()
        },
        strategy: Strategy::Lbb.into(),
        initial: 4,
        batch: 5,
        budget: 14,
        seeds: vec![3],
    };
    let rec = run_al_loop(&cfg, 3).unwrap();
    assert_eq!(rec.rounds.len(), 3);
    assert!(rec.final_accuracy() >= 0.9);
}

#[test]
fn repeated_pool_groups_have_repeat_size() {
    let ds = make_dataset(&BlobSpec {
        per_class: 10,
        repeat: 3,
        ..BlobSpec::default()
    })
    .unwrap();
    for base in 0..20 {
        let members: Vec<usize> = ds.pool().iter().copied().filter(|&i| ds.group(i) == Some(base)).collect();
        assert_eq!(members.len(), 3);
        assert!(members.iter().all(|&i| ds.labels()[i] == ds.labels()[members[0]]));
    }
}
