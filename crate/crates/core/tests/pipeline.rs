//! Dataset generation, persistence, inference and evaluation chained
//! together the way the command line uses them.

use wreathe::eval::{
    batch_evaluate, item_stem, make_dataset, write_dataset, DatasetConfig, ScaledShape,
};
use wreathe::inference::{most_visited, run_chains, ChainConfig, Model};
use wreathe::io::{
    read_png, read_samples, read_shape_file, write_samples, RunConfig, RunManifest, SampleRecord,
};
use wreathe::likelihood::binarize;
use wreathe::priors::PriorConfig;
use wreathe::renderer::RenderConfig;

fn small() -> (PriorConfig, RenderConfig) {
    (
        PriorConfig {
            max_levels: 2,
            ..PriorConfig::default()
        },
        RenderConfig {
            width: 32,
            height: 32,
            ..RenderConfig::default()
        },
    )
}

#[test]
fn dataset_round_trips_through_disk() {
    let (prior, render) = small();
    let cfg = DatasetConfig {
        prior,
        render,
        ..DatasetConfig::default()
    };
    let items = make_dataset(3, &cfg, 40).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = RunManifest::new("dataset", &RunConfig::default());
    write_dataset(dir.path(), &items, &mut manifest).unwrap();
    for (i, item) in items.iter().enumerate() {
        let stem = item_stem(i);
        let f = read_shape_file(&dir.path().join(format!("{stem}.wreath"))).unwrap();
        assert_eq!(f.shape, item.shape);
        assert_eq!(f.lambda(), Some(item.lambda));
        let png = read_png(&dir.path().join(format!("{stem}.png"))).unwrap();
        assert_eq!((png.width(), png.height()), (32, 32));
        assert_eq!(
            binarize(&png, 0.5).bits(),
            binarize(&item.image, 0.5).bits()
        );
    }
    assert!(dir.path().join("manifest.txt").is_file());
}

#[test]
fn short_inference_yields_scored_map_and_samples() {
    let (prior, render) = small();
    let cfg = DatasetConfig {
        prior: prior.clone(),
        render: render.clone(),
        noisy: false,
        ..DatasetConfig::default()
    };
    let item = &make_dataset(1, &cfg, 7).unwrap()[0];
    let obs = binarize(&item.image, 0.5);
    let model = Model {
        prior,
        render: render.clone(),
        ..Model::default()
    };
    let chain = ChainConfig {
        iterations: 2_000,
        thin: 50,
        burn_in: 500,
        seed: 3,
        ..ChainConfig::default()
    };
    let runs: Vec<_> = run_chains(&obs, &model, &chain, 2)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    for r in &runs {
        assert_eq!(r.samples.len(), 30);
        assert!(r.samples.iter().all(|s| s.iteration >= 500));
        assert!(r.ml.log_lik >= r.samples.iter().map(|s| s.log_lik).fold(f64::MIN, f64::max));
    }
    let tables: Vec<_> = runs.iter().map(|r| r.visits.clone()).collect();
    let map = most_visited(&tables);
    assert!(map.log_post.is_finite());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.samples");
    let records: Vec<SampleRecord> = runs[0].samples.iter().map(SampleRecord::from).collect();
    write_samples(&records, &path).unwrap();
    assert_eq!(read_samples(&path).unwrap(), records);

    let pairs = vec![(
        ScaledShape {
            shape: map.shape.clone(),
            lambda: map.lambda,
        },
        ScaledShape {
            shape: item.shape.clone(),
            lambda: item.lambda,
        },
    )];
    let (results, summary) = batch_evaluate(&pairs, &render).unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(summary.items, 1);
    assert!((0.0..=1.0).contains(&summary.mean_iou));
}
