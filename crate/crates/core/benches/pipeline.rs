use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use daca::augment::default_ops;
use daca::compose::{compose, CompositePlan};
use daca::eval::{evaluate, ImageEval};
use daca::harness::{mock_detect, MockDetectorConfig};
use daca::selection::{select_region, GridLayout};
use daca::synthetic::{dataset, SceneSpec};
use daca::{Detection, Dims, GroundTruth, Parallelism, Substream};

const MODES: [(&str, Parallelism); 2] = [
    ("sequential", Parallelism::Sequential),
    ("parallel", Parallelism::Parallel),
];

fn bench_compose(c: &mut Criterion) {
    let dims = Dims::new(600, 600);
    let grid = GridLayout::new(3, 3).unwrap();
    let sample = &dataset(&SceneSpec::new(dims, 12), 1, "bench", 1)[0];
    let dets: Vec<Detection> = sample.labels.iter().map(GroundTruth::as_detection).collect();
    let region = select_region(&sample.image, &dets, grid, 0.0).unwrap();
    let plan = CompositePlan::new(dims, grid, default_ops());

    let mut group = c.benchmark_group("compose_3x3");
    for (name, mode) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| compose(black_box(&region.crop), &region.pseudo_labels, &plan, 7, "bench", mode).unwrap())
        });
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let dims = Dims::new(300, 300);
    let cfg = MockDetectorConfig {
        num_classes: 3,
        ..MockDetectorConfig::default()
    };
    let images: Vec<ImageEval> = dataset(&SceneSpec::new(dims, 10), 2, "eval", 200)
        .into_iter()
        .map(|s| {
            let scene: Vec<Detection> = s.labels.iter().map(GroundTruth::as_detection).collect();
            let mut rng = Substream::new(2, s.id.clone(), 0).rng();
            ImageEval {
                detections: mock_detect(&scene, dims, &cfg, &mut rng).unwrap(),
                ground_truth: s.labels,
            }
        })
        .collect();

    let mut group = c.benchmark_group("evaluate_200_images");
    for (name, mode) in MODES {
        group.bench_function(name, |b| b.iter(|| evaluate(black_box(&images), 0.5, mode).unwrap()));
    }
    group.finish();
}

fn bench_batch(c: &mut Criterion) {
    let dims = Dims::new(600, 600);
    let grid = GridLayout::new(2, 2).unwrap();
    let plan = CompositePlan::new(dims, grid, default_ops());
    let regions: Vec<_> = dataset(&SceneSpec::new(dims, 8), 3, "batch", 16)
        .into_iter()
        .map(|s| {
            let dets: Vec<Detection> = s.labels.iter().map(GroundTruth::as_detection).collect();
            (s.id, select_region(&s.image, &dets, grid, 0.0).unwrap())
        })
        .collect();

    let mut group = c.benchmark_group("batch_compose");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::new(name, regions.len()), &regions, |b, regions| {
            b.iter(|| {
                mode.map_slice(regions, |(id, r)| {
                    compose(&r.crop, &r.pseudo_labels, &plan, 7, id, Parallelism::Sequential).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_compose, bench_evaluate, bench_batch);
criterion_main!(benches);
