use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use hoi_refine::graph::{build_final_graphs, GraphConfig, GraphInputs};
use hoi_refine::metrics::{intersection_volume, max_penetration, VOXEL_MM};
use hoi_refine::params::{InitScales, ModelDims, RefinerParams};
use hoi_refine::refine::refine;
use hoi_refine::train::{scene_gradient, PreparedScene};
use hoi_refine_bench::fixture_scene;

fn graphs(c: &mut Criterion) {
    let scene = fixture_scene();
    let params = RefinerParams::init(ModelDims::default(), 1, InitScales::default()).unwrap();
    let inputs = GraphInputs::new(&scene.hand_init, &scene.obj_init, &scene.contact_indices).unwrap();
    let config = GraphConfig::default();
    c.bench_function("build_final_graphs", |b| {
        b.iter(|| build_final_graphs(black_box(&inputs), &params, &config).unwrap())
    });
    let g = build_final_graphs(&inputs, &params, &config).unwrap();
    c.bench_function("refine_forward", |b| b.iter(|| refine(black_box(&g), &params).unwrap()));
}

fn training_step(c: &mut Criterion) {
    let scene = fixture_scene();
    let params = RefinerParams::init(ModelDims::default(), 1, InitScales::default()).unwrap();
    let prepared = PreparedScene::new(&scene, 600).unwrap();
    let config = GraphConfig::default();
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("scene_gradient", |b| {
        b.iter(|| scene_gradient(black_box(&params), &prepared, &config, None).unwrap())
    });
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let scene = fixture_scene();
    let mut group = c.benchmark_group("metrics");
    group.sample_size(10);
    group.bench_function("max_penetration", |b| {
        b.iter(|| max_penetration(black_box(&scene.hand_init), &scene.obj_init).unwrap())
    });
    group.bench_function("intersection_volume", |b| {
        b.iter(|| intersection_volume(black_box(&scene.hand_init), &scene.obj_init, VOXEL_MM).unwrap())
    });
    group.finish();
}

criterion_group!(benches, graphs, training_step, metrics);
criterion_main!(benches);
