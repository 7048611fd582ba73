use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{Edge, EdgeOrigin, NodeFeatureSet};
use crate::params::{InitScales, ModelDims};
use crate::train::gradcheck_scene;

fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
}

fn random_set(rng: &mut impl Rng, kind: EdgeKind, ns: usize, nd: usize, p: f64) -> TypedEdgeSet {
    let mut edges = Vec::new();
    for s in 0..ns {
        for d in 0..nd {
            if (kind.is_intra() && s == d) || !rng.random_bool(p) {
                continue;
            }
            edges.push(Edge {
                src: s,
                dst: d,
                weight: rng.random_range(0.01..2.0),
            });
        }
    }
    TypedEdgeSet::new(kind, EdgeOrigin::Merged, ns, nd, edges).unwrap()
}

#[test]
fn aggregate_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.random_range(1..=32);
        let x = random_matrix(&mut rng, n, 5);
        let e = random_set(&mut rng, EdgeKind::Hh, n, n, 0.2);
        let dense = (Array2::eye(n) + e.dense().t()).dot(&x);
        let got = aggregate(x.view(), x.view(), &e).unwrap();
        assert!((&got - &dense).iter().all(|v| v.abs() < 1e-9));
    }
}

#[test]
fn aggregate_edge_cases() {
    let x = Array2::from_shape_fn((3, 2), |(i, j)| (i * 2 + j) as f64);
    let none = TypedEdgeSet::empty(EdgeKind::Hh, EdgeOrigin::Merged, 3, 3);
    assert_eq!(aggregate(x.view(), x.view(), &none).unwrap(), x);
    // two half-weight edges from identical neighbor features
    let neigh = Array2::from_shape_fn((2, 2), |(_, j)| 10.0 + j as f64);
    let e = TypedEdgeSet::new(
        EdgeKind::Oh,
        EdgeOrigin::Merged,
        2,
        3,
        vec![
            Edge {
                src: 0,
                dst: 1,
                weight: 0.5,
            },
            Edge {
                src: 1,
                dst: 1,
                weight: 0.5,
            },
        ],
    )
    .unwrap();
    let m = aggregate(x.view(), neigh.view(), &e).unwrap();
    assert_eq!(m.row(1).to_vec(), vec![2.0 + 10.0, 3.0 + 11.0]);
    assert!(aggregate(x.view(), x.view(), &e).is_err());
}

fn dims() -> ModelDims {
    ModelDims {
        descriptor: 5,
        hidden: 6,
        attention: 3,
    }
}

fn scales() -> InitScales {
    InitScales {
        encoder: 0.05,
        attention: 0.05,
        block_gain: 1.0,
        head: 0.2,
    }
}

/// Straight-line evaluation with dense adjacency matrices.
fn reference(graphs: &FinalGraphs, p: &RefinerParams) -> (Array2<f64>, Array2<f64>) {
    let w = |k: EdgeKind| graphs.merged(k).dense();
    let relu = |a: Array2<f64>| a.mapv(|v| v.max(0.0));
    let block = |k: usize, xh: &Array2<f64>, xo: &Array2<f64>| {
        let hh = xh + &w(EdgeKind::Hh).t().dot(xh);
        let oh = xh + &w(EdgeKind::Oh).t().dot(xo);
        let oo = xo + &w(EdgeKind::Oo).t().dot(xo);
        let ho = xo + &w(EdgeKind::Ho).t().dot(xh);
        let uh = &p.blocks[k][0];
        let uo = &p.blocks[k][1];
        let h = relu(concatenate![Axis(1), hh, oh].dot(&uh.weight) + &uh.bias);
        let o = relu(concatenate![Axis(1), oo, ho].dot(&uo.weight) + &uo.bias);
        (h, o)
    };
    let (x0h, x0o) = (graphs.hand.rows().clone(), graphs.object.rows().clone());
    let (h1, o1) = block(0, &x0h, &x0o);
    let (h2, o2) = block(1, &h1, &o1);
    let (h3, o3) = block(2, &h2, &o2);
    let h_in = concatenate![Axis(1), x0h, h1, h2, h3];
    let o_in = concatenate![Axis(1), x0o, o1, o2, o3];
    let (h4, o4) = block(3, &h_in, &o_in);
    (h4.dot(&p.heads[0]), o4.dot(&p.heads[1]))
}

fn tiny() -> (GraphInputs, RefinerParams) {
    let scene = gradcheck_scene(2).unwrap();
    let inputs = GraphInputs::new(&scene.hand_init, &scene.obj_init, &scene.contact_indices).unwrap();
    (inputs, RefinerParams::init(dims(), 5, scales()).unwrap())
}

#[test]
fn matches_reference_on_tiny_scene() {
    let (inputs, p) = tiny();
    let g = build_final_graphs(&inputs, &p, &GraphConfig::default()).unwrap();
    assert_eq!((g.hand.len(), g.object.len()), (6, 8));
    let r = refine(&g, &p).unwrap();
    let (dh, d_o) = reference(&g, &p);
    assert!((&r.displacement_hand - &dh).iter().all(|v| v.abs() < 1e-9));
    assert!((&r.displacement_obj - &d_o).iter().all(|v| v.abs() < 1e-9));
    assert_eq!(r.trace.hand.len(), 4);
    assert_eq!(r.trace.object[3].dim(), (8, 6));
    assert_eq!(p.blocks[3][0].weight.nrows(), 2 * ((3 + 5) + 3 * 6));
}

#[test]
fn zero_head_is_identity() {
    let (inputs, mut p) = tiny();
    p.heads.iter_mut().for_each(|h| h.fill(0.0));
    let g = build_final_graphs(&inputs, &p, &GraphConfig::default()).unwrap();
    let r = refine(&g, &p).unwrap();
    assert_eq!(r.refined_hand, inputs.vertices[0]);
    assert_eq!(r.refined_obj, inputs.vertices[1]);
}

#[test]
fn training_forward_equals_inference() {
    let (inputs, p) = tiny();
    for config in [
        GraphConfig::default(),
        GraphConfig {
            use_common: false,
            ..GraphConfig::default()
        },
        GraphConfig {
            use_attention: false,
            ..GraphConfig::default()
        },
    ] {
        let g = build_final_graphs(&inputs, &p, &config).unwrap();
        let r = refine(&g, &p).unwrap();
        let mut tape = Tape::new();
        let pv = ParamVars::record(&mut tape, &p, true);
        let fwd = forward_scene(&mut tape, &pv, &inputs, &config).unwrap();
        assert_eq!(tape.value(fwd.refined[0]), &r.refined_hand);
        assert_eq!(tape.value(fwd.refined[1]), &r.refined_obj);
        for (layout, merged) in fwd.layouts.iter().zip(&g.merged) {
            assert_eq!(layout.len(), merged.len());
        }
    }
}

#[test]
fn hand_ignores_object_without_inter_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = RefinerParams::init(dims(), 1, scales()).unwrap();
    let nw = dims().node_width();
    let mk = |rng: &mut ChaCha8Rng, no: usize| -> Vec<TypedEdgeSet> {
        vec![
            random_set(rng, EdgeKind::Hh, 6, 6, 0.4),
            random_set(rng, EdgeKind::Oo, no, no, 0.4),
            TypedEdgeSet::empty(EdgeKind::Ho, EdgeOrigin::Merged, 6, no),
            TypedEdgeSet::empty(EdgeKind::Oh, EdgeOrigin::Merged, no, 6),
        ]
    };
    let merged = mk(&mut rng, 8);
    let hand = NodeFeatureSet::from_rows(NodeClass::Hand, random_matrix(&mut rng, 6, nw)).unwrap();
    let run = |obj: Array2<f64>| {
        let g = FinalGraphs {
            hand: hand.clone(),
            object: NodeFeatureSet::from_rows(NodeClass::Object, obj).unwrap(),
            common: merged.clone(),
            attention: merged.clone(),
            merged: merged.clone(),
        };
        refine(&g, &p).unwrap()
    };
    let a = run(random_matrix(&mut rng, 8, nw));
    let b = run(random_matrix(&mut rng, 8, nw) * 3.0);
    assert_eq!(a.displacement_hand, b.displacement_hand);
    for k in 0..4 {
        assert_eq!(a.trace.hand[k], b.trace.hand[k]);
    }
}

#[test]
fn width_mismatch_names_the_tensor() {
    let (inputs, p) = tiny();
    let g = build_final_graphs(&inputs, &p, &GraphConfig::default()).unwrap();
    let mut q = p.clone();
    q.blocks[1][1].weight = Array2::zeros((5, 6));
    match refine(&g, &q) {
        Err(Error::ShapeMismatch { name, .. }) => assert_eq!(name, "block2.object.weight"),
        other => panic!("expected a shape error, got {other:?}"),
    }
    let other_dims = RefinerParams::init(
        ModelDims {
            descriptor: 7,
            ..dims()
        },
        1,
        scales(),
    )
    .unwrap();
    assert!(refine(&g, &other_dims).is_err());
}
