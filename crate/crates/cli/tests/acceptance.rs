//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use hoi_refine::autodiff::Fault;
use hoi_refine::graph::{attention_edges, attention_matrix, merge_edge_sets, Edge, EdgeOrigin};
use hoi_refine::losses::{chamfer, edge_regularizer, joint_l2, laplacian_loss, vertex_l2};
use hoi_refine::mesh::SurfaceSample;
use hoi_refine::params::AttentionParams;
use hoi_refine::synth::{make_hand, make_icosphere, HandPose};
use hoi_refine::train::{full_pipeline_gradcheck, GradcheckConfig};
use hoi_refine::{aggregate, intersection_volume, max_penetration, EdgeKind, Mesh, TypedEdgeSet};
use nalgebra::{Point3, Vector3};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const GRADCHECK_TOL: f64 = 1e-4;
const GRADCHECK_BUDGET: Duration = Duration::from_secs(30);
const AGGREGATE_TOL: f64 = 1e-9;
const AGGREGATE_BUDGET: Duration = Duration::from_secs(5);
const STOCHASTIC_TOL: f64 = 1e-9;
const GAMMA: f64 = 0.01;
const MERGE_TOL: f64 = 1e-12;
const PEN_TOL_MM: f64 = 0.5;
const VOLUME_REL_TOL: f64 = 0.10;
const VOXEL_MM: f64 = 5.0;
const LOSS_ZERO_TOL: f64 = 1e-9;
const TREND_BUDGET: Duration = Duration::from_secs(15 * 60);

type Outcome = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hoi-refine"))
}

fn run(args: &[&str]) -> Result<Output, String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`hoi-refine {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(out)
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let cfg = GradcheckConfig::default();
    let report = full_pipeline_gradcheck(&cfg, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let control = full_pipeline_gradcheck(&cfg, Some(Fault::ReluIgnoresMask)).map_err(|e| e.to_string())?;
    check(report.errors.len() == 20, "expected 20 directions")?;
    check(
        report.max_relative_error < GRADCHECK_TOL,
        format!("max relative error {:e}", report.max_relative_error),
    )?;
    check(
        control.max_relative_error >= GRADCHECK_TOL,
        "corrupted backward rule went unnoticed",
    )?;
    check(elapsed < GRADCHECK_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "max rel err {:.2e} over 20 directions, corrupted rule {:.2e}, {:.1?}",
        report.max_relative_error, control.max_relative_error, elapsed
    ))
}

fn random_edges(rng: &mut impl Rng, kind: EdgeKind, ns: usize, nd: usize, p: f64) -> TypedEdgeSet {
    let mut edges = Vec::new();
    for src in 0..ns {
        for dst in 0..nd {
            if (kind.is_intra() && src == dst) || !rng.random_bool(p) {
                continue;
            }
            edges.push(Edge {
                src,
                dst,
                weight: rng.random_range(1e-3..5.0),
            });
        }
    }
    TypedEdgeSet::new(kind, EdgeOrigin::Merged, ns, nd, edges).expect("valid random edges")
}

fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-scale..scale))
}

fn aggregation_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=32);
        let width = rng.random_range(1..=16);
        let p = rng.random_range(0.0..0.5);
        let x = random_matrix(&mut rng, n, width, 10.0);
        let e = random_edges(&mut rng, EdgeKind::Hh, n, n, p);
        let want = (Array2::<f64>::eye(n) + e.dense().t()).dot(&x);
        let got = aggregate(x.view(), x.view(), &e).map_err(|e| e.to_string())?;
        worst = worst.max((&got - &want).iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let elapsed = start.elapsed();
    check(worst <= AGGREGATE_TOL, format!("max abs deviation {worst:e}"))?;
    check(elapsed < AGGREGATE_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!("200 graphs, max abs deviation {worst:.1e}, {elapsed:.1?}"))
}

fn uniform_edges(n: usize) -> Result<TypedEdgeSet, String> {
    // zero query weights make every logit equal, so each row is exactly 1/n
    let x = Array2::from_shape_fn((n, 4), |(i, j)| (i * 7 + j) as f64 * 0.1);
    let p = AttentionParams {
        query: Array2::zeros((4, 3)),
        key: Array2::from_elem((4, 3), 0.5),
    };
    let a = attention_matrix(x.view(), x.view(), &p).map_err(|e| e.to_string())?;
    attention_edges(a.view(), GAMMA, EdgeKind::Ho).map_err(|e| e.to_string())
}

fn attention_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut kept = 0usize;
    for _ in 0..100 {
        let (ns, nd, w, d) = (
            rng.random_range(1..=60),
            rng.random_range(1..=60),
            rng.random_range(1..=12),
            rng.random_range(1..=8),
        );
        let xs = random_matrix(&mut rng, ns, w, 20.0);
        let xd = random_matrix(&mut rng, nd, w, 20.0);
        let p = AttentionParams {
            query: random_matrix(&mut rng, w, d, 1.0),
            key: random_matrix(&mut rng, w, d, 1.0),
        };
        let a = attention_matrix(xs.view(), xd.view(), &p).map_err(|e| e.to_string())?;
        for row in a.rows() {
            worst = worst.max((row.sum() - 1.0).abs());
        }
        let e = attention_edges(a.view(), GAMMA, EdgeKind::Oh).map_err(|e| e.to_string())?;
        check(
            e.edges().iter().all(|e| e.weight > GAMMA),
            "an emitted weight is ≤ gamma",
        )?;
        kept += e.len();
    }
    check(worst <= STOCHASTIC_TOL, format!("row sum deviation {worst:e}"))?;
    let n50 = uniform_edges(50)?;
    check(n50.len() == 50 * 50, format!("N=50 kept {} of 2500 edges", n50.len()))?;
    check(
        n50.edges().iter().all(|e| e.weight == 0.02),
        "N=50 weights differ from 1/50",
    )?;
    let n200 = uniform_edges(200)?;
    check(n200.is_empty(), format!("N=200 kept {} edges", n200.len()))?;
    Ok(format!(
        "row sums within {worst:.1e}, {kept} random edges all > {GAMMA}, uniform N=50 keeps 2500, N=200 keeps 0"
    ))
}

fn merge_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut shared = 0usize;
    for _ in 0..200 {
        let kind = EdgeKind::ALL[rng.random_range(0..4)];
        let ns = rng.random_range(1..=20);
        let nd = if kind.is_intra() { ns } else { rng.random_range(1..=20) };
        let (pa, pb) = (rng.random_range(0.0..0.6), rng.random_range(0.0..0.6));
        let a = random_edges(&mut rng, kind, ns, nd, pa);
        let b = random_edges(&mut rng, kind, ns, nd, pb);
        let m = merge_edge_sets(&a, &b).map_err(|e| e.to_string())?;
        let union: std::collections::BTreeSet<_> = a.connectivity().union(&b.connectivity()).copied().collect();
        check(m.connectivity() == union, "merged connectivity is not the union")?;
        for e in m.edges() {
            match (a.weight(e.src, e.dst), b.weight(e.src, e.dst)) {
                (Some(x), Some(y)) => {
                    shared += 1;
                    check(
                        (e.weight - (x + y)).abs() <= MERGE_TOL,
                        "shared edge weight is not the sum",
                    )?;
                }
                (Some(x), None) | (None, Some(x)) => check(e.weight == x, "single-origin weight changed")?,
                (None, None) => return Err("merge invented an edge".into()),
            }
        }
    }
    check(shared > 0, "no shared edges were exercised")?;
    Ok(format!(
        "200 random pairs, union connectivity, {shared} shared edges summed within {MERGE_TOL:e}"
    ))
}

fn lens_volume_cm3(r: f64, d: f64) -> f64 {
    PI * (2.0 * r - d).powi(2) * (d * d + 4.0 * d * r) / (12.0 * d) / 1000.0
}

fn metric_oracles() -> Outcome {
    let (r, d) = (30.0, 40.0);
    let a = make_icosphere(r, 3).map_err(|e| e.to_string())?;
    check(
        a.vertex_count() == 642,
        format!("icosphere has {} vertices", a.vertex_count()),
    )?;
    let b = a.translated(Vector3::new(d, 0.0, 0.0));
    let pen = max_penetration(&a, &b).map_err(|e| e.to_string())?;
    let pen_exact = 2.0 * r - d;
    check(
        (pen - pen_exact).abs() <= PEN_TOL_MM,
        format!("penetration {pen} vs {pen_exact}"),
    )?;
    let vol = intersection_volume(&a, &b, VOXEL_MM).map_err(|e| e.to_string())?;
    let vol_exact = lens_volume_cm3(r, d);
    let rel = (vol - vol_exact).abs() / vol_exact;
    check(rel <= VOLUME_REL_TOL, format!("volume {vol} vs {vol_exact}"))?;
    let far = a.translated(Vector3::new(2.0 * r + 1.0, 0.0, 0.0));
    let (pen0, vol0) = (
        max_penetration(&a, &far).map_err(|e| e.to_string())?,
        intersection_volume(&a, &far, VOXEL_MM).map_err(|e| e.to_string())?,
    );
    check(
        pen0 == 0.0 && vol0 == 0.0,
        format!("disjoint pair gave {pen0} mm, {vol0} cm3"),
    )?;
    Ok(format!(
        "penetration {pen:.3} vs {pen_exact} mm, volume {vol:.3} vs {vol_exact:.3} cm3 ({:.1}%), disjoint 0 / 0",
        rel * 100.0
    ))
}

/// A regular hexagon around a center vertex at the ring's centroid.
fn hexagon_fan() -> Mesh {
    let mut v = vec![Point3::origin()];
    v.extend((0..6).map(|k| {
        let t = k as f64 * PI / 3.0;
        Point3::new(10.0 * t.cos(), 10.0 * t.sin(), 0.0)
    }));
    let faces = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
    Mesh::new(v, faces).expect("static fan")
}

fn loss_zeros() -> Outcome {
    let hand = make_hand(&HandPose::default(), 0).map_err(|e| e.to_string())?;
    let obj = make_icosphere(20.0, 2).map_err(|e| e.to_string())?;
    let sample = SurfaceSample::draw(&obj, 600, 1).map_err(|e| e.to_string())?;
    let lv = vertex_l2(&hand.mesh, &hand.mesh).map_err(|e| e.to_string())?;
    let lj = joint_l2(&hand.mesh, &hand.mesh, &hand.regressor).map_err(|e| e.to_string())?;
    let lcd = chamfer(&sample.points(&obj), &sample.points(&obj)).map_err(|e| e.to_string())?;
    let icosahedron = make_icosphere(15.0, 0).map_err(|e| e.to_string())?;
    let le = edge_regularizer(&icosahedron);

    // each rim vertex sees the center and its two rim neighbors
    let fan = hexagon_fan();
    let v = fan.vertices();
    let rim: f64 = (1..=6)
        .map(|i| {
            let prev = 1 + (i + 4) % 6;
            let next = 1 + i % 6;
            let mean = (v[0].coords + v[prev].coords + v[next].coords) / 3.0;
            (v[i].coords - mean).norm_squared()
        })
        .sum();
    let center_term = laplacian_loss(&fan) * 7.0 - rim;

    let terms = [
        ("l_v", lv),
        ("l_j", lj),
        ("l_cd", lcd),
        ("l_e", le),
        ("l_l center", center_term),
    ];
    for (name, value) in terms {
        check(value.abs() <= LOSS_ZERO_TOL, format!("{name} = {value:e}"))?;
    }
    Ok(terms
        .iter()
        .map(|(n, v)| format!("{n} {:.0e}", v.abs()))
        .collect::<Vec<_>>()
        .join(", "))
}

fn mean_of(metrics: &Value, block: &str, field: &str) -> Result<f64, String> {
    metrics[block]["mean"][field]
        .as_f64()
        .ok_or_else(|| format!("metrics.json lacks {block}.mean.{field}"))
}

fn table_trend(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let (data, out) = (tmp.join("trend_scenes"), tmp.join("trend_run"));
    run(&[
        "synth",
        "--count",
        "20",
        "--seed",
        "1",
        "--vertex-sigma",
        "3",
        "--translation",
        "10",
        "--out",
        s(&data),
    ])?;
    run(&[
        "train",
        "--scenes",
        s(&data),
        "--out",
        s(&out),
        "--epochs",
        "200",
        "--lr",
        "1e-4",
        "--seed",
        "1",
    ])?;
    let elapsed = start.elapsed();
    let m = read_json(&out.join("metrics.json"))?;
    let get = |b: &str, f: &str| mean_of(&m, b, f);
    let (mesh0, mesh1) = (
        get("initial", "hand_mesh_error_mm")?,
        get("refine", "hand_mesh_error_mm")?,
    );
    let (pen0, pen1) = (get("initial", "max_pen_mm")?, get("refine", "max_pen_mm")?);
    let (vol0, vol1) = (get("initial", "inter_vol_cm3")?, get("refine", "inter_vol_cm3")?);
    let detail = format!(
        "mesh {mesh0:.3} -> {mesh1:.3} mm, pen {pen0:.3} -> {pen1:.3} mm, vol {vol0:.4} -> {vol1:.4} cm3, {:.0?}",
        elapsed
    );
    check(mesh1 < mesh0, format!("hand mesh error did not drop: {detail}"))?;
    check(pen1 <= pen0, format!("penetration grew: {detail}"))?;
    check(vol1 < vol0, format!("intersection volume did not drop: {detail}"))?;
    check(elapsed < TREND_BUDGET, format!("over budget: {detail}"))?;
    Ok(detail)
}

fn origin_totals(graphs: &Value) -> Result<BTreeMap<String, (u64, u64, u64)>, String> {
    let totals = graphs["totals"].as_object().ok_or("graphs.json lacks totals")?;
    totals
        .iter()
        .map(|(k, v)| {
            let f = |n: &str| v[n].as_u64().ok_or(format!("totals.{k}.{n} missing"));
            Ok((k.clone(), (f("common")?, f("attention")?, f("merged")?)))
        })
        .collect()
}

fn ablation_mechanics(tmp: &Path) -> Outcome {
    let data = tmp.join("ablation_scenes");
    run(&["synth", "--count", "3", "--seed", "5", "--out", s(&data)])?;
    let mut notes = Vec::new();
    for (label, flags) in [
        ("full", vec![]),
        ("no-ec", vec!["--no-ec"]),
        ("no-ea", vec!["--no-ea"]),
        ("both", vec!["--no-ec", "--no-ea"]),
    ] {
        let out = tmp.join(format!("ablation_{label}"));
        let mut args = vec!["train", "--scenes", s(&data), "--out", s(&out), "--epochs", "3"];
        args.extend(flags.iter().copied());
        run(&args)?;
        let rows = std::fs::read_to_string(out.join("loss.csv"))
            .map_err(|e| e.to_string())?
            .lines()
            .count();
        check(rows == 4, format!("{label}: loss.csv has {rows} lines"))?;
        let t = origin_totals(&read_json(&out.join("graphs.json"))?)?;
        let common: u64 = t.values().map(|c| c.0).sum();
        let attention: u64 = t.values().map(|c| c.1).sum();
        let inter: u64 = ["ho", "oh"].iter().map(|k| t[*k].2).sum();
        match label {
            "full" => check(common > 0 && attention > 0, "full run lacks an edge origin")?,
            "no-ec" => check(common == 0 && attention > 0, format!("no-ec: {common} common edges"))?,
            "no-ea" => check(
                attention == 0 && common > 0,
                format!("no-ea: {attention} attention edges"),
            )?,
            _ => check(
                common + attention == 0 && inter == 0,
                "both ablations still carry edges",
            )?,
        }
        notes.push(format!("{label} c={common} a={attention}"));
    }
    Ok(notes.join(", "))
}

/// Relative path -> bytes for every file below `dir`.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, acc);
            } else {
                acc.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(dir, dir, &mut acc);
    acc
}

fn same_tree(a: &Path, b: &Path, what: &str) -> Result<usize, String> {
    let (x, y) = (snapshot(a), snapshot(b));
    check(x.keys().eq(y.keys()), format!("{what}: file sets differ"))?;
    for (k, v) in &x {
        check(&y[k] == v, format!("{what}: {} differs", k.display()))?;
    }
    Ok(x.len())
}

fn determinism(tmp: &Path) -> Outcome {
    let d = |n: &str| tmp.join(format!("det_{n}"));
    run(&[
        "synth",
        "--count",
        "4",
        "--seed",
        "9",
        "--out",
        s(&d("synth_a")),
        "--threads",
        "1",
    ])?;
    run(&[
        "synth",
        "--count",
        "4",
        "--seed",
        "9",
        "--out",
        s(&d("synth_b")),
        "--threads",
        "3",
    ])?;
    let mut files = same_tree(&d("synth_a"), &d("synth_b"), "synth")?;

    let data = d("synth_a");
    let train = |name: &str, threads: &str| {
        run(&[
            "train",
            "--scenes",
            s(&data),
            "--out",
            s(&d(name)),
            "--epochs",
            "4",
            "--seed",
            "3",
            "--threads",
            threads,
        ])
    };
    train("train_1", "1")?;
    train("train_2", "2")?;
    train("train_4", "4")?;
    files += same_tree(&d("train_1"), &d("train_2"), "train 1 vs 2 threads")?;
    files += same_tree(&d("train_1"), &d("train_4"), "train 1 vs 4 threads")?;

    let ckpt = d("train_1").join("checkpoint.json");
    let eval = |name: &str, threads: &str| {
        run(&[
            "eval",
            "--scenes",
            s(&data),
            "--checkpoint",
            s(&ckpt),
            "--out",
            s(&d(name)),
            "--export-meshes",
            "--threads",
            threads,
        ])
    };
    eval("eval_1", "1")?;
    eval("eval_3", "3")?;
    files += same_tree(&d("eval_1"), &d("eval_3"), "eval")?;

    let g1 = run(&["gradcheck", "--seed", "4", "--threads", "1"])?.stdout;
    let g2 = run(&["gradcheck", "--seed", "4", "--threads", "2"])?.stdout;
    check(g1 == g2, "gradcheck output differs between runs")?;
    Ok(format!(
        "{files} output files and gradcheck report identical across reruns and thread counts"
    ))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path().to_path_buf();
    let criteria: Vec<Criterion> = vec![
        ("gradient fidelity", Box::new(gradient_fidelity)),
        ("aggregation oracle", Box::new(aggregation_oracle)),
        ("attention properties", Box::new(attention_properties)),
        ("merge semantics", Box::new(merge_semantics)),
        ("metric oracles", Box::new(metric_oracles)),
        ("loss zeros", Box::new(loss_zeros)),
        (
            "initial vs refined trend",
            Box::new({
                let dir = dir.clone();
                move || table_trend(&dir)
            }),
        ),
        (
            "ablation mechanics",
            Box::new({
                let dir = dir.clone();
                move || ablation_mechanics(&dir)
            }),
        ),
        (
            "determinism",
            Box::new({
                let dir = dir.clone();
                move || determinism(&dir)
            }),
        ),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
