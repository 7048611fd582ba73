//! Closed, outward-wound primitive meshes centered at the origin.

use std::collections::HashMap;

use nalgebra::{Point3, Rotation3, Unit, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Smallest vertex count any primitive can be built with.
pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectKind {
    Sphere { radius: f64 },
    Box { extents: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
}

/// Builds a primitive with at least `resolution` vertices, rotated by a
/// uniformly random orientation drawn from `seed`.
pub fn make_object(kind: ObjectKind, resolution: usize, seed: u64) -> Result<Mesh> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidParameter(format!(
            "resolution must be at least {MIN_RESOLUTION} vertices, got {resolution}"
        )));
    }
    let mesh = match kind {
        ObjectKind::Sphere { radius } => {
            positive("radius", radius)?;
            let level = (0..)
                .find(|&l| icosphere_vertex_count(l) >= resolution)
                .expect("unbounded search");
            make_icosphere(radius, level)?
        }
        ObjectKind::Box { extents } => {
            extents.iter().try_for_each(|&e| positive("extent", e))?;
            let segments = (1..).find(|&n| 6 * n * n + 2 >= resolution).expect("unbounded search");
            make_box(Vector3::from(extents), segments)?
        }
        ObjectKind::Cylinder { radius, height } => {
            positive("radius", radius)?;
            positive("height", height)?;
            let (sides, stacks) = (8..)
                .map(|s| {
                    let spacing = std::f64::consts::TAU * radius / s as f64;
                    (s, ((height / spacing).round() as usize).max(1))
                })
                .find(|&(s, h)| s * (h + 1) + 2 >= resolution)
                .expect("unbounded search");
            make_cylinder(radius, height, sides, stacks)?
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rotate(&mesh, &random_rotation(&mut rng)))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

pub fn icosphere_vertex_count(level: usize) -> usize {
    10 * 4usize.pow(level as u32) + 2
}

/// Subdivided icosahedron projected onto a sphere.
pub fn make_icosphere(radius: f64, level: usize) -> Result<Mesh> {
    positive("radius", radius)?;
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| -> usize {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts.into_iter().map(|v| Point3::from(v * radius)).collect();
    outward(Mesh::new(vertices, faces)?)
}

/// Axis-aligned box with `segments` subdivisions per edge (`6n² + 2` vertices).
pub fn make_box(extents: Vector3<f64>, segments: usize) -> Result<Mesh> {
    extents.iter().try_for_each(|&e| positive("extent", e))?;
    if segments == 0 {
        return Err(Error::InvalidParameter("box needs at least one segment".into()));
    }
    let n = segments;
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut id = |g: [usize; 3], vertices: &mut Vec<Point3<f64>>| -> usize {
        *index.entry(g).or_insert_with(|| {
            let p = Point3::new(
                (g[0] as f64 / n as f64 - 0.5) * extents.x,
                (g[1] as f64 / n as f64 - 0.5) * extents.y,
                (g[2] as f64 / n as f64 - 0.5) * extents.z,
            );
            vertices.push(p);
            vertices.len() - 1
        })
    };
    let mut faces = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, n] {
            let normal_sign = if side == 0 { -1.0 } else { 1.0 };
            for i in 0..n {
                for j in 0..n {
                    let corner = |di: usize, dj: usize| {
                        let mut g = [0; 3];
                        g[axis] = side;
                        g[u] = i + di;
                        g[v] = j + dj;
                        g
                    };
                    let q = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)].map(|g| id(g, &mut vertices));
                    // (u, v, axis) is right-handed, so u→v winding faces +axis.
                    let tris = if normal_sign > 0.0 {
                        [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
                    } else {
                        [[q[0], q[2], q[1]], [q[0], q[3], q[2]]]
                    };
                    faces.extend(tris);
                }
            }
        }
    }
    outward(Mesh::new(vertices, faces)?)
}

/// Capped cylinder along z with `sides` around and `stacks` bands.
pub fn make_cylinder(radius: f64, height: f64, sides: usize, stacks: usize) -> Result<Mesh> {
    positive("radius", radius)?;
    positive("height", height)?;
    if sides < 3 || stacks == 0 {
        return Err(Error::InvalidParameter(format!(
            "cylinder needs ≥3 sides and ≥1 stack, got {sides}/{stacks}"
        )));
    }
    let rings: Vec<Ring> = (0..=stacks)
        .map(|k| Ring {
            center: Point3::new(0.0, 0.0, -height / 2.0 + height * k as f64 / stacks as f64),
            u: Vector3::x(),
            w: Vector3::y(),
            radius,
        })
        .collect();
    tube(
        &rings,
        sides,
        Point3::new(0.0, 0.0, -height / 2.0),
        Point3::new(0.0, 0.0, height / 2.0),
    )
}

/// One cross-section of a swept tube.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ring {
    pub center: Point3<f64>,
    pub u: Vector3<f64>,
    pub w: Vector3<f64>,
    pub radius: f64,
}

/// Closed tube through `rings`, capped by fans to `start` and `end`.
///
/// Vertex layout: ring-major (`ring * sides + k`), then `start`, then `end`.
pub(crate) fn tube(rings: &[Ring], sides: usize, start: Point3<f64>, end: Point3<f64>) -> Result<Mesh> {
    let mut vertices = Vec::with_capacity(rings.len() * sides + 2);
    for ring in rings {
        for k in 0..sides {
            let phi = std::f64::consts::TAU * k as f64 / sides as f64;
            vertices.push(ring.center + ring.radius * (phi.cos() * ring.u + phi.sin() * ring.w));
        }
    }
    let s = vertices.len();
    vertices.push(start);
    vertices.push(end);
    let e = s + 1;
    let at = |r: usize, k: usize| r * sides + k % sides;
    let mut faces = Vec::new();
    for r in 0..rings.len() - 1 {
        for k in 0..sides {
            let (a, b, c, d) = (at(r, k), at(r, k + 1), at(r + 1, k + 1), at(r + 1, k));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    let last = rings.len() - 1;
    for k in 0..sides {
        faces.push([s, at(0, k + 1), at(0, k)]);
        faces.push([e, at(last, k), at(last, k + 1)]);
    }
    outward(Mesh::new(vertices, faces)?)
}

/// Flips the winding of a consistently wound closed mesh with negative volume.
pub(crate) fn outward(mesh: Mesh) -> Result<Mesh> {
    Ok(if mesh.signed_volume() < 0.0 {
        mesh.flipped()
    } else {
        mesh
    })
}

pub(crate) fn random_rotation(rng: &mut impl Rng) -> Rotation3<f64> {
    // Uniform on SO(3) via a uniformly random unit quaternion (Shoemake).
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let q = nalgebra::Quaternion::new(
        (1.0 - u1).sqrt() * (tau * u2).sin(),
        (1.0 - u1).sqrt() * (tau * u2).cos(),
        u1.sqrt() * (tau * u3).sin(),
        u1.sqrt() * (tau * u3).cos(),
    );
    Unit::new_normalize(q).to_rotation_matrix()
}

pub(crate) fn rotate(mesh: &Mesh, r: &Rotation3<f64>) -> Mesh {
    let vertices = mesh.vertices().iter().map(|v| r * v).collect();
    Mesh::new(vertices, mesh.faces().to_vec()).expect("rotation preserves validity")
}
