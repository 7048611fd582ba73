use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

use super::Mesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedDistanceResult {
    /// Millimeters; negative inside the surface.
    pub distance: f64,
    pub closest_point: Point3<f64>,
    pub face_index: usize,
}

/// A mesh verified to be closed and consistently oriented, so that inside /
/// outside queries are meaningful.
#[derive(Debug, Clone)]
pub struct ClosedMesh<'a> {
    mesh: &'a Mesh,
}

impl<'a> ClosedMesh<'a> {
    /// Checks that every directed edge occurs once and its reverse occurs once.
    pub fn new(mesh: &'a Mesh) -> Result<Self> {
        if mesh.face_count() == 0 {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        let mut directed: HashMap<(usize, usize), u32> = HashMap::with_capacity(mesh.face_count() * 3);
        for &[a, b, c] in mesh.faces() {
            for e in [(a, b), (b, c), (c, a)] {
                *directed.entry(e).or_default() += 1;
            }
        }
        for &[a, b, c] in mesh.faces() {
            for (i, j) in [(a, b), (b, c), (c, a)] {
                let fwd = directed.get(&(i, j)).copied().unwrap_or(0);
                let rev = directed.get(&(j, i)).copied().unwrap_or(0);
                if fwd != 1 || rev != 1 {
                    return Err(Error::NotWatertight(i.min(j), i.max(j)));
                }
            }
        }
        Ok(Self { mesh })
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    /// Generalized winding number: 1 inside, 0 outside, in between only near
    /// the surface of an inexact mesh.
    pub fn winding_number(&self, p: &Point3<f64>) -> f64 {
        let v = self.mesh.vertices();
        let total: f64 = self
            .mesh
            .faces()
            .iter()
            .map(|&[a, b, c]| solid_angle(p, &v[a], &v[b], &v[c]))
            .sum();
        total / (4.0 * PI)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        self.winding_number(p) > 0.5
    }

    /// Closest surface point and distance; ties go to the lowest face index.
    pub fn unsigned_distance(&self, p: &Point3<f64>) -> SignedDistanceResult {
        let v = self.mesh.vertices();
        let mut best = SignedDistanceResult {
            distance: f64::INFINITY,
            closest_point: *p,
            face_index: 0,
        };
        let mut best_sq = f64::INFINITY;
        for (fi, &[a, b, c]) in self.mesh.faces().iter().enumerate() {
            let q = closest_point_on_triangle(p, &v[a], &v[b], &v[c]);
            let d2 = (p - q).norm_squared();
            if d2 < best_sq {
                best_sq = d2;
                best = SignedDistanceResult {
                    distance: 0.0,
                    closest_point: q,
                    face_index: fi,
                };
            }
        }
        best.distance = (p - best.closest_point).norm();
        best
    }

    pub fn signed_distance(&self, p: &Point3<f64>) -> SignedDistanceResult {
        let mut r = self.unsigned_distance(p);
        if self.contains(p) {
            r.distance = -r.distance;
        }
        r
    }
}

/// Validates `mesh` then queries it. Prefer [`ClosedMesh`] for many queries.
pub fn signed_distance(point: &Point3<f64>, mesh: &Mesh) -> Result<SignedDistanceResult> {
    Ok(ClosedMesh::new(mesh)?.signed_distance(point))
}

/// Signed solid angle subtended by triangle `abc` at `p`.
pub fn solid_angle(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    let (a, b, c) = (a - p, b - p, c - p);
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let det = a.dot(&b.cross(&c));
    let denom = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
    2.0 * det.atan2(denom)
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Point3<f64> {
    let ab: Vector3<f64> = b - a;
    let ac: Vector3<f64> = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return a + ab * t;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return a + ac * t;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * t;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}
