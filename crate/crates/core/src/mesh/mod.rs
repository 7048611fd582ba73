//! Indexed triangle meshes and the geometric queries built on them.
//!
//! Coordinates are millimeters throughout. Volumes computed here are in mm³;
//! callers convert to cm³ where a report asks for it.

mod distance;
mod obj;
mod sample;

use std::collections::BTreeSet;

use nalgebra::{Point3, Vector3};
use ndarray::Array2;

use crate::error::{Error, Result};

pub use distance::{closest_point_on_triangle, signed_distance, solid_angle, ClosedMesh, SignedDistanceResult};
pub use obj::{load_mesh, parse_obj, save_mesh, write_obj};
pub use sample::SurfaceSample;

/// Triangle mesh with validated indices and finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (i, v) in vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidMesh(format!("vertex {i} has a non-finite coordinate")));
            }
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&idx| idx >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex {bad} but there are {} vertices",
                    vertices.len()
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} is degenerate: {f:?}")));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Same faces, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "replacement has {} vertices, mesh has {}",
                vertices.len(),
                self.vertices.len()
            )));
        }
        Mesh::new(vertices, self.faces.clone())
    }

    /// Rebuilds the mesh from an `n x 3` coordinate matrix.
    pub fn with_vertex_matrix(&self, coords: &Array2<f64>) -> Result<Self> {
        if coords.ncols() != 3 {
            return Err(Error::InvalidMesh(format!(
                "coordinate matrix has {} columns",
                coords.ncols()
            )));
        }
        let vertices = coords
            .rows()
            .into_iter()
            .map(|r| Point3::new(r[0], r[1], r[2]))
            .collect();
        self.with_vertices(vertices)
    }

    /// Vertex coordinates as an `n x 3` matrix.
    pub fn vertex_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.vertices.len(), 3));
        for (mut row, v) in m.rows_mut().into_iter().zip(&self.vertices) {
            row[0] = v.x;
            row[1] = v.y;
            row[2] = v.z;
        }
        m
    }

    pub fn translated(&self, t: Vector3<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v + t).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Faces with reversed winding.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    pub fn centroid(&self) -> Point3<f64> {
        if self.vertices.is_empty() {
            return Point3::origin();
        }
        let sum = self.vertices.iter().fold(Vector3::zeros(), |acc, v| acc + v.coords);
        Point3::from(sum / self.vertices.len() as f64)
    }

    /// Axis-aligned bounds `(min, max)`; `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))),
        )
    }

    /// Signed volume by the divergence theorem (mm³). Positive for closed,
    /// outward-wound meshes.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.faces[face];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Unique undirected vertex pairs `(i, j)` with `i < j` that share a face.
    pub fn vertex_adjacency(&self) -> Vec<(usize, usize)> {
        let mut edges = BTreeSet::new();
        for &[a, b, c] in &self.faces {
            for (i, j) in [(a, b), (b, c), (c, a)] {
                edges.insert((i.min(j), i.max(j)));
            }
        }
        edges.into_iter().collect()
    }

    /// Neighbor lists derived from [`Mesh::vertex_adjacency`], ascending.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (i, j) in self.vertex_adjacency() {
            out[i].push(j);
            out[j].push(i);
        }
        for list in &mut out {
            list.sort_unstable();
        }
        out
    }

    /// Concatenates meshes, offsetting face indices.
    pub fn merge(parts: &[Mesh]) -> Mesh {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for part in parts {
            let base = vertices.len();
            vertices.extend_from_slice(&part.vertices);
            faces.extend(part.faces.iter().map(|f| f.map(|i| i + base)));
        }
        Mesh { vertices, faces }
    }
}
