use nalgebra::Point3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Mesh;
use crate::error::{Error, Result};

/// Fixed area-uniform surface sample expressed as barycentric weights, so the
/// same sample can be re-evaluated on any mesh sharing the face list.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSample {
    pub faces: Vec<usize>,
    pub barycentric: Vec<[f64; 3]>,
}

impl SurfaceSample {
    pub fn draw(mesh: &Mesh, count: usize, seed: u64) -> Result<Self> {
        if mesh.face_count() == 0 || count == 0 {
            return Err(Error::InvalidParameter(
                "surface sampling needs faces and a positive count".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(mesh.face_count());
        let mut total = 0.0;
        for f in 0..mesh.face_count() {
            total += mesh.face_area(f);
            cumulative.push(total);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut faces = Vec::with_capacity(count);
        let mut barycentric = Vec::with_capacity(count);
        for _ in 0..count {
            let target = rng.random::<f64>() * total;
            let f = cumulative.partition_point(|&c| c < target).min(mesh.face_count() - 1);
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            faces.push(f);
            barycentric.push([1.0 - s, s * (1.0 - r2), s * r2]);
        }
        Ok(Self { faces, barycentric })
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn points(&self, mesh: &Mesh) -> Vec<Point3<f64>> {
        self.rows(mesh)
            .into_iter()
            .map(|row| {
                Point3::from(row.iter().fold(nalgebra::Vector3::zeros(), |acc, &(i, w)| {
                    acc + mesh.vertices()[i].coords * w
                }))
            })
            .collect()
    }

    /// Sparse rows `(vertex, weight)` mapping mesh vertices to sample points.
    pub fn rows(&self, mesh: &Mesh) -> Vec<Vec<(usize, f64)>> {
        self.faces
            .iter()
            .zip(&self.barycentric)
            .map(|(&f, b)| {
                let tri = mesh.faces()[f];
                (0..3).map(|k| (tri[k], b[k])).collect()
            })
            .collect()
    }
}
