//! Turns ground-truth meshes into plausible "initial estimates": a rigid
//! offset plus spatially smooth vertex noise. Topology is never touched.

use nalgebra::{Point3, Rotation3, Unit, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Control points per axis of the noise lattice.
const LATTICE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Per-axis standard deviation of the lattice noise (mm).
    pub vertex_sigma: f64,
    /// Magnitude of the rigid translation (mm), in a uniformly random direction.
    pub translation: f64,
    /// Maximum rotation about the mesh centroid (degrees), uniform in `[-r, r]`.
    pub rotation_deg: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            vertex_sigma: 3.0,
            translation: 10.0,
            rotation_deg: 0.0,
        }
    }
}

impl NoiseParams {
    pub fn zero() -> Self {
        Self {
            vertex_sigma: 0.0,
            translation: 0.0,
            rotation_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.vertex_sigma) && ok(self.translation) && ok(self.rotation_deg) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "noise parameters must be finite and non-negative: {self:?}"
            )))
        }
    }
}

/// Perturbs one mesh. All-zero noise returns bit-identical coordinates.
pub fn perturb_mesh(mesh: &Mesh, noise: &NoiseParams, seed: u64) -> Result<Mesh> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let dir = random_unit(&mut rng);
    let translation = dir * noise.translation;
    let axis = Unit::new_normalize(random_unit(&mut rng));
    let angle = noise.rotation_deg.to_radians() * rng.random_range(-1.0..=1.0);
    // v' = v + (R - I)(v - c) keeps v exact when R = I.
    let delta_rot = Rotation3::from_axis_angle(&axis, angle).into_inner() - nalgebra::Matrix3::identity();
    let center = mesh.centroid();

    let lattice = NoiseLattice::sample(mesh, noise.vertex_sigma, &mut rng);
    let vertices = mesh
        .vertices()
        .iter()
        .map(|v| {
            let offset = delta_rot * (v - center) + translation + lattice.at(v);
            v + offset
        })
        .collect();
    mesh.with_vertices(vertices)
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Gaussian displacements on a `LATTICE³` grid spanning the mesh bounds,
/// trilinearly interpolated.
struct NoiseLattice {
    lo: Point3<f64>,
    step: Vector3<f64>,
    values: Vec<Vector3<f64>>,
}

impl NoiseLattice {
    fn sample(mesh: &Mesh, sigma: f64, rng: &mut impl Rng) -> Self {
        let (lo, hi) = mesh.bounds().unwrap_or((Point3::origin(), Point3::origin()));
        let span = (hi - lo).map(|s| s.max(1e-6));
        let step = span / (LATTICE - 1) as f64;
        let values = (0..LATTICE.pow(3))
            .map(|_| {
                let g: [f64; 3] = [
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                ];
                Vector3::from(g) * sigma
            })
            .collect();
        Self { lo, step, values }
    }

    fn at(&self, p: &Point3<f64>) -> Vector3<f64> {
        let mut idx = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let t = ((p[a] - self.lo[a]) / self.step[a]).clamp(0.0, (LATTICE - 1) as f64);
            let i = (t.floor() as usize).min(LATTICE - 2);
            idx[a] = i;
            frac[a] = t - i as f64;
        }
        let mut out = Vector3::zeros();
        for corner in 0..8 {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..3 {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * LATTICE + idx[a] + bit;
            }
            out += self.values[flat] * w;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_hand, HandPose};

    #[test]
    fn zero_noise_is_identity() {
        let hand = make_hand(&HandPose::default(), 0).unwrap().mesh;
        let out = perturb_mesh(&hand, &NoiseParams::zero(), 99).unwrap();
        assert_eq!(out, hand);
    }

    #[test]
    fn deterministic_and_topology_preserving() {
        let hand = make_hand(&HandPose::default(), 0).unwrap().mesh;
        let a = perturb_mesh(&hand, &NoiseParams::default(), 5).unwrap();
        let b = perturb_mesh(&hand, &NoiseParams::default(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.faces(), hand.faces());
        assert_ne!(a, perturb_mesh(&hand, &NoiseParams::default(), 6).unwrap());
    }

    #[test]
    fn mean_displacement_in_expected_band() {
        // Monte-Carlo over the generator's own distribution.
        let hand = make_hand(&HandPose::default(), 0).unwrap().mesh;
        let noise = NoiseParams {
            vertex_sigma: 3.0,
            translation: 10.0,
            rotation_deg: 0.0,
        };
        let mut total = 0.0;
        for seed in 0..100 {
            let p = perturb_mesh(&hand, &noise, seed).unwrap();
            let mean: f64 = hand
                .vertices()
                .iter()
                .zip(p.vertices())
                .map(|(a, b)| (a - b).norm())
                .sum::<f64>()
                / hand.vertex_count() as f64;
            total += mean;
        }
        let mean = total / 100.0;
        assert!((8.0..=16.0).contains(&mean), "mean displacement {mean}");
    }

    #[test]
    fn rejects_negative_sigma() {
        let hand = make_hand(&HandPose::default(), 0).unwrap().mesh;
        let noise = NoiseParams {
            vertex_sigma: -1.0,
            ..NoiseParams::default()
        };
        assert!(perturb_mesh(&hand, &noise, 0).is_err());
    }
}
