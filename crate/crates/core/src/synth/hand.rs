//! A five-fingered capsule-and-palm hand with labeled contact vertices and a
//! 21-joint regressor, expressed in wrist coordinates (wrist joint at origin).
//!
//! Layout: the palm spans +y from the wrist, the palmar side faces +z, and
//! fingers flex toward +z. The thumb sits on the +x side.

use nalgebra::{Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::primitives::{tube, Ring};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

pub const JOINT_COUNT: usize = 21;

const PALM_SEMI_AXES: [f64; 3] = [40.0, 45.0, 13.0];
const PALM_RINGS: usize = 9;
const PALM_SEGMENTS: usize = 12;
const FINGER_SIDES: usize = 8;
const RINGS_PER_PHALANX: usize = 4;

/// Finger articulation. Every field lies in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandPose {
    /// Flexion per finger: thumb, index, middle, ring, pinky.
    pub curl: [f64; 5],
    /// Lateral fan of the four fingers.
    pub spread: f64,
    /// How far the thumb swings toward the palm.
    pub thumb_opposition: f64,
}

impl Default for HandPose {
    fn default() -> Self {
        Self {
            curl: [0.3; 5],
            spread: 0.3,
            thumb_opposition: 0.5,
        }
    }
}

impl HandPose {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if self.curl.iter().all(|&c| ok(c)) && ok(self.spread) && ok(self.thumb_opposition) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "hand pose fields must lie in [0, 1]: {self:?}"
            )))
        }
    }
}

/// Row-sparse linear map from mesh vertices to joints. Rows are convex
/// combinations (nonnegative, summing to one).
#[derive(Debug, Clone, PartialEq)]
pub struct JointRegressor {
    n_vertices: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl JointRegressor {
    pub fn new(n_vertices: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::InvalidParameter(format!("regressor row {r} is empty")));
            }
            let mut sum = 0.0;
            for &(c, w) in row {
                if c >= n_vertices {
                    return Err(Error::IndexOutOfRange {
                        what: "regressor column",
                        index: c,
                        len: n_vertices,
                    });
                }
                if w.is_nan() || w < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "regressor row {r} has negative weight {w}"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("regressor row {r} sums to {sum}")));
            }
        }
        Ok(Self { n_vertices, rows })
    }

    /// Uniform average over each index group.
    pub fn from_groups(n_vertices: usize, groups: &[Vec<usize>]) -> Result<Self> {
        let rows = groups
            .iter()
            .map(|g| {
                let w = 1.0 / g.len() as f64;
                g.iter().map(|&i| (i, w)).collect()
            })
            .collect();
        Self::new(n_vertices, rows)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_joints(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&(c, w)| (r, c, w)))
            .collect()
    }

    pub fn from_triplets(n_rows: usize, n_vertices: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows = vec![Vec::new(); n_rows];
        for &(r, c, w) in triplets {
            rows.get_mut(r)
                .ok_or(Error::IndexOutOfRange {
                    what: "regressor row",
                    index: r,
                    len: n_rows,
                })?
                .push((c, w));
        }
        Self::new(n_vertices, rows)
    }

    pub fn regress(&self, vertices: &[Point3<f64>]) -> Vec<Point3<f64>> {
        self.rows
            .iter()
            .map(|row| {
                Point3::from(
                    row.iter()
                        .fold(Vector3::zeros(), |acc, &(i, w)| acc + vertices[i].coords * w),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct HandModel {
    pub mesh: Mesh,
    pub contact_indices: Vec<usize>,
    pub regressor: JointRegressor,
}

struct FingerSpec {
    base: Vector3<f64>,
    direction: Vector3<f64>,
    palmar: Vector3<f64>,
    radius: f64,
    lengths: [f64; 3],
    max_flexion_deg: [f64; 3],
}

/// Builds the hand for `pose`. Geometry is fully determined by the pose;
/// `_seed` is accepted for interface symmetry with the other generators.
pub fn make_hand(pose: &HandPose, _seed: u64) -> Result<HandModel> {
    pose.validate()?;
    let [pa, pb, pc] = PALM_SEMI_AXES;
    let palm_center = Vector3::new(0.0, pb, 0.0);

    let mut parts = Vec::new();
    let mut contact = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(JOINT_COUNT);

    // Palm: UV ellipsoid with poles on the y axis; pole 0 faces the wrist.
    let palm = {
        let mut vertices = vec![Point3::from(palm_center - Vector3::new(0.0, pb, 0.0))];
        for i in 1..=PALM_RINGS {
            let theta = std::f64::consts::PI * i as f64 / (PALM_RINGS + 1) as f64;
            for k in 0..PALM_SEGMENTS {
                let phi = std::f64::consts::TAU * k as f64 / PALM_SEGMENTS as f64;
                let local = Vector3::new(
                    pa * theta.sin() * phi.cos(),
                    -pb * theta.cos(),
                    pc * theta.sin() * phi.sin(),
                );
                vertices.push(Point3::from(palm_center + local));
                if (3..=7).contains(&i) && phi.sin() > 0.45 {
                    contact.push(vertices.len() - 1);
                }
            }
        }
        vertices.push(Point3::from(palm_center + Vector3::new(0.0, pb, 0.0)));
        let ring = |i: usize, k: usize| 1 + (i - 1) * PALM_SEGMENTS + k % PALM_SEGMENTS;
        let top = vertices.len() - 1;
        let mut faces = Vec::new();
        for k in 0..PALM_SEGMENTS {
            faces.push([0, ring(1, k), ring(1, k + 1)]);
            faces.push([top, ring(PALM_RINGS, k + 1), ring(PALM_RINGS, k)]);
        }
        for i in 1..PALM_RINGS {
            for k in 0..PALM_SEGMENTS {
                let (a, b, c, d) = (ring(i, k), ring(i, k + 1), ring(i + 1, k + 1), ring(i + 1, k));
                faces.push([a, c, b]);
                faces.push([a, d, c]);
            }
        }
        groups.push((0..PALM_SEGMENTS).map(|k| ring(1, k)).collect());
        super::primitives::outward(Mesh::new(vertices, faces)?)?
    };
    let mut offset = palm.vertex_count();
    parts.push(palm);

    for (f, spec) in finger_specs(pose).iter().enumerate() {
        let (mesh, body_rings, tip_contacts) = build_finger(spec, pose.curl[f])?;
        for r in [0, RINGS_PER_PHALANX, 2 * RINGS_PER_PHALANX, 3 * RINGS_PER_PHALANX] {
            let ring = body_rings + r;
            groups.push((0..FINGER_SIDES).map(|k| offset + ring * FINGER_SIDES + k).collect());
        }
        contact.extend(tip_contacts.into_iter().map(|i| offset + i));
        offset += mesh.vertex_count();
        parts.push(mesh);
    }

    let mesh = Mesh::merge(&parts);
    let regressor = JointRegressor::from_groups(mesh.vertex_count(), &groups)?;
    // Shift so the wrist joint is the origin.
    let wrist = regressor.regress(mesh.vertices())[0];
    let mesh = mesh.translated(-wrist.coords);
    contact.sort_unstable();
    contact.dedup();
    Ok(HandModel {
        mesh,
        contact_indices: contact,
        regressor,
    })
}

fn finger_specs(pose: &HandPose) -> Vec<FingerSpec> {
    let y_base = 2.0 * PALM_SEMI_AXES[1] - 8.0;
    let z = Vector3::z();
    let rot_z = |deg: f64| Rotation3::from_axis_angle(&Vector3::z_axis(), deg.to_radians());

    let thumb_dir = Vector3::new(0.9, 1.0, 0.25 + 0.5 * pose.thumb_opposition).normalize();
    let thumb_palmar = Vector3::new(-0.4 - 0.6 * pose.thumb_opposition, 0.0, 1.0).normalize();
    let mut specs = vec![FingerSpec {
        base: Vector3::new(34.0, 30.0, 4.0),
        direction: thumb_dir,
        palmar: thumb_palmar,
        radius: 10.0,
        lengths: [30.0, 28.0, 24.0],
        max_flexion_deg: [35.0, 45.0, 50.0],
    }];

    // index, middle, ring, pinky
    let xs = [26.0, 8.5, -9.0, -26.0];
    let fan = [-12.0, -4.0, 4.0, 12.0];
    let radii = [9.0, 9.0, 8.5, 7.5];
    let lengths = [
        [42.0, 26.0, 20.0],
        [46.0, 29.0, 21.0],
        [43.0, 27.0, 20.0],
        [34.0, 20.0, 18.0],
    ];
    for i in 0..4 {
        specs.push(FingerSpec {
            base: Vector3::new(xs[i], y_base - (i as f64 - 1.5).abs() * 3.0, 0.0),
            direction: rot_z(fan[i] * pose.spread) * Vector3::y(),
            palmar: z,
            radius: radii[i],
            lengths: lengths[i],
            max_flexion_deg: [65.0, 85.0, 60.0],
        });
    }
    specs
}

/// Returns the finger tube, the index of its first body ring, and the
/// finger-local indices of palmar-facing fingertip vertices.
fn build_finger(spec: &FingerSpec, curl: f64) -> Result<(Mesh, usize, Vec<usize>)> {
    let d0 = spec.direction.normalize();
    // Flexion axis: perpendicular to the finger, tipping it toward `palmar`.
    let axis = Unit::new_normalize(d0.cross(&spec.palmar));

    let mut dirs = Vec::with_capacity(3);
    let mut angle = 0.0;
    for s in 0..3 {
        angle += curl * spec.max_flexion_deg[s].to_radians();
        dirs.push(Rotation3::from_axis_angle(&axis, angle) * d0);
    }
    let mut joints = vec![Point3::from(spec.base)];
    for s in 0..3 {
        joints.push(joints[s] + dirs[s] * spec.lengths[s]);
    }

    let frame = |d: Vector3<f64>| {
        let u = axis.into_inner();
        (u, d.cross(&u))
    };
    let r = spec.radius;
    let mut rings = Vec::new();
    let (u0, w0) = frame(dirs[0]);
    rings.push(Ring {
        center: joints[0] - dirs[0] * (0.5 * r),
        u: u0,
        w: w0,
        radius: 0.87 * r,
    });
    let body_start = rings.len();
    for s in 0..3 {
        for k in 0..RINGS_PER_PHALANX {
            let t = k as f64 / RINGS_PER_PHALANX as f64;
            let d = if k == 0 && s > 0 {
                (dirs[s - 1] + dirs[s]).normalize()
            } else {
                dirs[s]
            };
            let (u, w) = frame(d);
            rings.push(Ring {
                center: joints[s] + (joints[s + 1] - joints[s]) * t,
                u,
                w,
                // Slight taper toward the tip.
                radius: r * (1.0 - 0.06 * (s as f64 + t)),
            });
        }
    }
    let tip_dir = dirs[2];
    let (u, w) = frame(tip_dir);
    let tip_radius = r * 0.82;
    rings.push(Ring {
        center: joints[3],
        u,
        w,
        radius: tip_radius,
    });
    rings.push(Ring {
        center: joints[3] + tip_dir * (0.5 * tip_radius),
        u,
        w,
        radius: 0.87 * tip_radius,
    });
    rings.push(Ring {
        center: joints[3] + tip_dir * (0.87 * tip_radius),
        u,
        w,
        radius: 0.5 * tip_radius,
    });
    let start = joints[0] - dirs[0] * r;
    let end = joints[3] + tip_dir * tip_radius;
    let mesh = tube(&rings, FINGER_SIDES, start, end)?;

    // Palmar side of the distal phalanx and the cap.
    let palmar_dir = axis.cross(&tip_dir);
    let distal_first = body_start + 2 * RINGS_PER_PHALANX + 2;
    let mut tips = Vec::new();
    for (ring, spec) in rings.iter().enumerate().skip(distal_first) {
        for k in 0..FINGER_SIDES {
            let idx = ring * FINGER_SIDES + k;
            let radial = mesh.vertices()[idx] - spec.center;
            if radial.dot(&palmar_dir) > 0.2 * spec.radius {
                tips.push(idx);
            }
        }
    }
    tips.push(rings.len() * FINGER_SIDES + 1);
    Ok((mesh, body_start, tips))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ClosedMesh;

    #[test]
    fn default_hand_contract() {
        let hand = make_hand(&HandPose::default(), 0).unwrap();
        let n = hand.mesh.vertex_count();
        assert!((700..=856).contains(&n), "vertex count {n}");
        ClosedMesh::new(&hand.mesh).unwrap();
        assert_eq!(hand.regressor.n_joints(), JOINT_COUNT);
        assert!(!hand.contact_indices.is_empty());
        assert!(hand.contact_indices.iter().all(|&i| i < n));
    }

    #[test]
    fn wrist_joint_is_origin_and_ring_mean() {
        let hand = make_hand(&HandPose::default(), 0).unwrap();
        let joints = hand.regressor.regress(hand.mesh.vertices());
        assert_eq!(joints.len(), 21);
        assert!(joints[0].coords.norm() < 1e-9);
        // Wrist row averages the first palm ring (vertices 1..=12).
        let ring: Vec<usize> = (1..=PALM_SEGMENTS).collect();
        let mean = ring
            .iter()
            .fold(Vector3::zeros(), |a, &i| a + hand.mesh.vertices()[i].coords)
            / ring.len() as f64;
        assert!((mean - joints[0].coords).norm() < 1e-9);
    }

    #[test]
    fn contacts_are_palmar_or_tips() {
        let hand = make_hand(&HandPose::default(), 0).unwrap();
        let joints = hand.regressor.regress(hand.mesh.vertices());
        // Every contact vertex is either on the palm's front face or near a fingertip joint.
        let tips: Vec<_> = [4, 8, 12, 16, 20].iter().map(|&j| joints[j]).collect();
        for &i in &hand.contact_indices {
            let v = hand.mesh.vertices()[i];
            let near_tip = tips.iter().any(|t| (v - t).norm() < 16.0);
            let palm_front = i < 1 + PALM_RINGS * PALM_SEGMENTS && v.z > 0.0;
            assert!(near_tip || palm_front, "vertex {i} at {v:?}");
        }
    }

    #[test]
    fn regressor_validation() {
        assert!(JointRegressor::new(3, vec![vec![(0, 0.5), (1, 0.4)]]).is_err());
        assert!(JointRegressor::new(3, vec![vec![(5, 1.0)]]).is_err());
        assert!(JointRegressor::new(3, vec![vec![(0, 1.5), (1, -0.5)]]).is_err());
        let r = JointRegressor::new(3, vec![vec![(0, 0.25), (2, 0.75)]]).unwrap();
        let back = JointRegressor::from_triplets(1, 3, &r.triplets()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn pose_out_of_range() {
        let pose = HandPose {
            spread: 1.5,
            ..HandPose::default()
        };
        assert!(make_hand(&pose, 0).is_err());
    }
}
