//! Minimal Wavefront OBJ support: `v` and `f` records only.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::Mesh;
use crate::error::{Error, Result};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

/// Parses OBJ text. `origin` is only used to label errors.
///
/// Polygons with more than three corners are fan-triangulated from their
/// first corner. Normal and texture references (`f 1/2/3`) are ignored.
pub fn parse_obj(text: &str, origin: impl AsRef<Path>) -> Result<Mesh> {
    let origin = origin.as_ref();
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut vertices = Vec::new();
    // (line number, corner indices) so index errors can name the line.
    let mut polygons: Vec<(usize, Vec<usize>)> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| err(line_no, format!("bad coordinate `{t}`")))
                    })
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(err(line_no, "vertex needs three coordinates".into()));
                }
                if coords.iter().any(|c| !c.is_finite()) {
                    return Err(err(line_no, "non-finite coordinate".into()));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let corners: Vec<usize> = tokens
                    .map(|t| {
                        let idx = t.split('/').next().unwrap_or("");
                        match idx.parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(err(line_no, format!("bad face index `{t}`"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if corners.len() < 3 {
                    return Err(err(line_no, "face needs at least three corners".into()));
                }
                polygons.push((line_no, corners));
            }
            _ => {}
        }
    }

    let mut faces = Vec::new();
    for (line_no, corners) in polygons {
        if let Some(&bad) = corners.iter().find(|&&i| i >= vertices.len()) {
            return Err(err(
                line_no,
                format!("face index {} out of range ({} vertices)", bad + 1, vertices.len()),
            ));
        }
        for k in 1..corners.len() - 1 {
            let tri = [corners[0], corners[k], corners[k + 1]];
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(err(line_no, format!("degenerate face {:?}", tri.map(|i| i + 1))));
            }
            faces.push(tri);
        }
    }
    Mesh::new(vertices, faces)
}

/// Serializes `v` lines then `f` lines with six decimal places.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(mesh.vertex_count() * 40 + mesh.face_count() * 20);
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_obj(mesh)).map_err(|e| Error::io(path, e))
}
