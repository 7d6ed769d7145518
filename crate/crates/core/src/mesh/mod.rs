//! Triangle meshes: parsing, writing, surface sampling and exact
//! point-to-surface distance.

mod distance;
mod obj;
mod off;
mod ply;
mod sample;

pub use distance::{closest_point_on_triangle, point_to_mesh_distance, MeshDistance};
pub use obj::{parse_obj, write_obj};
pub use off::{parse_off, write_off};
pub use ply::{parse_ply, parse_ply_points, write_ply, write_ply_points, PlyEncoding};
pub use sample::{sample_mesh, sample_mesh_uniform, sample_surface, SamplingMode, SurfaceSample};

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{cross, norm, sub, Point3};

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= vertices.len() {
                    return Err(Error::FaceIndex {
                        face: fi,
                        index: v as i64,
                        vertex_count: vertices.len(),
                    });
                }
            }
        }
        if let Some(index) = vertices.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFiniteCoordinate { index });
        }
        let mesh = Self { vertices, faces };
        if !(mesh.total_area() > 0.0) {
            return Err(Error::DegenerateMesh);
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn triangle(&self, face: usize) -> [Point3; 3] {
        self.faces[face].map(|v| self.vertices[v])
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Applies `f` to every vertex, keeping the topology.
    pub fn map_vertices(&self, f: impl Fn(Point3) -> Point3) -> Result<Self> {
        Self::new(self.vertices.iter().map(|p| f(*p)).collect(), self.faces.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "obj" => Some(Self::Obj),
            "off" => Some(Self::Off),
            "ply" => Some(Self::Ply),
            _ => None,
        }
    }
}

pub fn parse_mesh(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let parsed = match format {
        MeshFormat::Obj => parse_obj(&bytes),
        MeshFormat::Off => parse_off(&bytes),
        MeshFormat::Ply => parse_ply(&bytes),
    };
    parsed.map_err(|e| e.with_path(path))
}

/// Parses a mesh, picking the format from the file extension.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path).ok_or_else(|| {
        Error::InvalidArgument(format!("unknown mesh extension: {}", path.display()))
    })?;
    parse_mesh(path, format)
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let path = path.as_ref();
    let bytes = match MeshFormat::from_path(path) {
        Some(MeshFormat::Obj) => write_obj(mesh).into_bytes(),
        Some(MeshFormat::Off) => write_off(mesh).into_bytes(),
        Some(MeshFormat::Ply) => write_ply(mesh, PlyEncoding::BinaryLittleEndian),
        None => {
            return Err(Error::InvalidArgument(format!(
                "unknown mesh extension: {}",
                path.display()
            )))
        }
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Fan-triangulates a polygon given as vertex indices.
pub(crate) fn fan(poly: &[usize]) -> impl Iterator<Item = [usize; 3]> + '_ {
    (1..poly.len().saturating_sub(1)).map(move |i| [poly[0], poly[i], poly[i + 1]])
}

/// Resolves raw face indices against the vertex count, reporting the face
/// number on failure.
pub(crate) fn check_face(face: usize, raw: &[i64], vertex_count: usize) -> Result<Vec<usize>> {
    raw.iter()
        .map(|&i| {
            if i >= 0 && (i as usize) < vertex_count {
                Ok(i as usize)
            } else {
                Err(Error::FaceIndex {
                    face,
                    index: i,
                    vertex_count,
                })
            }
        })
        .collect()
}
