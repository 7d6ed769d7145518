//! Point cloud and mesh files chosen by extension.
//!
//! `.xyz` is whitespace-separated text. `.ply` is read as a mesh when it
//! declares faces and as a point cloud otherwise, and written as binary
//! little-endian vertices. `.obj` and `.off` are always meshes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::xyz::{read_xyz, write_xyz};
use crate::geometry::PointCloud;
use crate::mesh::{parse_mesh, parse_ply_points, sample_mesh, write_ply_points, MeshFormat, SamplingMode, TriangleMesh};

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Cloud(PointCloud),
    Mesh(TriangleMesh),
}

impl Input {
    /// The cloud itself, or `n` surface samples of the mesh.
    pub fn into_cloud(self, n: usize, mode: SamplingMode, seed: u64) -> Result<PointCloud> {
        match self {
            Input::Cloud(pc) => Ok(pc),
            Input::Mesh(m) => sample_mesh(&m, n, mode, seed),
        }
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn unknown(path: &Path) -> Error {
    Error::InvalidArgument(format!(
        "unsupported file extension (expected .xyz, .ply, .obj or .off): {}",
        path.display()
    ))
}

fn ply_has_faces(bytes: &[u8]) -> bool {
    let end = bytes
        .windows(10)
        .position(|w| w == b"end_header")
        .unwrap_or(bytes.len());
    String::from_utf8_lossy(&bytes[..end]).lines().any(|l| {
        let mut t = l.split_whitespace();
        t.next() == Some("element")
            && t.next() == Some("face")
            && t.next().and_then(|c| c.parse::<usize>().ok()).is_some_and(|c| c > 0)
    })
}

pub fn read_input(path: impl AsRef<Path>) -> Result<Input> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "xyz" => read_xyz(path).map(Input::Cloud),
        "ply" => {
            let bytes = std::fs::read(path)?;
            if ply_has_faces(&bytes) {
                parse_mesh(path, MeshFormat::Ply).map(Input::Mesh)
            } else {
                parse_ply_points(&bytes)
                    .map(Input::Cloud)
                    .map_err(|e| e.with_path(path))
            }
        }
        _ => match MeshFormat::from_path(path) {
            Some(format) => parse_mesh(path, format).map(Input::Mesh),
            None => Err(unknown(path)),
        },
    }
}

/// Reads a point cloud file; meshes are rejected.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    match read_input(path)? {
        Input::Cloud(pc) => Ok(pc),
        Input::Mesh(_) => Err(Error::InvalidArgument(format!(
            "expected a point cloud but found a mesh: {}",
            path.display()
        ))),
    }
}

pub fn write_cloud(path: impl AsRef<Path>, pc: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "xyz" => write_xyz(path, pc),
        "ply" => Ok(std::fs::write(path, write_ply_points(pc))?),
        _ => Err(unknown(path)),
    }
}
