//! Wavefront OBJ: `v` and `f` records only.

use std::fmt::Write as _;

use super::{check_face, fan, TriangleMesh};
use crate::error::{Error, Result};
use crate::geometry::xyz::format_real;

pub fn parse_obj(bytes: &[u8]) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(0, e.to_string()))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut polygons = 0usize;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut p = [0.0f64; 3];
                for c in p.iter_mut() {
                    let f = tok
                        .next()
                        .ok_or_else(|| Error::parse(lineno, "vertex needs three coordinates"))?;
                    *c = f
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("invalid number `{f}`")))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut raw = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("invalid face index `{t}`")))?;
                    raw.push(match idx {
                        0 => -1,
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    });
                }
                if raw.len() < 3 {
                    return Err(Error::parse(lineno, "face needs at least three vertices"));
                }
                let poly = check_face(polygons, &raw, vertices.len())?;
                faces.extend(fan(&poly));
                polygons += 1;
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for p in mesh.vertices() {
        let _ = writeln!(
            s,
            "v {} {} {}",
            format_real(p[0]),
            format_real(p[1]),
            format_real(p[2])
        );
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures::QUAD_OBJ;

    #[test]
    fn quad_becomes_two_triangles() {
        let m = parse_obj(QUAD_OBJ.as_bytes()).unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_indices_are_relative() {
        let m = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn errors_name_line_and_face() {
        let err = parse_obj(b"v 0 0 0\nv 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 9\n").unwrap_err();
        assert!(matches!(err, Error::FaceIndex { face: 1, index: 8, .. }), "{err}");
        assert!(parse_obj(b"v 0 0 0\nf 1 a 2\n").is_err());
    }

    #[test]
    fn round_trip() {
        let m = parse_obj(QUAD_OBJ.as_bytes()).unwrap();
        assert_eq!(parse_obj(write_obj(&m).as_bytes()).unwrap(), m);
    }
}
