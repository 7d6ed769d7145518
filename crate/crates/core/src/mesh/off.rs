//! Object File Format: `OFF` header, counts, vertices, polygon faces.

use std::fmt::Write as _;

use super::{check_face, fan, TriangleMesh};
use crate::error::{Error, Result};
use crate::geometry::xyz::format_real;

pub fn parse_off(bytes: &[u8]) -> Result<TriangleMesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(0, e.to_string()))?;
    // Non-empty, comment-stripped lines with their 1-based numbers.
    let mut lines = text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    });

    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let header_rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::parse(hline, "missing OFF header"))?
        .trim();
    let (cline, counts) = if header_rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| Error::parse(hline, "missing counts line"))?
    } else {
        (hline, header_rest)
    };
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(cline, "invalid counts"))?;
    if counts.len() < 2 {
        return Err(Error::parse(cline, "expected vertex and face counts"));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(cline, "unexpected end of file in vertices"))?;
        let c: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(ln, "invalid vertex coordinate"))?;
        if c.len() < 3 {
            return Err(Error::parse(ln, "vertex needs three coordinates"));
        }
        vertices.push([c[0], c[1], c[2]]);
    }

    let mut faces = Vec::with_capacity(nf);
    for fi in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(cline, "unexpected end of file in faces"))?;
        let mut tok = l.split_whitespace();
        let n: usize = tok
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(ln, "invalid face vertex count"))?;
        let raw: Vec<i64> = tok
            .take(n)
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(ln, "invalid face index"))?;
        if raw.len() != n || n < 3 {
            return Err(Error::parse(ln, format!("face needs {n} >= 3 indices")));
        }
        let poly = check_face(fi, &raw, vertices.len())?;
        faces.extend(fan(&poly));
    }
    TriangleMesh::new(vertices, faces)
}

pub fn write_off(mesh: &TriangleMesh) -> String {
    let mut s = String::from("OFF\n");
    let _ = writeln!(s, "{} {} 0", mesh.vertices().len(), mesh.faces().len());
    for p in mesh.vertices() {
        let _ = writeln!(
            s,
            "{} {} {}",
            format_real(p[0]),
            format_real(p[1]),
            format_real(p[2])
        );
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}
