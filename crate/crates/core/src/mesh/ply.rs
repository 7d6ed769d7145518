//! Stanford PLY, ASCII and binary little-endian.

use std::io::Write as _;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{check_face, fan, TriangleMesh};
use crate::error::{Error, Result};
use crate::geometry::xyz::format_real;
use crate::geometry::{Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Source of property values for either body encoding.
trait Body {
    fn begin_record(&mut self) -> Result<()>;
    fn value(&mut self, ty: Scalar) -> Result<f64>;
    fn line(&self) -> usize;
}

struct AsciiBody<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    tokens: std::vec::IntoIter<&'a str>,
    first_line: usize,
    current: usize,
}

impl Body for AsciiBody<'_> {
    fn begin_record(&mut self) -> Result<()> {
        loop {
            let (i, l) = self
                .lines
                .next()
                .ok_or_else(|| Error::parse(self.current, "unexpected end of file"))?;
            self.current = self.first_line + i;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if !toks.is_empty() {
                self.tokens = toks.into_iter();
                return Ok(());
            }
        }
    }

    fn value(&mut self, _ty: Scalar) -> Result<f64> {
        let t = self
            .tokens
            .next()
            .ok_or_else(|| Error::parse(self.current, "record has too few values"))?;
        t.parse()
            .map_err(|_| Error::parse(self.current, format!("invalid number `{t}`")))
    }

    fn line(&self) -> usize {
        self.current
    }
}

struct BinaryBody<'a> {
    cursor: &'a [u8],
    header_lines: usize,
}

impl Body for BinaryBody<'_> {
    fn begin_record(&mut self) -> Result<()> {
        Ok(())
    }

    fn value(&mut self, ty: Scalar) -> Result<f64> {
        let c = &mut self.cursor;
        let v = match ty {
            Scalar::I8 => c.read_i8().map(f64::from),
            Scalar::U8 => c.read_u8().map(f64::from),
            Scalar::I16 => c.read_i16::<LittleEndian>().map(f64::from),
            Scalar::U16 => c.read_u16::<LittleEndian>().map(f64::from),
            Scalar::I32 => c.read_i32::<LittleEndian>().map(f64::from),
            Scalar::U32 => c.read_u32::<LittleEndian>().map(f64::from),
            Scalar::F32 => c.read_f32::<LittleEndian>().map(f64::from),
            Scalar::F64 => c.read_f64::<LittleEndian>(),
        };
        v.map_err(|_| Error::parse(self.header_lines, "binary body truncated"))
    }

    fn line(&self) -> usize {
        self.header_lines
    }
}

struct PlyData {
    vertices: Vec<Point3>,
    polygons: Vec<(usize, Vec<i64>)>,
}

fn parse_header(bytes: &[u8]) -> Result<(PlyEncoding, Vec<Element>, usize, usize)> {
    const END: &[u8] = b"end_header";
    let pos = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::parse(1, "missing end_header"))?;
    let mut body = pos + END.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) == Some(&b'\n') {
        body += 1;
    }
    let header = std::str::from_utf8(&bytes[..pos]).map_err(|e| Error::parse(1, e.to_string()))?;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut nlines = 0;
    for (i, line) in header.lines().enumerate() {
        nlines = i + 1;
        let ln = i + 1;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["ply"] if i == 0 => {}
            _ if i == 0 => return Err(Error::parse(1, "missing ply magic")),
            ["format", f, _] => {
                encoding = Some(match *f {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => {
                        return Err(Error::parse(ln, format!("unsupported format `{other}`")))
                    }
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse(ln, "invalid element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", c, it, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(ln, "property before element"))?;
                let count = Scalar::parse(c).ok_or_else(|| Error::parse(ln, "bad list type"))?;
                let item = Scalar::parse(it).ok_or_else(|| Error::parse(ln, "bad list type"))?;
                el.props.push(Property::List {
                    name: name.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(ln, "property before element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| Error::parse(ln, format!("unknown type `{ty}`")))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            _ => return Err(Error::parse(ln, format!("unrecognized header line `{line}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::parse(2, "missing format line"))?;
    Ok((encoding, elements, body, nlines + 1))
}

fn read_body(elements: &[Element], body: &mut dyn Body) -> Result<PlyData> {
    let mut data = PlyData {
        vertices: Vec::new(),
        polygons: Vec::new(),
    };
    for el in elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        if is_vertex {
            for axis in ["x", "y", "z"] {
                if !el
                    .props
                    .iter()
                    .any(|p| matches!(p, Property::Scalar { name, .. } if name == axis))
                {
                    return Err(Error::parse(0, format!("vertex element lacks `{axis}`")));
                }
            }
        }
        for _ in 0..el.count {
            body.begin_record()?;
            let mut p = [0.0; 3];
            let mut poly = None;
            for prop in &el.props {
                match prop {
                    Property::Scalar { name, ty } => {
                        let v = body.value(*ty)?;
                        if is_vertex {
                            match name.as_str() {
                                "x" => p[0] = v,
                                "y" => p[1] = v,
                                "z" => p[2] = v,
                                _ => {}
                            }
                        }
                    }
                    Property::List { name, count, item } => {
                        let n = body.value(*count)?;
                        if !(n >= 0.0 && n.fract() == 0.0) {
                            return Err(Error::parse(body.line(), "invalid list length"));
                        }
                        let items = (0..n as usize)
                            .map(|_| body.value(*item))
                            .collect::<Result<Vec<_>>>()?;
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            poly = Some((body.line(), items.iter().map(|&v| v as i64).collect()));
                        }
                    }
                }
            }
            if is_vertex {
                if !p.iter().all(|c: &f64| c.is_finite()) {
                    return Err(Error::parse(body.line(), "non-finite vertex coordinate"));
                }
                data.vertices.push(p);
            }
            if let Some(poly) = poly {
                data.polygons.push(poly);
            }
        }
    }
    Ok(data)
}

fn parse_any(bytes: &[u8]) -> Result<PlyData> {
    let (encoding, elements, body_start, header_lines) = parse_header(bytes)?;
    let rest = &bytes[body_start..];
    match encoding {
        PlyEncoding::Ascii => {
            let text = std::str::from_utf8(rest).map_err(|e| Error::parse(header_lines, e.to_string()))?;
            let mut body = AsciiBody {
                lines: text.lines().enumerate(),
                tokens: Vec::new().into_iter(),
                first_line: header_lines + 1,
                current: header_lines,
            };
            read_body(&elements, &mut body)
        }
        PlyEncoding::BinaryLittleEndian => {
            let mut body = BinaryBody {
                cursor: rest,
                header_lines,
            };
            read_body(&elements, &mut body)
        }
    }
}

pub fn parse_ply(bytes: &[u8]) -> Result<TriangleMesh> {
    let data = parse_any(bytes)?;
    let mut faces = Vec::new();
    for (fi, (line, raw)) in data.polygons.iter().enumerate() {
        if raw.len() < 3 {
            return Err(Error::parse(*line, "face needs at least three vertices"));
        }
        let poly = check_face(fi, raw, data.vertices.len())?;
        faces.extend(fan(&poly));
    }
    TriangleMesh::new(data.vertices, faces)
}

/// Reads only the vertex element, for point cloud files.
pub fn parse_ply_points(bytes: &[u8]) -> Result<PointCloud> {
    let data = parse_any(bytes)?;
    if data.vertices.is_empty() {
        return Err(Error::parse(0, "file contains no vertices"));
    }
    PointCloud::new(data.vertices)
}

fn header(encoding: PlyEncoding, vertices: usize, faces: Option<usize>) -> String {
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let mut h = format!(
        "ply\nformat {format} 1.0\nelement vertex {vertices}\nproperty double x\nproperty double y\nproperty double z\n"
    );
    if let Some(f) = faces {
        h.push_str(&format!(
            "element face {f}\nproperty list uchar int vertex_indices\n"
        ));
    }
    h.push_str("end_header\n");
    h
}

fn write_vertices(out: &mut Vec<u8>, encoding: PlyEncoding, vertices: &[Point3]) {
    for p in vertices {
        match encoding {
            PlyEncoding::Ascii => {
                let _ = writeln!(
                    out,
                    "{} {} {}",
                    format_real(p[0]),
                    format_real(p[1]),
                    format_real(p[2])
                );
            }
            PlyEncoding::BinaryLittleEndian => {
                for c in p {
                    out.write_f64::<LittleEndian>(*c).expect("vec write");
                }
            }
        }
    }
}

pub fn write_ply(mesh: &TriangleMesh, encoding: PlyEncoding) -> Vec<u8> {
    let mut out = header(encoding, mesh.vertices().len(), Some(mesh.faces().len())).into_bytes();
    write_vertices(&mut out, encoding, mesh.vertices());
    for f in mesh.faces() {
        match encoding {
            PlyEncoding::Ascii => {
                let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
            }
            PlyEncoding::BinaryLittleEndian => {
                out.push(3);
                for &v in f {
                    out.write_i32::<LittleEndian>(v as i32).expect("vec write");
                }
            }
        }
    }
    out
}

/// A vertex-only binary little-endian PLY.
pub fn write_ply_points(pc: &PointCloud) -> Vec<u8> {
    let encoding = PlyEncoding::BinaryLittleEndian;
    let mut out = header(encoding, pc.len(), None).into_bytes();
    write_vertices(&mut out, encoding, pc.points());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures::CUBE_PLY;

    #[test]
    fn ascii_cube() {
        let m = parse_ply(CUBE_PLY.as_bytes()).unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.faces().len(), 12);
        assert!((m.total_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let m = parse_ply(CUBE_PLY.as_bytes()).unwrap();
        let shifted = m.map_vertices(|p| [p[0] + 0.1, p[1] / 3.0, p[2]]).unwrap();
        let bytes = write_ply(&shifted, PlyEncoding::BinaryLittleEndian);
        assert_eq!(parse_ply(&bytes).unwrap(), shifted);
        let ascii = write_ply(&shifted, PlyEncoding::Ascii);
        let back = parse_ply(&ascii).unwrap();
        assert_eq!(back.faces(), shifted.faces());
    }

    #[test]
    fn binary_with_float_and_extra_properties() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n".to_vec();
        for p in [[0f32, 0., 0.], [1., 0., 0.], [0., 2., 0.]] {
            for c in p {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            bytes.push(200);
        }
        bytes.push(3);
        for i in [0u32, 1, 2] {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        let m = parse_ply(&bytes).unwrap();
        assert_eq!(m.vertices()[2], [0.0, 2.0, 0.0]);
        assert_eq!(m.faces(), &[[0, 1, 2]]);
        assert!(parse_ply(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn point_cloud_ply() {
        let pc = PointCloud::new(vec![[1.0, 2.0, 3.0], [0.25, -1e-9, 7.5]]).unwrap();
        let bytes = write_ply_points(&pc);
        assert_eq!(parse_ply_points(&bytes).unwrap(), pc);
        assert!(parse_ply(&bytes).is_err());
    }

    #[test]
    fn errors() {
        assert!(parse_ply(b"ply\nformat binary_big_endian 1.0\nend_header\n").is_err());
        assert!(parse_ply(b"plx\nend_header\n").is_err());
        let bad = CUBE_PLY.replace("4 3 0 4 7 0", "4 3 0 4 9 0");
        assert!(matches!(
            parse_ply(bad.as_bytes()).unwrap_err(),
            Error::FaceIndex { face: 5, index: 9, .. }
        ));
        let bad = CUBE_PLY.replace("1 1 0\n0 1 0", "1 1 0\n0 z 0");
        assert!(matches!(parse_ply(bad.as_bytes()).unwrap_err(), Error::Parse { line: 15, .. }));
    }
}
