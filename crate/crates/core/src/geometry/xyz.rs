//! Plain-text XYZ point files: one point per line, three whitespace separated
//! reals, `#` starts a comment line.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use super::PointCloud;
use crate::error::{Error, Result};

/// Nine significant digits in scientific notation.
pub fn format_real(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn parse_xyz(reader: impl BufRead) -> Result<PointCloud> {
    let mut pts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut fields = t.split_whitespace();
        let mut p = [0.0f64; 3];
        for c in p.iter_mut() {
            let f = fields
                .next()
                .ok_or_else(|| Error::parse(i + 1, "expected three coordinates"))?;
            *c = f
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("invalid number `{f}`")))?;
        }
        if fields.next().is_some() {
            return Err(Error::parse(i + 1, "expected exactly three coordinates"));
        }
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::parse(i + 1, "non-finite coordinate"));
        }
        pts.push(p);
    }
    if pts.is_empty() {
        return Err(Error::parse(0, "file contains no points"));
    }
    PointCloud::new(pts)
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let f = std::fs::File::open(path)?;
    parse_xyz(std::io::BufReader::new(f)).map_err(|e| e.with_path(path))
}

pub fn to_xyz_string(pc: &PointCloud) -> String {
    let mut s = String::with_capacity(pc.len() * 48);
    for p in pc {
        let _ = writeln!(
            s,
            "{} {} {}",
            format_real(p[0]),
            format_real(p[1]),
            format_real(p[2])
        );
    }
    s
}

pub fn write_xyz(path: impl AsRef<Path>, pc: &PointCloud) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(to_xyz_string(pc).as_bytes())?;
    f.flush()?;
    Ok(())
}
